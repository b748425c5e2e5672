//! Atoms and finite instances.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use super::term::{Subst, Term};

/// `relation(args..)`. Arity zero is allowed (nullary predicates).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Atom {
    relation: Arc<str>,
    args: Vec<Term>,
}

impl Atom {
    pub fn new(relation: &str, args: Vec<Term>) -> Atom {
        Atom {
            relation: Arc::from(relation),
            args,
        }
    }

    pub fn with_relation(relation: Arc<str>, args: Vec<Term>) -> Atom {
        Atom { relation, args }
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn relation_arc(&self) -> &Arc<str> {
        &self.relation
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn substitute(&self, sigma: &Subst) -> Atom {
        Atom {
            relation: self.relation.clone(),
            args: self.args.iter().map(|t| t.substitute(sigma)).collect(),
        }
    }

    /// Applies a term-to-term map to the top-level arguments.
    pub fn map_terms(&self, f: impl Fn(&Term) -> Term) -> Atom {
        Atom {
            relation: self.relation.clone(),
            args: self.args.iter().map(f).collect(),
        }
    }

    /// Variables in order of first occurrence (duplicates removed).
    pub fn vars(&self) -> Vec<Term> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_vars(&mut out);
        }
        let mut seen = BTreeSet::new();
        out.retain(|v| seen.insert(v.clone()));
        out
    }

    pub fn contains_term(&self, t: &Term) -> bool {
        self.args.iter().any(|a| a == t)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A finite set of atoms kept in canonical order.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Instance {
    facts: BTreeSet<Atom>,
}

impl Instance {
    pub fn new() -> Instance {
        Instance::default()
    }

    pub fn insert(&mut self, atom: Atom) -> bool {
        self.facts.insert(atom)
    }

    pub fn remove(&mut self, atom: &Atom) -> bool {
        self.facts.remove(atom)
    }

    pub fn facts(&self) -> &BTreeSet<Atom> {
        &self.facts
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains(atom)
    }

    pub fn is_subset(&self, other: &Instance) -> bool {
        self.facts.is_subset(&other.facts)
    }

    pub fn union(&self, other: &Instance) -> Instance {
        Instance {
            facts: self.facts.union(&other.facts).cloned().collect(),
        }
    }

    pub fn difference(&self, other: &Instance) -> Instance {
        Instance {
            facts: self.facts.difference(&other.facts).cloned().collect(),
        }
    }

    /// Active domain: every top-level argument of every atom.
    pub fn domain(&self) -> BTreeSet<Term> {
        self.facts
            .iter()
            .flat_map(|a| a.args().iter().cloned())
            .collect()
    }

    /// Atoms all of whose arguments lie in `keep`.
    pub fn restrict(&self, keep: &BTreeSet<Term>) -> Instance {
        self.facts
            .iter()
            .filter(|a| a.args().iter().all(|t| keep.contains(t)))
            .cloned()
            .collect()
    }

    pub fn relations(&self) -> BTreeMap<String, usize> {
        self.facts
            .iter()
            .map(|a| (a.relation().to_string(), a.arity()))
            .collect()
    }

    /// Maximum number of Gaifman neighbours of a term.
    pub fn degree(&self) -> usize {
        gaifman(self).values().map(BTreeSet::len).max().unwrap_or(0)
    }
}

impl FromIterator<Atom> for Instance {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Instance {
            facts: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Instance {
    type Item = &'a Atom;
    type IntoIter = std::collections::btree_set::Iter<'a, Atom>;
    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.facts {
            writeln!(f, "{a}.")?;
        }
        Ok(())
    }
}

/// Gaifman graph: terms are adjacent iff they co-occur in an atom.
pub fn gaifman<'a, I>(atoms: I) -> BTreeMap<Term, BTreeSet<Term>>
where
    I: IntoIterator<Item = &'a Atom>,
{
    let mut g: BTreeMap<Term, BTreeSet<Term>> = BTreeMap::new();
    for a in atoms {
        for t in a.args() {
            let e = g.entry(t.clone()).or_default();
            for u in a.args() {
                if u != t {
                    e.insert(u.clone());
                }
            }
        }
    }
    g
}

/// Breadth-first distance in the Gaifman graph, `None` if disconnected.
pub fn gaifman_distance(graph: &BTreeMap<Term, BTreeSet<Term>>, a: &Term, b: &Term) -> Option<usize> {
    if a == b {
        return graph.contains_key(a).then_some(0);
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(a.clone());
    queue.push_back((a.clone(), 0usize));
    while let Some((t, d)) = queue.pop_front() {
        if let Some(ns) = graph.get(&t) {
            for n in ns {
                if n == b {
                    return Some(d + 1);
                }
                if seen.insert(n.clone()) {
                    queue.push_back((n.clone(), d + 1));
                }
            }
        }
    }
    None
}

/// Connected components of a set of atoms, linked through shared terms
/// accepted by `links`. Nullary atoms form singleton components.
pub fn components(atoms: &[Atom], links: impl Fn(&Term) -> bool) -> Vec<Vec<Atom>> {
    let n = atoms.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    let mut owner: BTreeMap<&Term, usize> = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        for t in a.args() {
            if !links(t) {
                continue;
            }
            if let Some(&j) = owner.get(t) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            } else {
                owner.insert(t, i);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<Atom>> = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(a.clone());
    }
    let mut out: Vec<Vec<Atom>> = groups.into_values().collect();
    out.sort();
    out
}
