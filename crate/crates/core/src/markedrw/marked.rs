//! Marked queries, proper markings and the five rewriting operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chase::ChaseRun;
use crate::model::{Atom, ConjunctiveQuery, Term};
use crate::store::Search;

use super::MarkedError;

/// Relation levels, lowest first. `["G","R"]` for the red/green theory,
/// `["I1",..,"IK"]` for its generalization. Level `i` plays red against
/// level `i-1` playing green.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Levels {
    names: Vec<String>,
}

impl Levels {
    pub fn new(names: Vec<String>) -> Self {
        assert!(names.len() >= 2, "need at least two levels");
        Levels { names }
    }

    /// `G` below `R`.
    pub fn red_green() -> Self {
        Levels::new(vec!["G".into(), "R".into()])
    }

    /// `I1 < I2 < .. < IK`.
    pub fn indexed(k: usize) -> Self {
        Levels::new((1..=k).map(|i| format!("I{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index(&self, rel: &str) -> Option<usize> {
        self.names.iter().position(|n| n == rel)
    }
}

/// `⟨φ, V⟩`: a query with a set of marked variables containing every
/// free variable. Marked variables are the ones sent into the instance.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MarkedQuery {
    query: ConjunctiveQuery,
    marked: BTreeSet<Term>,
}

impl MarkedQuery {
    pub fn new(query: ConjunctiveQuery, marked: BTreeSet<Term>) -> Result<Self, MarkedError> {
        let vars = query.vars();
        if query.free_vars().iter().any(|f| !marked.contains(f)) {
            return Err(MarkedError::Malformed("free variables must be marked".into()));
        }
        if marked.iter().any(|m| !vars.contains(m)) {
            return Err(MarkedError::Malformed("marked term is not a query variable".into()));
        }
        Ok(MarkedQuery { query, marked })
    }

    pub fn query(&self) -> &ConjunctiveQuery {
        &self.query
    }

    pub fn marked(&self) -> &BTreeSet<Term> {
        &self.marked
    }

    pub fn atoms(&self) -> &[Atom] {
        self.query.body()
    }

    pub fn is_marked(&self, v: &Term) -> bool {
        self.marked.contains(v)
    }

    pub fn is_totally_marked(&self) -> bool {
        self.query.vars().iter().all(|v| self.marked.contains(v))
    }

    /// Canonical representative (marking is part of the structure).
    pub fn canonical(&self) -> MarkedQuery {
        let (query, map) = self.query.canonical_map(&|t| u32::from(self.marked.contains(t)));
        let marked = self
            .marked
            .iter()
            .map(|m| map.get(m).cloned().unwrap_or_else(|| m.clone()))
            .collect();
        MarkedQuery { query, marked }
    }

    /// Atoms of the given relation.
    pub fn atoms_of<'a>(&'a self, rel: &'a str) -> impl Iterator<Item = &'a Atom> + 'a {
        self.query.body().iter().filter(move |a| a.relation() == rel)
    }

    pub fn count(&self, rel: &str) -> usize {
        self.atoms_of(rel).count()
    }
}

impl fmt::Display for MarkedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m: Vec<String> = self.marked.iter().map(|t| t.to_string()).collect();
        write!(f, "<{} | {}>", self.query, m.join(","))
    }
}

fn src(a: &Atom) -> &Term {
    &a.args()[0]
}

fn dst(a: &Atom) -> &Term {
    &a.args()[1]
}

/// Variables lying on a directed cycle (self-loops included).
pub fn cyclic_vars(atoms: &[Atom]) -> BTreeSet<Term> {
    let mut succ: BTreeMap<&Term, Vec<&Term>> = BTreeMap::new();
    for a in atoms {
        succ.entry(src(a)).or_default().push(dst(a));
    }
    let mut out = BTreeSet::new();
    for &v in succ.keys() {
        let mut stack: Vec<&Term> = succ[v].clone();
        let mut seen: BTreeSet<&Term> = BTreeSet::new();
        while let Some(u) = stack.pop() {
            if u == v {
                out.insert(v.clone());
                break;
            }
            if seen.insert(u) {
                if let Some(ns) = succ.get(u) {
                    stack.extend(ns.iter().copied());
                }
            }
        }
    }
    out
}

/// Proper marking: (i) marked targets have marked sources, (ii) cycles are
/// marked, (iii) sources sharing a same-relation target agree on marking,
/// and (iv) an unmarked variable's incoming relations form a single level
/// or two adjacent levels. (iv) is vacuous with two levels.
pub fn is_properly_marked(mq: &MarkedQuery, levels: &Levels) -> bool {
    let atoms = mq.atoms();
    let m = |t: &Term| mq.is_marked(t);
    if atoms.iter().any(|a| m(dst(a)) && !m(src(a))) {
        return false;
    }
    if cyclic_vars(atoms).iter().any(|v| !m(v)) {
        return false;
    }
    for a in atoms {
        for b in atoms {
            if a.relation() == b.relation() && dst(a) == dst(b) && m(src(a)) != m(src(b)) {
                return false;
            }
        }
    }
    for v in mq.query().vars() {
        if m(&v) {
            continue;
        }
        let mut lv: Vec<usize> = atoms
            .iter()
            .filter(|a| dst(a) == &v)
            .filter_map(|a| levels.index(a.relation()))
            .collect();
        lv.sort_unstable();
        lv.dedup();
        let ok = match lv.as_slice() {
            [] | [_] => true,
            [a, b] => b == &(a + 1),
            _ => false,
        };
        if !ok {
            return false;
        }
    }
    true
}

pub fn is_live(mq: &MarkedQuery, levels: &Levels) -> bool {
    is_properly_marked(mq, levels) && !mq.is_totally_marked()
}

/// Which operation a maximal variable admits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Case {
    /// Exactly one incoming atom, of the given level.
    SingleIncoming { level: usize, source: Term },
    /// Incoming `level+1` atom from `upper` and `level` atom from `lower`.
    RedGreenPair { level: usize, upper: Term, lower: Term },
    /// Two same-level incoming atoms with distinct sources `z < z2`.
    DuplicateTargets { level: usize, z: Term, z2: Term },
    /// Not covered by the case analysis (not properly marked).
    Stuck,
}

/// Unmarked variables without outgoing atoms.
pub fn maximal_vars(mq: &MarkedQuery) -> Vec<Term> {
    let atoms = mq.atoms();
    mq.query()
        .vars()
        .into_iter()
        .filter(|v| !mq.is_marked(v) && !atoms.iter().any(|a| src(a) == v))
        .collect()
}

/// Case of each maximal variable; duplicates take priority, higher levels
/// first.
pub fn classify_maximal(mq: &MarkedQuery, levels: &Levels) -> Vec<(Term, Case)> {
    maximal_vars(mq)
        .into_iter()
        .map(|x| {
            let case = classify_var(mq, levels, &x);
            (x, case)
        })
        .collect()
}

fn classify_var(mq: &MarkedQuery, levels: &Levels, x: &Term) -> Case {
    let mut by_level: BTreeMap<usize, Vec<Term>> = BTreeMap::new();
    for a in mq.atoms().iter().filter(|a| dst(a) == x) {
        match levels.index(a.relation()) {
            Some(l) => by_level.entry(l).or_default().push(src(a).clone()),
            None => return Case::Stuck,
        }
    }
    for (&level, sources) in by_level.iter().rev() {
        if sources.len() >= 2 {
            let mut s = sources.clone();
            s.sort();
            return Case::DuplicateTargets {
                level,
                z: s[0].clone(),
                z2: s[1].clone(),
            };
        }
    }
    let entries: Vec<(usize, Term)> = by_level.into_iter().map(|(l, mut s)| (l, s.remove(0))).collect();
    match entries.as_slice() {
        [(level, source)] => Case::SingleIncoming {
            level: *level,
            source: source.clone(),
        },
        [(lo, lower), (hi, upper)] if *hi == lo + 1 => Case::RedGreenPair {
            level: *lo,
            upper: upper.clone(),
            lower: lower.clone(),
        },
        _ => Case::Stuck,
    }
}

fn rebuild(mq: &MarkedQuery, free: Vec<Term>, atoms: Vec<Atom>, marked: BTreeSet<Term>) -> MarkedQuery {
    let q = ConjunctiveQuery::new(free, atoms).expect("operations keep free variables");
    let vars = q.vars();
    let marked = marked.into_iter().filter(|m| vars.contains(m)).collect();
    let _ = mq;
    MarkedQuery { query: q, marked }
}

/// cut: drop the single atom containing the maximal variable `x`.
pub fn cut(mq: &MarkedQuery, x: &Term) -> MarkedQuery {
    let atoms: Vec<Atom> = mq.atoms().iter().filter(|a| !a.contains_term(x)).cloned().collect();
    rebuild(mq, mq.query().free_vars().to_vec(), atoms, mq.marked().clone())
}

/// fuse: identify the sources `z` and `z2` of two same-relation atoms
/// sharing a maximal target. A free variable survives a bound one.
pub fn fuse(mq: &MarkedQuery, z: &Term, z2: &Term) -> (MarkedQuery, Term, Term) {
    let free = mq.query().free_vars();
    let (keep, gone) = if free.contains(z2) && !free.contains(z) {
        (z2.clone(), z.clone())
    } else {
        (z.clone(), z2.clone())
    };
    let ren = |t: &Term| if t == &gone { keep.clone() } else { t.clone() };
    let atoms: Vec<Atom> = mq.atoms().iter().map(|a| a.map_terms(ren)).collect();
    let free: Vec<Term> = free.iter().map(ren).collect();
    let marked: BTreeSet<Term> = mq.marked().iter().map(ren).collect();
    (rebuild(mq, free, atoms, marked), keep, gone)
}

fn fresh(mq: &MarkedQuery, base: &str) -> Term {
    let vars = mq.query().vars();
    (0..)
        .map(|i| Term::var(&format!("{base}{i}")))
        .find(|t| !vars.contains(t))
        .expect("infinitely many names")
}

/// Result of `reduce` before filtering markings.
pub struct Reduced {
    pub base: Vec<Atom>,
    pub a: Term,
    pub b: Term,
    pub new_lower: [Atom; 2],
    pub removed_lower: Atom,
    pub outputs: Vec<MarkedQuery>,
}

/// reduce at `level`: replace `U(upper,x), L(lower,x)` (U one level above
/// L) by `U(a,lower), L(a,b), L(b,upper)` with fresh `a, b`, under the
/// markings `V`, `V∪{a}`, `V∪{a,b}`, `V∪{b}`; only properly marked results
/// are kept.
pub fn reduce(mq: &MarkedQuery, levels: &Levels, x: &Term, level: usize, upper: &Term, lower: &Term) -> Reduced {
    let (un, ln) = (levels.name(level + 1), levels.name(level));
    let removed_upper = Atom::new(un, vec![upper.clone(), x.clone()]);
    let removed_lower = Atom::new(ln, vec![lower.clone(), x.clone()]);
    let a = fresh(mq, "a");
    let b = fresh(mq, "b");
    let new_lower = [
        Atom::new(ln, vec![a.clone(), b.clone()]),
        Atom::new(ln, vec![b.clone(), upper.clone()]),
    ];
    let mut atoms: Vec<Atom> = mq
        .atoms()
        .iter()
        .filter(|t| *t != &removed_upper && *t != &removed_lower)
        .cloned()
        .collect();
    let base = atoms.clone();
    atoms.push(Atom::new(un, vec![a.clone(), lower.clone()]));
    atoms.extend(new_lower.iter().cloned());
    let v = mq.marked().clone();
    let markings = [
        v.clone(),
        v.iter().cloned().chain([a.clone()]).collect(),
        v.iter().cloned().chain([a.clone(), b.clone()]).collect(),
        v.iter().cloned().chain([b.clone()]).collect::<BTreeSet<Term>>(),
    ];
    let outputs = markings
        .into_iter()
        .map(|m| rebuild(mq, mq.query().free_vars().to_vec(), atoms.clone(), m))
        .filter(|o| is_properly_marked(o, levels))
        .collect();
    Reduced {
        base,
        a,
        b,
        new_lower,
        removed_lower,
        outputs,
    }
}

/// All properly marked versions of a query.
pub fn initial_markings(q: &ConjunctiveQuery, levels: &Levels) -> Result<Vec<MarkedQuery>, MarkedError> {
    let bound: Vec<Term> = q.bound_vars().into_iter().collect();
    if bound.len() > 24 {
        return Err(MarkedError::TooLarge(format!("{} bound variables", bound.len())));
    }
    let free: BTreeSet<Term> = q.free_vars().iter().cloned().collect();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << bound.len()) {
        let mut marked = free.clone();
        for (i, b) in bound.iter().enumerate() {
            if mask >> i & 1 == 1 {
                marked.insert(b.clone());
            }
        }
        let mq = MarkedQuery {
            query: q.clone(),
            marked,
        };
        if is_properly_marked(&mq, levels) {
            out.push(mq);
        }
    }
    Ok(out)
}

/// `Ch_stage(D) ⊨ ⟨φ,V⟩(args)`: a match sending exactly the marked
/// variables into `dom(D)`.
pub fn satisfies_marked(run: &ChaseRun, mq: &MarkedQuery, args: &[Term], stage: usize) -> bool {
    let q = mq.query();
    if args.len() != q.free_vars().len() {
        return false;
    }
    let dom = run.start().domain();
    let mut fixed = std::collections::HashMap::new();
    for (v, a) in q.free_vars().iter().zip(args) {
        if !dom.contains(a) {
            return false;
        }
        if let Some(prev) = fixed.insert(v.clone(), a.clone()) {
            if &prev != a {
                return false;
            }
        }
    }
    let filter = |v: &Term, val: &Term| mq.is_marked(v) == dom.contains(val);
    Search::new(q.body(), q.bound_vars())
        .with_fixed(fixed)
        .filter(&filter)
        .exists(run.store(), run.stage_len(stage))
}
