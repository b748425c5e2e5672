//! Indexed fact store and the backtracking matcher shared by the chase,
//! homomorphism search, entailment and model checking.
//!
//! Atoms are numbered in insertion order, so a prefix of the store is a
//! stage of a chase; every lookup takes a `limit` bounding the prefix.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::model::{Atom, Instance, Term};

#[derive(Clone, Default, Debug)]
pub struct FactStore {
    atoms: Vec<Atom>,
    ids: HashMap<Atom, u32>,
    by_rel: HashMap<Arc<str>, Vec<u32>>,
    by_pos: HashMap<(Arc<str>, u32, Term), Vec<u32>>,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let mut s = Self::new();
        for a in inst {
            s.insert(a.clone());
        }
        s
    }

    /// Inserts an atom, returning `true` if it was new.
    pub fn insert(&mut self, atom: Atom) -> bool {
        if self.ids.contains_key(&atom) {
            return false;
        }
        let id = self.atoms.len() as u32;
        self.by_rel.entry(atom.relation_arc().clone()).or_default().push(id);
        for (i, t) in atom.args().iter().enumerate() {
            self.by_pos
                .entry((atom.relation_arc().clone(), i as u32, t.clone()))
                .or_default()
                .push(id);
        }
        self.ids.insert(atom.clone(), id);
        self.atoms.push(atom);
        true
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn id(&self, atom: &Atom) -> Option<usize> {
        self.ids.get(atom).map(|&i| i as usize)
    }

    pub fn contains(&self, atom: &Atom, limit: usize) -> bool {
        self.ids.get(atom).is_some_and(|&i| (i as usize) < limit)
    }

    pub fn instance(&self, limit: usize) -> Instance {
        self.atoms[..limit.min(self.atoms.len())].iter().cloned().collect()
    }

    fn rel_ids(&self, rel: &str, limit: usize) -> &[u32] {
        match self.by_rel.get(rel) {
            Some(v) => &v[..v.partition_point(|&i| (i as usize) < limit)],
            None => &[],
        }
    }

    fn pos_ids(&self, rel: &Arc<str>, pos: usize, t: &Term, limit: usize) -> &[u32] {
        match self.by_pos.get(&(rel.clone(), pos as u32, t.clone())) {
            Some(v) => &v[..v.partition_point(|&i| (i as usize) < limit)],
            None => &[],
        }
    }
}

/// A homomorphism problem: map `movable` terms of `atoms` into the store.
/// Other terms map through `fixed`, or to themselves.
pub struct Search<'a> {
    pub atoms: &'a [Atom],
    pub movable: Vec<Term>,
    pub fixed: HashMap<Term, Term>,
    pub injective: bool,
    pub filter: Option<&'a dyn Fn(&Term, &Term) -> bool>,
}

struct Plan {
    order: Vec<usize>,
    // atoms checked right after assigning the var at this depth
    checks: Vec<Vec<usize>>,
    // (atom, position) occurrences per var
    occ: Vec<Vec<(usize, usize)>>,
    ground_atoms: Vec<usize>,
}

impl<'a> Search<'a> {
    pub fn new(atoms: &'a [Atom], movable: impl IntoIterator<Item = Term>) -> Self {
        let present: HashSet<&Term> = atoms.iter().flat_map(|a| a.args()).collect();
        let mut movable: Vec<Term> = movable.into_iter().filter(|t| present.contains(t)).collect();
        movable.sort();
        movable.dedup();
        Search {
            atoms,
            movable,
            fixed: HashMap::new(),
            injective: false,
            filter: None,
        }
    }

    pub fn fix(mut self, from: Term, to: Term) -> Self {
        self.fixed.insert(from, to);
        self
    }

    pub fn with_fixed(mut self, fixed: impl IntoIterator<Item = (Term, Term)>) -> Self {
        self.fixed.extend(fixed);
        self
    }

    pub fn injective(mut self, yes: bool) -> Self {
        self.injective = yes;
        self
    }

    pub fn filter(mut self, f: &'a dyn Fn(&Term, &Term) -> bool) -> Self {
        self.filter = Some(f);
        self
    }

    fn plan(&self, index: &HashMap<&Term, usize>) -> Plan {
        let n = self.movable.len();
        let mut occ = vec![Vec::new(); n];
        for (ai, a) in self.atoms.iter().enumerate() {
            for (p, t) in a.args().iter().enumerate() {
                if let Some(&v) = index.get(t) {
                    occ[v].push((ai, p));
                }
            }
        }
        // Greedy order: most links to already-determined terms first.
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let determined = |placed: &Vec<bool>, t: &Term| index.get(t).is_none_or(|&v| placed[v]);
        for _ in 0..n {
            let mut best: Option<(usize, usize, usize)> = None;
            for v in 0..n {
                if placed[v] {
                    continue;
                }
                let links = occ[v]
                    .iter()
                    .filter(|&&(ai, p)| {
                        self.atoms[ai]
                            .args()
                            .iter()
                            .enumerate()
                            .any(|(q, t)| q != p && determined(&placed, t))
                    })
                    .count();
                let key = (links, occ[v].len(), usize::MAX - v);
                if best.is_none_or(|b| key > (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
            let v = usize::MAX - best.expect("unplaced var").2;
            placed[v] = true;
            order.push(v);
        }
        let depth_of: Vec<usize> = {
            let mut d = vec![0; n];
            for (k, &v) in order.iter().enumerate() {
                d[v] = k;
            }
            d
        };
        let mut checks = vec![Vec::new(); n];
        let mut ground_atoms = Vec::new();
        for (ai, a) in self.atoms.iter().enumerate() {
            let last = a.args().iter().filter_map(|t| index.get(t).map(|&v| depth_of[v])).max();
            match last {
                Some(k) => checks[k].push(ai),
                None => ground_atoms.push(ai),
            }
        }
        Plan {
            order,
            checks,
            occ,
            ground_atoms,
        }
    }

    /// Enumerates assignments in lexicographic order of the planned
    /// variable order; `visit` returns `false` to stop.
    pub fn run(&self, store: &FactStore, limit: usize, visit: &mut dyn FnMut(&BTreeMap<Term, Term>) -> bool) {
        let index: HashMap<&Term, usize> = self.movable.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let plan = self.plan(&index);
        let resolve_fixed = |t: &Term| self.fixed.get(t).cloned().unwrap_or_else(|| t.clone());
        for &ai in &plan.ground_atoms {
            let img = self.atoms[ai].map_terms(resolve_fixed);
            if !store.contains(&img, limit) {
                return;
            }
        }
        let mut st = State {
            search: self,
            store,
            limit,
            index: &index,
            plan: &plan,
            values: vec![None; self.movable.len()],
            used: HashSet::new(),
        };
        if self.injective {
            for t in self.atoms.iter().flat_map(|a| a.args()) {
                if !index.contains_key(t) {
                    st.used.insert(resolve_fixed(t));
                }
            }
        }
        st.go(0, visit);
    }

    pub fn first(&self, store: &FactStore, limit: usize) -> Option<BTreeMap<Term, Term>> {
        let mut out = None;
        self.run(store, limit, &mut |m| {
            out = Some(m.clone());
            false
        });
        out
    }

    pub fn exists(&self, store: &FactStore, limit: usize) -> bool {
        self.first(store, limit).is_some()
    }

    pub fn all(&self, store: &FactStore, limit: usize) -> Vec<BTreeMap<Term, Term>> {
        let mut out = Vec::new();
        self.run(store, limit, &mut |m| {
            out.push(m.clone());
            true
        });
        out
    }
}

struct State<'s, 'a> {
    search: &'s Search<'a>,
    store: &'s FactStore,
    limit: usize,
    index: &'s HashMap<&'s Term, usize>,
    plan: &'s Plan,
    values: Vec<Option<Term>>,
    used: HashSet<Term>,
}

impl State<'_, '_> {
    fn resolve(&self, t: &Term) -> Option<Term> {
        match self.index.get(t) {
            Some(&v) => self.values[v].clone(),
            None => Some(self.search.fixed.get(t).cloned().unwrap_or_else(|| t.clone())),
        }
    }

    fn candidates(&self, v: usize) -> Vec<Term> {
        let atoms = self.search.atoms;
        let mut best: Option<(&[u32], usize, usize)> = None;
        for &(ai, p) in &self.plan.occ[v] {
            let a = &atoms[ai];
            for (q, t) in a.args().iter().enumerate() {
                if q == p {
                    continue;
                }
                if let Some(val) = self.resolve(t) {
                    let ids = self.store.pos_ids(a.relation_arc(), q, &val, self.limit);
                    if best.is_none_or(|b| ids.len() < b.0.len()) {
                        best = Some((ids, ai, p));
                    }
                }
            }
        }
        if best.is_none() {
            for &(ai, p) in &self.plan.occ[v] {
                let ids = self.store.rel_ids(atoms[ai].relation(), self.limit);
                if best.is_none_or(|b| ids.len() < b.0.len()) {
                    best = Some((ids, ai, p));
                }
            }
        }
        let Some((ids, ai, p)) = best else {
            return Vec::new();
        };
        let arity = atoms[ai].arity();
        let mut out: Vec<Term> = ids
            .iter()
            .map(|&i| &self.store.atoms[i as usize])
            .filter(|f| f.arity() == arity)
            .map(|f| f.args()[p].clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn go(&mut self, depth: usize, visit: &mut dyn FnMut(&BTreeMap<Term, Term>) -> bool) -> bool {
        if depth == self.plan.order.len() {
            let m: BTreeMap<Term, Term> = self
                .search
                .movable
                .iter()
                .zip(&self.values)
                .map(|(k, v)| (k.clone(), v.clone().expect("assigned")))
                .collect();
            return visit(&m);
        }
        let v = self.plan.order[depth];
        for c in self.candidates(v) {
            if self.search.injective && self.used.contains(&c) {
                continue;
            }
            if let Some(f) = self.search.filter {
                if !f(&self.search.movable[v], &c) {
                    continue;
                }
            }
            self.values[v] = Some(c.clone());
            let ok = self.plan.checks[depth].iter().all(|&ai| {
                let a = &self.search.atoms[ai];
                let args: Vec<Term> = a.args().iter().map(|t| self.resolve(t).expect("determined")).collect();
                self.store.contains(&Atom::with_relation(a.relation_arc().clone(), args), self.limit)
            });
            if ok {
                if self.search.injective {
                    self.used.insert(c.clone());
                }
                let cont = self.go(depth + 1, visit);
                if self.search.injective {
                    self.used.remove(&c);
                }
                if !cont {
                    self.values[v] = None;
                    return false;
                }
            }
            self.values[v] = None;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(r: &str, args: &[Term]) -> Atom {
        Atom::new(r, args.to_vec())
    }

    #[test]
    fn path_matches() {
        let (a, b, c) = (Term::constant("a"), Term::constant("b"), Term::constant("c"));
        let mut s = FactStore::new();
        s.insert(at("E", &[a.clone(), b.clone()]));
        s.insert(at("E", &[b.clone(), c.clone()]));
        let (x, y, z) = (Term::var("x"), Term::var("y"), Term::var("z"));
        let pat = [at("E", &[x.clone(), y.clone()]), at("E", &[y.clone(), z.clone()])];
        let all = Search::new(&pat, [x.clone(), y.clone(), z.clone()]).all(&s, s.len());
        assert_eq!(all.len(), 1);
        assert_eq!(all[0][&y], b);
        // stage view excludes the second atom
        assert!(Search::new(&pat, [x, y, z]).all(&s, 1).is_empty());
    }

    #[test]
    fn injective_blocks_collapse() {
        let a = Term::constant("a");
        let mut s = FactStore::new();
        s.insert(at("E", &[a.clone(), a.clone()]));
        let (x, y) = (Term::var("x"), Term::var("y"));
        let pat = [at("E", &[x.clone(), y.clone()])];
        assert!(Search::new(&pat, [x.clone(), y.clone()]).exists(&s, 1));
        assert!(!Search::new(&pat, [x, y]).injective(true).exists(&s, 1));
    }
}
