#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use chasekit::model::{Atom, ConjunctiveQuery, Instance, Term};

/// Connected query over binary `relations` with at most `max_atoms` atoms
/// and one or two free variables.
pub fn random_query(rng: &mut impl Rng, relations: &[&str], max_atoms: usize) -> ConjunctiveQuery {
    let n = rng.gen_range(1..=max_atoms);
    let mut vars = vec![Term::var("v0")];
    let mut atoms: Vec<Atom> = Vec::new();
    while atoms.len() < n {
        let rel = relations.choose(rng).unwrap();
        let old = vars.choose(rng).unwrap().clone();
        let other = if rng.gen_bool(0.7) {
            let v = Term::var(&format!("v{}", vars.len()));
            vars.push(v.clone());
            v
        } else {
            vars.choose(rng).unwrap().clone()
        };
        let a = if rng.gen_bool(0.5) {
            Atom::new(rel, vec![old, other])
        } else {
            Atom::new(rel, vec![other, old])
        };
        if !atoms.contains(&a) {
            atoms.push(a);
        }
    }
    let used: Vec<Term> = {
        let q = ConjunctiveQuery::new(vec![], atoms.clone()).unwrap();
        q.vars().into_iter().collect()
    };
    let k = rng.gen_range(1..=2.min(used.len()));
    let free: Vec<Term> = used.choose_multiple(rng, k).cloned().collect();
    ConjunctiveQuery::new(free, atoms).unwrap()
}

/// Instance with at most `max_atoms` atoms over constants `c0..c{consts-1}`.
pub fn random_instance(rng: &mut impl Rng, relations: &[(&str, usize)], max_atoms: usize, consts: usize) -> Instance {
    let n = rng.gen_range(1..=max_atoms);
    let mut d = Instance::new();
    for _ in 0..n {
        let (rel, arity) = relations.choose(rng).unwrap();
        let args = (0..*arity).map(|_| Term::constant(&format!("c{}", rng.gen_range(0..consts)))).collect();
        d.insert(Atom::new(rel, args));
    }
    d
}

/// All tuples of length `k` over `dom`.
pub fn tuples(dom: &[Term], k: usize) -> Vec<Vec<Term>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                dom.iter().map(move |d| {
                    let mut t2 = t.clone();
                    t2.push(d.clone());
                    t2
                })
            })
            .collect();
    }
    out
}

/// Freezes a query: variables become constants `k_<name>`.
pub fn freeze(q: &ConjunctiveQuery) -> (Instance, Vec<Term>) {
    let f = |t: &Term| {
        if t.is_var() {
            Term::constant(&format!("k{}", t.name().unwrap().trim_start_matches('_')))
        } else {
            t.clone()
        }
    };
    let d = q.body().iter().map(|a| Atom::new(a.relation(), a.args().iter().map(f).collect())).collect();
    (d, q.free_vars().iter().map(f).collect())
}
