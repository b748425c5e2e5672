//! Homomorphisms, containment, model checking and finite cores.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use thiserror::Error;

use crate::chase::{chase_to, ChaseError, ChaseOptions};
use crate::model::{Atom, ConjunctiveQuery, Instance, RuleSet, Subst, Term};
use crate::store::{FactStore, Search};

#[derive(Debug, Error)]
pub enum HomoError {
    #[error(transparent)]
    Chase(#[from] ChaseError),
    #[error("no finite model found inside the chase up to depth {0}")]
    NoCore(usize),
    #[error("core search exceeded {0} candidate subsets")]
    Budget(usize),
}

/// Least homomorphism from `src` to `dst` extending `fixed`.
pub fn find_hom(src: &Instance, dst: &Instance, fixed: &BTreeMap<Term, Term>) -> Option<BTreeMap<Term, Term>> {
    let store = FactStore::from_instance(dst);
    find_hom_in(src, &store, store.len(), fixed, false)
}

pub(crate) fn find_hom_in(
    src: &Instance,
    store: &FactStore,
    limit: usize,
    fixed: &BTreeMap<Term, Term>,
    injective: bool,
) -> Option<BTreeMap<Term, Term>> {
    let atoms: Vec<Atom> = src.iter().cloned().collect();
    let movable: Vec<Term> = src.domain().into_iter().filter(|t| !fixed.contains_key(t)).collect();
    let m = Search::new(&atoms, movable)
        .with_fixed(fixed.iter().map(|(k, v)| (k.clone(), v.clone())))
        .injective(injective)
        .first(store, limit)?;
    let mut out = fixed.clone();
    out.extend(m);
    Some(out)
}

/// `phi` contains `psi`: a homomorphism from the body of `phi` to the body
/// of `psi` sending the i-th free variable of `phi` to that of `psi`.
pub fn cq_contains(phi: &ConjunctiveQuery, psi: &ConjunctiveQuery) -> bool {
    if phi.free_vars().len() != psi.free_vars().len() {
        return false;
    }
    let mut fixed: HashMap<Term, Term> = HashMap::new();
    for (a, b) in phi.free_vars().iter().zip(psi.free_vars()) {
        if let Some(prev) = fixed.insert(a.clone(), b.clone()) {
            if &prev != b {
                return false;
            }
        }
    }
    if phi.body().is_empty() {
        return true;
    }
    let store = FactStore::from_instance(&psi.as_instance());
    Search::new(phi.body(), phi.bound_vars())
        .with_fixed(fixed)
        .exists(&store, store.len())
}

/// Mutual containment.
pub fn cq_equivalent(a: &ConjunctiveQuery, b: &ConjunctiveQuery) -> bool {
    cq_contains(a, b) && cq_contains(b, a)
}

/// A rule application whose head has no witness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: usize,
    pub subst: Subst,
}

/// First violated trigger, if any.
pub fn find_violation(theory: &RuleSet, inst: &Instance) -> Option<Violation> {
    let store = FactStore::from_instance(inst);
    let dom: Vec<Term> = inst.domain().into_iter().collect();
    for (ri, r) in theory.rules().iter().enumerate() {
        let mut matches: Vec<Subst> = if r.body().is_empty() {
            vec![Subst::new()]
        } else {
            Search::new(r.body(), r.body_vars()).all(&store, store.len())
        };
        for d in r.domain_vars() {
            matches = matches
                .into_iter()
                .flat_map(|m| {
                    dom.iter().map(move |t| {
                        let mut m2 = m.clone();
                        m2.insert(d.clone(), t.clone());
                        m2
                    })
                })
                .collect();
        }
        for s in matches {
            let witness = Search::new(r.head(), r.existentials().iter().cloned())
                .with_fixed(s.iter().map(|(k, v)| (k.clone(), v.clone())))
                .exists(&store, store.len());
            if !witness {
                return Some(Violation { rule: ri, subst: s });
            }
        }
    }
    None
}

pub fn is_model(theory: &RuleSet, inst: &Instance) -> bool {
    find_violation(theory, inst).is_none()
}

/// Isomorphism fixing `fixed` pointwise.
pub fn isomorphic(a: &Instance, b: &Instance, fixed: &BTreeSet<Term>) -> bool {
    if a.len() != b.len() || a.domain().len() != b.domain().len() {
        return false;
    }
    let id: BTreeMap<Term, Term> = fixed.iter().map(|t| (t.clone(), t.clone())).collect();
    let store = FactStore::from_instance(b);
    find_hom_in(a, &store, store.len(), &id, true).is_some()
}

#[derive(Clone, Debug)]
pub struct CoreResult {
    pub core: Instance,
    /// Least `n` with `core ⊆ Ch_n`.
    pub c_value: usize,
    /// Homomorphism from `Ch_{depth+slack}` onto the core.
    pub retraction: BTreeMap<Term, Term>,
}

/// Default cap on the number of candidate subsets examined.
pub const CORE_SUBSET_CAP: usize = 500_000;

/// Smallest model `M` with `start ⊆ M ⊆ Ch_depth(start)` admitting a
/// homomorphism from `Ch_{depth+slack}(start)` that is the identity on
/// `dom(start)`. Ties are broken by the canonical subset order.
pub fn core_retract(theory: &RuleSet, start: &Instance, depth: usize, slack: usize) -> Result<CoreResult, HomoError> {
    let run = chase_to(theory, start, depth + slack, ChaseOptions::default())?;
    let ch = run.stage(depth);
    let extra: Vec<Atom> = ch.difference(start).iter().cloned().collect();
    let mut examined = 0usize;
    for size in 0..=extra.len() {
        let mut found: Option<Instance> = None;
        for idx in (0..extra.len()).combinations(size) {
            examined += 1;
            if examined > CORE_SUBSET_CAP {
                break;
            }
            let m: Instance = start.iter().cloned().chain(idx.iter().map(|&i| extra[i].clone())).collect();
            if is_model(theory, &m) {
                found = Some(m);
                break;
            }
        }
        if examined > CORE_SUBSET_CAP {
            return Err(HomoError::Budget(CORE_SUBSET_CAP));
        }
        if let Some(core) = found {
            let c_value = core.iter().filter_map(|a| run.birth_stage(a)).max().unwrap_or(0);
            let id: BTreeMap<Term, Term> = start.domain().into_iter().map(|t| (t.clone(), t)).collect();
            let store = FactStore::from_instance(&core);
            let source = run.stage(depth + slack);
            let retraction = find_hom_in(&source, &store, store.len(), &id, false)
                .expect("a model containing the start instance receives the chase");
            return Ok(CoreResult {
                core,
                c_value,
                retraction,
            });
        }
    }
    Err(HomoError::NoCore(depth))
}

/// Core of the core is isomorphic to the core.
pub fn core_idempotent_check(theory: &RuleSet, start: &Instance, depth: usize, slack: usize) -> Result<bool, HomoError> {
    let c1 = core_retract(theory, start, depth, slack)?;
    let c2 = core_retract(theory, &c1.core, depth, slack)?;
    Ok(isomorphic(&c1.core, &c2.core, &start.domain()))
}
