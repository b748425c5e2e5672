//! Semi-oblivious parallel chase with Skolem naming.
//!
//! `Ch_0 = D` and `Ch_{i+1} = Ch_i ∪ {appl(ρ,σ) | σ ∈ Hom(ρ, Ch_i)}`. Rules
//! fire unconditionally; repeated firings with the same frontier image
//! produce the same Skolem terms and therefore the same atoms.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::model::{Atom, ConjunctiveQuery, Instance, Rule, RuleSet, Subst, Term};
use crate::store::{FactStore, Search};

#[derive(Debug, Error)]
pub enum ChaseError {
    #[error("atom budget exceeded: {atoms} atoms at stage {stage} (cap {cap})")]
    Budget {
        stage: usize,
        atoms: usize,
        cap: usize,
        partial: Box<ChaseRun>,
    },
    #[error("start instance is not ground: {0}")]
    NotGround(String),
}

#[derive(Clone, Copy, Debug)]
pub struct ChaseOptions {
    pub atom_cap: usize,
    /// Record, for every created atom, all applications producing it at its
    /// birth stage.
    pub track_provenance: bool,
}

impl Default for ChaseOptions {
    fn default() -> Self {
        ChaseOptions {
            atom_cap: 2_000_000,
            track_provenance: false,
        }
    }
}

impl ChaseOptions {
    pub fn with_provenance(mut self) -> Self {
        self.track_provenance = true;
        self
    }

    pub fn cap(mut self, cap: usize) -> Self {
        self.atom_cap = cap;
        self
    }
}

/// One rule application: rule index and the substitution on body and
/// active-domain variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Application {
    pub rule: usize,
    pub subst: Subst,
}

impl Application {
    /// `σ(body(ρ))`.
    pub fn body_image(&self, rules: &RuleSet) -> Vec<Atom> {
        rules.rules()[self.rule].body().iter().map(|a| a.substitute(&self.subst)).collect()
    }
}

/// The stages of a chase run. Stage `i` is a prefix of the atom store.
#[derive(Clone, Debug)]
pub struct ChaseRun {
    store: FactStore,
    stage_ends: Vec<usize>,
    requested: usize,
    saturated: bool,
    existential: Vec<bool>,
    producers: HashMap<usize, Vec<Application>>,
    term_birth: HashMap<Term, usize>,
}

impl ChaseRun {
    pub fn store(&self) -> &FactStore {
        &self.store
    }

    /// Requested depth; stages past saturation equal the last one.
    pub fn depth(&self) -> usize {
        self.requested
    }

    /// Number of stages actually computed, minus one.
    pub fn computed_depth(&self) -> usize {
        self.stage_ends.len() - 1
    }

    pub fn saturated(&self) -> bool {
        self.saturated
    }

    pub fn stage_len(&self, i: usize) -> usize {
        self.stage_ends[i.min(self.stage_ends.len() - 1)]
    }

    pub fn stage(&self, i: usize) -> Instance {
        self.store.instance(self.stage_len(i))
    }

    pub fn last(&self) -> Instance {
        self.store.instance(self.store.len())
    }

    pub fn contains_at(&self, atom: &Atom, i: usize) -> bool {
        self.store.contains(atom, self.stage_len(i))
    }

    pub fn birth_stage(&self, atom: &Atom) -> Option<usize> {
        let id = self.store.id(atom)?;
        Some(self.stage_ends.partition_point(|&e| e <= id))
    }

    /// First stage whose active domain contains `t`.
    pub fn term_birth(&self, t: &Term) -> Option<usize> {
        self.term_birth.get(t).copied()
    }

    /// Whether the atom was produced by an existential rule at birth.
    pub fn is_existential_atom(&self, atom: &Atom) -> bool {
        self.store.id(atom).is_some_and(|i| self.existential[i])
    }

    /// `Ch^∃_i`: start atoms plus atoms produced by existential rules.
    pub fn existential_part(&self, i: usize) -> Instance {
        let start = self.stage_ends[0];
        self.store.atoms()[..self.stage_len(i)]
            .iter()
            .enumerate()
            .filter(|(id, _)| *id < start || self.existential[*id])
            .map(|(_, a)| a.clone())
            .collect()
    }

    /// Applications producing `atom` at its birth stage (requires
    /// provenance tracking). Empty for start atoms.
    pub fn producers(&self, atom: &Atom) -> &[Application] {
        self.store
            .id(atom)
            .and_then(|i| self.producers.get(&i))
            .map_or(&[], Vec::as_slice)
    }

    pub fn start(&self) -> Instance {
        self.stage(0)
    }
}

/// All matches of the rule body into `inst`, extended over the active
/// domain for active-domain variables, in canonical order.
pub fn hom_matches(rule: &Rule, inst: &Instance) -> Vec<Subst> {
    let store = FactStore::from_instance(inst);
    let dom: Vec<Term> = inst.domain().into_iter().collect();
    let mut out = body_matches(rule, &store, store.len());
    out = extend_domain(rule, out, &dom);
    out.sort();
    out.dedup();
    out
}

fn body_matches(rule: &Rule, store: &FactStore, limit: usize) -> Vec<Subst> {
    Search::new(rule.body(), rule.body_vars())
        .all(store, limit)
        .into_iter()
        .collect()
}

fn extend_domain(rule: &Rule, matches: Vec<Subst>, dom: &[Term]) -> Vec<Subst> {
    let mut out = matches;
    for d in rule.domain_vars() {
        let mut next = Vec::with_capacity(out.len() * dom.len());
        for m in &out {
            for t in dom {
                let mut m2 = m.clone();
                m2.insert(d.clone(), t.clone());
                next.push(m2);
            }
        }
        out = next;
    }
    out
}

/// Matches that use at least one atom from `[old_end, cur_end)`.
fn delta_matches(rule: &Rule, store: &FactStore, old_end: usize, cur_end: usize) -> Vec<Subst> {
    let body = rule.body();
    let vars = rule.body_vars();
    let mut seen: BTreeSet<Subst> = BTreeSet::new();
    for pat in body {
        for id in old_end..cur_end {
            let fact = &store.atoms()[id];
            if fact.relation() != pat.relation() || fact.arity() != pat.arity() {
                continue;
            }
            let mut bind: HashMap<Term, Term> = HashMap::new();
            let ok = pat.args().iter().zip(fact.args()).all(|(p, f)| {
                if p.is_var() {
                    match bind.get(p) {
                        Some(b) => b == f,
                        None => {
                            bind.insert(p.clone(), f.clone());
                            true
                        }
                    }
                } else {
                    p == f
                }
            });
            if !ok {
                continue;
            }
            let rest: Vec<Term> = vars.iter().filter(|v| !bind.contains_key(v)).cloned().collect();
            let search = Search::new(body, rest).with_fixed(bind.clone());
            search.run(store, cur_end, &mut |m| {
                let mut s: Subst = bind.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                s.extend(m.iter().map(|(k, v)| (k.clone(), v.clone())));
                seen.insert(s);
                true
            });
        }
    }
    seen.into_iter().collect()
}

/// One parallel chase step.
pub fn chase_step(theory: &RuleSet, inst: &Instance) -> Instance {
    let mut out = inst.clone();
    for r in theory.rules() {
        for s in hom_matches(r, inst) {
            for a in r.apply(&s) {
                out.insert(a);
            }
        }
    }
    out
}

/// Runs the chase up to `depth` stages, stopping early at saturation.
pub fn chase_to(theory: &RuleSet, start: &Instance, depth: usize, opts: ChaseOptions) -> Result<ChaseRun, ChaseError> {
    if let Some(a) = start.iter().find(|a| !a.is_ground()) {
        return Err(ChaseError::NotGround(a.to_string()));
    }
    let mut run = ChaseRun {
        store: FactStore::from_instance(start),
        stage_ends: vec![start.len()],
        requested: depth,
        saturated: false,
        existential: vec![false; start.len()],
        producers: HashMap::new(),
        term_birth: start.domain().into_iter().map(|t| (t, 0)).collect(),
    };
    for stage in 0..depth {
        let cur_end = run.store.len();
        let old_end = if stage == 0 { 0 } else { run.stage_ends[stage - 1] };
        let mut new: BTreeMap<Atom, (bool, Vec<Application>)> = BTreeMap::new();
        let mut dom_cache: Option<Vec<Term>> = None;
        for (ri, r) in theory.rules().iter().enumerate() {
            let matches = if r.uses_active_domain() {
                let dom = dom_cache.get_or_insert_with(|| {
                    let mut d: Vec<Term> = run.term_birth.keys().cloned().collect();
                    d.sort();
                    d
                });
                let bm = body_matches(r, &run.store, cur_end);
                extend_domain(r, bm, dom)
            } else if r.body().is_empty() {
                if stage == 0 {
                    vec![Subst::new()]
                } else {
                    Vec::new()
                }
            } else {
                delta_matches(r, &run.store, old_end, cur_end)
            };
            for s in matches {
                for a in r.apply(&s) {
                    if run.store.contains(&a, cur_end) {
                        continue;
                    }
                    let e = new.entry(a).or_insert_with(|| (false, Vec::new()));
                    e.0 |= r.is_existential();
                    if opts.track_provenance {
                        e.1.push(Application {
                            rule: ri,
                            subst: s.clone(),
                        });
                    }
                }
            }
        }
        if new.is_empty() {
            run.saturated = true;
            break;
        }
        for (a, (ex, mut apps)) in new {
            for t in a.args() {
                run.term_birth.entry(t.clone()).or_insert(stage + 1);
            }
            let id = run.store.len();
            run.store.insert(a);
            run.existential.push(ex);
            if opts.track_provenance {
                apps.sort();
                apps.dedup();
                run.producers.insert(id, apps);
            }
        }
        run.stage_ends.push(run.store.len());
        if run.store.len() > opts.atom_cap {
            let atoms = run.store.len();
            return Err(ChaseError::Budget {
                stage: stage + 1,
                atoms,
                cap: opts.atom_cap,
                partial: Box::new(run),
            });
        }
    }
    Ok(run)
}

/// Does `Ch_stage` satisfy `q(args)`?
pub fn holds_at(run: &ChaseRun, q: &ConjunctiveQuery, args: &[Term], stage: usize) -> bool {
    holds_in(run.store(), run.stage_len(stage), q, args)
}

/// Query evaluation over a store prefix.
pub fn holds_in(store: &FactStore, limit: usize, q: &ConjunctiveQuery, args: &[Term]) -> bool {
    if args.len() != q.free_vars().len() {
        return false;
    }
    let mut fixed: HashMap<Term, Term> = HashMap::new();
    for (v, a) in q.free_vars().iter().zip(args) {
        if let Some(prev) = fixed.insert(v.clone(), a.clone()) {
            if &prev != a {
                return false;
            }
        }
    }
    if q.body().is_empty() {
        return true;
    }
    Search::new(q.body(), q.bound_vars()).with_fixed(fixed).exists(store, limit)
}

/// `Ch_depth(theory, inst) ⊨ q(args)`.
pub fn entails(
    theory: &RuleSet,
    inst: &Instance,
    q: &ConjunctiveQuery,
    args: &[Term],
    depth: usize,
    opts: ChaseOptions,
) -> Result<bool, ChaseError> {
    let run = chase_to(theory, inst, depth, opts)?;
    Ok(holds_at(&run, q, args, depth))
}

/// The atom that introduced a Skolem term: the instantiated head atom of
/// its type containing it. Returns the canonically least candidate, the
/// frontier terms, and whether more than one head atom qualified.
pub fn birth_atom(run: &ChaseRun, theory: &RuleSet, t: &Term) -> Option<(Atom, BTreeSet<Term>, bool)> {
    let sk = t.as_skolem()?;
    let rule = theory.with_tau(sk.tau()).next()?;
    let ht = rule.head_type()?;
    let sigma: Subst = ht.frontier_order.iter().cloned().zip(sk.args().iter().cloned()).collect();
    let mut cands: Vec<Atom> = rule
        .apply(&sigma)
        .into_iter()
        .filter(|a| a.contains_term(t) && run.store().contains(a, run.store().len()))
        .collect();
    cands.sort();
    cands.dedup();
    let ambiguous = cands.len() > 1;
    let first = cands.into_iter().next()?;
    Some((first, sk.args().iter().cloned().collect(), ambiguous))
}

/// Checks the subchase-equality observation for `D ⊆ F ⊆ Ch_depth(D)`:
/// `Ch_depth(F) ⊆ Ch_{depth+k}(D)` with `k` the depth of `F` inside the
/// chase of `D`, and `Ch_depth(D) ⊆ Ch_depth(F)`.
pub fn subchase_equal(theory: &RuleSet, d: &Instance, f: &Instance, depth: usize) -> Result<bool, ChaseError> {
    let opts = ChaseOptions::default();
    let run_d = chase_to(theory, d, depth, opts)?;
    let Some(k) = (0..=depth).find(|&k| f.iter().all(|a| run_d.contains_at(a, k))) else {
        return Ok(false);
    };
    if !d.is_subset(f) {
        return Ok(false);
    }
    let deeper = chase_to(theory, d, depth + k, opts)?;
    let run_f = chase_to(theory, f, depth, opts)?;
    let ch_f = run_f.stage(depth);
    let ch_d = run_d.stage(depth);
    Ok(ch_f.iter().all(|a| deeper.contains_at(a, depth + k)) && ch_d.is_subset(&ch_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_instance, parse_query, parse_rules};

    #[test]
    fn abel_stage_two() {
        let t = parse_rules("Human(y) -> exists z. Mother(y,z).\nMother(x,y) -> Human(y).").unwrap();
        let d = parse_instance("Human(abel).").unwrap();
        let run = chase_to(&t, &d, 2, ChaseOptions::default()).unwrap();
        let ch2 = run.stage(2);
        let expect = parse_instance(
            "Human(abel).\nMother(abel,sk[Mother(f1,e1)/2](abel)).\nHuman(sk[Mother(f1,e1)/2](abel)).",
        )
        .unwrap();
        assert_eq!(ch2, expect);
        let q = parse_query("const abel.\n?() := Mother(abel,y), Mother(y,z).").unwrap();
        assert!(!holds_at(&run, &q, &[], 2));
        let run3 = chase_to(&t, &d, 3, ChaseOptions::default()).unwrap();
        assert!(holds_at(&run3, &q, &[], 3));
    }

    #[test]
    fn semi_naive_matches_naive() {
        let t = parse_rules(
            "E(x,y) -> exists z. E(y,z).\nE(x,y), E(y,z) -> F(x,z).\nF(x,y) -> exists w. G(y,w).",
        )
        .unwrap();
        let d = parse_instance("E(a,b). E(b,c). E(c,a).").unwrap();
        let run = chase_to(&t, &d, 4, ChaseOptions::default()).unwrap();
        let mut naive = d.clone();
        for i in 1..=4 {
            naive = chase_step(&t, &naive);
            assert_eq!(run.stage(i), naive, "stage {i}");
        }
    }

    #[test]
    fn loop_fires_once() {
        let t = parse_rules("true -> exists x. R(x,x), G(x,x).").unwrap();
        let run = chase_to(&t, &Instance::new(), 3, ChaseOptions::default()).unwrap();
        assert_eq!(run.last().len(), 2);
        assert!(run.saturated());
    }

    #[test]
    fn budget_is_reported() {
        let t = parse_rules("E(x,y) -> exists z. E(y,z).").unwrap();
        let d = parse_instance("E(a,b).").unwrap();
        let e = chase_to(&t, &d, 10, ChaseOptions::default().cap(4)).unwrap_err();
        assert!(matches!(e, ChaseError::Budget { .. }));
    }

    #[test]
    fn birth_atom_single_head() {
        let t = parse_rules("E(x,y) -> exists z. E(y,z).").unwrap();
        let d = parse_instance("E(a,b).").unwrap();
        let run = chase_to(&t, &d, 2, ChaseOptions::default()).unwrap();
        let s = run.last().iter().flat_map(|a| a.args().to_vec()).find(|t| t.is_skolem()).unwrap();
        let (atom, fr, amb) = birth_atom(&run, &t, &s).unwrap();
        assert!(atom.contains_term(&s) && !amb);
        assert_eq!(fr.len(), 1);
    }
}
