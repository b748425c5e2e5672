//! Normalization of binary theories and the ancestor-bound probes.
//!
//! Existential rule bodies are rewritten, split into the connected part
//! holding the frontier plus a nullary `M` atom standing for the rest, and
//! the `M` atoms get Datalog rules of their own. The existential skeleton
//! of the chase is unchanged by this; the probes below check that at
//! bounded depth and measure ancestor sets.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::chase::{chase_to, ChaseError, ChaseOptions, ChaseRun};
use crate::model::{components, Atom, ConjunctiveQuery, Instance, ModelError, Rule, RuleSet, Subst, Term};
use crate::rewriter::{rewrite, RewriteError};

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("relation `{0}` has arity {1}; only arity at most 2 is supported")]
    NotBinary(String, usize),
    #[error("rule uses the active domain: {0}")]
    ActiveDomain(String),
    #[error("rewriting of `{0}` did not complete within fuel {1}")]
    Incomplete(String, usize),
    #[error("cannot separate body of `{0}`: {1}")]
    Separation(String, String),
    #[error("expected an existential rule: {0}")]
    NotExistential(String),
    #[error("existential skeleton is not a forest: {0}")]
    Forest(String),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chase(#[from] ChaseError),
}

fn check_binary(theory: &RuleSet) -> Result<(), NormalizeError> {
    if let Some((r, &n)) = theory.signature().iter().find(|(_, &n)| n > 2) {
        return Err(NormalizeError::NotBinary(r.clone(), n));
    }
    if let Some(r) = theory.rules().iter().find(|r| r.uses_active_domain()) {
        return Err(NormalizeError::ActiveDomain(r.to_string()));
    }
    Ok(())
}

/// Rule indices by kind.
#[derive(Clone, Debug, Serialize)]
pub struct Taxonomy {
    pub datalog: Vec<usize>,
    pub existential: Vec<usize>,
    pub detached: Vec<usize>,
    pub sensible: Vec<usize>,
}

pub fn split_taxonomy(theory: &RuleSet) -> Result<Taxonomy, NormalizeError> {
    check_binary(theory)?;
    let idx = |p: &dyn Fn(&Rule) -> bool| -> Vec<usize> {
        theory.rules().iter().enumerate().filter(|(_, r)| p(r)).map(|(i, _)| i).collect()
    };
    Ok(Taxonomy {
        datalog: idx(&Rule::is_datalog),
        existential: idx(&Rule::is_existential),
        detached: idx(&Rule::is_detached),
        sensible: idx(&Rule::is_sensible),
    })
}

/// Result of a body rewriting: the rules and the rounds used.
#[derive(Clone, Debug)]
pub struct Rewritten {
    pub rules: Vec<Rule>,
    pub rounds: usize,
}

/// `Rew(rule)`: one rule per member of the rewriting of the body with the
/// frontier free, head unchanged.
pub fn body_rewriting(rule: &Rule, theory: &RuleSet, fuel: usize) -> Result<Rewritten, NormalizeError> {
    let frontier: Vec<Term> = rule.frontier().iter().cloned().collect();
    let q = ConjunctiveQuery::new(frontier.clone(), rule.body().to_vec())?;
    let rs = rewrite(theory, &q, fuel)?;
    if !rs.complete {
        return Err(NormalizeError::Incomplete(rule.to_string(), fuel));
    }
    let mut rules = Vec::new();
    for m in &rs.queries {
        let used: BTreeSet<Term> = m.vars();
        let mut sigma: Subst = frontier.iter().cloned().zip(m.free_vars().iter().cloned()).collect();
        let mut k = 0;
        for e in rule.existentials() {
            let fresh = loop {
                let t = Term::var(&format!("u{k}"));
                k += 1;
                if !used.contains(&t) {
                    break t;
                }
            };
            sigma.insert(e.clone(), fresh);
        }
        let head: Vec<Atom> = rule.head().iter().map(|a| a.substitute(&sigma)).collect();
        rules.push(Rule::new(m.body().to_vec(), head, BTreeSet::new())?);
    }
    Ok(Rewritten {
        rules,
        rounds: rs.fuel_used,
    })
}

/// Table of nullary predicates keyed by canonical Boolean query; the empty
/// query maps to the first name.
#[derive(Clone, Debug, Default)]
pub struct MTable {
    names: BTreeMap<ConjunctiveQuery, String>,
    prefix: String,
}

impl MTable {
    fn new(signature: &BTreeMap<String, usize>) -> Self {
        let mut prefix = "M".to_string();
        while signature.keys().any(|r| r.starts_with(&prefix)) {
            prefix.insert(0, '_');
        }
        MTable {
            names: BTreeMap::new(),
            prefix,
        }
    }

    fn name(&mut self, phi: &ConjunctiveQuery) -> String {
        let key = phi.canonical();
        let next = if key.body().is_empty() { 0 } else { self.names.len() + usize::from(!self.has_empty()) };
        let prefix = self.prefix.clone();
        self.names.entry(key).or_insert_with(|| format!("{prefix}{next}")).clone()
    }

    fn has_empty(&self) -> bool {
        self.names.keys().any(|k| k.body().is_empty())
    }

    pub fn entries(&self) -> &BTreeMap<ConjunctiveQuery, String> {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// The two rules of a body separation, plus the Boolean remainder.
#[derive(Clone, Debug)]
pub struct Separated {
    pub sep_cc: Rule,
    pub sep_m: Rule,
    pub remainder: ConjunctiveQuery,
}

fn separate(rule: &Rule, table: &mut MTable) -> Result<Separated, NormalizeError> {
    if !rule.is_existential() {
        return Err(NormalizeError::NotExistential(rule.to_string()));
    }
    let comps = components(rule.body(), Term::is_var);
    let frontier = rule.frontier();
    let (with_f, rest): (Vec<Vec<Atom>>, Vec<Vec<Atom>>) = comps
        .into_iter()
        .partition(|c| c.iter().any(|a| a.args().iter().any(|t| frontier.contains(t))));
    if with_f.len() > 1 {
        return Err(NormalizeError::Separation(
            rule.to_string(),
            "frontier spread over several components".into(),
        ));
    }
    let beta: Vec<Atom> = with_f.into_iter().flatten().collect();
    // Ground atoms carry no variables and belong to the remainder.
    let phi_atoms: Vec<Atom> = rest.into_iter().flatten().collect();
    let remainder = ConjunctiveQuery::new(vec![], phi_atoms.clone())?;
    let m = Atom::new(&table.name(&remainder), vec![]);
    let mut body = beta;
    body.push(m.clone());
    Ok(Separated {
        sep_cc: Rule::new(body, rule.head().to_vec(), BTreeSet::new())?,
        sep_m: Rule::new(phi_atoms, vec![m], BTreeSet::new())?,
        remainder,
    })
}

/// `(sep_cc, sep_M)` with a private predicate table.
pub fn body_separation(rule: &Rule) -> Result<(Rule, Rule), NormalizeError> {
    let mut table = MTable::new(&BTreeMap::new());
    let s = separate(rule, &mut table)?;
    Ok((s.sep_cc, s.sep_m))
}

#[derive(Clone, Debug)]
pub struct NormalizedTheory {
    pub t_i: Vec<Rule>,
    pub t_ii: Vec<Rule>,
    pub t_iii: Vec<Rule>,
    pub t_nf: RuleSet,
    pub m_predicates: MTable,
    /// Largest number of rewriting rounds used.
    pub rounds: usize,
}

fn dedup_rules(rules: Vec<Rule>) -> Vec<Rule> {
    let mut seen = BTreeSet::new();
    rules.into_iter().filter(|r| seen.insert(r.to_string())).collect()
}

/// The three-step algorithm.
pub fn normalize(theory: &RuleSet, fuel: usize) -> Result<NormalizedTheory, NormalizeError> {
    check_binary(theory)?;
    let mut rounds = 0;
    let mut t_i = Vec::new();
    for r in theory.existential() {
        let rw = body_rewriting(r, theory, fuel)?;
        rounds = rounds.max(rw.rounds);
        t_i.extend(rw.rules);
    }
    let t_i = dedup_rules(t_i);
    let mut table = MTable::new(theory.signature());
    let mut t_ii = Vec::new();
    let mut seps = Vec::new();
    for r in &t_i {
        let s = separate(r, &mut table)?;
        t_ii.push(s.sep_cc.clone());
        seps.push(s.sep_m);
    }
    let mut t_iii = Vec::new();
    for s in dedup_rules(seps) {
        let rw = body_rewriting(&s, theory, fuel)?;
        rounds = rounds.max(rw.rounds);
        t_iii.extend(rw.rules);
    }
    let t_ii = dedup_rules(t_ii);
    let t_iii = dedup_rules(t_iii);
    let t_nf = RuleSet::new(t_ii.iter().chain(&t_iii).cloned().collect())?;
    Ok(NormalizedTheory {
        t_i,
        t_ii,
        t_iii,
        t_nf,
        m_predicates: table,
        rounds,
    })
}

/// Every term of a detached atom is a Skolem term without arguments.
pub fn is_detached_atom(a: &Atom) -> bool {
    a.arity() > 0 && a.args().iter().all(|t| t.as_skolem().is_some_and(|s| s.args().is_empty()))
}

/// Existential part of the chase with its sensible-edge forest.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub atoms: Instance,
    pub roots: BTreeSet<Term>,
    pub parent: BTreeMap<Term, Term>,
    /// Sensible atoms whose terms lie in the tree of each root.
    pub trees: BTreeMap<Term, Vec<Atom>>,
    pub max_out_degree: usize,
}

/// Builds and checks the forest of `Ch^∃_depth`: edges are sensible atoms,
/// roots are the instance constants and detached terms, out-degree is at
/// most the number of existential variables over all rules.
pub fn existential_skeleton(run: &ChaseRun, theory: &RuleSet, depth: usize) -> Result<Skeleton, NormalizeError> {
    let atoms = run.existential_part(depth);
    let start = run.start();
    let dom_d = start.domain();
    let mut roots: BTreeSet<Term> = dom_d.clone();
    let mut parent: BTreeMap<Term, Term> = BTreeMap::new();
    for t in atoms.domain() {
        if dom_d.contains(&t) {
            continue;
        }
        match t.as_skolem() {
            Some(s) if s.args().is_empty() => {
                roots.insert(t.clone());
            }
            Some(s) if s.args().len() == 1 => {
                parent.insert(t.clone(), s.args()[0].clone());
            }
            Some(_) => return Err(NormalizeError::Forest(format!("{t} has several frontier arguments"))),
            None => return Err(NormalizeError::Forest(format!("{t} is neither original nor invented"))),
        }
    }
    let root_of = |t: &Term| -> Result<Term, NormalizeError> {
        let mut cur = t.clone();
        let mut steps = 0;
        while let Some(p) = parent.get(&cur) {
            cur = p.clone();
            steps += 1;
            if steps > parent.len() {
                return Err(NormalizeError::Forest("parent cycle".into()));
            }
        }
        if roots.contains(&cur) {
            Ok(cur)
        } else {
            Err(NormalizeError::Forest(format!("{t} hangs below non-root {cur}")))
        }
    };
    let mut trees: BTreeMap<Term, Vec<Atom>> = roots.iter().map(|r| (r.clone(), Vec::new())).collect();
    for a in atoms.iter().filter(|a| !start.contains(a) && !is_detached_atom(a) && a.arity() > 0) {
        let terms: BTreeSet<&Term> = a.args().iter().collect();
        if terms.len() == 2 {
            let v: Vec<&Term> = terms.into_iter().collect();
            let tree_edge = parent.get(v[0]) == Some(v[1]) || parent.get(v[1]) == Some(v[0]);
            if !tree_edge {
                return Err(NormalizeError::Forest(format!("{a} is not a parent-child edge")));
            }
        }
        let r = root_of(&a.args()[0])?;
        trees.get_mut(&r).expect("root registered").push(a.clone());
    }
    let mut children: BTreeMap<&Term, usize> = BTreeMap::new();
    for p in parent.values() {
        *children.entry(p).or_default() += 1;
    }
    let max_out_degree = children.values().copied().max().unwrap_or(0);
    let bound: usize = theory.rules().iter().map(|r| r.existentials().len()).sum();
    if max_out_degree > bound {
        return Err(NormalizeError::Forest(format!("out-degree {max_out_degree} above {bound}")));
    }
    Ok(Skeleton {
        atoms,
        roots,
        parent,
        trees,
        max_out_degree,
    })
}

/// A parent function over a provenance-tracked run: one birth-stage
/// application per derived atom.
#[derive(Clone, Debug)]
pub struct AncestorTrace {
    parents: HashMap<Atom, Vec<Atom>>,
}

impl AncestorTrace {
    /// First producing application in canonical order.
    pub fn first(run: &ChaseRun, theory: &RuleSet) -> Self {
        Self::choose(run, theory, &mut |_| 0)
    }

    /// Uniformly random producing application.
    pub fn random(run: &ChaseRun, theory: &RuleSet, rng: &mut impl Rng) -> Self {
        Self::choose(run, theory, &mut |n| rng.gen_range(0..n))
    }

    fn choose(run: &ChaseRun, theory: &RuleSet, pick: &mut dyn FnMut(usize) -> usize) -> Self {
        let start = run.stage_len(0);
        let mut parents = HashMap::new();
        for a in &run.store().atoms()[start..] {
            let apps = run.producers(a);
            assert!(!apps.is_empty(), "parent choice needs a provenance-tracked run");
            let app = &apps[pick(apps.len())];
            parents.insert(a.clone(), app.body_image(theory));
        }
        AncestorTrace { parents }
    }

    pub fn parents(&self, a: &Atom) -> Option<&[Atom]> {
        self.parents.get(a).map(Vec::as_slice)
    }

    fn fold(&self, run: &ChaseRun, keep_nullary: bool) -> HashMap<Atom, BTreeSet<Atom>> {
        let mut out: HashMap<Atom, BTreeSet<Atom>> = HashMap::new();
        let start = run.stage_len(0);
        for (i, a) in run.store().atoms().iter().enumerate() {
            let set = if i < start {
                BTreeSet::from([a.clone()])
            } else {
                let mut s = BTreeSet::new();
                for p in &self.parents[a] {
                    if keep_nullary || p.arity() > 0 {
                        s.extend(out[p].iter().cloned());
                    }
                }
                s
            };
            out.insert(a.clone(), set);
        }
        out
    }

    /// `anc`: start atoms used to derive each atom.
    pub fn ancestors(&self, run: &ChaseRun) -> HashMap<Atom, BTreeSet<Atom>> {
        self.fold(run, true)
    }

    /// `canc`: as `anc`, ignoring nullary parents.
    pub fn connected_ancestors(&self, run: &ChaseRun) -> HashMap<Atom, BTreeSet<Atom>> {
        self.fold(run, false)
    }
}

/// `k` nullary predicates, `h` largest body, `n` rules, `N` nodes of a full
/// `n`-ary tree with levels `0..=h`, and `M = N·h + k·h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AppAConstants {
    pub k: usize,
    pub h: usize,
    pub n: usize,
    pub big_n: u128,
    pub m: u128,
}

impl AppAConstants {
    pub fn of(t_nf: &RuleSet) -> Self {
        let k = t_nf.signature().values().filter(|&&a| a == 0).count();
        let h = t_nf.rules().iter().map(|r| r.body().len()).max().unwrap_or(0);
        let n = t_nf.len();
        let big_n: u128 = (0..=h as u32).map(|i| (n as u128).saturating_pow(i)).fold(0u128, u128::saturating_add);
        let m = big_n.saturating_mul(h as u128).saturating_add((k * h) as u128);
        AppAConstants { k, h, n, big_n, m }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AncestorReport {
    pub constants: AppAConstants,
    /// Root printed form and ancestor count of its tree.
    pub per_root: Vec<(String, usize)>,
    pub max_count: usize,
    /// Largest ancestor set of a nullary atom.
    pub max_nullary: usize,
    pub within_bound: bool,
}

/// `|∪_{α∈S(t)} anc(α)|` for each root `t`.
pub fn ancestor_probe(
    run: &ChaseRun,
    theory: &RuleSet,
    trace: &AncestorTrace,
    consts: AppAConstants,
) -> Result<AncestorReport, NormalizeError> {
    let sk = existential_skeleton(run, theory, run.depth())?;
    let anc = trace.ancestors(run);
    let mut per_root = Vec::new();
    for (root, atoms) in &sk.trees {
        let all: BTreeSet<&Atom> = atoms.iter().flat_map(|a| anc[a].iter()).collect();
        per_root.push((root.to_string(), all.len()));
    }
    let max_count = per_root.iter().map(|(_, c)| *c).max().unwrap_or(0);
    let max_nullary = run
        .store()
        .atoms()
        .iter()
        .filter(|a| a.arity() == 0)
        .map(|a| anc[a].len())
        .max()
        .unwrap_or(0);
    Ok(AncestorReport {
        constants: consts,
        within_bound: (max_count as u128) <= consts.m,
        per_root,
        max_count,
        max_nullary,
    })
}

/// Bounded checks of the skeleton equivalence for one instance:
/// `Ch^∃_i(T) ⊆ Ch^∃_{i+2}(T_NF)` and `Ch^∃_i(T_NF) ⊆ Ch^∃_{(2r+1)i}(T)`
/// for `i ≤ depth`, `r` the rewriting rounds.
pub fn skeleton_equivalence(theory: &RuleSet, nf: &NormalizedTheory, d: &Instance, depth: usize) -> Result<bool, NormalizeError> {
    let opts = ChaseOptions::default();
    let stretch = 2 * nf.rounds + 1;
    let t = chase_to(theory, d, depth * stretch, opts)?;
    let n = chase_to(&nf.t_nf, d, depth + 2, opts)?;
    for i in 0..=depth {
        let t_i = t.existential_part(i);
        let n_i2 = n.existential_part(i + 2);
        if !t_i.is_subset(&n_i2) {
            return Ok(false);
        }
        let n_i = n.existential_part(i);
        if !n_i.is_subset(&t.existential_part(i * stretch)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Nullary atoms of `Ch_depth(T_NF)` are present in `Ch_1`.
pub fn nullary_one_step(nf: &NormalizedTheory, d: &Instance, depth: usize) -> Result<bool, NormalizeError> {
    let run = chase_to(&nf.t_nf, d, depth, ChaseOptions::default())?;
    Ok(run.stage(depth).iter().filter(|a| a.arity() == 0).all(|a| run.contains_at(a, 1)))
}

/// Detached atoms of `Ch_depth(T_NF)` are present in `Ch_2`.
pub fn detached_two_step(nf: &NormalizedTheory, d: &Instance, depth: usize) -> Result<bool, NormalizeError> {
    let run = chase_to(&nf.t_nf, d, depth, ChaseOptions::default())?;
    Ok(run.stage(depth).iter().filter(|a| is_detached_atom(a)).all(|a| run.contains_at(a, 2)))
}

/// Datalog rules of `T` over the skeleton rebuild the chase of `T`:
/// `Ch_i(T) ⊆ Ch_i(T_DL, Ch^∃_{i+2}(T_NF))` and
/// `Ch_i(T_DL, Ch^∃_i(T_NF)) ⊆ Ch_{(2r+1)i+i}(T)`.
pub fn datalog_over_skeleton(theory: &RuleSet, nf: &NormalizedTheory, d: &Instance, depth: usize) -> Result<bool, NormalizeError> {
    let opts = ChaseOptions::default();
    let dl = theory.datalog();
    let stretch = 2 * nf.rounds + 1;
    let t = chase_to(theory, d, depth * stretch + depth, opts)?;
    let n = chase_to(&nf.t_nf, d, depth + 2, opts)?;
    for i in 0..=depth {
        let over = chase_to(&dl, &n.existential_part(i + 2).union(d), i, opts)?.stage(i);
        if !t.stage(i).is_subset(&over) {
            return Ok(false);
        }
        let under = chase_to(&dl, &n.existential_part(i).union(d), i, opts)?.stage(i);
        if !under.is_subset(&t.stage(i * stretch + i)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest ancestor set of a Datalog-derived atom over a Datalog-only run,
/// with the bound `h^{n_at}` (`h` the largest rule, `n_at` the delay).
pub fn datalog_ancestor_bound(theory: &RuleSet, d: &Instance, depth: usize) -> Result<(usize, u128), NormalizeError> {
    let dl = theory.datalog();
    let run = chase_to(&dl, d, depth, ChaseOptions::default().with_provenance())?;
    let trace = AncestorTrace::first(&run, &dl);
    let anc = trace.ancestors(&run);
    let max = anc.values().map(BTreeSet::len).max().unwrap_or(0);
    let h = theory.rules().iter().map(|r| r.body().len() + r.head().len()).max().unwrap_or(1);
    let n_at = crate::analysis::n_at_estimate(&run);
    Ok((max, (h as u128).saturating_pow(n_at as u32)))
}
