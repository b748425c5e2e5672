//! Finite-depth probes: locality, distancing, enough-steps, island cores,
//! banned-term restriction and uniform core depth.
//!
//! Refutations are sound; a probe that finds nothing only speaks about the
//! depth it ran at.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::chase::{chase_to, holds_at, ChaseError, ChaseOptions, ChaseRun};
use crate::homo::{core_retract, is_model, HomoError};
use crate::model::{gaifman, gaifman_distance, Atom, ConjunctiveQuery, Instance, Rule, RuleSet, Term};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Chase(#[from] ChaseError),
    #[error(transparent)]
    Homo(#[from] HomoError),
    #[error("{0} islands exceed the cap of {1}")]
    IslandCap(u128, usize),
    #[error("instance degree {found} exceeds the bound {bound}")]
    Degree { found: usize, bound: usize },
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

pub const ISLAND_CAP: usize = 100_000;

#[derive(Clone, Debug, Serialize)]
pub struct LocalityParams {
    pub l: usize,
    pub degree_bound: Option<usize>,
    pub probe_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Refuted,
    NotRefutedWithinBudget,
}

/// An atom of `Ch_depth(D)` missing from every island chase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub atom: String,
    pub instance: Vec<String>,
    pub islands_checked: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub depth: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceRow {
    pub from: String,
    pub to: String,
    pub dist_instance: Option<usize>,
    pub dist_chase: Option<usize>,
    /// `dist_instance / dist_chase`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub probe: &'static str,
    pub verdict: Verdict,
    pub depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub estimates: BTreeMap<String, Estimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub distances: Vec<DistanceRow>,
    /// Per-instance least `c` with the core inside `Ch_c`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub core_depths: Vec<usize>,
}

impl ProbeReport {
    fn new(probe: &'static str, depth: usize) -> Self {
        ProbeReport {
            probe,
            verdict: Verdict::NotRefutedWithinBudget,
            depth,
            witness: None,
            estimates: BTreeMap::new(),
            distances: Vec::new(),
            core_depths: Vec::new(),
        }
    }
}

fn binom_sum(n: usize, l: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for k in 0..=l.min(n) {
        total += c;
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    total
}

/// All subsets of `d` with at most `l` atoms, the empty one included,
/// smallest first.
pub fn islands(d: &Instance, l: usize, cap: usize) -> Result<Vec<Instance>, AnalysisError> {
    let count = binom_sum(d.len(), l);
    if count > cap as u128 {
        return Err(AnalysisError::IslandCap(count, cap));
    }
    use itertools::Itertools;
    let atoms: Vec<&Atom> = d.iter().collect();
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..=l.min(atoms.len()) {
        for idx in (0..atoms.len()).combinations(k) {
            out.push(idx.iter().map(|&i| atoms[i].clone()).collect());
        }
    }
    Ok(out)
}

/// Compares `Ch_depth(D)` with the union of `Ch_depth(F)` over islands.
/// The union is always a subset (asserted); a missing atom refutes
/// locality with constant `l`.
pub fn locality_refute(theory: &RuleSet, params: &LocalityParams, d: &Instance) -> Result<ProbeReport, AnalysisError> {
    if let Some(bound) = params.degree_bound {
        let found = d.degree();
        if found > bound {
            return Err(AnalysisError::Degree { found, bound });
        }
    }
    let depth = params.probe_depth;
    let opts = ChaseOptions::default();
    let full = chase_to(theory, d, depth, opts)?;
    let ch = full.stage(depth);
    let isl = islands(d, params.l, ISLAND_CAP)?;
    let mut union = Instance::new();
    for f in &isl {
        let part = chase_to(theory, f, depth, opts)?.stage(depth);
        union = union.union(&part);
    }
    if !union.is_subset(&ch) {
        return Err(AnalysisError::Precondition(
            "union of island chases escapes the chase of the instance".into(),
        ));
    }
    let mut report = ProbeReport::new("locality", depth);
    let missing = ch
        .iter()
        .filter(|a| !union.contains(a))
        .min_by_key(|a| (full.birth_stage(a), (*a).clone()));
    if let Some(a) = missing {
        report.verdict = Verdict::Refuted;
        report.witness = Some(Witness {
            atom: a.to_string(),
            instance: d.iter().map(|x| x.to_string()).collect(),
            islands_checked: isl.len(),
        });
        report.estimates.insert(
            "witness_stage".into(),
            Estimate {
                value: full.birth_stage(a).unwrap_or(0) as f64,
                depth,
            },
        );
    }
    Ok(report)
}

/// Recomputes a witness: present in `Ch_depth(D)`, absent from every
/// island chase.
pub fn verify_witness(theory: &RuleSet, d: &Instance, l: usize, depth: usize, atom: &Atom) -> Result<bool, AnalysisError> {
    let opts = ChaseOptions::default();
    if !chase_to(theory, d, depth, opts)?.contains_at(atom, depth) {
        return Ok(false);
    }
    for f in islands(d, l, ISLAND_CAP)? {
        if chase_to(theory, &f, depth, opts)?.contains_at(atom, depth) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Gaifman distances in `D` and `Ch_depth(D)` per pair. The largest ratio
/// is a lower bound for any distancing constant.
pub fn distancing_probe(theory: &RuleSet, d: &Instance, pairs: &[(Term, Term)], depth: usize) -> Result<ProbeReport, AnalysisError> {
    let dom = d.domain();
    if let Some((a, b)) = pairs.iter().find(|(a, b)| !dom.contains(a) || !dom.contains(b)) {
        return Err(AnalysisError::Precondition(format!("pair ({a},{b}) not in the instance domain")));
    }
    let ch = chase_to(theory, d, depth, ChaseOptions::default())?.stage(depth);
    let gd = gaifman(d.iter());
    let gc = gaifman(ch.iter());
    let mut report = ProbeReport::new("distancing", depth);
    let mut best: Option<f64> = None;
    for (a, b) in pairs {
        let di = gaifman_distance(&gd, a, b);
        let dc = gaifman_distance(&gc, a, b);
        let ratio = match (di, dc) {
            (Some(x), Some(y)) if y > 0 => Some(x as f64 / y as f64),
            (Some(0), Some(0)) => Some(1.0),
            _ => None,
        };
        if let Some(r) = ratio {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
        report.distances.push(DistanceRow {
            from: a.to_string(),
            to: b.to_string(),
            dist_instance: di,
            dist_chase: dc,
            ratio,
        });
    }
    if let Some(r) = best {
        report.estimates.insert("d_R_lower_bound".into(), Estimate { value: r, depth });
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Enough {
    /// Entailed by stage `n`.
    Yes,
    /// Entailed only after stage `n`.
    No,
    /// Not entailed up to the probe depth.
    Unknown,
}

/// Whether `n` chase steps suffice for each query, judged up to `depth`.
pub fn check_enough(
    theory: &RuleSet,
    d: &Instance,
    n: usize,
    queries: &[(ConjunctiveQuery, Vec<Term>)],
    depth: usize,
) -> Result<Vec<Enough>, AnalysisError> {
    if depth < n {
        return Err(AnalysisError::Precondition(format!("depth {depth} below n = {n}")));
    }
    let run = chase_to(theory, d, depth, ChaseOptions::default())?;
    Ok(queries
        .iter()
        .map(|(q, args)| match first_stage(&run, q, args, depth) {
            Some(s) if s <= n => Enough::Yes,
            Some(_) => Enough::No,
            None => Enough::Unknown,
        })
        .collect())
}

/// Least stage at which `q(args)` holds.
pub fn first_stage(run: &ChaseRun, q: &ConjunctiveQuery, args: &[Term], depth: usize) -> Option<usize> {
    if !holds_at(run, q, args, depth) {
        return None;
    }
    (0..=depth).find(|&s| holds_at(run, q, args, s))
}

#[derive(Clone, Debug, Serialize)]
pub struct CdReport {
    #[serde(serialize_with = "ser_instance")]
    pub cd: Instance,
    /// Least `k` with `C_D ⊆ Ch_k(D)`.
    pub k_observed: usize,
    /// Largest island core depth.
    pub max_c: usize,
    pub islands: usize,
}

fn ser_instance<S: serde::Serializer>(inst: &Instance, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(inst.iter().map(|a| a.to_string()))
}

/// Union of the cores of all islands of size at most `l`.
pub fn compute_cd(theory: &RuleSet, d: &Instance, l: usize, depth: usize, slack: usize) -> Result<CdReport, AnalysisError> {
    let isl = islands(d, l, ISLAND_CAP)?;
    let mut cd = Instance::new();
    let mut max_c = 0;
    for f in &isl {
        let c = core_retract(theory, f, depth, slack)?;
        max_c = max_c.max(c.c_value);
        cd = cd.union(&c.core);
    }
    let run = chase_to(theory, d, max_c, ChaseOptions::default())?;
    let k_observed = (0..=max_c)
        .find(|&k| cd.iter().all(|a| run.contains_at(a, k)))
        .ok_or_else(|| AnalysisError::Precondition("island cores escape the chase of the instance".into()))?;
    Ok(CdReport {
        cd,
        k_observed,
        max_c,
        islands: isl.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BannedReport {
    #[serde(serialize_with = "ser_instance")]
    pub m_f: Instance,
    pub banned: Vec<String>,
    pub is_model: bool,
}

/// `Ch_depth(D)` restricted away from terms of `Ch_depth(F)` that are not in
/// the core of `F`.
pub fn banned_restrict(theory: &RuleSet, d: &Instance, f: &Instance, depth: usize, slack: usize) -> Result<BannedReport, AnalysisError> {
    if !f.is_subset(d) {
        return Err(AnalysisError::Precondition("F is not a subset of D".into()));
    }
    let opts = ChaseOptions::default();
    let banned: BTreeSet<Term> = if f.is_empty() {
        BTreeSet::new()
    } else {
        let core_dom = core_retract(theory, f, depth, slack)?.core.domain();
        let ch_f = chase_to(theory, f, depth, opts)?.stage(depth);
        ch_f.domain().into_iter().filter(|t| !core_dom.contains(t)).collect()
    };
    let ch_d = chase_to(theory, d, depth, opts)?.stage(depth);
    let keep: BTreeSet<Term> = ch_d.domain().into_iter().filter(|t| !banned.contains(t)).collect();
    let m_f = ch_d.restrict(&keep);
    let model = is_model(theory, &m_f);
    Ok(BannedReport {
        banned: banned.iter().map(|t| t.to_string()).collect(),
        m_f,
        is_model: model,
    })
}

/// Least core depth per instance; the maximum is a candidate uniform
/// bound.
pub fn ubdd_probe(theory: &RuleSet, instances: &[Instance], depth: usize, slack: usize) -> Result<ProbeReport, AnalysisError> {
    let mut report = ProbeReport::new("ubdd", depth);
    for d in instances {
        report.core_depths.push(core_retract(theory, d, depth, slack)?.c_value);
    }
    if let Some(&m) = report.core_depths.iter().max() {
        report.estimates.insert("c_T_candidate".into(), Estimate { value: m as f64, depth });
    }
    Ok(report)
}

/// Largest delay between the stage at which all terms of an atom exist
/// and the stage at which the atom appears.
pub fn n_at_estimate(run: &ChaseRun) -> usize {
    let limit = run.stage_len(run.depth());
    run.store().atoms()[..limit]
        .iter()
        .filter_map(|a| {
            let born = run.birth_stage(a)?;
            let terms = a.args().iter().filter_map(|t| run.term_birth(t)).max().unwrap_or(0);
            Some(born.saturating_sub(terms))
        })
        .max()
        .unwrap_or(0)
}

/// Adds a shared first argument `w` to every atom, so every rule body and
/// head becomes connected. Empty-body rules take `w` from the active
/// domain.
pub fn connect_theory(theory: &RuleSet) -> Result<RuleSet, AnalysisError> {
    let names: BTreeSet<Term> = theory
        .rules()
        .iter()
        .flat_map(|r| r.body().iter().chain(r.head()).flat_map(|a| a.vars()))
        .collect();
    let w = (0..)
        .map(|i| Term::var(&format!("w{i}")))
        .find(|t| !names.contains(t))
        .expect("fresh name");
    let widen = |a: &Atom| {
        let mut args = vec![w.clone()];
        args.extend(a.args().iter().cloned());
        Atom::new(a.relation(), args)
    };
    let mut rules = Vec::new();
    for r in theory.rules() {
        let body: Vec<Atom> = r.body().iter().map(widen).collect();
        let head: Vec<Atom> = r.head().iter().map(widen).collect();
        let mut dom = r.domain_vars().clone();
        if body.is_empty() {
            dom.insert(w.clone());
        }
        rules.push(Rule::new(body, head, dom)?);
    }
    Ok(RuleSet::new(rules)?)
}

/// The matching instance transformation with a fixed constant `c`.
pub fn connect_instance(d: &Instance, c: &Term) -> Instance {
    d.iter()
        .map(|a| {
            let mut args = vec![c.clone()];
            args.extend(a.args().iter().cloned());
            Atom::new(a.relation(), args)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::parse_instance;
    use crate::theories;

    #[test]
    fn island_counts() {
        let d = parse_instance("E(a,b). E(b,c). E(c,d).").unwrap();
        assert_eq!(islands(&d, 2, ISLAND_CAP).unwrap().len(), 7);
        assert_eq!(islands(&d, 5, ISLAND_CAP).unwrap().len(), 8);
        let big: Instance = (0..40).map(|i| Atom::new("P", vec![Term::constant(&format!("c{i}"))])).collect();
        assert!(matches!(islands(&big, 20, ISLAND_CAP), Err(AnalysisError::IslandCap(..))));
    }

    #[test]
    fn sticky_is_refuted() {
        let l = 2;
        let d = theories::sticky_instance(l);
        let p = LocalityParams {
            l,
            degree_bound: None,
            probe_depth: l,
        };
        let r = locality_refute(&theories::sticky(), &p, &d).unwrap();
        assert_eq!(r.verdict, Verdict::Refuted);
    }

    #[test]
    fn path_not_refuted() {
        let d = parse_instance("E(a,b). E(b,c). E(c,a).").unwrap();
        let p = LocalityParams {
            l: 1,
            degree_bound: None,
            probe_depth: 3,
        };
        let r = locality_refute(&theories::path(), &p, &d).unwrap();
        assert_eq!(r.verdict, Verdict::NotRefutedWithinBudget);
    }

    #[test]
    fn cd_of_two_edges() {
        let d = parse_instance("E(a,b). E(c,d).").unwrap();
        let r = compute_cd(&theories::core_exercise(), &d, 1, 4, 2).unwrap();
        assert_eq!(r.cd, parse_instance("E(a,b). E(b,b). E(c,d). E(d,d).").unwrap());
        assert!(r.k_observed <= r.max_c);
    }

    #[test]
    fn connect_adds_column() {
        let t = connect_theory(&theories::path()).unwrap();
        assert_eq!(t.signature()["E"], 3);
        assert!(t.rules()[0].is_connected());
    }
}
