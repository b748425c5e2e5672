//! The rewriting process with its rank monitor.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Atom, ConjunctiveQuery, Term};
use crate::rewriter::minimize;

use super::marked::{self, Case, Levels, MarkedQuery};
use super::rank::{erk, qrk, RankValue};
use super::MarkedError;

#[derive(Clone, Debug)]
pub struct ProcessOptions {
    pub step_budget: usize,
    pub trace: bool,
    /// Recompute atom ranks to check the per-operation lemma clauses.
    pub check_clauses: bool,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        ProcessOptions {
            step_budget: 1_000_000,
            trace: false,
            check_clauses: true,
        }
    }
}

/// One process step. `rank_removed` leaves the set rank, `ranks_added`
/// enter it; the step is legal when every added rank is below the removed
/// one.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub index: usize,
    pub op: String,
    pub input: MarkedQuery,
    /// New members only; duplicates of queries already present are skipped.
    pub outputs: Vec<MarkedQuery>,
    pub rank_removed: RankValue,
    pub ranks_added: Vec<RankValue>,
    pub set_size_before: usize,
    pub set_size_after: usize,
}

#[derive(Clone, Debug)]
pub struct ProcessResult {
    /// Containment-minimal union of the totally marked queries.
    pub queries: Vec<ConjunctiveQuery>,
    pub totally_marked: Vec<MarkedQuery>,
    pub steps: usize,
    /// Queries dropped because some lower-level atom had no hike.
    pub discarded: usize,
    pub trace: Vec<TraceStep>,
}

/// Process for the red/green theory.
pub fn run_process(q: &ConjunctiveQuery) -> Result<ProcessResult, MarkedError> {
    run_process_with(q, &Levels::red_green(), &ProcessOptions::default())
}

/// Process for the `k`-level theory over `I1..Ik`.
pub fn run_process_k(k: usize, q: &ConjunctiveQuery) -> Result<ProcessResult, MarkedError> {
    run_process_with(q, &Levels::indexed(k), &ProcessOptions::default())
}

fn validate(q: &ConjunctiveQuery, levels: &Levels) -> Result<(), MarkedError> {
    for a in q.body() {
        if levels.index(a.relation()).is_none() || a.arity() != 2 {
            return Err(MarkedError::UnknownRelation(format!("{}/{}", a.relation(), a.arity())));
        }
    }
    if let Some(c) = q.constants().into_iter().next() {
        return Err(MarkedError::Constant(c.to_string()));
    }
    if !q.is_connected() {
        return Err(MarkedError::Disconnected);
    }
    Ok(())
}

fn priority(c: &Case) -> u8 {
    match c {
        Case::DuplicateTargets { .. } => 0,
        Case::RedGreenPair { .. } => 1,
        Case::SingleIncoming { .. } => 2,
        Case::Stuck => 3,
    }
}

enum Applied {
    Cut { level: usize },
    Fuse { level: usize, keep: Term, gone: Term },
    Reduce { level: usize, new_lower: [Atom; 2], removed_lower: Atom },
}

pub fn run_process_with(q: &ConjunctiveQuery, levels: &Levels, opts: &ProcessOptions) -> Result<ProcessResult, MarkedError> {
    validate(q, levels)?;
    if q.is_boolean() {
        // The loop fact satisfies every Boolean query over the levels.
        let t = ConjunctiveQuery::new(vec![], vec![]).expect("empty Boolean query");
        return Ok(ProcessResult {
            queries: vec![t],
            totally_marked: vec![],
            steps: 0,
            discarded: 0,
            trace: vec![],
        });
    }

    let mut live: BTreeMap<MarkedQuery, RankValue> = BTreeMap::new();
    let mut done: BTreeMap<MarkedQuery, RankValue> = BTreeMap::new();
    let mut discarded = 0usize;
    for m in marked::initial_markings(q, levels)? {
        let c = m.canonical();
        match qrk(&c, levels) {
            Ok(r) => {
                if c.is_totally_marked() {
                    done.insert(c, r);
                } else {
                    live.insert(c, r);
                }
            }
            Err(MarkedError::Unreachable(a)) => {
                log::warn!("initial marking {c} dropped: no hike to {a}");
                discarded += 1;
            }
            Err(e) => return Err(e),
        }
    }

    let mut trace = Vec::new();
    let mut steps = 0usize;
    while let Some((cur, rank)) = live.pop_first() {
        if steps == opts.step_budget {
            return Err(MarkedError::Budget(opts.step_budget));
        }
        steps += 1;
        let size_before = live.len() + done.len() + 1;
        let (x, case) = marked::classify_maximal(&cur, levels)
            .into_iter()
            .min_by(|a, b| (priority(&a.1), &a.0).cmp(&(priority(&b.1), &b.0)))
            .ok_or_else(|| MarkedError::Invariant(format!("live query {cur} has no maximal variable")))?;
        let (op, raw, applied) = match &case {
            Case::DuplicateTargets { level, z, z2 } => {
                let (out, keep, gone) = marked::fuse(&cur, z, z2);
                let op = format!("fuse-{} {x}: {z2}~{z}", levels.name(*level));
                (op, vec![out], Applied::Fuse { level: *level, keep, gone })
            }
            Case::RedGreenPair { level, upper, lower } => {
                let r = marked::reduce(&cur, levels, &x, *level, upper, lower);
                let op = format!("reduce-{} {x}", levels.name(*level));
                (op, r.outputs, Applied::Reduce { level: *level, new_lower: r.new_lower, removed_lower: r.removed_lower })
            }
            Case::SingleIncoming { level, .. } => {
                let op = format!("cut-{} {x}", levels.name(*level));
                (op, vec![marked::cut(&cur, &x)], Applied::Cut { level: *level })
            }
            Case::Stuck => {
                return Err(MarkedError::Invariant(format!("no operation applies to {cur} at {x}")));
            }
        };

        let mut outputs = Vec::new();
        let mut added = Vec::new();
        for o in raw {
            if !marked::is_properly_marked(&o, levels) {
                log::debug!("{op}: dropping improperly marked {o}");
                continue;
            }
            if opts.check_clauses {
                check_clause(&cur, &o, &applied, levels).map_err(|e| match e {
                    MarkedError::Invariant(m) => MarkedError::Invariant(format!("{op} on {cur}: {m}")),
                    other => other,
                })?;
            }
            let c = o.canonical();
            if live.contains_key(&c) || done.contains_key(&c) {
                continue;
            }
            let r = match qrk(&c, levels) {
                Ok(r) => r,
                Err(MarkedError::Unreachable(a)) => {
                    log::warn!("{op}: {c} dropped, no hike to {a}");
                    discarded += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if r >= rank {
                return Err(MarkedError::Invariant(format!(
                    "{op}: rank of {c} is {r}, not below {rank} of {cur}"
                )));
            }
            if opts.trace {
                outputs.push(c.clone());
                added.push(r.clone());
            }
            if c.is_totally_marked() {
                done.insert(c, r);
            } else {
                live.insert(c, r);
            }
        }
        if opts.trace {
            trace.push(TraceStep {
                index: steps,
                op,
                input: cur.clone(),
                outputs,
                rank_removed: rank.clone(),
                ranks_added: added,
                set_size_before: size_before,
                set_size_after: live.len() + done.len(),
            });
        }
    }

    let totally_marked: Vec<MarkedQuery> = done.into_keys().collect();
    let queries = minimize(totally_marked.iter().map(|m| m.query().clone()).collect());
    Ok(ProcessResult {
        queries,
        totally_marked,
        steps,
        discarded,
        trace,
    })
}

fn violation(msg: String) -> Result<(), MarkedError> {
    Err(MarkedError::Invariant(msg))
}

/// Rank-delta clauses for the level pairs touched by an operation.
fn check_clause(q: &MarkedQuery, out: &MarkedQuery, applied: &Applied, levels: &Levels) -> Result<(), MarkedError> {
    let top = levels.len() - 1;
    let count = |m: &MarkedQuery, l: usize| m.count(levels.name(l));
    match applied {
        Applied::Cut { level } => {
            let l = *level;
            if l >= 1 && count(out, l) + 1 != count(q, l) {
                return violation(format!("cut did not drop one {}-atom", levels.name(l)));
            }
            if l < top {
                if count(out, l + 1) != count(q, l + 1) {
                    return violation("cut changed the upper count".into());
                }
                for b in out.atoms_of(levels.name(l)) {
                    if erk(out, levels, l + 1, b)? > erk(q, levels, l + 1, b)? {
                        return violation(format!("cut raised the rank of {b}"));
                    }
                }
            }
        }
        Applied::Fuse { level, keep, gone } => {
            let l = *level;
            if l >= 1 && count(out, l) >= count(q, l) {
                return violation(format!("fuse kept every {}-atom", levels.name(l)));
            }
            if l < top && count(out, l + 1) == count(q, l + 1) {
                let ren = |t: &Term| if t == gone { keep.clone() } else { t.clone() };
                for b in q.atoms_of(levels.name(l)) {
                    let img = b.map_terms(ren);
                    if erk(out, levels, l + 1, &img)? > erk(q, levels, l + 1, b)? {
                        return violation(format!("fuse raised the rank of {b}"));
                    }
                }
            } else if l < top && count(out, l + 1) > count(q, l + 1) {
                return violation("fuse grew the upper count".into());
            }
        }
        Applied::Reduce {
            level,
            new_lower,
            removed_lower,
        } => {
            let u = level + 1;
            if count(out, u) != count(q, u) {
                return violation("reduce changed the upper count".into());
            }
            let old = erk(q, levels, u, removed_lower)?;
            for a in new_lower {
                if erk(out, levels, u, a)? >= old {
                    return violation(format!("new atom {a} not ranked below {removed_lower}"));
                }
            }
            let fresh: BTreeSet<&Atom> = new_lower.iter().collect();
            for b in out.atoms_of(levels.name(*level)).filter(|b| !fresh.contains(b)) {
                if erk(out, levels, u, b)? > erk(q, levels, u, b)? {
                    return violation(format!("reduce raised the rank of {b}"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theories::{green_path_query, phi_r};

    #[test]
    fn phi_r1_gives_green_square() {
        let r = run_process(&phi_r(1)).unwrap();
        let want = green_path_query(2).canonical();
        assert!(r.queries.iter().any(|q| q.canonical() == want), "{:?}", r.queries);
    }

    #[test]
    fn totally_marked_input_passes_through() {
        let q = green_path_query(1);
        let r = run_process(&q).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.queries, vec![q.canonical()]);
    }
}
