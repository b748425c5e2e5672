//! Generic UCQ rewriting by piece unification.
//!
//! Breadth-first: each round rewrites the queries added in the previous
//! round with every rule, then keeps the union containment-minimal. Rules
//! with several head atoms are unified directly (a piece may hit several
//! head atoms); active-domain variables whose image drops out of the query
//! are re-expressed as one extra atom per (relation, position).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::homo::cq_contains;
use crate::model::{Atom, ConjunctiveQuery, ModelError, Rule, RuleSet, Term};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("query and rule set disagree on the arity of `{0}`")]
    Arity(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A containment-minimal union of conjunctive queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteSet {
    pub queries: Vec<ConjunctiveQuery>,
    /// No new query survived the last round.
    pub complete: bool,
    pub fuel_used: usize,
}

pub const DEFAULT_FUEL: usize = 8;

struct UnionFind {
    parent: HashMap<Term, Term>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: HashMap::new() }
    }

    fn find(&mut self, t: &Term) -> Term {
        let mut cur = t.clone();
        while let Some(p) = self.parent.get(&cur) {
            if p == &cur {
                break;
            }
            cur = p.clone();
        }
        cur
    }

    fn union(&mut self, a: &Term, b: &Term) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return true;
        }
        if ra.is_const() && rb.is_const() {
            return false;
        }
        // constants stay representatives
        if rb.is_const() {
            self.parent.insert(ra, rb);
        } else {
            self.parent.insert(rb, ra);
        }
        true
    }
}

struct Prepared {
    rule: Rule,
}

fn prepare(rule: &Rule, k: usize) -> Prepared {
    Prepared {
        rule: rule.rename_vars(|t| Term::var(&format!("~{k}~{t}"))),
    }
}

/// Every one-step rewriting of `q` with `rule` through a most general
/// single-piece unifier. `signature` supplies the atoms used to express
/// active-domain membership.
pub fn one_step_rewrites(q: &ConjunctiveQuery, rule: &Rule, signature: &BTreeMap<String, usize>) -> Vec<ConjunctiveQuery> {
    one_step_prepared(q, &prepare(rule, 0), signature)
}

fn one_step_prepared(q: &ConjunctiveQuery, p: &Prepared, signature: &BTreeMap<String, usize>) -> Vec<ConjunctiveQuery> {
    let atoms = q.body();
    let head = p.rule.head();
    let mut out: BTreeSet<ConjunctiveQuery> = BTreeSet::new();
    for start in 0..atoms.len() {
        for (hi, h) in head.iter().enumerate() {
            if h.relation() == atoms[start].relation() && h.arity() == atoms[start].arity() {
                let mut assign = BTreeMap::new();
                assign.insert(start, hi);
                grow(q, p, assign, signature, &mut out);
            }
        }
    }
    out.into_iter().collect()
}

fn grow(
    q: &ConjunctiveQuery,
    p: &Prepared,
    assign: BTreeMap<usize, usize>,
    signature: &BTreeMap<String, usize>,
    out: &mut BTreeSet<ConjunctiveQuery>,
) {
    let atoms = q.body();
    let head = p.rule.head();
    let mut uf = UnionFind::new();
    for (&qi, &hi) in &assign {
        for (a, b) in atoms[qi].args().iter().zip(head[hi].args()) {
            if !uf.union(a, b) {
                return;
            }
        }
    }
    let free: BTreeSet<&Term> = q.free_vars().iter().collect();
    let ex = p.rule.existentials();
    let fr = p.rule.frontier();
    // classes of existential variables
    let mut ex_class: HashMap<Term, Term> = HashMap::new();
    for w in ex {
        let r = uf.find(w);
        if r.is_const() {
            return;
        }
        if let Some(other) = ex_class.insert(r.clone(), w.clone()) {
            if &other != w {
                return;
            }
        }
    }
    for f in fr {
        if ex_class.contains_key(&uf.find(f)) {
            return;
        }
    }
    let mut query_terms: BTreeSet<Term> = BTreeSet::new();
    for a in atoms {
        for t in a.args() {
            query_terms.insert(t.clone());
        }
    }
    let mut forced: Option<usize> = None;
    for t in &query_terms {
        if !ex_class.contains_key(&uf.find(t)) {
            continue;
        }
        if t.is_const() || free.contains(t) {
            return;
        }
        if let Some(i) = (0..atoms.len()).find(|i| !assign.contains_key(i) && atoms[*i].contains_term(t)) {
            forced = Some(forced.map_or(i, |f: usize| f.min(i)));
        }
    }
    if let Some(i) = forced {
        for (hi, h) in head.iter().enumerate() {
            if h.relation() == atoms[i].relation() && h.arity() == atoms[i].arity() {
                let mut a2 = assign.clone();
                a2.insert(i, hi);
                grow(q, p, a2, signature, out);
            }
        }
        return;
    }
    emit(q, p, &assign, &mut uf, signature, out);
}

fn emit(
    q: &ConjunctiveQuery,
    p: &Prepared,
    assign: &BTreeMap<usize, usize>,
    uf: &mut UnionFind,
    signature: &BTreeMap<String, usize>,
    out: &mut BTreeSet<ConjunctiveQuery>,
) {
    // Representative per class: constant, else first free variable, else
    // a query variable, else the rule variable.
    let mut rep: HashMap<Term, Term> = HashMap::new();
    let mut classes: HashMap<Term, Vec<Term>> = HashMap::new();
    let mut all_terms: Vec<Term> = Vec::new();
    for a in q.body().iter().chain(p.rule.body()).chain(p.rule.head()) {
        all_terms.extend(a.args().iter().cloned());
    }
    all_terms.extend(p.rule.domain_vars().iter().cloned());
    all_terms.sort();
    all_terms.dedup();
    for t in &all_terms {
        classes.entry(uf.find(t)).or_default().push(t.clone());
    }
    let free_pos: HashMap<&Term, usize> = q.free_vars().iter().enumerate().rev().map(|(i, t)| (t, i)).collect();
    let query_vars = q.vars();
    for (root, members) in &classes {
        let chosen = members
            .iter()
            .find(|t| t.is_const())
            .or_else(|| members.iter().filter(|t| free_pos.contains_key(t)).min_by_key(|t| free_pos[t]))
            .or_else(|| members.iter().find(|t| query_vars.contains(t)))
            .unwrap_or(root)
            .clone();
        for m in members {
            rep.insert(m.clone(), chosen.clone());
        }
    }
    let map = |t: &Term| rep.get(t).cloned().unwrap_or_else(|| t.clone());
    let mut body: Vec<Atom> = q
        .body()
        .iter()
        .enumerate()
        .filter(|(i, _)| !assign.contains_key(i))
        .map(|(_, a)| a.map_terms(map))
        .collect();
    body.extend(p.rule.body().iter().map(|a| a.map_terms(map)));
    let free: Vec<Term> = q.free_vars().iter().map(map).collect();
    // active-domain obligations not already met by the body
    let mut pending: Vec<Term> = Vec::new();
    for d in p.rule.domain_vars() {
        let r = map(d);
        if !body.iter().any(|a| a.contains_term(&r)) && !pending.contains(&r) {
            pending.push(r);
        }
    }
    let mut bodies = vec![body];
    for (k, r) in pending.iter().enumerate() {
        let mut next = Vec::new();
        for b in &bodies {
            for (rel, &arity) in signature {
                for pos in 0..arity {
                    let args: Vec<Term> = (0..arity)
                        .map(|j| if j == pos { r.clone() } else { Term::var(&format!("~d{k}~{j}")) })
                        .collect();
                    let mut b2 = b.clone();
                    b2.push(Atom::new(rel, args));
                    next.push(b2);
                }
            }
        }
        bodies = next;
    }
    for b in bodies {
        if let Ok(cq) = ConjunctiveQuery::new(free.clone(), b) {
            out.insert(cq.canonical());
        }
    }
}

/// Breadth-first rewriting with containment minimization.
pub fn rewrite(theory: &RuleSet, q: &ConjunctiveQuery, fuel: usize) -> Result<RewriteSet, RewriteError> {
    let mut signature = theory.signature().clone();
    for a in q.body() {
        match signature.get(a.relation()) {
            Some(&n) if n != a.arity() => return Err(RewriteError::Arity(a.relation().to_string())),
            _ => {
                signature.insert(a.relation().to_string(), a.arity());
            }
        }
    }
    let prepared: Vec<Prepared> = theory.rules().iter().enumerate().map(|(k, r)| prepare(r, k)).collect();
    let start = q.canonical();
    let mut members: Vec<ConjunctiveQuery> = vec![start.clone()];
    let mut frontier: Vec<ConjunctiveQuery> = vec![start];
    let mut seen: BTreeSet<ConjunctiveQuery> = members.iter().cloned().collect();
    let mut complete = false;
    let mut fuel_used = 0;
    while fuel_used < fuel {
        fuel_used += 1;
        let mut candidates: BTreeSet<ConjunctiveQuery> = BTreeSet::new();
        for f in &frontier {
            for p in &prepared {
                for c in one_step_prepared(f, p, &signature) {
                    if seen.insert(c.clone()) {
                        candidates.insert(c);
                    }
                }
            }
        }
        let mut added = Vec::new();
        for c in candidates {
            if members.iter().any(|m| cq_contains(m, &c)) {
                continue;
            }
            members.retain(|m| !cq_contains(&c, m));
            added.retain(|m| !cq_contains(&c, m));
            members.push(c.clone());
            added.push(c);
        }
        if added.is_empty() {
            complete = true;
            break;
        }
        frontier = added;
    }
    members.sort();
    Ok(RewriteSet {
        queries: members,
        complete,
        fuel_used,
    })
}

/// Both sets complete and equal up to isomorphism of members.
pub fn unique_up_to_iso(a: &RewriteSet, b: &RewriteSet) -> bool {
    let ca: BTreeSet<ConjunctiveQuery> = a.queries.iter().map(ConjunctiveQuery::canonical).collect();
    let cb: BTreeSet<ConjunctiveQuery> = b.queries.iter().map(ConjunctiveQuery::canonical).collect();
    a.complete && b.complete && ca == cb
}

/// Every member of each union is contained by a member of the other.
pub fn ucq_equivalent(a: &[ConjunctiveQuery], b: &[ConjunctiveQuery]) -> bool {
    a.iter().all(|q| b.iter().any(|p| cq_contains(p, q))) && b.iter().all(|q| a.iter().any(|p| cq_contains(p, q)))
}

/// Removes members contained by another member; keeps the first of
/// equivalent pairs.
pub fn minimize(queries: Vec<ConjunctiveQuery>) -> Vec<ConjunctiveQuery> {
    let mut qs: Vec<ConjunctiveQuery> = queries.iter().map(ConjunctiveQuery::canonical).collect();
    qs.sort();
    qs.dedup();
    let mut keep: Vec<ConjunctiveQuery> = Vec::new();
    for (i, c) in qs.iter().enumerate() {
        let dominated = qs.iter().enumerate().any(|(j, m)| {
            j != i && cq_contains(m, c) && (!cq_contains(c, m) || j < i)
        });
        if !dominated {
            keep.push(c.clone());
        }
    }
    keep
}

/// Splits multi-atom heads through an auxiliary predicate over frontier
/// and existential variables plus one projection rule per head atom.
pub fn head_split(theory: &RuleSet) -> Result<RuleSet, ModelError> {
    let mut out = Vec::new();
    for (k, r) in theory.rules().iter().enumerate() {
        if r.head().len() == 1 {
            out.push(r.clone());
            continue;
        }
        let mut vars: Vec<Term> = r.frontier().iter().cloned().collect();
        vars.extend(r.existentials().iter().cloned());
        let aux = Atom::new(&format!("Aux{k}"), vars);
        out.push(Rule::new(r.body().to_vec(), vec![aux.clone()], r.domain_vars().clone())?);
        for h in r.head() {
            out.push(Rule::new(vec![aux.clone()], vec![h.clone()], BTreeSet::new())?);
        }
    }
    RuleSet::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textio::{parse_query, parse_rules};

    #[test]
    fn path_rule_rewriting() {
        let t = parse_rules("E(x,y) -> exists z. E(y,z).").unwrap();
        let q = parse_query("?(y) := E(y,z).").unwrap();
        let rs = rewrite(&t, &q, 3).unwrap();
        assert!(rs.complete);
        let expect = [parse_query("?(y) := E(y,z).").unwrap(), parse_query("?(y) := E(x,y).").unwrap()];
        assert!(ucq_equivalent(&rs.queries, &expect));
        assert_eq!(rs.queries.len(), 2);
    }

    #[test]
    fn existential_blocks_free_variable() {
        let t = parse_rules("E(x,y) -> exists z. E(y,z).").unwrap();
        let q = parse_query("?(y,z) := E(y,z).").unwrap();
        let rs = rewrite(&t, &q, 3).unwrap();
        assert_eq!(rs.queries.len(), 1);
    }

    #[test]
    fn domain_variable_expands() {
        let t = parse_rules("@dom(x) -> exists z. R(x,z).").unwrap();
        let q = parse_query("?(x) := R(x,u).").unwrap();
        let rs = rewrite(&t, &q, 3).unwrap();
        // x is in the active domain iff it occurs in some R-atom
        let expect = [parse_query("?(x) := R(x,u).").unwrap(), parse_query("?(x) := R(u,x).").unwrap()];
        assert!(ucq_equivalent(&rs.queries, &expect));
    }
}
