//! Hikes, atom ranks and query ranks.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use crate::model::{Atom, Term};

use super::marked::{Levels, MarkedQuery};
use super::multiset::Multiset;
use super::MarkedError;

/// A hike: directed steps over query atoms, `true` meaning forward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hike {
    pub steps: Vec<(Atom, bool)>,
    pub cost: u128,
}

type State = (usize, u64, u32);

enum Node {
    At(State),
    Done,
}

fn pow3(e: u32) -> Result<u128, MarkedError> {
    3u128.checked_pow(e).ok_or(MarkedError::Overflow)
}

/// Least-cost hike ending with `alpha` (an atom of level `upper-1`) for the
/// level pair `(upper, upper-1)`. Upper-level steps raise (forward) or lower
/// (backward) the exponent and may use each atom once; lower-level steps
/// cost `3^exponent`; other atoms are free. The exponent starts at the
/// number of upper-level atoms. `None` if no marked variable reaches
/// `alpha`.
pub fn min_hike(mq: &MarkedQuery, levels: &Levels, upper: usize, alpha: &Atom) -> Result<Option<Hike>, MarkedError> {
    let atoms = mq.atoms();
    let (un, ln) = (levels.name(upper), levels.name(upper - 1));
    let vars: Vec<Term> = mq.query().vars().into_iter().collect();
    let vid = |t: &Term| vars.binary_search(t).expect("query variable");
    let mut red_bit: HashMap<usize, u32> = HashMap::new();
    for (i, a) in atoms.iter().enumerate() {
        if a.relation() == un {
            let b = red_bit.len() as u32;
            if b >= 64 {
                return Err(MarkedError::TooLarge(format!("more than 64 {un}-atoms")));
            }
            red_bit.insert(i, b);
        }
    }
    let base = red_bit.len() as u32;
    // adjacency: vertex -> (atom index, forward, other end)
    let mut adj: Vec<Vec<(usize, bool, usize)>> = vec![Vec::new(); vars.len()];
    for (i, a) in atoms.iter().enumerate() {
        let (s, d) = (vid(&a.args()[0]), vid(&a.args()[1]));
        adj[s].push((i, true, d));
        adj[d].push((i, false, s));
    }
    let alpha_idx = atoms.iter().position(|a| a == alpha).ok_or_else(|| {
        MarkedError::Malformed(format!("{alpha} is not an atom of the query"))
    })?;
    if alpha.relation() != ln {
        return Err(MarkedError::Malformed(format!("{alpha} is not a {ln}-atom")));
    }

    let mut dist: HashMap<State, u128> = HashMap::new();
    let mut parent: HashMap<State, (State, usize, bool)> = HashMap::new();
    let mut heap: BinaryHeap<Reverse<(u128, u8, State)>> = BinaryHeap::new();
    for m in mq.marked() {
        let s = (vid(m), 0u64, base);
        dist.insert(s, 0);
        heap.push(Reverse((0, 0, s)));
    }
    let mut best: Option<(u128, State, bool)> = None;
    while let Some(Reverse((c, tag, s))) = heap.pop() {
        if tag == 1 {
            break;
        }
        if dist.get(&s).is_some_and(|&d| d < c) {
            continue;
        }
        let (v, mask, e) = s;
        for &(ai, fwd, w) in &adj[v] {
            let a = &atoms[ai];
            let next: Node;
            let mut step_cost = 0u128;
            if let Some(&bit) = red_bit.get(&ai) {
                if mask >> bit & 1 == 1 {
                    continue;
                }
                let e2 = if fwd { e + 1 } else { e.checked_sub(1).ok_or(MarkedError::Invariant("negative elevation".into()))? };
                next = Node::At((w, mask | 1 << bit, e2));
            } else if a.relation() == ln {
                step_cost = pow3(e)?;
                next = if ai == alpha_idx { Node::Done } else { Node::At((w, mask, e)) };
            } else {
                next = Node::At((w, mask, e));
            }
            let c2 = c.checked_add(step_cost).ok_or(MarkedError::Overflow)?;
            match next {
                Node::Done => {
                    if best.as_ref().is_none_or(|b| c2 < b.0) {
                        best = Some((c2, s, fwd));
                        heap.push(Reverse((c2, 1, s)));
                    }
                }
                Node::At(s2) => {
                    if dist.get(&s2).is_none_or(|&d| c2 < d) {
                        dist.insert(s2, c2);
                        parent.insert(s2, (s, ai, fwd));
                        heap.push(Reverse((c2, 0, s2)));
                    }
                }
            }
        }
    }
    let Some((cost, mut s, fwd)) = best else {
        return Ok(None);
    };
    let mut steps = vec![(alpha.clone(), fwd)];
    while let Some(&(p, ai, f)) = parent.get(&s) {
        steps.push((atoms[ai].clone(), f));
        s = p;
    }
    steps.reverse();
    if steps[..steps.len() - 1].iter().any(|(a, _)| a == alpha) {
        return Err(MarkedError::Invariant(format!("least hike to {alpha} uses it twice")));
    }
    Ok(Some(Hike { steps, cost }))
}

/// `erk` for the pair `(upper, upper-1)`.
pub fn erk(mq: &MarkedQuery, levels: &Levels, upper: usize, alpha: &Atom) -> Result<u128, MarkedError> {
    min_hike(mq, levels, upper, alpha)?
        .map(|h| h.cost)
        .ok_or_else(|| MarkedError::Unreachable(alpha.to_string()))
}

/// Query rank: `(|Q_u|, {erk of level u-1 atoms})` for `u` from the top
/// level down to the second, compared lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RankValue(pub Vec<(usize, Multiset<u128>)>);

impl fmt::Display for RankValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, (c, m)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}, {m}")?;
        }
        f.write_str(">")
    }
}

/// Ranks of every lower-level atom for the pair `(upper, upper-1)`.
pub fn atom_ranks(mq: &MarkedQuery, levels: &Levels, upper: usize) -> Result<Vec<(Atom, u128)>, MarkedError> {
    mq.atoms_of(levels.name(upper - 1))
        .map(|a| Ok((a.clone(), erk(mq, levels, upper, a)?)))
        .collect()
}

pub fn qrk(mq: &MarkedQuery, levels: &Levels) -> Result<RankValue, MarkedError> {
    let mut out = Vec::with_capacity(levels.len() - 1);
    for upper in (1..levels.len()).rev() {
        let count = mq.count(levels.name(upper));
        let ranks = atom_ranks(mq, levels, upper)?.into_iter().map(|(_, r)| r).collect();
        out.push((count, ranks));
    }
    Ok(RankValue(out))
}

/// `srk`: the multiset of query ranks.
pub fn srk<'a>(set: impl IntoIterator<Item = &'a MarkedQuery>, levels: &Levels) -> Result<Multiset<RankValue>, MarkedError> {
    set.into_iter().map(|q| qrk(q, levels)).collect()
}

/// Strict rank order on queries.
pub fn rank_less(a: &RankValue, b: &RankValue) -> bool {
    a < b
}
