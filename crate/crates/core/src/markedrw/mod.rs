//! Complete rewriting for the red/green theory and its `K`-level
//! generalization via marked queries.
//!
//! A marked query records which variables go into the instance. The
//! process repeatedly rewrites the least live query with cut, fuse or
//! reduce until only totally marked queries remain; termination is
//! monitored by a multiset rank that must drop at every step.

pub mod marked;
pub mod multiset;
pub mod process;
pub mod rank;

use thiserror::Error;

use crate::model::RuleSet;
use crate::textio::parse_rules;

pub use marked::{
    classify_maximal, cut, fuse, initial_markings, is_live, is_properly_marked, maximal_vars, reduce,
    satisfies_marked, Case, Levels, MarkedQuery,
};
pub use multiset::Multiset;
pub use process::{run_process, run_process_k, run_process_with, ProcessOptions, ProcessResult, TraceStep};
pub use rank::{erk, min_hike, qrk, rank_less, srk, Hike, RankValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarkedError {
    #[error("malformed marked query: {0}")]
    Malformed(String),
    #[error("query is not connected")]
    Disconnected,
    #[error("query mentions constant `{0}`")]
    Constant(String),
    #[error("relation `{0}` is outside the level signature")]
    UnknownRelation(String),
    #[error("input too large: {0}")]
    TooLarge(String),
    #[error("rank arithmetic overflow")]
    Overflow,
    #[error("no hike reaches {0}")]
    Unreachable(String),
    #[error("step budget of {0} exhausted")]
    Budget(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// `loop`, one `pin_k` per level and `grid_i` for each adjacent pair, over
/// `I1..IK`.
pub fn gen_theory_k(k: usize) -> RuleSet {
    assert!(k >= 2, "at least two levels");
    let levels: Vec<String> = (1..=k).rev().map(|i| format!("I{i}(x,x)")).collect();
    let mut text = format!("true -> exists x. {}.\n", levels.join(", "));
    for i in (1..=k).rev() {
        text.push_str(&format!("@dom(x) -> exists z. I{i}(x,z).\n"));
    }
    for i in 1..k {
        let j = i + 1;
        text.push_str(&format!("I{j}(x,x1), I{i}(x,u), I{i}(u,u1) -> exists z. I{j}(u1,z), I{i}(x1,z).\n"));
    }
    parse_rules(&text).expect("generated theory parses")
}
