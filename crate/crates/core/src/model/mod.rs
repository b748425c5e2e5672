//! Terms, atoms, instances, rules and conjunctive queries.

mod atom;
pub mod canon;
mod query;
mod rule;
mod term;

pub use atom::{components, gaifman, gaifman_distance, Atom, Instance};
pub use query::ConjunctiveQuery;
pub use rule::{iso_type, skolemize_head, HeadType, Rule, RuleSet};
pub(crate) use rule::check_arity as rule_check_arity;
pub use term::{Skolem, Subst, TauId, Term};

use thiserror::Error;

/// Structural errors raised while building model values.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("rule head is empty")]
    EmptyHead,
    #[error("constant `{0}` in rule head is not supported")]
    HeadConstant(String),
    #[error("Skolem term `{0}` not allowed here")]
    SkolemInRule(String),
    #[error("active-domain variable `{0}` must occur in the head and not in the body")]
    BadDomainVar(String),
    #[error("relation `{relation}` used with arity {found}, expected {expected}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` is not a variable")]
    NotAVariable(String),
    #[error("instance atom `{0}` is not ground")]
    NotGround(String),
}

/// Builds an instance, rejecting atoms that mention variables.
pub fn ground_instance(atoms: impl IntoIterator<Item = Atom>) -> Result<Instance, ModelError> {
    let mut out = Instance::new();
    for a in atoms {
        if !a.is_ground() {
            return Err(ModelError::NotGround(a.to_string()));
        }
        out.insert(a);
    }
    Ok(out)
}
