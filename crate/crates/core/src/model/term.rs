//! Terms: constants, variables and Skolem terms.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Identifier of the isomorphism type of a rule head.
///
/// The wrapped string is the canonical serialization produced by
/// [`crate::model::iso_type`]; two heads share a `TauId` iff they are
/// isomorphic with frontier and existential positions preserved.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TauId(Arc<str>);

impl TauId {
    pub fn new(s: impl Into<Arc<str>>) -> Self {
        TauId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TauId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Payload of a Skolem term `sk[tau/position](args)`.
#[derive(PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Skolem {
    tau: TauId,
    position: u32,
    args: Vec<Term>,
    // Cached structural hash; equal payloads always carry equal digests.
    digest: u64,
}

impl Skolem {
    pub fn tau(&self) -> &TauId {
        &self.tau
    }

    /// 1-based position of the existential variable in the canonical head.
    pub fn position(&self) -> u32 {
        self.position
    }

    pub fn args(&self) -> &[Term] {
        &self.args
    }
}

/// A term. Constants and variables are named; Skolem terms are structural.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Term {
    Const(Arc<str>),
    Var(Arc<str>),
    Skolem(Arc<Skolem>),
}

/// Substitution from variables to terms.
pub type Subst = BTreeMap<Term, Term>;

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Term::Const(c) => {
                0u8.hash(state);
                c.hash(state);
            }
            Term::Var(v) => {
                1u8.hash(state);
                v.hash(state);
            }
            Term::Skolem(s) => {
                2u8.hash(state);
                s.digest.hash(state);
            }
        }
    }
}

impl Term {
    pub fn constant(name: &str) -> Term {
        Term::Const(Arc::from(name))
    }

    pub fn var(name: &str) -> Term {
        Term::Var(Arc::from(name))
    }

    pub fn skolem(tau: TauId, position: u32, args: Vec<Term>) -> Term {
        let mut h = DefaultHasher::new();
        tau.hash(&mut h);
        position.hash(&mut h);
        args.hash(&mut h);
        let digest = h.finish();
        Term::Skolem(Arc::new(Skolem {
            tau,
            position,
            args,
            digest,
        }))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }

    pub fn is_skolem(&self) -> bool {
        matches!(self, Term::Skolem(_))
    }

    pub fn as_skolem(&self) -> Option<&Skolem> {
        match self {
            Term::Skolem(s) => Some(s),
            _ => None,
        }
    }

    /// Name of a constant or variable.
    pub fn name(&self) -> Option<&str> {
        match self {
            Term::Const(n) | Term::Var(n) => Some(n),
            Term::Skolem(_) => None,
        }
    }

    /// True if no variable occurs in the term.
    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Var(_) => false,
            Term::Skolem(s) => s.args.iter().all(Term::is_ground),
        }
    }

    /// Nesting depth of Skolem symbols (0 for constants and variables).
    pub fn depth(&self) -> usize {
        match self {
            Term::Skolem(s) => 1 + s.args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn substitute(&self, sigma: &Subst) -> Term {
        match self {
            Term::Var(_) => sigma.get(self).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
            Term::Skolem(s) => {
                if s.args.iter().all(Term::is_ground) {
                    return self.clone();
                }
                Term::skolem(
                    s.tau.clone(),
                    s.position,
                    s.args.iter().map(|a| a.substitute(sigma)).collect(),
                )
            }
        }
    }

    /// Collects the variables occurring in the term.
    pub fn collect_vars(&self, out: &mut Vec<Term>) {
        match self {
            Term::Var(_) => out.push(self.clone()),
            Term::Const(_) => {}
            Term::Skolem(s) => s.args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(n) | Term::Var(n) => f.write_str(n),
            Term::Skolem(s) => {
                write!(f, "sk[{}/{}](", s.tau, s.position)?;
                for (i, a) in s.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
