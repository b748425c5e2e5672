//! Conjunctive queries.

use std::collections::BTreeSet;
use std::fmt;

use super::atom::{components, Atom, Instance};
use super::canon::canonical_rename;
use super::term::Term;
use super::ModelError;

/// `?(free_vars) := body`. Free variables may repeat (equated answers).
/// A free variable missing from the body ranges over the active domain;
/// cut produces these when it drops the last atom of a free variable.
/// An empty body denotes `true`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ConjunctiveQuery {
    free_vars: Vec<Term>,
    body: Vec<Atom>,
}

impl ConjunctiveQuery {
    pub fn new(free_vars: Vec<Term>, body: Vec<Atom>) -> Result<ConjunctiveQuery, ModelError> {
        let mut body = body;
        body.sort();
        body.dedup();
        for a in &body {
            if let Some(t) = a.args().iter().find(|t| t.is_skolem()) {
                return Err(ModelError::SkolemInRule(t.to_string()));
            }
        }
        if let Some(f) = free_vars.iter().find(|f| !f.is_var()) {
            return Err(ModelError::NotAVariable(f.to_string()));
        }
        Ok(ConjunctiveQuery { free_vars, body })
    }

    pub fn free_vars(&self) -> &[Term] {
        &self.free_vars
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn size(&self) -> usize {
        self.body.len()
    }

    pub fn is_boolean(&self) -> bool {
        self.free_vars.is_empty()
    }

    /// Body variables and free variables.
    pub fn vars(&self) -> BTreeSet<Term> {
        self.body.iter().flat_map(Atom::vars).chain(self.free_vars.iter().cloned()).collect()
    }

    pub fn bound_vars(&self) -> BTreeSet<Term> {
        let free: BTreeSet<&Term> = self.free_vars.iter().collect();
        self.vars().into_iter().filter(|v| !free.contains(v)).collect()
    }

    pub fn constants(&self) -> BTreeSet<Term> {
        self.body
            .iter()
            .flat_map(|a| a.args().iter().filter(|t| t.is_const()).cloned())
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        components(&self.body, Term::is_var).len() <= 1
    }

    pub fn as_instance(&self) -> Instance {
        self.body.iter().cloned().collect()
    }

    /// Canonical representative: bound variables renamed `_0, _1, ..`
    /// (skipping names taken by free variables). Two queries are
    /// isomorphic with free variables fixed iff their canonical forms agree.
    pub fn canonical(&self) -> ConjunctiveQuery {
        self.canonical_with(&|_| 0)
    }

    /// Canonical form with an extra colouring of bound variables.
    pub fn canonical_with(&self, label: &dyn Fn(&Term) -> u32) -> ConjunctiveQuery {
        self.canonical_map(label).0
    }

    /// Canonical form together with the renaming of bound variables.
    pub fn canonical_map(&self, label: &dyn Fn(&Term) -> u32) -> (ConjunctiveQuery, std::collections::BTreeMap<Term, Term>) {
        let bound: Vec<Term> = self.bound_vars().into_iter().collect();
        let taken: BTreeSet<String> = self.free_vars.iter().map(|t| t.to_string()).collect();
        let names = fresh_names(&taken, bound.len());
        let (body, map) = canonical_rename(&self.body, &bound, label, &|i| Term::var(&names[i]));
        (
            ConjunctiveQuery {
                free_vars: self.free_vars.clone(),
                body,
            },
            map,
        )
    }

    /// Applies a variable renaming to free variables and body.
    pub fn rename(&self, f: impl Fn(&Term) -> Term) -> ConjunctiveQuery {
        let g = |t: &Term| if t.is_var() { f(t) } else { t.clone() };
        let mut body: Vec<Atom> = self.body.iter().map(|a| a.map_terms(g)).collect();
        body.sort();
        body.dedup();
        ConjunctiveQuery {
            free_vars: self.free_vars.iter().map(g).collect(),
            body,
        }
    }
}

fn fresh_names(taken: &BTreeSet<String>, n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    while out.len() < n {
        let s = format!("_{i}");
        if !taken.contains(&s) {
            out.push(s);
        }
        i += 1;
    }
    out
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fv: Vec<String> = self.free_vars.iter().map(|t| t.to_string()).collect();
        write!(f, "?({}) := ", fv.join(","))?;
        if self.body.is_empty() {
            f.write_str("true.")
        } else {
            let b: Vec<String> = self.body.iter().map(|a| a.to_string()).collect();
            write!(f, "{}.", b.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(r: &str, args: &[&str]) -> Atom {
        Atom::new(r, args.iter().map(|a| Term::var(a)).collect())
    }

    #[test]
    fn canonical_ignores_bound_names() {
        let a = ConjunctiveQuery::new(vec![Term::var("x")], vec![at("G", &["x", "u"]), at("G", &["u", "w"])]).unwrap();
        let b = ConjunctiveQuery::new(vec![Term::var("x")], vec![at("G", &["p", "q"]), at("G", &["x", "p"])]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_ne!(a.canonical(), a.rename(|t| if t == &Term::var("x") { Term::var("y") } else { t.clone() }).canonical());
    }

    #[test]
    fn free_var_outside_body() {
        let q = ConjunctiveQuery::new(vec![Term::var("x")], vec![at("G", &["u", "v"])]).unwrap();
        assert!(q.vars().contains(&Term::var("x")));
        assert!(!q.bound_vars().contains(&Term::var("x")));
        assert_eq!(q.to_string(), "?(x) := G(u,v).");
    }
}
