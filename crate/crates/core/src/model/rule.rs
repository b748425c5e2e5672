//! Existential rules, head isomorphism types and Skolemization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::atom::{components, Atom};
use super::canon::canonical_rename;
use super::term::{Subst, TauId, Term};
use super::ModelError;

/// Canonical description of a head: its type, the frontier variables in
/// canonical order and, per existential variable, its earliest position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadType {
    pub tau: TauId,
    pub frontier_order: Vec<Term>,
    pub positions: BTreeMap<Term, u32>,
}

/// Computes the isomorphism type of `head` given its universally
/// quantified variables. Positions are counted across the whole head.
pub fn iso_type(head: &[Atom], frontier: &BTreeSet<Term>) -> HeadType {
    let mut vars: Vec<Term> = head.iter().flat_map(Atom::vars).collect();
    vars.sort();
    vars.dedup();
    let (canon, map) = canonical_rename(
        head,
        &vars,
        &|t| u32::from(!frontier.contains(t)),
        &|i| Term::var(&format!("_{i}")),
    );
    let back: BTreeMap<&Term, &Term> = map.iter().map(|(k, v)| (v, k)).collect();
    let mut tokens: BTreeMap<Term, String> = BTreeMap::new();
    let mut frontier_order = Vec::new();
    let mut positions = BTreeMap::new();
    let (mut nf, mut ne, mut pos) = (0, 0, 0u32);
    let mut parts = Vec::new();
    for a in &canon {
        let mut args = Vec::new();
        for t in a.args() {
            pos += 1;
            let orig = back.get(t).map(|o| (*o).clone());
            let tok = match (&orig, tokens.get(t)) {
                (_, Some(tok)) => tok.clone(),
                (Some(o), None) => {
                    let tok = if frontier.contains(o) {
                        nf += 1;
                        frontier_order.push(o.clone());
                        format!("f{nf}")
                    } else {
                        ne += 1;
                        positions.insert(o.clone(), pos);
                        format!("e{ne}")
                    };
                    tokens.insert(t.clone(), tok.clone());
                    tok
                }
                (None, None) => t.to_string(),
            };
            args.push(tok);
        }
        parts.push(format!("{}({})", a.relation(), args.join(",")));
    }
    HeadType {
        tau: TauId::new(parts.join("&")),
        frontier_order,
        positions,
    }
}

/// Replaces every existential variable of `head` by its Skolem template
/// `sk[tau/i](frontier..)`. The templates still mention frontier variables.
pub fn skolemize_head(head: &[Atom], frontier: &BTreeSet<Term>) -> Vec<Atom> {
    let ht = iso_type(head, frontier);
    let sigma: Subst = ht
        .positions
        .iter()
        .map(|(w, &p)| (w.clone(), Term::skolem(ht.tau.clone(), p, ht.frontier_order.clone())))
        .collect();
    head.iter().map(|a| a.substitute(&sigma)).collect()
}

/// `body -> exists existentials. head`, with optional active-domain
/// variables that occur in the head but range over the whole domain.
#[derive(Clone, Debug)]
pub struct Rule {
    body: Vec<Atom>,
    head: Vec<Atom>,
    domain_vars: BTreeSet<Term>,
    frontier: BTreeSet<Term>,
    existentials: BTreeSet<Term>,
    head_type: Option<HeadType>,
    sk_head: Vec<Atom>,
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.body == other.body && self.head == other.head && self.domain_vars == other.domain_vars
    }
}

impl Eq for Rule {}

impl Rule {
    pub fn new(body: Vec<Atom>, head: Vec<Atom>, domain_vars: BTreeSet<Term>) -> Result<Rule, ModelError> {
        if head.is_empty() {
            return Err(ModelError::EmptyHead);
        }
        for a in &head {
            if let Some(t) = a.args().iter().find(|t| !t.is_var()) {
                return Err(ModelError::HeadConstant(t.to_string()));
            }
        }
        for a in &body {
            if let Some(t) = a.args().iter().find(|t| t.is_skolem()) {
                return Err(ModelError::SkolemInRule(t.to_string()));
            }
        }
        let body_vars: BTreeSet<Term> = body.iter().flat_map(Atom::vars).collect();
        let head_vars: BTreeSet<Term> = head.iter().flat_map(Atom::vars).collect();
        for d in &domain_vars {
            if body_vars.contains(d) || !head_vars.contains(d) {
                return Err(ModelError::BadDomainVar(d.to_string()));
            }
        }
        let frontier: BTreeSet<Term> = head_vars
            .iter()
            .filter(|v| body_vars.contains(v) || domain_vars.contains(v))
            .cloned()
            .collect();
        let existentials: BTreeSet<Term> = head_vars.difference(&frontier).cloned().collect();
        let (head_type, sk_head) = if existentials.is_empty() {
            (None, head.clone())
        } else {
            let ht = iso_type(&head, &frontier);
            let sigma: Subst = ht
                .positions
                .iter()
                .map(|(w, &p)| (w.clone(), Term::skolem(ht.tau.clone(), p, ht.frontier_order.clone())))
                .collect();
            let sk = head.iter().map(|a| a.substitute(&sigma)).collect();
            (Some(ht), sk)
        };
        Ok(Rule {
            body,
            head,
            domain_vars,
            frontier,
            existentials,
            head_type,
            sk_head,
        })
    }

    pub fn body(&self) -> &[Atom] {
        &self.body
    }

    pub fn head(&self) -> &[Atom] {
        &self.head
    }

    pub fn domain_vars(&self) -> &BTreeSet<Term> {
        &self.domain_vars
    }

    pub fn uses_active_domain(&self) -> bool {
        !self.domain_vars.is_empty()
    }

    /// Universally quantified head variables (body-shared or active-domain).
    pub fn frontier(&self) -> &BTreeSet<Term> {
        &self.frontier
    }

    pub fn existentials(&self) -> &BTreeSet<Term> {
        &self.existentials
    }

    pub fn tau(&self) -> Option<&TauId> {
        self.head_type.as_ref().map(|h| &h.tau)
    }

    pub fn head_type(&self) -> Option<&HeadType> {
        self.head_type.as_ref()
    }

    /// Head with existential variables replaced by Skolem templates.
    pub fn skolem_head(&self) -> &[Atom] {
        &self.sk_head
    }

    pub fn body_vars(&self) -> BTreeSet<Term> {
        self.body.iter().flat_map(Atom::vars).collect()
    }

    pub fn is_datalog(&self) -> bool {
        self.existentials.is_empty()
    }

    pub fn is_existential(&self) -> bool {
        !self.is_datalog()
    }

    /// Existential with an empty frontier.
    pub fn is_detached(&self) -> bool {
        self.is_existential() && self.frontier.is_empty()
    }

    pub fn is_sensible(&self) -> bool {
        self.is_existential() && !self.frontier.is_empty()
    }

    pub fn is_linear(&self) -> bool {
        self.body.len() == 1
    }

    pub fn is_connected(&self) -> bool {
        components(&self.body, Term::is_var).len() <= 1
    }

    /// `appl(rule, sigma)`: the Skolemized head under `sigma`.
    pub fn apply(&self, sigma: &Subst) -> Vec<Atom> {
        self.sk_head.iter().map(|a| a.substitute(sigma)).collect()
    }

    /// Renames variables apart with a prefix.
    pub fn rename_vars(&self, f: impl Fn(&Term) -> Term) -> Rule {
        let map = |a: &Atom| a.map_terms(|t| if t.is_var() { f(t) } else { t.clone() });
        Rule::new(
            self.body.iter().map(map).collect(),
            self.head.iter().map(map).collect(),
            self.domain_vars.iter().map(&f).collect(),
        )
        .expect("renaming preserves well-formedness")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut body: Vec<String> = self.body.iter().map(|a| a.to_string()).collect();
        body.extend(self.domain_vars.iter().map(|d| format!("@dom({d})")));
        if body.is_empty() {
            f.write_str("true")?;
        } else {
            f.write_str(&body.join(", "))?;
        }
        f.write_str(" -> ")?;
        if !self.existentials.is_empty() {
            let ex: Vec<String> = self.existentials.iter().map(|e| e.to_string()).collect();
            write!(f, "exists {}. ", ex.join(","))?;
        }
        let head: Vec<String> = self.head.iter().map(|a| a.to_string()).collect();
        write!(f, "{}.", head.join(", "))
    }
}

/// An ordered rule set over a fixed signature.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    signature: BTreeMap<String, usize>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<RuleSet, ModelError> {
        let mut signature = BTreeMap::new();
        for r in &rules {
            for a in r.body().iter().chain(r.head()) {
                check_arity(&mut signature, a)?;
            }
        }
        Ok(RuleSet { rules, signature })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn signature(&self) -> &BTreeMap<String, usize> {
        &self.signature
    }

    pub fn existential(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| r.is_existential())
    }

    pub fn datalog(&self) -> RuleSet {
        RuleSet::new(self.rules.iter().filter(|r| r.is_datalog()).cloned().collect()).expect("subset")
    }

    /// Rules whose head type is `tau`.
    pub fn with_tau<'a>(&'a self, tau: &'a TauId) -> impl Iterator<Item = &'a Rule> {
        self.rules.iter().filter(move |r| r.tau() == Some(tau))
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

pub(crate) fn check_arity(sig: &mut BTreeMap<String, usize>, a: &Atom) -> Result<(), ModelError> {
    match sig.get(a.relation()) {
        Some(&n) if n != a.arity() => Err(ModelError::ArityMismatch {
            relation: a.relation().to_string(),
            expected: n,
            found: a.arity(),
        }),
        Some(_) => Ok(()),
        None => {
            sig.insert(a.relation().to_string(), a.arity());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Term {
        Term::var(n)
    }

    fn at(r: &str, args: &[&str]) -> Atom {
        Atom::new(r, args.iter().map(|a| v(a)).collect())
    }

    #[test]
    fn mother_head_type() {
        let ht = iso_type(&[at("Mother", &["y", "z"])], &[v("y")].into());
        assert_eq!(ht.tau.as_str(), "Mother(f1,e1)");
        assert_eq!(ht.positions[&v("z")], 2);
    }

    #[test]
    fn type_ignores_names_and_body() {
        let a = Rule::new(vec![at("Human", &["y"])], vec![at("Mother", &["y", "z"])], BTreeSet::new()).unwrap();
        let b = Rule::new(vec![at("P", &["p", "q"])], vec![at("Mother", &["p", "w"])], BTreeSet::new()).unwrap();
        assert_eq!(a.tau(), b.tau());
    }

    #[test]
    fn repeated_existential_shares_template() {
        let head = [at("R", &["y", "v", "z", "v"])];
        let sk = skolemize_head(&head, &[v("y"), v("z")].into());
        let args = sk[0].args();
        assert_eq!(args[1], args[3]);
        let s = args[1].as_skolem().unwrap();
        assert_eq!(s.position(), 2);
        assert_eq!(s.args(), &[v("y"), v("z")]);
    }

    #[test]
    fn head_constants_rejected() {
        let r = Rule::new(vec![], vec![Atom::new("P", vec![Term::constant("a")])], BTreeSet::new());
        assert!(matches!(r, Err(ModelError::HeadConstant(_))));
    }

    #[test]
    fn classification() {
        let lp = Rule::new(vec![], vec![at("R", &["x", "x"]), at("G", &["x", "x"])], BTreeSet::new()).unwrap();
        assert!(lp.is_detached());
        let pins = Rule::new(vec![], vec![at("R", &["x", "z"]), at("G", &["x", "w"])], [v("x")].into()).unwrap();
        assert!(pins.is_sensible() && pins.uses_active_domain());
        let dl = Rule::new(vec![at("E", &["x", "y"])], vec![at("E", &["y", "x"])], BTreeSet::new()).unwrap();
        assert!(dl.is_datalog() && dl.is_linear());
    }
}
