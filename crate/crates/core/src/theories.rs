//! Standard example rule sets, instances and queries.

use crate::model::{Atom, ConjunctiveQuery, Instance, RuleSet, Term};
use crate::textio::{parse_instance, parse_rules};

fn rules(text: &str) -> RuleSet {
    parse_rules(text).expect("built-in rule text parses")
}

/// Humans have mothers, mothers are human.
pub fn human_mother() -> RuleSet {
    rules("Human(y) -> exists z. Mother(y,z).\nMother(x,y) -> Human(y).")
}

pub fn abel() -> Instance {
    parse_instance("Human(abel).").expect("static")
}

/// The infinite path rule `E(x,y) -> ∃z E(y,z)`.
pub fn path() -> RuleSet {
    rules("E(x,y) -> exists z. E(y,z).")
}

/// Path rule plus a Datalog rule that folds the path onto a loop.
pub fn core_exercise() -> RuleSet {
    rules("E(x,y) -> exists z. E(y,z).\nE(x,x1), E(x1,x2) -> E(x1,x1).")
}

/// The three-rule BDD theory over `R` (red) and `G` (green).
pub fn rd() -> RuleSet {
    rules(
        "true -> exists x. R(x,x), G(x,x).\n\
         @dom(x) -> exists z,z1. R(x,z), G(x,z1).\n\
         R(x,x1), G(x,u), G(u,u1) -> exists z. R(u1,z), G(x1,z).",
    )
}

/// The cycle-sensitive theory refuting locality under bounded degree.
pub fn rc() -> RuleSet {
    rules(
        "E(x,y) -> exists x1,y1. R(x,y,x1,y1).\n\
         R(x,y,x1,y1), E(y,z) -> exists z1. R(y,z,y1,z1).",
    )
}

/// Sticky rule whose chase is not local.
pub fn sticky() -> RuleSet {
    rules("E(x,y,y1,t), R(x,t1) -> exists y2. E(x,y1,y2,t1).")
}

/// `{E(a,b1,b2,c1)} ∪ {R(a,c_i) | 1 ≤ i ≤ n}`.
pub fn sticky_instance(n: usize) -> Instance {
    let mut d = parse_instance("E(a,b1,b2,c1).").expect("static");
    for i in 1..=n {
        d.insert(Atom::new("R", vec![Term::constant("a"), Term::constant(&format!("c{i}"))]));
    }
    d
}

/// Binary example with one existential and one Datalog rule.
pub fn binary_example() -> RuleSet {
    rules("E(x,y), R(z,y) -> exists v. E(y,v).\nE(x,y), P(z) -> R(z,y).")
}

/// `{E(a0,a1)} ∪ {P(b_i) | 1 ≤ i ≤ n}`.
pub fn binary_example_instance(n: usize) -> Instance {
    let mut d = parse_instance("E(a0,a1).").expect("static");
    for i in 1..=n {
        d.insert(Atom::new("P", vec![Term::constant(&format!("b{i}"))]));
    }
    d
}

/// `E_i(x,y) -> ∃z E_{i-1}(y,z)` for `1 ≤ i ≤ k`.
pub fn descending(k: usize) -> RuleSet {
    let text: String = (1..=k)
        .map(|i| format!("E{i}(x,y) -> exists z. E{}(y,z).\n", i - 1))
        .collect();
    rules(&text)
}

/// Directed `relation`-cycle of length `n` over constants `a1..an`.
pub fn cycle(relation: &str, n: usize) -> Instance {
    (1..=n)
        .map(|i| {
            let j = i % n + 1;
            Atom::new(relation, vec![Term::constant(&format!("a{i}")), Term::constant(&format!("a{j}"))])
        })
        .collect()
}

/// Directed path of `len` atoms from `from` to `to` with fresh inner terms.
pub fn path_atoms(relation: &str, from: &Term, to: &Term, len: usize, inner: &mut dyn FnMut() -> Term) -> Vec<Atom> {
    let mut out = Vec::with_capacity(len);
    let mut cur = from.clone();
    for i in 0..len {
        let next = if i + 1 == len { to.clone() } else { inner() };
        out.push(Atom::new(relation, vec![cur, next.clone()]));
        cur = next;
    }
    out
}

/// `G^len(x,y)` as a query with free `x,y`.
pub fn green_path_query(len: usize) -> ConjunctiveQuery {
    let (x, y) = (Term::var("x"), Term::var("y"));
    let mut k = 0;
    let atoms = path_atoms("G", &x, &y, len, &mut || {
        k += 1;
        Term::var(&format!("m{k}"))
    });
    ConjunctiveQuery::new(vec![x, y], atoms).expect("well formed")
}

/// `G^len(a,b)` as a ground instance over `a, c1.., b`.
pub fn green_path_instance(len: usize) -> Instance {
    let (a, b) = (Term::constant("a"), Term::constant("b"));
    let mut k = 0;
    path_atoms("G", &a, &b, len, &mut || {
        k += 1;
        Term::constant(&format!("c{k}"))
    })
    .into_iter()
    .collect()
}

/// `φ_R^n(x,y) = ∃x',y' R^n(x,x'), R^n(y,y'), G(x',y')`.
pub fn phi_r(n: usize) -> ConjunctiveQuery {
    let (x, y) = (Term::var("x"), Term::var("y"));
    let (xe, ye) = (Term::var("xe"), Term::var("ye"));
    let mut kx = 0;
    let mut atoms = path_atoms("R", &x, &xe, n, &mut || {
        kx += 1;
        Term::var(&format!("xm{kx}"))
    });
    let mut ky = 0;
    atoms.extend(path_atoms("R", &y, &ye, n, &mut || {
        ky += 1;
        Term::var(&format!("ym{ky}"))
    }));
    atoms.push(Atom::new("G", vec![xe, ye]));
    ConjunctiveQuery::new(vec![x, y], atoms).expect("well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(rd().len(), 3);
        assert_eq!(phi_r(2).size(), 5);
        assert_eq!(green_path_query(4).size(), 4);
        assert_eq!(cycle("E", 4).len(), 4);
        assert_eq!(sticky_instance(3).len(), 4);
        assert_eq!(descending(3).len(), 3);
    }
}
