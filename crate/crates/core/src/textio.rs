//! Text formats for rules (`.tgd`), instances (`.fact`) and queries (`.cq`).
//!
//! ```text
//! # rules
//! const abel.
//! Human(y) -> exists z. Mother(y,z).
//! @dom(x) -> exists z,w. R(x,z), G(x,w).
//! true -> exists x. R(x,x), G(x,x).
//!
//! # instances: constants and Skolem terms only
//! Human(abel).
//! Mother(abel,sk[Mother(f1,e1)/2](abel)).
//!
//! # queries
//! ?(x,y) := R(x,u), R(y,v), G(u,v).
//! ```
//!
//! In rule and query files an identifier is a variable unless declared with
//! `const`. In instance files identifiers starting with an upper-case letter
//! are rejected as variables.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    ground_instance, Atom, ConjunctiveQuery, Instance, ModelError, Rule, RuleSet, TauId, Term,
};

/// Parse failure with a 1-based source position.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Rules,
    Facts,
    Queries,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    mode: Mode,
    consts: HashSet<String>,
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'\''
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, mode: Mode) -> Self {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            mode,
            consts: HashSet::new(),
        }
    }

    fn location(&self, at: usize) -> (usize, usize) {
        let before = &self.src[..at.min(self.src.len())];
        let line = before.iter().filter(|&&c| c == b'\n').count() + 1;
        let col = at - before.iter().rposition(|&c| c == b'\n').map_or(0, |p| p + 1) + 1;
        (line, col)
    }

    fn err_at<T>(&self, at: usize, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.location(at);
        Err(ParseError {
            line,
            col,
            message: msg.into(),
        })
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        self.err_at(self.pos, msg)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c == b'#' {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |c| format!("`{}`", c as char));
            self.err(format!("expected `{s}`, found {found}"))
        }
    }

    fn peek_ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        let mut end = start;
        while end < self.src.len() && is_ident_char(self.src[end]) {
            end += 1;
        }
        (end > start).then(|| String::from_utf8_lossy(&self.src[start..end]).into_owned())
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek_ident() {
            Some(id) if !id.starts_with('\'') => {
                self.pos += id.len();
                Ok(id)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident().as_deref() == Some(kw) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn const_decl(&mut self) -> Result<(), ParseError> {
        loop {
            let c = self.ident()?;
            self.consts.insert(c);
            if !self.eat(",") {
                break;
            }
        }
        self.expect(".")
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let id = self.ident()?;
        if id == "sk" && self.src.get(self.pos) == Some(&b'[') {
            return self.skolem_rest(start);
        }
        match self.mode {
            Mode::Facts => {
                if id.as_bytes()[0].is_ascii_uppercase() {
                    return self.err_at(start, format!("variable `{id}` not allowed in an instance"));
                }
                Ok(Term::constant(&id))
            }
            _ => {
                if self.consts.contains(&id) {
                    Ok(Term::constant(&id))
                } else {
                    Ok(Term::var(&id))
                }
            }
        }
    }

    fn skolem_rest(&mut self, start: usize) -> Result<Term, ParseError> {
        self.pos += 1;
        let open = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != b']' {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return self.err_at(start, "unterminated Skolem term");
        }
        let inner = String::from_utf8_lossy(&self.src[open..self.pos]).into_owned();
        self.pos += 1;
        let Some(slash) = inner.rfind('/') else {
            return self.err_at(open, "Skolem term needs `type/position`");
        };
        let position: u32 = match inner[slash + 1..].trim().parse() {
            Ok(p) if p > 0 => p,
            _ => return self.err_at(open + slash + 1, "bad Skolem position"),
        };
        let tau = inner[..slash].trim();
        if tau.is_empty() {
            return self.err_at(open, "empty Skolem type");
        }
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.eat(")") {
            loop {
                args.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Term::skolem(TauId::new(tau), position, args))
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rel = self.ident()?;
        if !rel.as_bytes()[0].is_ascii_alphabetic() {
            return self.err_at(start, format!("bad relation name `{rel}`"));
        }
        let mut args = Vec::new();
        if self.eat("(") && !self.eat(")") {
            loop {
                args.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                if !self.eat(",") {
                    return self.err("expected `,` or `)` in argument list");
                }
            }
        }
        Ok(Atom::new(&rel, args))
    }

    fn model_err<T>(&self, at: usize, e: ModelError) -> Result<T, ParseError> {
        self.err_at(at, e.to_string())
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let start = self.pos;
        let mut body = Vec::new();
        let mut dom = BTreeSet::new();
        if !self.eat_keyword("true") {
            loop {
                if self.eat("@dom") {
                    self.expect("(")?;
                    let v = self.term()?;
                    if !v.is_var() {
                        return self.err("@dom expects a variable");
                    }
                    self.expect(")")?;
                    dom.insert(v);
                } else {
                    body.push(self.atom()?);
                }
                if !self.eat(",") {
                    break;
                }
            }
        }
        self.expect("->")?;
        let mut declared = BTreeSet::new();
        let ex_at = {
            self.skip_ws();
            self.pos
        };
        if self.eat_keyword("exists") {
            loop {
                let v = self.term()?;
                if !v.is_var() {
                    return self.err("exists expects variables");
                }
                declared.insert(v);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect(".")?;
        }
        let mut head = vec![self.atom()?];
        while self.eat(",") {
            head.push(self.atom()?);
        }
        self.expect(".")?;
        let rule = match Rule::new(body, head, dom) {
            Ok(r) => r,
            Err(e) => return self.model_err(start, e),
        };
        if &declared != rule.existentials() {
            let undeclared: Vec<String> = rule.existentials().difference(&declared).map(|t| t.to_string()).collect();
            if !undeclared.is_empty() {
                return self.err_at(ex_at, format!("head variable(s) {} not bound by body or exists", undeclared.join(",")));
            }
            return self.err_at(ex_at, "existential variable also occurs in the body or is unused");
        }
        Ok(rule)
    }

    fn query(&mut self) -> Result<ConjunctiveQuery, ParseError> {
        let start = self.pos;
        self.expect("?")?;
        self.expect("(")?;
        let mut free = Vec::new();
        if !self.eat(")") {
            loop {
                free.push(self.term()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect(":=")?;
        let mut body = Vec::new();
        if !self.eat_keyword("true") {
            body.push(self.atom()?);
            while self.eat(",") {
                body.push(self.atom()?);
            }
        }
        self.expect(".")?;
        ConjunctiveQuery::new(free, body).or_else(|e| self.model_err(start, e))
    }
}

pub fn parse_rules(text: &str) -> Result<RuleSet, ParseError> {
    let mut p = Parser::new(text, Mode::Rules);
    let mut rules = Vec::new();
    while !p.at_end() {
        if p.eat_keyword("const") {
            p.const_decl()?;
            continue;
        }
        rules.push(p.rule()?);
    }
    RuleSet::new(rules).or_else(|e| p.model_err(0, e))
}

pub fn parse_instance(text: &str) -> Result<Instance, ParseError> {
    let mut p = Parser::new(text, Mode::Facts);
    let mut atoms = Vec::new();
    let mut sig = std::collections::BTreeMap::new();
    while !p.at_end() {
        p.skip_ws();
        let start = p.pos;
        let a = p.atom()?;
        p.expect(".")?;
        if let Err(e) = crate::model::rule_check_arity(&mut sig, &a) {
            return p.model_err(start, e);
        }
        atoms.push(a);
    }
    ground_instance(atoms).or_else(|e| p.model_err(0, e))
}

/// Parses every query statement of a `.cq` file (a union of CQs).
pub fn parse_queries(text: &str) -> Result<Vec<ConjunctiveQuery>, ParseError> {
    let mut p = Parser::new(text, Mode::Queries);
    let mut out = Vec::new();
    while !p.at_end() {
        if p.eat_keyword("const") {
            p.const_decl()?;
            continue;
        }
        out.push(p.query()?);
    }
    Ok(out)
}

/// Parses a file holding exactly one query.
pub fn parse_query(text: &str) -> Result<ConjunctiveQuery, ParseError> {
    let mut qs = parse_queries(text)?;
    if qs.len() != 1 {
        return Err(ParseError {
            line: 1,
            col: 1,
            message: format!("expected exactly one query, found {}", qs.len()),
        });
    }
    Ok(qs.remove(0))
}

pub fn print_term(t: &Term) -> String {
    t.to_string()
}

fn const_line<'a>(consts: impl Iterator<Item = &'a Term>) -> String {
    let cs: BTreeSet<String> = consts.filter(|t| t.is_const()).map(|t| t.to_string()).collect();
    if cs.is_empty() {
        String::new()
    } else {
        format!("const {}.\n", cs.into_iter().collect::<Vec<_>>().join(","))
    }
}

pub fn print_rules(rules: &RuleSet) -> String {
    let mut out = const_line(rules.rules().iter().flat_map(|r| r.body().iter().chain(r.head()).flat_map(|a| a.args())));
    for r in rules.rules() {
        let _ = writeln!(out, "{r}");
    }
    out
}

pub fn print_instance(inst: &Instance) -> String {
    inst.to_string()
}

pub fn print_query(q: &ConjunctiveQuery) -> String {
    format!("{}{q}\n", const_line(q.body().iter().flat_map(|a| a.args())))
}

pub fn print_queries(qs: &[ConjunctiveQuery]) -> String {
    let mut out = const_line(qs.iter().flat_map(|q| q.body().iter().flat_map(|a| a.args())));
    for q in qs {
        let _ = writeln!(out, "{q}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mother_rule() {
        let rs = parse_rules("Human(y) -> exists z. Mother(y,z).").unwrap();
        let r = &rs.rules()[0];
        assert_eq!(r.existentials().len(), 1);
        assert!(r.frontier().contains(&Term::var("y")));
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_rules("E(x,y -> Q(x).").unwrap_err();
        assert_eq!((e.line, e.col), (1, 7));
    }

    #[test]
    fn variable_in_instance() {
        let e = parse_instance("E(a,X).").unwrap_err();
        assert_eq!((e.line, e.col), (1, 5));
        assert!(e.message.contains("variable"));
    }

    #[test]
    fn free_var_outside_body_round_trips() {
        let q = parse_query("?(x) := G(u,v).").unwrap();
        assert_eq!(parse_query(&print_query(&q)).unwrap(), q);
        let t = parse_query("?(x) := true.").unwrap();
        assert_eq!(t.free_vars().len(), 1);
    }

    #[test]
    fn boolean_query_with_constant() {
        let q = parse_query("const abel.\n?() := Mother(abel,y), Mother(y,z).").unwrap();
        assert!(q.is_boolean());
        assert!(q.constants().contains(&Term::constant("abel")));
    }

    #[test]
    fn skolem_round_trip() {
        let text = "Mother(abel,sk[Mother(f1,e1)/2](abel)).\nR(sk[R(e1,e1)&G(e1,e1)/1](),a).\n";
        let inst = parse_instance(text).unwrap();
        assert_eq!(parse_instance(&print_instance(&inst)).unwrap(), inst);
    }

    #[test]
    fn undeclared_existential() {
        assert!(parse_rules("E(x,y) -> E(y,z).").is_err());
    }

    #[test]
    fn arity_clash() {
        assert!(parse_instance("E(a,b).\nE(a).").is_err());
    }
}
