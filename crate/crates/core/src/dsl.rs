//! Text format for automata.
//!
//! A model file names the automaton, lists its variables, picks an
//! initial location, and then declares locations and edges:
//!
//! ```text
//! automaton ex;
//! var x, y;
//! init l0;
//!
//! loc l0 {
//!   rate x = 5;
//!   rate y in [2, 3];
//!   inv x <= 1 && y <= 1;
//! }
//!
//! edge l0 -> l1 {
//!   guard x == 1;
//!   reset x := 0;
//! }
//! ```
//!
//! Omitted parts take their neutral defaults: an unspecified rate is the
//! full line, an omitted invariant or guard is `true`, and variables
//! without a `reset` line keep their value. Guard atoms are `x OP k`
//! with `OP` one of `< <= = == >= >`, the difference form `x - y OP k`,
//! or the interval form `x in [a, b]`. Constants are integers, `inf` and
//! `-inf` are allowed as open interval endpoints, and `#` starts a line
//! comment. Names are identifiers, or double-quoted strings when they
//! contain other characters; [`print_model`] emits the same syntax back.

use crate::automaton::{Automaton, Reset};
use crate::guard::{Atom, Guard, Relation};
use crate::ids::{LocId, VarId};
use crate::interval::{Bound, Interval};
use std::fmt;

/// A syntax or well-formedness error, with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    /// Bare identifier, possibly a keyword.
    Name(String),
    /// Double-quoted name; never a keyword.
    Quoted(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(s) => format!("`{}`", s),
            Tok::Quoted(s) => format!("\"{}\"", s),
            Tok::Int(k) => format!("`{}`", k),
            Tok::Sym(s) => format!("`{}`", s),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

struct Lexer<'a> {
    src: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.src.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '#' {
                    while let Some(&c) = self.src.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let c = match self.src.peek() {
                None => {
                    out.push((Tok::Eof, line, col));
                    return Ok(out);
                }
                Some(&c) => c,
            };
            let tok = if c.is_ascii_alphabetic() || c == '_' {
                let mut s = String::new();
                while let Some(&c) = self.src.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Name(s)
            } else if c.is_ascii_digit() {
                let mut n: i64 = 0;
                while let Some(&c) = self.src.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(d as i64))
                            .ok_or_else(|| self.err("integer constant overflows"))?;
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Int(n)
            } else if c == '"' {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.err("unterminated quoted name")),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            _ => return Err(self.err("bad escape in quoted name")),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Quoted(s)
            } else {
                self.bump();
                let two = |l: &mut Lexer<'a>, second: char, sym: &'static str| {
                    if l.src.peek() == Some(&second) {
                        l.bump();
                        Some(Tok::Sym(sym))
                    } else {
                        None
                    }
                };
                match c {
                    ';' => Tok::Sym(";"),
                    '{' => Tok::Sym("{"),
                    '}' => Tok::Sym("}"),
                    ',' => Tok::Sym(","),
                    '[' => Tok::Sym("["),
                    ']' => Tok::Sym("]"),
                    '(' => Tok::Sym("("),
                    ')' => Tok::Sym(")"),
                    '-' => two(&mut self, '>', "->").unwrap_or(Tok::Sym("-")),
                    ':' => two(&mut self, '=', ":=")
                        .ok_or_else(|| self.err("expected `:=`"))?,
                    '=' => two(&mut self, '=', "==").unwrap_or(Tok::Sym("=")),
                    '<' => two(&mut self, '=', "<=").unwrap_or(Tok::Sym("<")),
                    '>' => two(&mut self, '=', ">=").unwrap_or(Tok::Sym(">")),
                    '&' => two(&mut self, '&', "&&")
                        .ok_or_else(|| self.err("expected `&&`"))?,
                    other => return Err(self.err(format!("unexpected character `{}`", other))),
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    idx: usize,
}

/// An edge whose endpoint names are not yet resolved.
struct RawEdge {
    src: (String, usize, usize),
    trg: String,
    guard: Guard,
    reset: Reset,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].0
    }

    fn pos(&self) -> (usize, usize) {
        (self.toks[self.idx].1, self.toks[self.idx].2)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.idx].0.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self.pos();
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Sym(s) if *s == sym => {
                self.next();
                Ok(())
            }
            other => Err(self.err_here(format!("expected `{}`, found {}", sym, other.describe()))),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Name(s) if s == kw => {
                self.next();
                Ok(())
            }
            other => Err(self.err_here(format!("expected `{}`, found {}", kw, other.describe()))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(s) if s == kw)
    }

    /// A bare identifier or a quoted string.
    fn expect_name(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Name(s) | Tok::Quoted(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.err_here(format!("expected a name, found {}", other.describe()))),
        }
    }

    fn signed_int(&mut self) -> Result<i64, ParseError> {
        let neg = matches!(self.peek(), Tok::Sym("-"));
        if neg {
            self.next();
        }
        match self.peek().clone() {
            Tok::Int(k) => {
                self.next();
                Ok(if neg { -k } else { k })
            }
            other => Err(self.err_here(format!("expected an integer, found {}", other.describe()))),
        }
    }

    /// One endpoint of an interval: an integer, `inf`, or `-inf`.
    fn bound(&mut self) -> Result<Bound, ParseError> {
        if self.at_keyword("inf") {
            self.next();
            return Ok(Bound::PosInf);
        }
        if matches!(self.peek(), Tok::Sym("-"))
            && matches!(&self.toks[self.idx + 1].0, Tok::Name(s) if s == "inf")
        {
            self.next();
            self.next();
            return Ok(Bound::NegInf);
        }
        Ok(Bound::Finite(self.signed_int()?))
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        let lo_closed = match self.peek() {
            Tok::Sym("[") => true,
            Tok::Sym("(") => false,
            other => {
                return Err(
                    self.err_here(format!("expected an interval, found {}", other.describe()))
                )
            }
        };
        self.next();
        let lo = self.bound()?;
        if lo_closed && !matches!(lo, Bound::Finite(_)) {
            return Err(self.err_here("an infinite endpoint must be open"));
        }
        self.expect_sym(",")?;
        let hi = self.bound()?;
        let hi_closed = match self.peek() {
            Tok::Sym("]") => true,
            Tok::Sym(")") => false,
            other => {
                return Err(self.err_here(format!(
                    "expected `]` or `)`, found {}",
                    other.describe()
                )))
            }
        };
        if hi_closed && !matches!(hi, Bound::Finite(_)) {
            return Err(self.err_here("an infinite endpoint must be open"));
        }
        self.next();
        Ok(Interval::new(lo, lo_closed, hi, hi_closed))
    }

    fn relation(&mut self) -> Result<Relation, ParseError> {
        let rel = match self.peek() {
            Tok::Sym("<") => Relation::Lt,
            Tok::Sym("<=") => Relation::Le,
            Tok::Sym("=") | Tok::Sym("==") => Relation::Eq,
            Tok::Sym(">=") => Relation::Ge,
            Tok::Sym(">") => Relation::Gt,
            other => {
                return Err(self.err_here(format!(
                    "expected a comparison, found {}",
                    other.describe()
                )))
            }
        };
        self.next();
        Ok(rel)
    }

    fn atom(&mut self, vars: &[String]) -> Result<Atom, ParseError> {
        let var = self.lookup_var(vars)?;
        if matches!(self.peek(), Tok::Sym("-")) && !self.minus_starts_number() {
            self.next();
            let other = self.lookup_var(vars)?;
            let rel = self.relation()?;
            let k = self.signed_int()?;
            return Ok(Atom::Diag {
                x: var,
                y: other,
                rel,
                k,
            });
        }
        if self.at_keyword("in") {
            self.next();
            return Ok(Atom::rect(var, self.interval()?));
        }
        let rel = self.relation()?;
        let k = self.signed_int()?;
        Ok(Atom::cmp(var, rel, k))
    }

    /// Distinguishes `x - y <= k` from a stray negative constant.
    fn minus_starts_number(&self) -> bool {
        matches!(&self.toks[self.idx + 1].0, Tok::Int(_))
    }

    fn lookup_var(&mut self, vars: &[String]) -> Result<VarId, ParseError> {
        let pos = self.pos();
        let name = self.expect_name()?;
        match vars.iter().position(|v| *v == name) {
            Some(i) => Ok(VarId(i)),
            None => Err(ParseError {
                line: pos.0,
                col: pos.1,
                msg: format!("unknown variable `{}`", name),
            }),
        }
    }

    fn guard(&mut self, vars: &[String]) -> Result<Guard, ParseError> {
        if self.at_keyword("true") {
            self.next();
            return Ok(Guard::True);
        }
        if self.at_keyword("false") {
            self.next();
            return Ok(Guard::False);
        }
        let mut atoms = vec![self.atom(vars)?];
        while matches!(self.peek(), Tok::Sym("&&")) {
            self.next();
            atoms.push(self.atom(vars)?);
        }
        Ok(Guard::conj(atoms))
    }
}

/// Parses and validates a model file.
pub fn parse_model(src: &str) -> Result<Automaton, ParseError> {
    let toks = Lexer::new(src).tokens()?;
    let mut p = Parser { toks, idx: 0 };

    p.expect_keyword("automaton")?;
    let name = p.expect_name()?;
    p.expect_sym(";")?;

    p.expect_keyword("var")?;
    let mut vars = vec![p.expect_name()?];
    while matches!(p.peek(), Tok::Sym(",")) {
        p.next();
        vars.push(p.expect_name()?);
    }
    p.expect_sym(";")?;

    let var_refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
    let mut h = Automaton::new(&name, &var_refs);

    let mut init: Option<(String, usize, usize)> = None;
    let mut raw_edges: Vec<RawEdge> = Vec::new();

    loop {
        if matches!(p.peek(), Tok::Eof) {
            break;
        }
        if p.at_keyword("init") {
            let pos = p.pos();
            p.next();
            let target = p.expect_name()?;
            p.expect_sym(";")?;
            if init.is_some() {
                return Err(ParseError {
                    line: pos.0,
                    col: pos.1,
                    msg: "duplicate `init`".to_string(),
                });
            }
            init = Some((target, pos.0, pos.1));
        } else if p.at_keyword("loc") {
            p.next();
            let lname = p.expect_name()?;
            p.expect_sym("{")?;
            let mut rates: Vec<Option<Interval>> = vec![None; vars.len()];
            let mut inv = Guard::True;
            while !matches!(p.peek(), Tok::Sym("}")) {
                if p.at_keyword("rate") {
                    p.next();
                    let pos = p.pos();
                    let v = p.lookup_var(&vars)?;
                    if rates[v.0].is_some() {
                        return Err(ParseError {
                            line: pos.0,
                            col: pos.1,
                            msg: format!("duplicate rate for `{}`", vars[v.0]),
                        });
                    }
                    let int = if matches!(p.peek(), Tok::Sym("=")) {
                        p.next();
                        Interval::singleton(p.signed_int()?)
                    } else {
                        p.expect_keyword("in")?;
                        p.interval()?
                    };
                    rates[v.0] = Some(int);
                    p.expect_sym(";")?;
                } else if p.at_keyword("inv") {
                    p.next();
                    let g = p.guard(&vars)?;
                    inv = inv.and(&g);
                    p.expect_sym(";")?;
                } else {
                    return Err(p.err_here(format!(
                        "expected `rate`, `inv` or `}}`, found {}",
                        p.peek().describe()
                    )));
                }
            }
            p.next();
            let rates = rates
                .into_iter()
                .map(|r| r.unwrap_or_else(Interval::all))
                .collect();
            h.add_location(&lname, rates, inv);
        } else if p.at_keyword("edge") {
            p.next();
            let src_pos = p.pos();
            let src = p.expect_name()?;
            p.expect_sym("->")?;
            let trg = p.expect_name()?;
            p.expect_sym("{")?;
            let mut guard = Guard::True;
            let mut reset = Reset::identity(vars.len());
            while !matches!(p.peek(), Tok::Sym("}")) {
                if p.at_keyword("guard") {
                    p.next();
                    let g = p.guard(&vars)?;
                    guard = guard.and(&g);
                    p.expect_sym(";")?;
                } else if p.at_keyword("reset") {
                    p.next();
                    let pos = p.pos();
                    let v = p.lookup_var(&vars)?;
                    if reset.get(v).is_some() {
                        return Err(ParseError {
                            line: pos.0,
                            col: pos.1,
                            msg: format!("duplicate reset for `{}`", vars[v.0]),
                        });
                    }
                    let int = if matches!(p.peek(), Tok::Sym(":=")) {
                        p.next();
                        Interval::singleton(p.signed_int()?)
                    } else {
                        p.expect_keyword("in")?;
                        p.interval()?
                    };
                    reset.set(v, int);
                    p.expect_sym(";")?;
                } else {
                    return Err(p.err_here(format!(
                        "expected `guard`, `reset` or `}}`, found {}",
                        p.peek().describe()
                    )));
                }
            }
            p.next();
            raw_edges.push(RawEdge {
                src: (src, src_pos.0, src_pos.1),
                trg,
                guard,
                reset,
            });
        } else {
            return Err(p.err_here(format!(
                "expected `init`, `loc` or `edge`, found {}",
                p.peek().describe()
            )));
        }
    }

    let resolve = |h: &Automaton, name: &str, line: usize, col: usize| {
        h.loc_index(name).map_err(|_| ParseError {
            line,
            col,
            msg: format!("unknown location `{}`", name),
        })
    };
    for e in raw_edges {
        let src = resolve(&h, &e.src.0, e.src.1, e.src.2)?;
        let trg = resolve(&h, &e.trg, e.src.1, e.src.2)?;
        h.add_edge(src, e.guard, e.reset, trg);
    }
    h.init = match init {
        Some((name, line, col)) => resolve(&h, &name, line, col)?,
        None => LocId(0),
    };
    h.validate().map_err(|e| ParseError {
        line: 1,
        col: 1,
        msg: e.to_string(),
    })?;
    Ok(h)
}

const KEYWORDS: &[&str] = &[
    "automaton", "var", "init", "loc", "rate", "inv", "edge", "guard", "reset", "in", "true",
    "false", "inf",
];

fn fmt_name(s: &str) -> String {
    let head_ok = s
        .chars()
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    let ident = head_ok && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ident && !KEYWORDS.contains(&s) {
        s.to_string()
    } else {
        let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
        format!("\"{}\"", escaped)
    }
}

/// Renders an automaton in the syntax accepted by [`parse_model`].
pub fn print_model(h: &Automaton) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "automaton {};", fmt_name(&h.name)).unwrap();
    let vars = h
        .vars
        .iter()
        .map(|v| fmt_name(v))
        .collect::<Vec<_>>()
        .join(", ");
    writeln!(out, "var {};", vars).unwrap();
    writeln!(out, "init {};", fmt_name(&h.location(h.init).name)).unwrap();
    for loc in &h.locations {
        writeln!(out).unwrap();
        writeln!(out, "loc {} {{", fmt_name(&loc.name)).unwrap();
        for (v, rate) in loc.rates.iter().enumerate() {
            if rate.is_all() {
                continue;
            }
            let name = fmt_name(&h.vars[v]);
            match rate.as_singleton() {
                Some(k) => writeln!(out, "  rate {} = {};", name, k).unwrap(),
                None => writeln!(out, "  rate {} in {};", name, rate).unwrap(),
            }
        }
        if !loc.invariant.is_true() {
            writeln!(out, "  inv {};", loc.invariant.display_with(&h.vars)).unwrap();
        }
        writeln!(out, "}}").unwrap();
    }
    for e in &h.edges {
        writeln!(out).unwrap();
        writeln!(
            out,
            "edge {} -> {} {{",
            fmt_name(&h.location(e.src).name),
            fmt_name(&h.location(e.trg).name)
        )
        .unwrap();
        if !e.guard.is_true() {
            writeln!(out, "  guard {};", e.guard.display_with(&h.vars)).unwrap();
        }
        for v in e.reset.reset_vars() {
            let int = e.reset.get(v).unwrap();
            let name = fmt_name(&h.vars[v.0]);
            match int.as_singleton() {
                Some(k) => writeln!(out, "  reset {} := {};", name, k).unwrap(),
                None => writeln!(out, "  reset {} in {};", name, int).unwrap(),
            }
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::{fig1, random_automaton, rng, GenConfig};

    #[test]
    fn parses_a_small_model() {
        let src = "
            automaton demo;
            var x, y;
            init a;
            loc a {
              rate x = 1;
              rate y in [0, 2];
              inv x <= 1;
            }
            loc b {
              rate x = 0;
              rate y = 0;
            }
            edge a -> b {
              guard x == 1 && y - x <= 0;
              reset x := 0;
            }
        ";
        let h = parse_model(src).unwrap();
        assert_eq!(h.name, "demo");
        assert_eq!(h.vars, vec!["x", "y"]);
        assert_eq!(h.locations.len(), 2);
        assert_eq!(h.edges.len(), 1);
        let e = h.edge(crate::ids::EdgeId(0));
        assert!(e.guard.has_diagonal());
        assert_eq!(e.reset.get(VarId(0)), Some(&Interval::singleton(0)));
        assert_eq!(
            h.location(LocId(0)).rates[1],
            Interval::closed(0, 2)
        );
    }

    #[test]
    fn defaults_are_neutral() {
        let src = "
            automaton d;
            var x;
            loc only { }
            edge only -> only { }
        ";
        let h = parse_model(src).unwrap();
        assert_eq!(h.init, LocId(0));
        assert!(h.location(LocId(0)).invariant.is_true());
        assert!(h.location(LocId(0)).rates[0].is_all());
        let e = h.edge(crate::ids::EdgeId(0));
        assert!(e.guard.is_true());
        assert!(e.reset.is_identity());
    }

    #[test]
    fn comments_and_quoted_names() {
        let src = "
            # a model with awkward names
            automaton \"with space\";
            var \"in\", x;
            init \"l|0\";
            loc \"l|0\" {
              rate \"in\" = 1; # trailing comment
              rate x = 2;
            }
        ";
        let h = parse_model(src).unwrap();
        assert_eq!(h.name, "with space");
        assert_eq!(h.vars[0], "in");
        assert_eq!(h.location(LocId(0)).name, "l|0");
    }

    #[test]
    fn error_positions_point_at_the_problem() {
        let src = "automaton a;\nvar x;\nloc l {\n  rate y = 1;\n}\n";
        let err = parse_model(src).unwrap_err();
        assert_eq!(err.line, 4);
        assert!(err.msg.contains("unknown variable"));

        let err = parse_model("automaton a;\nvar x;\nloc l { rate x @ }").unwrap_err();
        assert_eq!(err.line, 3);

        let err = parse_model("automaton a;\nvar x;\ninit nowhere;\nloc l { }").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.msg.contains("unknown location"));
    }

    #[test]
    fn infinite_endpoints_must_be_open() {
        let src = "automaton a;\nvar x;\nloc l { rate x in [-inf, 0]; }";
        let err = parse_model(src).unwrap_err();
        assert!(err.msg.contains("must be open"));
        let src = "automaton a;\nvar x;\nloc l { rate x in (-inf, 0]; }";
        let h = parse_model(src).unwrap();
        assert_eq!(h.location(LocId(0)).rates[0], Interval::at_most(0));
    }

    #[test]
    fn example_model_round_trips() {
        let h = fig1();
        let printed = print_model(&h);
        let back = parse_model(&printed).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn random_models_round_trip() {
        for seed in 0..60 {
            let mut r = rng(seed);
            let cfg = GenConfig {
                allow_strict: seed % 2 == 0,
                allow_diag: seed % 3 == 0,
                ..GenConfig::small_nonneg(3, 4, 6)
            };
            let h = random_automaton(&cfg, &mut r);
            let printed = print_model(&h);
            let back = parse_model(&printed)
                .unwrap_or_else(|e| panic!("seed {}: {}\n{}", seed, e, printed));
            assert_eq!(h, back, "seed {}:\n{}", seed, printed);
        }
    }

    #[test]
    fn keyword_variable_names_survive_printing() {
        let mut h = Automaton::new("kw", &["in", "rate"]);
        h.add_location(
            "loc",
            vec![Interval::singleton(1), Interval::singleton(0)],
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Le, 1)]),
        );
        h.validate().unwrap();
        let back = parse_model(&print_model(&h)).unwrap();
        assert_eq!(h, back);
    }
}
