//! Exact feasibility of conjunctions of linear constraints.
//!
//! A [`LinSys`] is a conjunction of constraints `term <= 0`, `term < 0` or
//! `term = 0` over unknowns indexed `0..n`. [`feasible`] decides
//! satisfiability over the rationals and returns an exact witness point on
//! success; strict constraints are handled natively, without perturbation.
//!
//! The procedure substitutes equalities away Gauss-style, then eliminates
//! the remaining unknowns by Fourier-Motzkin projection, pairing every
//! lower bound with every upper bound (the combined constraint is strict
//! if either parent is). Witness values are reconstructed by walking the
//! eliminations backwards. Every witness is checked against the original
//! system before being returned; a failure there would be a bug, so it
//! panics rather than reporting a wrong answer.

use crate::rational::Q;
use std::collections::BTreeMap;
use std::fmt;

/// Comparison against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinRel {
    Lt,
    Le,
    Eq,
}

/// An affine expression `sum(coef_u * x_u) + cst`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinTerm {
    pub coefs: BTreeMap<usize, Q>,
    pub cst: Q,
}

impl LinTerm {
    pub fn constant(c: Q) -> LinTerm {
        LinTerm {
            coefs: BTreeMap::new(),
            cst: c,
        }
    }

    pub fn zero() -> LinTerm {
        LinTerm::constant(Q::zero())
    }

    pub fn var(u: usize) -> LinTerm {
        let mut coefs = BTreeMap::new();
        coefs.insert(u, Q::one());
        LinTerm {
            coefs,
            cst: Q::zero(),
        }
    }

    pub fn coef(&self, u: usize) -> Q {
        self.coefs.get(&u).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_coef(&mut self, u: usize, c: &Q) {
        let entry = self.coefs.entry(u).or_insert_with(Q::zero);
        *entry += c;
        if entry.is_zero() {
            self.coefs.remove(&u);
        }
    }

    pub fn plus(&self, other: &LinTerm) -> LinTerm {
        let mut out = self.clone();
        for (u, c) in &other.coefs {
            out.add_coef(*u, c);
        }
        out.cst += &other.cst;
        out
    }

    pub fn minus(&self, other: &LinTerm) -> LinTerm {
        self.plus(&other.scaled(&-Q::one()))
    }

    pub fn scaled(&self, k: &Q) -> LinTerm {
        if k.is_zero() {
            return LinTerm::zero();
        }
        LinTerm {
            coefs: self.coefs.iter().map(|(u, c)| (*u, c * k)).collect(),
            cst: &self.cst * k,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coefs.is_empty()
    }

    /// Replaces `x_u` by `expr` everywhere.
    pub fn subst(&self, u: usize, expr: &LinTerm) -> LinTerm {
        let c = self.coef(u);
        if c.is_zero() {
            return self.clone();
        }
        let mut out = self.clone();
        out.coefs.remove(&u);
        out.plus(&expr.scaled(&c))
    }

    pub fn eval(&self, w: &[Q]) -> Q {
        let mut v = self.cst.clone();
        for (u, c) in &self.coefs {
            v += c * &w[*u];
        }
        v
    }

    pub fn max_unknown(&self) -> Option<usize> {
        self.coefs.keys().next_back().copied()
    }
}

impl fmt::Display for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (u, c) in &self.coefs {
            if first {
                write!(f, "{}*x{}", c, u)?;
                first = false;
            } else {
                write!(f, " + {}*x{}", c, u)?;
            }
        }
        if first {
            write!(f, "{}", self.cst)
        } else if !self.cst.is_zero() {
            write!(f, " + {}", self.cst)
        } else {
            Ok(())
        }
    }
}

/// One constraint `term REL 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinCon {
    pub term: LinTerm,
    pub rel: LinRel,
}

impl LinCon {
    pub fn le(term: LinTerm) -> LinCon {
        LinCon {
            term,
            rel: LinRel::Le,
        }
    }

    pub fn lt(term: LinTerm) -> LinCon {
        LinCon {
            term,
            rel: LinRel::Lt,
        }
    }

    pub fn eq(term: LinTerm) -> LinCon {
        LinCon {
            term,
            rel: LinRel::Eq,
        }
    }

    pub fn holds_at(&self, w: &[Q]) -> bool {
        let v = self.term.eval(w);
        match self.rel {
            LinRel::Lt => v.is_negative(),
            LinRel::Le => !v.is_positive(),
            LinRel::Eq => v.is_zero(),
        }
    }

    /// Scale-normalized copy: the smallest-index coefficient becomes
    /// plus or minus one. Scaling by a positive factor preserves the
    /// solution set, so this is safe for deduplication.
    fn canon(&self) -> LinCon {
        match self.term.coefs.iter().next() {
            None => self.clone(),
            Some((_, c)) => {
                let k = c.abs().recip();
                LinCon {
                    term: self.term.scaled(&k),
                    rel: self.rel,
                }
            }
        }
    }
}

impl fmt::Display for LinCon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.rel {
            LinRel::Lt => "<",
            LinRel::Le => "<=",
            LinRel::Eq => "=",
        };
        write!(f, "{} {} 0", self.term, op)
    }
}

/// A conjunction of linear constraints over unknowns `0..n_unknowns`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LinSys {
    pub n_unknowns: usize,
    pub cons: Vec<LinCon>,
}

impl LinSys {
    pub fn new(n_unknowns: usize) -> LinSys {
        LinSys {
            n_unknowns,
            cons: Vec::new(),
        }
    }

    pub fn push(&mut self, con: LinCon) {
        debug_assert!(con
            .term
            .max_unknown()
            .map(|u| u < self.n_unknowns)
            .unwrap_or(true));
        self.cons.push(con);
    }
}

/// Result of a feasibility check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    /// A point satisfying every constraint.
    Sat(Vec<Q>),
    Unsat,
}

impl Feasibility {
    pub fn is_sat(&self) -> bool {
        matches!(self, Feasibility::Sat(_))
    }

    pub fn witness(self) -> Option<Vec<Q>> {
        match self {
            Feasibility::Sat(w) => Some(w),
            Feasibility::Unsat => None,
        }
    }
}

/// Exact check of a candidate witness against every constraint.
pub fn check_witness(sys: &LinSys, w: &[Q]) -> bool {
    w.len() == sys.n_unknowns && sys.cons.iter().all(|c| c.holds_at(w))
}

/// A lower or upper bound on an unknown, produced while eliminating it.
#[derive(Debug, Clone)]
struct FmBound {
    term: LinTerm,
    strict: bool,
}

#[derive(Debug, Clone)]
enum Elim {
    /// The unknown was defined by an equality: `u = term`.
    Subst(usize, LinTerm),
    /// The unknown was projected out between its bounds.
    Fm {
        u: usize,
        lowers: Vec<FmBound>,
        uppers: Vec<FmBound>,
    },
}

/// Drops ground-true constraints, detects ground-false ones, and merges
/// duplicates, keeping the tightest of constraints that differ only in
/// their constant or strictness.
pub(crate) fn compact(cons: Vec<LinCon>) -> Result<Vec<LinCon>, ()> {
    // Among inequalities with identical coefficients, `term + cst REL 0`
    // with a larger constant is tighter, and strict beats non-strict at
    // equal constants.
    fn at_least_as_tight(a: &LinCon, b: &LinCon) -> bool {
        match a.term.cst.cmp(&b.term.cst) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => a.rel == LinRel::Lt || b.rel == LinRel::Le,
        }
    }
    fn comparable(a: &LinCon, b: &LinCon) -> bool {
        a.rel != LinRel::Eq && b.rel != LinRel::Eq && a.term.coefs == b.term.coefs
    }
    let mut out: Vec<LinCon> = Vec::new();
    for con in cons {
        let con = con.canon();
        if con.term.is_constant() {
            if con.holds_at(&[]) {
                continue;
            }
            return Err(());
        }
        if con.rel == LinRel::Eq {
            if !out.contains(&con) {
                out.push(con);
            }
            continue;
        }
        if out
            .iter()
            .any(|o| comparable(o, &con) && at_least_as_tight(o, &con))
        {
            continue;
        }
        out.retain(|o| !(comparable(o, &con) && at_least_as_tight(&con, o)));
        out.push(con);
    }
    Ok(out)
}

/// Decides satisfiability and produces a checked witness on success.
pub fn feasible(sys: &LinSys) -> Feasibility {
    let mut cons = match compact(sys.cons.clone()) {
        Ok(c) => c,
        Err(()) => return Feasibility::Unsat,
    };
    let mut elims: Vec<Elim> = Vec::new();

    loop {
        // Substitute equalities away first.
        if let Some(pos) = cons.iter().position(|c| c.rel == LinRel::Eq) {
            let eq = cons.remove(pos);
            let (&u, c) = eq
                .term
                .coefs
                .iter()
                .next()
                .expect("ground equalities were removed by compact");
            // u = -(term - c*u) / c
            let mut rest = eq.term.clone();
            rest.coefs.remove(&u);
            let expr = rest.scaled(&-(c.recip()));
            cons = cons
                .into_iter()
                .map(|con| LinCon {
                    term: con.term.subst(u, &expr),
                    rel: con.rel,
                })
                .collect();
            elims.push(Elim::Subst(u, expr));
            cons = match compact(cons) {
                Ok(c) => c,
                Err(()) => return Feasibility::Unsat,
            };
            continue;
        }

        if cons.is_empty() {
            break;
        }

        // Pick the unknown whose elimination creates the fewest pairs.
        let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for con in &cons {
            for (u, c) in &con.term.coefs {
                let e = counts.entry(*u).or_insert((0, 0));
                if c.is_positive() {
                    e.1 += 1; // upper bound on u
                } else {
                    e.0 += 1; // lower bound on u
                }
            }
        }
        let (&u, _) = counts
            .iter()
            .min_by_key(|(u, (lo, hi))| (lo * hi, **u))
            .expect("nonempty constraint set mentions some unknown");

        let mut lowers: Vec<FmBound> = Vec::new();
        let mut uppers: Vec<FmBound> = Vec::new();
        let mut rest_cons: Vec<LinCon> = Vec::new();
        for con in cons {
            let c = con.term.coef(u);
            if c.is_zero() {
                rest_cons.push(con);
                continue;
            }
            let mut rest = con.term.clone();
            rest.coefs.remove(&u);
            // c*u + rest REL 0  =>  u REL' -rest/c
            let bound = rest.scaled(&-(c.recip()));
            let strict = con.rel == LinRel::Lt;
            if c.is_positive() {
                uppers.push(FmBound {
                    term: bound,
                    strict,
                });
            } else {
                lowers.push(FmBound {
                    term: bound,
                    strict,
                });
            }
        }
        for lo in &lowers {
            for hi in &uppers {
                // lo <=(strict?) u <=(strict?) hi  =>  lo - hi REL 0
                let term = lo.term.minus(&hi.term);
                let rel = if lo.strict || hi.strict {
                    LinRel::Lt
                } else {
                    LinRel::Le
                };
                rest_cons.push(LinCon { term, rel });
            }
        }
        elims.push(Elim::Fm { u, lowers, uppers });
        cons = match compact(rest_cons) {
            Ok(c) => c,
            Err(()) => return Feasibility::Unsat,
        };
    }

    // Reconstruct a witness by replaying the eliminations backwards.
    let mut w = vec![Q::zero(); sys.n_unknowns];
    for elim in elims.iter().rev() {
        match elim {
            Elim::Subst(u, expr) => {
                w[*u] = expr.eval(&w);
            }
            Elim::Fm { u, lowers, uppers } => {
                let lo = lowers
                    .iter()
                    .map(|b| (b.term.eval(&w), b.strict))
                    .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
                let hi = uppers
                    .iter()
                    .map(|b| (b.term.eval(&w), b.strict))
                    .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
                w[*u] = match (lo, hi) {
                    (None, None) => Q::zero(),
                    (Some((lo, strict)), None) => {
                        if strict {
                            lo + Q::one()
                        } else {
                            lo
                        }
                    }
                    (None, Some((hi, strict))) => {
                        if strict {
                            hi - Q::one()
                        } else {
                            hi
                        }
                    }
                    (Some((lo, _)), Some((hi, _))) => {
                        if lo == hi {
                            lo
                        } else {
                            (lo + hi) / Q::int(2)
                        }
                    }
                };
            }
        }
    }

    assert!(
        check_witness(sys, &w),
        "feasibility witness failed the certificate check"
    );
    Feasibility::Sat(w)
}

/// Projects `u` out of the system: the result is satisfiable for exactly
/// the assignments of the remaining unknowns that extend to a solution
/// of `sys`. If an equality mentions `u`, it is used as a definition;
/// otherwise bounds on `u` are paired Fourier-Motzkin style.
pub fn eliminate(sys: &LinSys, u: usize) -> LinSys {
    if let Some(pos) = sys
        .cons
        .iter()
        .position(|c| c.rel == LinRel::Eq && !c.term.coef(u).is_zero())
    {
        let eq = &sys.cons[pos];
        let c = eq.term.coef(u);
        let mut rest = eq.term.clone();
        rest.coefs.remove(&u);
        let expr = rest.scaled(&-(c.recip()));
        let cons = sys
            .cons
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, con)| LinCon {
                term: con.term.subst(u, &expr),
                rel: con.rel,
            })
            .collect();
        return LinSys {
            n_unknowns: sys.n_unknowns,
            cons: compact_or_false(cons),
        };
    }

    let mut out: Vec<LinCon> = Vec::new();
    let mut lowers: Vec<(LinTerm, bool)> = Vec::new();
    let mut uppers: Vec<(LinTerm, bool)> = Vec::new();
    for con in &sys.cons {
        let c = con.term.coef(u);
        if c.is_zero() {
            out.push(con.clone());
            continue;
        }
        let mut rest = con.term.clone();
        rest.coefs.remove(&u);
        let bound = rest.scaled(&-(c.recip()));
        let strict = con.rel == LinRel::Lt;
        if c.is_positive() {
            uppers.push((bound, strict));
        } else {
            lowers.push((bound, strict));
        }
    }
    for (lo, lo_strict) in &lowers {
        for (hi, hi_strict) in &uppers {
            let term = lo.minus(hi);
            let rel = if *lo_strict || *hi_strict {
                LinRel::Lt
            } else {
                LinRel::Le
            };
            out.push(LinCon { term, rel });
        }
    }
    LinSys {
        n_unknowns: sys.n_unknowns,
        cons: compact_or_false(out),
    }
}

/// Like [`compact`], but represents an inconsistent system by the single
/// ground-false constraint `1 <= 0` instead of an error.
fn compact_or_false(cons: Vec<LinCon>) -> Vec<LinCon> {
    match compact(cons) {
        Ok(c) => c,
        Err(()) => vec![LinCon::le(LinTerm::constant(Q::one()))],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(pairs: &[(usize, i64)], cst: i64) -> LinTerm {
        let mut term = LinTerm::constant(Q::int(cst));
        for (u, c) in pairs {
            term.add_coef(*u, &Q::int(*c));
        }
        term
    }

    #[test]
    fn empty_system_is_satisfiable() {
        let sys = LinSys::new(2);
        let w = feasible(&sys).witness().unwrap();
        assert_eq!(w, vec![Q::zero(), Q::zero()]);
    }

    #[test]
    fn simple_bounds() {
        // 0 < x < 1
        let mut sys = LinSys::new(1);
        sys.push(LinCon::lt(t(&[(0, -1)], 0)));
        sys.push(LinCon::lt(t(&[(0, 1)], -1)));
        let w = feasible(&sys).witness().unwrap();
        assert!(w[0].is_positive() && w[0] < Q::one());
    }

    #[test]
    fn strict_contradiction() {
        // x > 0 and x <= 0
        let mut sys = LinSys::new(1);
        sys.push(LinCon::lt(t(&[(0, -1)], 0)));
        sys.push(LinCon::le(t(&[(0, 1)], 0)));
        assert_eq!(feasible(&sys), Feasibility::Unsat);
    }

    #[test]
    fn strict_cycle_is_unsat() {
        // x < y and y < x
        let mut sys = LinSys::new(2);
        sys.push(LinCon::lt(t(&[(0, 1), (1, -1)], 0)));
        sys.push(LinCon::lt(t(&[(1, 1), (0, -1)], 0)));
        assert_eq!(feasible(&sys), Feasibility::Unsat);
    }

    #[test]
    fn equalities_chain_through_substitution() {
        // y = x + 1, z = y + 1, z = 5  =>  x = 3
        let mut sys = LinSys::new(3);
        sys.push(LinCon::eq(t(&[(1, 1), (0, -1)], -1)));
        sys.push(LinCon::eq(t(&[(2, 1), (1, -1)], -1)));
        sys.push(LinCon::eq(t(&[(2, 1)], -5)));
        let w = feasible(&sys).witness().unwrap();
        assert_eq!(w, vec![Q::int(3), Q::int(4), Q::int(5)]);
    }

    #[test]
    fn equality_with_bounds() {
        // x <= y, y <= x, x = 3  =>  y = 3
        let mut sys = LinSys::new(2);
        sys.push(LinCon::le(t(&[(0, 1), (1, -1)], 0)));
        sys.push(LinCon::le(t(&[(1, 1), (0, -1)], 0)));
        sys.push(LinCon::eq(t(&[(0, 1)], -3)));
        let w = feasible(&sys).witness().unwrap();
        assert_eq!(w, vec![Q::int(3), Q::int(3)]);
    }

    #[test]
    fn elimination_with_an_equality() {
        // y = x + 1 and y <= 3; eliminating y leaves x <= 2.
        let mut sys = LinSys::new(2);
        sys.push(LinCon::eq(t(&[(1, 1), (0, -1)], -1)));
        sys.push(LinCon::le(t(&[(1, 1)], -3)));
        let projected = eliminate(&sys, 1);
        let mut at2 = projected.clone();
        at2.push(LinCon::eq(t(&[(0, 1)], -2)));
        assert!(feasible(&at2).is_sat());
        let mut above = projected.clone();
        above.push(LinCon::eq(t(&[(0, 10)], -21)));
        assert_eq!(feasible(&above), Feasibility::Unsat);
    }

    #[test]
    fn elimination_pairs_bounds() {
        // x <= y <= x + 1, y >= 2, y < 3; eliminating y constrains x.
        let mut sys = LinSys::new(2);
        sys.push(LinCon::le(t(&[(0, 1), (1, -1)], 0)));
        sys.push(LinCon::le(t(&[(1, 1), (0, -1)], -1)));
        sys.push(LinCon::le(t(&[(1, -1)], 2)));
        sys.push(LinCon::lt(t(&[(1, 1)], -3)));
        let projected = eliminate(&sys, 1);
        // x = 1 extends with y = 2; x = 3 would force y >= 3.
        let mut ok = projected.clone();
        ok.push(LinCon::eq(t(&[(0, 1)], -1)));
        assert!(feasible(&ok).is_sat());
        let mut bad = projected.clone();
        bad.push(LinCon::eq(t(&[(0, 1)], -3)));
        assert_eq!(feasible(&bad), Feasibility::Unsat);
    }

    #[test]
    fn unconstrained_unknowns_default_to_zero() {
        let mut sys = LinSys::new(3);
        sys.push(LinCon::le(t(&[(1, 1)], -10)));
        let w = feasible(&sys).witness().unwrap();
        assert_eq!(w[0], Q::zero());
        assert_eq!(w[2], Q::zero());
    }

    #[test]
    fn witnesses_satisfy_strict_constraints_exactly() {
        // x + y > 1, x < 1, y < 1: satisfiable only off the integer grid.
        let mut sys = LinSys::new(2);
        sys.push(LinCon::lt(t(&[(0, -1), (1, -1)], 1)));
        sys.push(LinCon::lt(t(&[(0, 1)], -1)));
        sys.push(LinCon::lt(t(&[(1, 1)], -1)));
        let w = feasible(&sys).witness().unwrap();
        assert!(check_witness(&sys, &w));
        assert!(&w[0] + &w[1] > Q::one());

        // Tightening to x < 1/2, y < 1/2 flips it to unsatisfiable.
        sys.push(LinCon::lt(t(&[(0, 2)], -1)));
        sys.push(LinCon::lt(t(&[(1, 2)], -1)));
        assert_eq!(feasible(&sys), Feasibility::Unsat);
    }

    #[test]
    fn ground_false_equality() {
        let mut sys = LinSys::new(1);
        sys.push(LinCon::eq(t(&[], 1)));
        assert_eq!(feasible(&sys), Feasibility::Unsat);
    }

    #[test]
    fn duplicate_and_dominated_constraints_are_merged() {
        let mut sys = LinSys::new(1);
        // x <= 5, x <= 3, x <= 3 (again), x < 3
        sys.push(LinCon::le(t(&[(0, 1)], -5)));
        sys.push(LinCon::le(t(&[(0, 1)], -3)));
        sys.push(LinCon::le(t(&[(0, 1)], -3)));
        sys.push(LinCon::lt(t(&[(0, 1)], -3)));
        let compacted = compact(sys.cons.clone()).unwrap();
        assert_eq!(compacted.len(), 1);
        assert_eq!(compacted[0].rel, LinRel::Lt);
        let w = feasible(&sys).witness().unwrap();
        assert!(w[0] < Q::int(3));
    }
}
