//! Guard and invariant predicates.
//!
//! A [`Guard`] is `true`, `false`, or a conjunction of atoms. Rectangular
//! atoms constrain one variable to an interval; diagonal atoms compare the
//! difference of two variables against an integer constant.
//!
//! The [`Guard::conj`] constructor keeps conjunctions in a reduced form:
//! rectangular atoms on the same variable are merged by interval
//! intersection, tautologies are dropped, and an unsatisfiable atom
//! collapses the whole guard to `false`.

use crate::ids::VarId;
use crate::interval::Interval;
use crate::rational::Q;
use std::collections::BTreeSet;

/// Comparison operator of a single constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relation {
    pub fn holds(self, lhs: &Q, rhs: &Q) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }

    /// The operator with both sides of the comparison exchanged.
    pub fn flipped(self) -> Relation {
        match self {
            Relation::Lt => Relation::Gt,
            Relation::Le => Relation::Ge,
            Relation::Eq => Relation::Eq,
            Relation::Ge => Relation::Le,
            Relation::Gt => Relation::Lt,
        }
    }

    /// The solution set of `v REL k`.
    pub fn interval(self, k: i64) -> Interval {
        match self {
            Relation::Lt => Interval::less_than(k),
            Relation::Le => Interval::at_most(k),
            Relation::Eq => Interval::singleton(k),
            Relation::Ge => Interval::at_least(k),
            Relation::Gt => Interval::greater_than(k),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "==",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }
}

/// Decomposes an interval into one-sided `v REL k` constraints.
///
/// A finite singleton yields a single equality; an unbounded side yields
/// nothing. The conjunction of the returned constraints is exactly the
/// interval.
pub fn interval_sides(iv: &Interval) -> Vec<(Relation, i64)> {
    if let Some(k) = iv.as_singleton() {
        return vec![(Relation::Eq, k)];
    }
    let mut out = Vec::new();
    if let Some(a) = iv.lo().finite() {
        out.push((if iv.lo_closed() { Relation::Ge } else { Relation::Gt }, a));
    }
    if let Some(b) = iv.hi().finite() {
        out.push((if iv.hi_closed() { Relation::Le } else { Relation::Lt }, b));
    }
    out
}

/// One conjunct of a guard.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Atom {
    /// `var in int`.
    Rect { var: VarId, int: Interval },
    /// `x - y REL k`.
    Diag {
        x: VarId,
        y: VarId,
        rel: Relation,
        k: i64,
    },
}

/// Result of substituting zero for some variables in an atom.
pub enum Substituted {
    True,
    False,
    Atom(Atom),
}

impl Atom {
    pub fn rect(var: VarId, int: Interval) -> Atom {
        Atom::Rect { var, int }
    }

    /// `var REL k` as a rectangular atom.
    pub fn cmp(var: VarId, rel: Relation, k: i64) -> Atom {
        Atom::Rect {
            var,
            int: rel.interval(k),
        }
    }

    pub fn eval(&self, vals: &[Q]) -> bool {
        match self {
            Atom::Rect { var, int } => int.contains(&vals[var.0]),
            Atom::Diag { x, y, rel, k } => {
                rel.holds(&(&vals[x.0] - &vals[y.0]), &Q::int(*k))
            }
        }
    }

    /// Replaces every variable in `zeroed` by the constant zero.
    ///
    /// Rectangular atoms become trivially true or false. A diagonal atom
    /// with one side zeroed degenerates into a rectangular atom on the
    /// other side.
    pub fn subst_zero(&self, zeroed: &BTreeSet<VarId>) -> Substituted {
        match self {
            Atom::Rect { var, int } => {
                if zeroed.contains(var) {
                    if int.contains(&Q::zero()) {
                        Substituted::True
                    } else {
                        Substituted::False
                    }
                } else {
                    Substituted::Atom(self.clone())
                }
            }
            Atom::Diag { x, y, rel, k } => match (zeroed.contains(x), zeroed.contains(y)) {
                (false, false) => Substituted::Atom(self.clone()),
                (true, true) => {
                    if rel.holds(&Q::zero(), &Q::int(*k)) {
                        Substituted::True
                    } else {
                        Substituted::False
                    }
                }
                (true, false) => {
                    let neg = k.checked_neg().expect("constant overflow");
                    Substituted::Atom(Atom::cmp(*y, rel.flipped(), neg))
                }
                (false, true) => Substituted::Atom(Atom::cmp(*x, *rel, *k)),
            },
        }
    }

    /// Whether the atom pins an exact value: a singleton interval or a
    /// diagonal equality.
    pub fn is_equality(&self) -> bool {
        match self {
            Atom::Rect { int, .. } => int.as_singleton().is_some(),
            Atom::Diag { rel, .. } => *rel == Relation::Eq,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Atom::Diag { .. })
    }

    pub fn max_abs_const(&self) -> Option<i64> {
        match self {
            Atom::Rect { int, .. } => int.max_abs_endpoint(),
            Atom::Diag { k, .. } => Some(k.abs()),
        }
    }

    /// Whether the atom involves a strict comparison.
    pub fn is_strict(&self) -> bool {
        match self {
            Atom::Rect { int, .. } => {
                (int.lo().finite().is_some() && !int.lo_closed())
                    || (int.hi().finite().is_some() && !int.hi_closed())
            }
            Atom::Diag { rel, .. } => matches!(rel, Relation::Lt | Relation::Gt),
        }
    }

    pub fn vars(&self) -> Vec<VarId> {
        match self {
            Atom::Rect { var, .. } => vec![*var],
            Atom::Diag { x, y, .. } => vec![*x, *y],
        }
    }

    /// Renders the atom using the given variable names.
    pub fn display_with(&self, vars: &[String]) -> String {
        match self {
            Atom::Rect { var, int } => {
                let name = &vars[var.0];
                let sides = interval_sides(int);
                match sides.len() {
                    0 => "true".to_string(),
                    1 => format!("{} {} {}", name, sides[0].0.symbol(), sides[0].1),
                    _ => format!("{} in {}", name, int),
                }
            }
            Atom::Diag { x, y, rel, k } => {
                format!("{} - {} {} {}", vars[x.0], vars[y.0], rel.symbol(), k)
            }
        }
    }
}

/// A conjunction of atoms, or one of the trivial predicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Guard {
    True,
    False,
    Conj(Vec<Atom>),
}

impl Guard {
    /// Builds a reduced conjunction.
    ///
    /// Rectangular atoms on the same variable are merged by intersection,
    /// in first-occurrence order. Full intervals are dropped, an empty
    /// intersection yields `False`, duplicate diagonal atoms are dropped,
    /// and an empty conjunction yields `True`.
    pub fn conj(atoms: Vec<Atom>) -> Guard {
        let mut rect_order: Vec<VarId> = Vec::new();
        let mut rect: Vec<Option<Interval>> = Vec::new();
        let mut diag: Vec<Atom> = Vec::new();
        for a in atoms {
            match a {
                Atom::Rect { var, int } => {
                    match rect_order.iter().position(|v| *v == var) {
                        Some(i) => {
                            let merged = rect[i].as_ref().unwrap().intersect(&int);
                            rect[i] = Some(merged);
                        }
                        None => {
                            rect_order.push(var);
                            rect.push(Some(int));
                        }
                    }
                }
                d @ Atom::Diag { .. } => {
                    if !diag.contains(&d) {
                        diag.push(d);
                    }
                }
            }
        }
        let mut out = Vec::new();
        for (var, int) in rect_order.into_iter().zip(rect) {
            let int = int.unwrap();
            if int.is_empty() {
                return Guard::False;
            }
            if !int.is_all() {
                out.push(Atom::Rect { var, int });
            }
        }
        out.extend(diag);
        if out.is_empty() {
            Guard::True
        } else {
            Guard::Conj(out)
        }
    }

    pub fn and(&self, other: &Guard) -> Guard {
        match (self, other) {
            (Guard::False, _) | (_, Guard::False) => Guard::False,
            (Guard::True, g) => g.clone(),
            (g, Guard::True) => g.clone(),
            (Guard::Conj(a), Guard::Conj(b)) => {
                let mut atoms = a.clone();
                atoms.extend(b.iter().cloned());
                Guard::conj(atoms)
            }
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        match self {
            Guard::Conj(atoms) => atoms,
            _ => &[],
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Guard::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Guard::False)
    }

    pub fn eval(&self, vals: &[Q]) -> bool {
        match self {
            Guard::True => true,
            Guard::False => false,
            Guard::Conj(atoms) => atoms.iter().all(|a| a.eval(vals)),
        }
    }

    /// The first atom that fails under `vals`, if the guard is violated.
    pub fn first_failing(&self, vals: &[Q]) -> Option<Atom> {
        match self {
            Guard::True => None,
            Guard::False => Some(Atom::rect(VarId(0), Interval::empty())),
            Guard::Conj(atoms) => atoms.iter().find(|a| !a.eval(vals)).cloned(),
        }
    }

    /// Replaces every variable in `zeroed` by the constant zero.
    pub fn subst_zero(&self, zeroed: &BTreeSet<VarId>) -> Guard {
        match self {
            Guard::True => Guard::True,
            Guard::False => Guard::False,
            Guard::Conj(atoms) => {
                let mut kept = Vec::new();
                for a in atoms {
                    match a.subst_zero(zeroed) {
                        Substituted::True => {}
                        Substituted::False => return Guard::False,
                        Substituted::Atom(a) => kept.push(a),
                    }
                }
                Guard::conj(kept)
            }
        }
    }

    /// The merged interval constraint the guard places on `var`, if the
    /// guard is a conjunction mentioning it rectangularly.
    pub fn rect_on(&self, var: VarId) -> Option<&Interval> {
        self.atoms().iter().find_map(|a| match a {
            Atom::Rect { var: v, int } if *v == var => Some(int),
            _ => None,
        })
    }

    pub fn has_equality(&self) -> bool {
        self.atoms().iter().any(|a| a.is_equality())
    }

    pub fn has_diagonal(&self) -> bool {
        self.atoms().iter().any(|a| a.is_diagonal())
    }

    pub fn has_strict(&self) -> bool {
        self.atoms().iter().any(|a| a.is_strict())
    }

    pub fn max_abs_const(&self) -> Option<i64> {
        self.atoms().iter().filter_map(|a| a.max_abs_const()).max()
    }

    pub fn display_with(&self, vars: &[String]) -> String {
        match self {
            Guard::True => "true".to_string(),
            Guard::False => "false".to_string(),
            Guard::Conj(atoms) => atoms
                .iter()
                .map(|a| a.display_with(vars))
                .collect::<Vec<_>>()
                .join(" && "),
        }
    }
}
