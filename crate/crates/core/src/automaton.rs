//! The hybrid automaton data model.
//!
//! An [`Automaton`] owns a variable list, a location list and an edge list;
//! everything else refers to these by index ([`VarId`], [`LocId`],
//! [`EdgeId`]). Each location constrains the first derivative of every
//! variable to an interval and carries an invariant guard. Each edge carries
//! a guard and a [`Reset`], which maps some subset of the variables to
//! intervals of admissible post-edge values.

use crate::guard::Guard;
use crate::ids::{EdgeId, LocId, VarId};
use crate::interval::Interval;
use thiserror::Error;

/// A structural problem with a model, as opposed to a semantic rejection
/// of a particular run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("automaton has no locations")]
    EmptyAutomaton,
    #[error("initial location index out of range")]
    BadInit,
    #[error("duplicate variable name {0:?}")]
    DuplicateVariable(String),
    #[error("duplicate location name {0:?}")]
    DuplicateLocation(String),
    #[error("location {0:?} does not declare a rate for every variable")]
    RateArity(String),
    #[error("location {loc:?} has an empty rate interval for {var:?}")]
    EmptyRate { loc: String, var: String },
    #[error("edge {0} does not carry a reset entry for every variable")]
    ResetArity(usize),
    #[error("edge {edge} resets {var:?} to an empty interval")]
    EmptyReset { edge: usize, var: String },
    #[error("edge {0} has an out-of-range endpoint")]
    EdgeEndpoints(usize),
    #[error("variable index out of range in {0}")]
    VariableOutOfRange(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("edge index {0} out of range")]
    UnknownEdge(usize),
    #[error("state carries {got} variable values, automaton has {want} variables")]
    StateArity { got: usize, want: usize },
    #[error("step {0} carries the wrong number of rates or reset choices")]
    StepArity(usize),
    #[error("step {0} does not start where the previous step ended")]
    BrokenChain(usize),
    #[error("location {0:?} has a non-singular rate")]
    NotSingular(String),
}

/// Post-edge value constraints: one optional interval per variable.
///
/// `None` means the variable flows through the edge unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reset {
    entries: Vec<Option<Interval>>,
}

impl Reset {
    /// The identity reset over `n_vars` variables.
    pub fn identity(n_vars: usize) -> Reset {
        Reset {
            entries: vec![None; n_vars],
        }
    }

    /// Resets exactly the given variables to zero.
    pub fn to_zero(n_vars: usize, vars: &[VarId]) -> Reset {
        let mut r = Reset::identity(n_vars);
        for v in vars {
            r.set(*v, Interval::singleton(0));
        }
        r
    }

    pub fn set(&mut self, var: VarId, int: Interval) {
        self.entries[var.0] = Some(int);
    }

    pub fn get(&self, var: VarId) -> Option<&Interval> {
        self.entries[var.0].as_ref()
    }

    pub fn arity(&self) -> usize {
        self.entries.len()
    }

    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(|e| e.is_none())
    }

    /// Variables the reset touches, in index order.
    pub fn reset_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_some())
            .map(|(i, _)| VarId(i))
    }

    /// Whether every entry pins a single value.
    pub fn is_deterministic(&self) -> bool {
        self.entries
            .iter()
            .flatten()
            .all(|i| i.as_singleton().is_some())
    }

    pub fn max_abs_const(&self) -> Option<i64> {
        self.entries
            .iter()
            .flatten()
            .filter_map(|i| i.max_abs_endpoint())
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub name: String,
    /// One rate interval per variable, in variable order.
    pub rates: Vec<Interval>,
    pub invariant: Guard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: LocId,
    pub guard: Guard,
    pub reset: Reset,
    pub trg: LocId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    pub name: String,
    pub vars: Vec<String>,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub init: LocId,
}

impl Automaton {
    /// An empty shell; add locations and edges, then [`validate`].
    ///
    /// [`validate`]: Automaton::validate
    pub fn new(name: &str, vars: &[&str]) -> Automaton {
        Automaton {
            name: name.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            locations: Vec::new(),
            edges: Vec::new(),
            init: LocId(0),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_location(&mut self, name: &str, rates: Vec<Interval>, invariant: Guard) -> LocId {
        self.locations.push(Location {
            name: name.to_string(),
            rates,
            invariant,
        });
        LocId(self.locations.len() - 1)
    }

    pub fn add_edge(&mut self, src: LocId, guard: Guard, reset: Reset, trg: LocId) -> EdgeId {
        self.edges.push(Edge {
            src,
            guard,
            reset,
            trg,
        });
        EdgeId(self.edges.len() - 1)
    }

    pub fn location(&self, l: LocId) -> &Location {
        &self.locations[l.0]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn var_index(&self, name: &str) -> Result<VarId, ModelError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .map(VarId)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    pub fn loc_index(&self, name: &str) -> Result<LocId, ModelError> {
        self.locations
            .iter()
            .position(|l| l.name == name)
            .map(LocId)
            .ok_or_else(|| ModelError::UnknownLocation(name.to_string()))
    }

    pub fn out_edges(&self, l: LocId) -> Vec<EdgeId> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.src == l)
            .map(|(i, _)| EdgeId(i))
            .collect()
    }

    /// Largest absolute value of a finite rate endpoint, zero if there is
    /// none. Recomputed on every call so it can never go stale.
    pub fn rmax(&self) -> i64 {
        self.locations
            .iter()
            .flat_map(|l| l.rates.iter())
            .filter_map(|i| i.max_abs_endpoint())
            .max()
            .unwrap_or(0)
    }

    /// Largest absolute constant appearing in guards, invariants or
    /// resets, zero if there is none. Recomputed on every call.
    pub fn cmax(&self) -> i64 {
        let inv = self
            .locations
            .iter()
            .filter_map(|l| l.invariant.max_abs_const());
        let guards = self.edges.iter().filter_map(|e| e.guard.max_abs_const());
        let resets = self.edges.iter().filter_map(|e| e.reset.max_abs_const());
        inv.chain(guards).chain(resets).max().unwrap_or(0)
    }

    /// Structural well-formedness check.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.locations.is_empty() {
            return Err(ModelError::EmptyAutomaton);
        }
        if self.init.0 >= self.locations.len() {
            return Err(ModelError::BadInit);
        }
        for (i, v) in self.vars.iter().enumerate() {
            if self.vars[..i].contains(v) {
                return Err(ModelError::DuplicateVariable(v.clone()));
            }
        }
        for (i, l) in self.locations.iter().enumerate() {
            if self.locations[..i].iter().any(|o| o.name == l.name) {
                return Err(ModelError::DuplicateLocation(l.name.clone()));
            }
            if l.rates.len() != self.n_vars() {
                return Err(ModelError::RateArity(l.name.clone()));
            }
            for (v, r) in l.rates.iter().enumerate() {
                if r.is_empty() {
                    return Err(ModelError::EmptyRate {
                        loc: l.name.clone(),
                        var: self.vars[v].clone(),
                    });
                }
            }
            self.check_guard_vars(&l.invariant, &format!("invariant of {}", l.name))?;
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.src.0 >= self.locations.len() || e.trg.0 >= self.locations.len() {
                return Err(ModelError::EdgeEndpoints(i));
            }
            if e.reset.arity() != self.n_vars() {
                return Err(ModelError::ResetArity(i));
            }
            for v in e.reset.reset_vars() {
                if e.reset.get(v).unwrap().is_empty() {
                    return Err(ModelError::EmptyReset {
                        edge: i,
                        var: self.vars[v.0].clone(),
                    });
                }
            }
            self.check_guard_vars(&e.guard, &format!("guard of edge {}", i))?;
        }
        Ok(())
    }

    fn check_guard_vars(&self, g: &Guard, context: &str) -> Result<(), ModelError> {
        for a in g.atoms() {
            for v in a.vars() {
                if v.0 >= self.n_vars() {
                    return Err(ModelError::VariableOutOfRange(context.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn classify(&self) -> Classification {
        let singular = self
            .locations
            .iter()
            .flat_map(|l| l.rates.iter())
            .all(|r| r.as_singleton().is_some());
        let fixed_rate = singular
            && (0..self.n_vars()).all(|v| {
                let mut rs = self.locations.iter().map(|l| &l.rates[v]);
                match rs.next() {
                    None => true,
                    Some(first) => rs.all(|r| r == first),
                }
            });
        let rectangular = self
            .locations
            .iter()
            .map(|l| &l.invariant)
            .chain(self.edges.iter().map(|e| &e.guard))
            .all(|g| !g.has_diagonal());
        let initialized = self.edges.iter().all(|e| {
            (0..self.n_vars()).all(|v| {
                let src = &self.location(e.src).rates[v];
                let trg = &self.location(e.trg).rates[v];
                src == trg || e.reset.get(VarId(v)).is_some()
            })
        });
        let non_negative_rates = self
            .locations
            .iter()
            .flat_map(|l| l.rates.iter())
            .all(lo_nonneg);
        let strictly_positive_rates = self
            .locations
            .iter()
            .flat_map(|l| l.rates.iter())
            .all(lo_positive);
        let deterministic_resets = self.edges.iter().all(|e| e.reset.is_deterministic());
        Classification {
            singular,
            fixed_rate,
            multirate: singular && !fixed_rate,
            rectangular,
            initialized,
            non_negative_rates,
            strictly_positive_rates,
            deterministic_resets,
        }
    }
}

fn lo_nonneg(r: &Interval) -> bool {
    match r.lo() {
        crate::interval::Bound::NegInf => false,
        crate::interval::Bound::Finite(k) => k >= 0,
        crate::interval::Bound::PosInf => true,
    }
}

fn lo_positive(r: &Interval) -> bool {
    match r.lo() {
        crate::interval::Bound::NegInf => false,
        crate::interval::Bound::Finite(k) => k > 0 || (k == 0 && !r.lo_closed()),
        crate::interval::Bound::PosInf => true,
    }
}

/// Syntactic class flags of an automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    /// Every rate interval is a single value.
    pub singular: bool,
    /// Singular, and each variable has the same rate in every location.
    pub fixed_rate: bool,
    /// Singular but not fixed-rate.
    pub multirate: bool,
    /// No diagonal atoms in any guard or invariant.
    pub rectangular: bool,
    /// A variable whose rate constraint changes across an edge is reset by
    /// that edge.
    pub initialized: bool,
    /// Every rate interval lies in `[0, inf)`.
    pub non_negative_rates: bool,
    /// Every rate interval lies in `(0, inf)`.
    pub strictly_positive_rates: bool,
    /// Every reset pins a single value.
    pub deterministic_resets: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guard::{Atom, Relation};

    fn two_loc(rates0: Vec<Interval>, rates1: Vec<Interval>) -> Automaton {
        let mut h = Automaton::new("m", &["x", "y"]);
        let a = h.add_location("a", rates0, Guard::True);
        let b = h.add_location("b", rates1, Guard::True);
        h.add_edge(a, Guard::True, Reset::identity(2), b);
        h.init = a;
        h
    }

    #[test]
    fn classify_singular_and_fixed_rate() {
        let h = two_loc(
            vec![Interval::singleton(1), Interval::singleton(2)],
            vec![Interval::singleton(1), Interval::singleton(2)],
        );
        let c = h.classify();
        assert!(c.singular && c.fixed_rate && !c.multirate);
        assert!(c.rectangular && c.initialized && c.non_negative_rates);
        assert!(c.strictly_positive_rates);
    }

    #[test]
    fn classify_multirate() {
        let h = two_loc(
            vec![Interval::singleton(1), Interval::singleton(2)],
            vec![Interval::singleton(3), Interval::singleton(2)],
        );
        let c = h.classify();
        assert!(c.singular && !c.fixed_rate && c.multirate);
        // x changes rate across the edge without being reset.
        assert!(!c.initialized);
    }

    #[test]
    fn classify_interval_rates() {
        let h = two_loc(
            vec![Interval::closed(1, 2), Interval::singleton(0)],
            vec![Interval::closed(1, 2), Interval::singleton(0)],
        );
        let c = h.classify();
        assert!(!c.singular && !c.fixed_rate && !c.multirate);
        assert!(c.non_negative_rates);
        // The zero rate and the closed lower bound at zero are not
        // strictly positive.
        assert!(!c.strictly_positive_rates);
    }

    #[test]
    fn classify_negative_rate() {
        let h = two_loc(
            vec![Interval::singleton(-1), Interval::singleton(2)],
            vec![Interval::singleton(-1), Interval::singleton(2)],
        );
        assert!(!h.classify().non_negative_rates);
    }

    #[test]
    fn classify_initialized_via_reset() {
        let mut h = Automaton::new("m", &["x"]);
        let a = h.add_location("a", vec![Interval::singleton(1)], Guard::True);
        let b = h.add_location("b", vec![Interval::singleton(5)], Guard::True);
        let mut r = Reset::identity(1);
        r.set(VarId(0), Interval::singleton(0));
        h.add_edge(a, Guard::True, r, b);
        h.init = a;
        assert!(h.classify().initialized);
    }

    #[test]
    fn classify_diagonal_and_nondeterministic_resets() {
        let mut h = Automaton::new("m", &["x", "y"]);
        let a = h.add_location(
            "a",
            vec![Interval::singleton(1), Interval::singleton(1)],
            Guard::True,
        );
        let mut r = Reset::identity(2);
        r.set(VarId(0), Interval::closed(0, 1));
        h.add_edge(
            a,
            Guard::conj(vec![Atom::Diag {
                x: VarId(0),
                y: VarId(1),
                rel: Relation::Eq,
                k: 0,
            }]),
            r,
            a,
        );
        h.init = a;
        let c = h.classify();
        assert!(!c.rectangular);
        assert!(!c.deterministic_resets);
    }

    #[test]
    fn rmax_and_cmax() {
        let mut h = Automaton::new("m", &["x", "y"]);
        let a = h.add_location(
            "a",
            vec![Interval::singleton(5), Interval::closed(0, 17)],
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Le, 1)]),
        );
        let mut r = Reset::identity(2);
        r.set(VarId(1), Interval::closed(0, 3));
        h.add_edge(
            a,
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Eq, 1)]),
            r,
            a,
        );
        h.init = a;
        assert_eq!(h.rmax(), 17);
        assert_eq!(h.cmax(), 3);
        assert!(h.validate().is_ok());
    }

    #[test]
    fn rmax_ignores_infinite_endpoints() {
        let h = two_loc(
            vec![Interval::at_least(2), Interval::singleton(0)],
            vec![Interval::at_least(2), Interval::singleton(0)],
        );
        assert_eq!(h.rmax(), 2);
    }

    #[test]
    fn validation_catches_structural_errors() {
        let mut h = Automaton::new("m", &["x", "x"]);
        h.add_location("a", vec![Interval::all(), Interval::all()], Guard::True);
        h.init = LocId(0);
        assert_eq!(
            h.validate(),
            Err(ModelError::DuplicateVariable("x".to_string()))
        );

        let mut h = Automaton::new("m", &["x"]);
        h.add_location("a", vec![], Guard::True);
        assert_eq!(h.validate(), Err(ModelError::RateArity("a".to_string())));

        let mut h = Automaton::new("m", &["x"]);
        h.add_location("a", vec![Interval::empty()], Guard::True);
        assert!(matches!(h.validate(), Err(ModelError::EmptyRate { .. })));

        let h = Automaton::new("m", &["x"]);
        assert_eq!(h.validate(), Err(ModelError::EmptyAutomaton));
    }

    #[test]
    fn lookups_by_name() {
        let h = two_loc(
            vec![Interval::singleton(1), Interval::singleton(1)],
            vec![Interval::singleton(1), Interval::singleton(1)],
        );
        assert_eq!(h.var_index("y").unwrap(), VarId(1));
        assert!(h.var_index("z").is_err());
        assert_eq!(h.loc_index("b").unwrap(), LocId(1));
        assert!(h.loc_index("zz").is_err());
        assert_eq!(h.out_edges(LocId(0)), vec![EdgeId(0)]);
        assert!(h.out_edges(LocId(1)).is_empty());
    }
}
