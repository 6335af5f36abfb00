//! Operational semantics: states, timed paths, runs, replay.
//!
//! A run alternates dwell phases and edge crossings. During a dwell of
//! duration `t` in location `l`, every variable grows by `rate * t` where
//! the rate is any value in the location's rate interval, and the
//! location's invariant must hold throughout. Because every atom is linear
//! along the dwell segment, checking the invariant at both endpoints
//! covers every intermediate instant.
//!
//! Crossing an edge takes no time: the guard must hold at the current
//! valuation, reset variables jump to a value in their reset interval, and
//! all other variables are unchanged. The state an edge lands in is not
//! required to satisfy the target invariant; if the run dwells there, the
//! invariant check at the start of that dwell enforces it.

use crate::automaton::{Automaton, ModelError};
use crate::guard::{Atom, Guard};
use crate::ids::{EdgeId, LocId, VarId};
use crate::rational::Q;
use std::fmt;
use thiserror::Error;

/// A location together with one value per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub loc: LocId,
    pub vals: Vec<Q>,
}

impl State {
    pub fn new(loc: LocId, vals: Vec<Q>) -> State {
        State { loc, vals }
    }

    /// The state at `loc` with every variable at zero.
    pub fn zeroed(h: &Automaton, loc: LocId) -> State {
        State {
            loc,
            vals: vec![Q::zero(); h.n_vars()],
        }
    }
}

/// One dwell-then-jump step of a timed path.
///
/// The step records the concrete slope used for every variable during the
/// dwell, so replay is deterministic even when the automaton's rate
/// constraints are intervals. `reset_choice` likewise pins the post-edge
/// value of variables whose reset interval contains more than one point;
/// entries for deterministically reset or untouched variables may be left
/// `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedStep {
    pub delay: Q,
    pub rates: Vec<Q>,
    pub edge: EdgeId,
    pub reset_choice: Vec<Option<Q>>,
}

impl TimedStep {
    pub fn new(delay: Q, rates: Vec<Q>, edge: EdgeId) -> TimedStep {
        let n = rates.len();
        TimedStep {
            delay,
            rates,
            edge,
            reset_choice: vec![None; n],
        }
    }

    /// Builds a step for a singular automaton, reading the slope off the
    /// source location of `edge`.
    pub fn singular(h: &Automaton, delay: Q, edge: EdgeId) -> Result<TimedStep, ModelError> {
        if edge.0 >= h.edges.len() {
            return Err(ModelError::UnknownEdge(edge.0));
        }
        let src = h.edge(edge).src;
        let rates: Option<Vec<Q>> = h
            .location(src)
            .rates
            .iter()
            .map(|r| r.as_singleton().map(Q::int))
            .collect();
        let rates = rates.ok_or_else(|| ModelError::NotSingular(h.location(src).name.clone()))?;
        Ok(TimedStep::new(delay, rates, edge))
    }
}

/// A sequence of timed steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimedPath {
    pub steps: Vec<TimedStep>,
}

impl TimedPath {
    pub fn new(steps: Vec<TimedStep>) -> TimedPath {
        TimedPath { steps }
    }

    pub fn empty() -> TimedPath {
        TimedPath { steps: Vec::new() }
    }

    /// Builds a path for a singular automaton from `(delay, edge)` pairs.
    pub fn singular(h: &Automaton, steps: &[(Q, EdgeId)]) -> Result<TimedPath, ModelError> {
        let steps = steps
            .iter()
            .map(|(d, e)| TimedStep::singular(h, d.clone(), *e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TimedPath { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Total elapsed time: the sum of every delay in the path.
    pub fn duration(&self) -> Q {
        self.steps.iter().map(|s| &s.delay).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.steps.iter().map(|s| s.edge)
    }
}

/// Accumulated displacement of `var` over the whole path: the sum of
/// `rate * delay` across all steps. Resets are not taken into account.
pub fn effect(path: &TimedPath, var: VarId) -> Q {
    path.steps
        .iter()
        .map(|s| &s.rates[var.0] * &s.delay)
        .sum()
}

/// Number of steps whose edge guard pins some variable to an exact value.
pub fn count_equality_guarded(h: &Automaton, path: &TimedPath) -> usize {
    path.steps
        .iter()
        .filter(|s| h.edge(s.edge).guard.has_equality())
        .count()
}

/// Why a step was refused during replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    NegativeDelay,
    RateOutsideInterval { var: VarId },
    InvariantViolated { atom: Atom, at_end: bool },
    GuardViolated { atom: Atom },
    ResetOutsideInterval { var: VarId },
    MissingResetChoice { var: VarId },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::NegativeDelay => write!(f, "negative delay"),
            RejectReason::RateOutsideInterval { var } => {
                write!(f, "rate for {} outside its interval", var)
            }
            RejectReason::InvariantViolated { at_end, .. } => write!(
                f,
                "invariant violated at the {} of the dwell",
                if *at_end { "end" } else { "start" }
            ),
            RejectReason::GuardViolated { .. } => write!(f, "guard violated"),
            RejectReason::ResetOutsideInterval { var } => {
                write!(f, "chosen reset value for {} outside the reset interval", var)
            }
            RejectReason::MissingResetChoice { var } => {
                write!(f, "no value chosen for the non-deterministic reset of {}", var)
            }
        }
    }
}

/// A rejection at a specific step of a path (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step}: {reason}")]
pub struct Rejected {
    pub step: usize,
    pub reason: RejectReason,
}

/// Replay failure: either the input is malformed, or the path is refused
/// by the semantics at some step, or a recorded state disagrees with the
/// replay.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rejected(#[from] Rejected),
    #[error("recorded state after step {step} does not match the replay")]
    StateMismatch { step: usize },
}

/// A human-readable description of a rejection, with variable and
/// location names resolved against the automaton.
pub fn describe_rejection(h: &Automaton, r: &Rejected) -> String {
    let detail = match &r.reason {
        RejectReason::NegativeDelay => "negative delay".to_string(),
        RejectReason::RateOutsideInterval { var } => {
            format!("rate for {} outside its interval", h.vars[var.0])
        }
        RejectReason::InvariantViolated { atom, at_end } => format!(
            "invariant atom {} violated at the {} of the dwell",
            atom.display_with(&h.vars),
            if *at_end { "end" } else { "start" }
        ),
        RejectReason::GuardViolated { atom } => {
            format!("guard atom {} violated", atom.display_with(&h.vars))
        }
        RejectReason::ResetOutsideInterval { var } => format!(
            "chosen reset value for {} outside the reset interval",
            h.vars[var.0]
        ),
        RejectReason::MissingResetChoice { var } => format!(
            "no value chosen for the non-deterministic reset of {}",
            h.vars[var.0]
        ),
    };
    format!("step {}: {}", r.step, detail)
}

/// Evaluates a guard at a valuation, checking variable indices.
pub fn eval_guard(g: &Guard, vals: &[Q]) -> Result<bool, ModelError> {
    for a in g.atoms() {
        for v in a.vars() {
            if v.0 >= vals.len() {
                return Err(ModelError::VariableOutOfRange("guard".to_string()));
            }
        }
    }
    Ok(g.eval(vals))
}

/// Lets time pass in the current location.
///
/// Requires the given slope to lie in the location's rate interval for
/// every variable, and the invariant to hold at the start and end of the
/// dwell (which covers the whole segment, by linearity).
pub fn time_step(h: &Automaton, s: &State, delay: &Q, rates: &[Q]) -> Result<State, RejectReason> {
    debug_assert_eq!(s.vals.len(), h.n_vars());
    debug_assert_eq!(rates.len(), h.n_vars());
    if delay.is_negative() {
        return Err(RejectReason::NegativeDelay);
    }
    let loc = h.location(s.loc);
    for (v, rate) in rates.iter().enumerate() {
        if !loc.rates[v].contains(rate) {
            return Err(RejectReason::RateOutsideInterval { var: VarId(v) });
        }
    }
    if let Some(atom) = loc.invariant.first_failing(&s.vals) {
        return Err(RejectReason::InvariantViolated {
            atom,
            at_end: false,
        });
    }
    let vals: Vec<Q> = s
        .vals
        .iter()
        .zip(rates.iter())
        .map(|(v, r)| v + &(r * delay))
        .collect();
    if let Some(atom) = loc.invariant.first_failing(&vals) {
        return Err(RejectReason::InvariantViolated { atom, at_end: true });
    }
    Ok(State { loc: s.loc, vals })
}

/// Crosses an edge instantaneously.
pub fn edge_step(
    h: &Automaton,
    s: &State,
    edge: EdgeId,
    choice: &[Option<Q>],
) -> Result<State, RejectReason> {
    let e = h.edge(edge);
    debug_assert_eq!(e.src, s.loc, "edge fired from the wrong location");
    if let Some(atom) = e.guard.first_failing(&s.vals) {
        return Err(RejectReason::GuardViolated { atom });
    }
    let mut vals = s.vals.clone();
    for (v, slot) in vals.iter_mut().enumerate() {
        let var = VarId(v);
        if let Some(int) = e.reset.get(var) {
            let picked = match choice.get(v).and_then(|c| c.as_ref()) {
                Some(q) => {
                    if !int.contains(q) {
                        return Err(RejectReason::ResetOutsideInterval { var });
                    }
                    q.clone()
                }
                None => match int.as_singleton() {
                    Some(k) => Q::int(k),
                    None => return Err(RejectReason::MissingResetChoice { var }),
                },
            };
            *slot = picked;
        }
    }
    Ok(State { loc: e.trg, vals })
}

/// A fully replayed path: the initial state plus the state after each
/// step. `states[i]` is the post-edge state of step `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub initial: State,
    pub path: TimedPath,
    pub states: Vec<State>,
}

impl Run {
    /// Number of states in the run, one more than the number of steps.
    pub fn len(&self) -> usize {
        self.path.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn final_state(&self) -> &State {
        self.states.last().unwrap_or(&self.initial)
    }

    pub fn duration(&self) -> Q {
        self.path.duration()
    }

    /// Whether every delay after the first is strictly positive. The
    /// first delay may be zero.
    pub fn is_strict(&self) -> bool {
        self.path.steps.iter().skip(1).all(|s| s.delay.is_positive())
    }

    /// Whether every sampled value stays at or below `k`. The samples are
    /// the initial valuation and the valuation at the end of each dwell,
    /// just before the edge fires; post-edge values are reached again at
    /// the start of the next dwell or are final.
    pub fn is_variable_bounded(&self, k: &Q) -> bool {
        if self.initial.vals.iter().any(|v| v > k) {
            return false;
        }
        let mut cur = self.initial.vals.clone();
        for (i, step) in self.path.steps.iter().enumerate() {
            for (v, val) in cur.iter_mut().enumerate() {
                *val = &*val + &(&step.rates[v] * &step.delay);
                if &*val > k {
                    return false;
                }
            }
            cur = self.states[i].vals.clone();
        }
        true
    }
}

/// Replays `path` from `s0`, producing the full run or the first failure.
///
/// For a singular automaton with deterministic resets the result is the
/// unique run over the path; otherwise the slopes and reset choices
/// recorded inside the steps resolve the non-determinism.
pub fn run_of(h: &Automaton, s0: State, path: TimedPath) -> Result<Run, RunError> {
    h.validate()?;
    if s0.vals.len() != h.n_vars() {
        return Err(ModelError::StateArity {
            got: s0.vals.len(),
            want: h.n_vars(),
        }
        .into());
    }
    if s0.loc.0 >= h.locations.len() {
        return Err(ModelError::BadInit.into());
    }
    let mut at = s0.loc;
    for (i, step) in path.steps.iter().enumerate() {
        if step.edge.0 >= h.edges.len() {
            return Err(ModelError::UnknownEdge(step.edge.0).into());
        }
        if step.rates.len() != h.n_vars() || step.reset_choice.len() != h.n_vars() {
            return Err(ModelError::StepArity(i).into());
        }
        if h.edge(step.edge).src != at {
            return Err(ModelError::BrokenChain(i).into());
        }
        at = h.edge(step.edge).trg;
    }
    let mut states = Vec::with_capacity(path.len());
    let mut cur = s0.clone();
    for (i, step) in path.steps.iter().enumerate() {
        let reject = |reason| Rejected { step: i, reason };
        let dwelled = time_step(h, &cur, &step.delay, &step.rates).map_err(reject)?;
        cur = edge_step(h, &dwelled, step.edge, &step.reset_choice).map_err(reject)?;
        states.push(cur.clone());
    }
    Ok(Run {
        initial: s0,
        path,
        states,
    })
}

/// Checks that a run's recorded states agree exactly with a fresh replay.
pub fn validate_run(h: &Automaton, run: &Run) -> Result<(), RunError> {
    let replay = run_of(h, run.initial.clone(), run.path.clone())?;
    if replay.states.len() != run.states.len() {
        return Err(RunError::StateMismatch { step: 0 });
    }
    for (i, (a, b)) in replay.states.iter().zip(run.states.iter()).enumerate() {
        if a != b {
            return Err(RunError::StateMismatch { step: i });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Reset;
    use crate::guard::Relation;
    use crate::interval::Interval;
    use crate::testgen::fig1;

    // Edge indices in the figure-one automaton, in insertion order.
    const E01: EdgeId = EdgeId(0);
    const E10: EdgeId = EdgeId(1);
    const E03: EdgeId = EdgeId(3);
    const E34: EdgeId = EdgeId(6);

    fn q(n: i64, d: i64) -> Q {
        Q::ratio(n, d)
    }

    #[test]
    fn dwell_then_jump_is_exact() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E01)]).unwrap();
        let run = run_of(&h, State::zeroed(&h, h.init), path).unwrap();
        assert_eq!(
            run.final_state(),
            &State::new(LocId(1), vec![Q::zero(), q(2, 5)])
        );
    }

    #[test]
    fn two_steps_land_back_with_swapped_progress() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E01), (q(3, 25), E10)]).unwrap();
        let run = run_of(&h, State::zeroed(&h, h.init), path).unwrap();
        assert_eq!(
            run.final_state(),
            &State::new(LocId(0), vec![q(6, 25), Q::zero()])
        );
        assert_eq!(run.duration(), q(8, 25));
        assert_eq!(run.len(), 3);
    }

    // After e01 and e10, the first variable sits at 6/25 and grows with
    // slope 5, so it reaches 1 after 19/125, not 17/125. The shorter
    // dwell leaves it at 23/25 and the equality guard refuses to fire.
    #[test]
    fn equality_guard_refuses_an_early_crossing() {
        let h = fig1();
        let path = TimedPath::singular(
            &h,
            &[(q(1, 5), E01), (q(3, 25), E10), (q(17, 125), E03), (q(1, 10), E34)],
        )
        .unwrap();
        assert_eq!(path.duration(), q(139, 250));
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        match err {
            RunError::Rejected(r) => {
                assert_eq!(r.step, 2);
                match r.reason {
                    RejectReason::GuardViolated { atom } => {
                        assert_eq!(atom, Atom::cmp(VarId(0), Relation::Eq, 1));
                    }
                    other => panic!("unexpected reason {other:?}"),
                }
            }
            other => panic!("unexpected error {other}"),
        }
    }

    // Correcting that dwell to 19/125 satisfies the guard but pushes the
    // second variable to 251/250 during the last dwell, past the
    // invariant.
    #[test]
    fn corrected_dwell_breaks_the_last_invariant() {
        let h = fig1();
        let path = TimedPath::singular(
            &h,
            &[(q(1, 5), E01), (q(3, 25), E10), (q(19, 125), E03), (q(1, 10), E34)],
        )
        .unwrap();
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        match err {
            RunError::Rejected(r) => {
                assert_eq!(r.step, 3);
                match r.reason {
                    RejectReason::InvariantViolated { atom, at_end } => {
                        assert!(at_end);
                        assert_eq!(atom, Atom::cmp(VarId(1), Relation::Le, 1));
                    }
                    other => panic!("unexpected reason {other:?}"),
                }
            }
            other => panic!("unexpected error {other}"),
        }
    }

    // Two full swap cycles lower the second variable enough to survive
    // the final dwell; this is the shortest path into the target
    // location.
    #[test]
    fn six_step_witness_reaches_the_sink() {
        let h = fig1();
        let path = TimedPath::singular(
            &h,
            &[
                (q(1, 5), E01),
                (q(3, 25), E10),
                (q(19, 125), E01),
                (q(87, 625), E10),
                (q(451, 3125), E03),
                (q(1, 10), E34),
            ],
        )
        .unwrap();
        let run = run_of(&h, State::zeroed(&h, h.init), path).unwrap();
        assert_eq!(
            run.final_state(),
            &State::new(LocId(4), vec![Q::zero(), q(6179, 6250)])
        );
        assert_eq!(run.duration(), q(5347, 6250));
        assert!(run.duration() <= Q::one());
        assert!(run.is_strict());
        assert!(run.is_variable_bounded(&Q::one()));
        assert!(validate_run(&h, &run).is_ok());
    }

    #[test]
    fn effect_sums_rate_times_delay() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E01), (q(3, 25), E10)]).unwrap();
        assert_eq!(effect(&path, VarId(0)), Q::one() + q(6, 25));
        assert_eq!(effect(&path, VarId(1)), q(2, 5) + q(3, 5));
    }

    #[test]
    fn negative_delays_are_refused() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(-1, 5), E01)]).unwrap();
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        assert_eq!(
            err,
            RunError::Rejected(Rejected {
                step: 0,
                reason: RejectReason::NegativeDelay
            })
        );
    }

    #[test]
    fn slopes_outside_the_rate_interval_are_refused() {
        let h = fig1();
        let step = TimedStep::new(q(1, 5), vec![Q::int(4), Q::int(2)], E01);
        let err = run_of(&h, State::zeroed(&h, h.init), TimedPath::new(vec![step])).unwrap_err();
        assert_eq!(
            err,
            RunError::Rejected(Rejected {
                step: 0,
                reason: RejectReason::RateOutsideInterval { var: VarId(0) }
            })
        );
    }

    #[test]
    fn chaining_is_checked_before_replay() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E10)]).unwrap();
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        assert_eq!(err, RunError::Model(ModelError::BrokenChain(0)));
    }

    #[test]
    fn zero_delay_steps_and_strictness() {
        let h = fig1();
        // A zero first delay is fine; the guard needs the variable at 1
        // though, so start from a state already there.
        let s0 = State::new(LocId(0), vec![Q::one(), Q::zero()]);
        // After only 1/10 in l1 the second variable is at 1/2, so the
        // rejection is about the guard of e10, not the zero delay.
        let path = TimedPath::singular(&h, &[(Q::zero(), E01), (q(1, 10), E10)]).unwrap();
        let err = run_of(&h, s0.clone(), path).unwrap_err();
        assert!(matches!(
            err,
            RunError::Rejected(Rejected {
                step: 1,
                reason: RejectReason::GuardViolated { .. }
            })
        ));
        // The full 1/5 dwell brings it to exactly 1 and the run replays.
        // A zero delay in the first step does not break strictness.
        let path = TimedPath::singular(&h, &[(Q::zero(), E01), (q(1, 5), E10)]).unwrap();
        let run = run_of(&h, s0, path).unwrap();
        assert_eq!(run.final_state().loc, LocId(0));
        assert_eq!(run.final_state().vals, vec![q(2, 5), Q::zero()]);
        assert!(run.is_strict());
        // An interior zero delay breaks strictness.
        let path = TimedPath::singular(&h, &[(q(1, 5), E01), (Q::zero(), E10)]).unwrap();
        let run = run_of(&h, State::zeroed(&h, h.init), path);
        // e10 fires only at y = 1, so replay fails; strictness is a
        // property of the path alone.
        assert!(run.is_err());
        let p = TimedPath::singular(&h, &[(q(1, 5), E01), (Q::zero(), E10)]).unwrap();
        let r = Run {
            initial: State::zeroed(&h, h.init),
            states: Vec::new(),
            path: p,
        };
        assert!(!r.is_strict());
    }

    #[test]
    fn nondeterministic_resets_need_choices() {
        let mut h = Automaton::new("m", &["x"]);
        let a = h.add_location("a", vec![Interval::singleton(1)], Guard::True);
        let mut r = Reset::identity(1);
        r.set(VarId(0), Interval::closed(0, 1));
        let e = h.add_edge(a, Guard::True, r, a);
        h.init = a;

        let missing = TimedStep::new(Q::one(), vec![Q::one()], e);
        let err = run_of(&h, State::zeroed(&h, a), TimedPath::new(vec![missing])).unwrap_err();
        assert_eq!(
            err,
            RunError::Rejected(Rejected {
                step: 0,
                reason: RejectReason::MissingResetChoice { var: VarId(0) }
            })
        );

        let mut chosen = TimedStep::new(Q::one(), vec![Q::one()], e);
        chosen.reset_choice[0] = Some(q(1, 2));
        let run = run_of(&h, State::zeroed(&h, a), TimedPath::new(vec![chosen])).unwrap();
        assert_eq!(run.final_state().vals[0], q(1, 2));

        let mut outside = TimedStep::new(Q::one(), vec![Q::one()], e);
        outside.reset_choice[0] = Some(Q::int(2));
        let err = run_of(&h, State::zeroed(&h, a), TimedPath::new(vec![outside])).unwrap_err();
        assert_eq!(
            err,
            RunError::Rejected(Rejected {
                step: 0,
                reason: RejectReason::ResetOutsideInterval { var: VarId(0) }
            })
        );
    }

    #[test]
    fn validate_run_detects_tampering() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E01)]).unwrap();
        let mut run = run_of(&h, State::zeroed(&h, h.init), path).unwrap();
        run.states[0].vals[1] = q(1, 2);
        assert_eq!(
            validate_run(&h, &run),
            Err(RunError::StateMismatch { step: 0 })
        );
    }

    #[test]
    fn variable_bound_checks_sampled_points() {
        let h = fig1();
        let path = TimedPath::singular(&h, &[(q(1, 5), E01), (q(3, 25), E10)]).unwrap();
        let run = run_of(&h, State::zeroed(&h, h.init), path).unwrap();
        assert!(run.is_variable_bounded(&Q::one()));
        assert!(!run.is_variable_bounded(&q(99, 100)));
    }
}
