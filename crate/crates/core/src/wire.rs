//! Serialization-friendly forms of states, steps and runs.
//!
//! The wire structs mirror the semantic types but name locations by their
//! string names and edges by their index, so a serialized run can be read
//! next to the model file it belongs to. All rationals serialize as
//! `"numerator/denominator"` strings. Conversions need the automaton to
//! translate names back to ids; decoding performs only structural checks,
//! replay validation is a separate step ([`run_from_wire`] does both).

use crate::automaton::{Automaton, ModelError};
use crate::ids::{EdgeId, LocId};
use crate::rational::Q;
use crate::semantics::{run_of, Run, RunError, State, TimedPath, TimedStep};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateWire {
    pub loc: String,
    /// Values in variable declaration order.
    pub vals: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepWire {
    pub delay: Q,
    /// Slopes in variable declaration order.
    pub rates: Vec<Q>,
    /// Edge index in declaration order.
    pub edge: usize,
    /// Chosen values for non-deterministic resets, vals-indexed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_choice: Option<Vec<Option<Q>>>,
    /// State after the step. Emitted for readability; ignored on decode
    /// (replay recomputes it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<StateWire>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunWire {
    pub initial: StateWire,
    pub steps: Vec<StepWire>,
}

pub fn state_to_wire(h: &Automaton, s: &State) -> StateWire {
    StateWire {
        loc: h.location(s.loc).name.clone(),
        vals: s.vals.clone(),
    }
}

pub fn state_from_wire(h: &Automaton, w: &StateWire) -> Result<State, ModelError> {
    let loc = h.loc_index(&w.loc)?;
    if w.vals.len() != h.n_vars() {
        return Err(ModelError::StateArity {
            got: w.vals.len(),
            want: h.n_vars(),
        });
    }
    Ok(State::new(loc, w.vals.clone()))
}

pub fn run_to_wire(h: &Automaton, run: &Run) -> RunWire {
    let steps = run
        .path
        .steps
        .iter()
        .zip(run.states.iter())
        .map(|(st, post)| StepWire {
            delay: st.delay.clone(),
            rates: st.rates.clone(),
            edge: st.edge.0,
            reset_choice: if st.reset_choice.iter().all(|c| c.is_none()) {
                None
            } else {
                Some(st.reset_choice.clone())
            },
            post: Some(state_to_wire(h, post)),
        })
        .collect();
    RunWire {
        initial: state_to_wire(h, &run.initial),
        steps,
    }
}

/// Decodes the initial state and the timed path, without replaying.
pub fn path_from_wire(h: &Automaton, w: &RunWire) -> Result<(State, TimedPath), ModelError> {
    let initial = state_from_wire(h, &w.initial)?;
    let mut steps = Vec::with_capacity(w.steps.len());
    for (i, sw) in w.steps.iter().enumerate() {
        if sw.edge >= h.edges.len() {
            return Err(ModelError::UnknownEdge(sw.edge));
        }
        if sw.rates.len() != h.n_vars() {
            return Err(ModelError::StepArity(i));
        }
        let mut step = TimedStep::new(sw.delay.clone(), sw.rates.clone(), EdgeId(sw.edge));
        if let Some(choice) = &sw.reset_choice {
            if choice.len() != h.n_vars() {
                return Err(ModelError::StepArity(i));
            }
            step.reset_choice = choice.clone();
        }
        steps.push(step);
    }
    Ok((initial, TimedPath::new(steps)))
}

/// Decodes and replays a serialized run.
pub fn run_from_wire(h: &Automaton, w: &RunWire) -> Result<Run, RunError> {
    let (initial, path) = path_from_wire(h, w)?;
    run_of(h, initial, path)
}

/// Resolves a location by name, for goal arguments.
pub fn loc_by_name(h: &Automaton, name: &str) -> Result<LocId, ModelError> {
    h.loc_index(name)
}
