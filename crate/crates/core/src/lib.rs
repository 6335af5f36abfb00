//! Exact-rational modeling and analysis of linear and rectangular hybrid
//! automata.
//!
//! The crate provides:
//!
//! * a data model for hybrid automata with interval rate constraints,
//!   rectangular and diagonal guard atoms, and interval resets ([`automaton`]);
//! * operational semantics over exact rationals: timed paths, runs, replay
//!   and validation ([`semantics`]);
//! * the three normal-form constructions that remove non-deterministic
//!   resets, bound all variables by one, and compress instantaneous edge
//!   bursts ([`normalize`]);
//! * timed-path contraction operators with explicit length bounds
//!   ([`contraction`]);
//! * an exact feasibility solver for conjunctions of strict and non-strict
//!   linear constraints ([`lra`]);
//! * a decision procedure for time-bounded location reachability on
//!   rectangular automata with non-negative rates ([`decide`]), plus an
//!   independent bounded-depth search used to cross-check it ([`oracle`]);
//! * compilers from two-counter machines into hybrid automata, with exact
//!   co-simulation of the encodings ([`reductions`]);
//! * a small text format for models ([`dsl`]) and JSON-friendly wire forms
//!   ([`wire`]).
//!
//! Every quantity anywhere in the crate is an arbitrary-precision rational.
//! There are no floating-point numbers and no tolerances; all comparisons
//! are exact.

pub mod automaton;
pub mod contraction;
pub mod decide;
pub mod dsl;
pub mod engine;
pub mod guard;
pub mod ids;
pub mod interval;
pub mod lra;
pub mod normalize;
pub mod oracle;
pub mod rational;
pub mod reductions;
pub mod semantics;
pub mod testgen;
pub mod wire;

pub use automaton::{Automaton, Classification, Edge, Location, ModelError, Reset};
pub use guard::{Atom, Guard, Relation};
pub use ids::{EdgeId, LocId, VarId};
pub use interval::{Bound, Interval};
pub use rational::Q;
pub use semantics::{Run, State, TimedPath, TimedStep};
