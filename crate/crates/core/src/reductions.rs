//! Two-counter machines and their hybrid-automaton encodings.
//!
//! A [`MinskyMachine`] is a deterministic program over two natural-valued
//! counters, built from increment instructions and branching zero-tests.
//! [`run_machine`] executes one. Two compilers turn a machine into a hybrid
//! automaton whose runs mirror the machine's execution step for step:
//!
//! * [`compile_negrates`] produces a rectangular automaton with singular
//!   positive and negative rates and no diagonal constraints. Execution
//!   steps happen between clock ticks at times 1 - 1/4^i, and a counter
//!   value v after i steps is represented by a variable holding exactly
//!   1/4^(i+v), so an accepting execution of any length fits inside one
//!   time unit.
//! * [`compile_diagonal`] produces an automaton in which every variable
//!   keeps one fixed, strictly positive, singular rate everywhere and all
//!   the work is done by diagonal equality guards. Counter values live in
//!   differences of variable pairs, halved by increment rounds and
//!   preserved by maintenance rounds.
//!
//! [`cosimulate_negrates`] and [`cosimulate_diagonal`] drive a compiled
//! automaton along the canonical run of its machine, replay that run
//! through the ordinary semantics, and report exact [`EncodingCheck`] rows
//! for the value encodings plus [`RoundLog`] rows for the internal gadget
//! arithmetic. All quantities are exact rationals.

use crate::automaton::{Automaton, ModelError, Reset};
use crate::guard::{Atom, Guard, Relation};
use crate::ids::{EdgeId, LocId, VarId};
use crate::interval::Interval;
use crate::rational::Q;
use crate::semantics::{describe_rejection, run_of, Run, RunError, State, TimedPath};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Counter operation of a single instruction tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Inc,
    Dec,
    ZeroTest,
}

/// One instruction tuple: from state `src`, apply `action` to `counter`,
/// continue at `trg`. Dec and ZeroTest tuples always come in pairs created
/// by the branching instruction form; the interpreter picks the branch
/// from the counter value, so a decrement never fires on zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tuple {
    pub src: usize,
    pub action: Action,
    pub counter: usize,
    pub trg: usize,
}

/// A two-counter machine: named control states, two named counters, an
/// initial and a final state, and instruction tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinskyMachine {
    pub states: Vec<String>,
    pub counters: [String; 2],
    pub initial: usize,
    pub final_state: usize,
    pub tuples: Vec<Tuple>,
}

/// A structurally broken machine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("machine has no states")]
    Empty,
    #[error("state or counter index out of range in tuple {0}")]
    BadIndex(usize),
    #[error("initial or final state index out of range")]
    BadEndpoints,
    #[error("state {0:?} does not carry exactly one instruction construct")]
    Shape(String),
}

/// What a state's tuples amount to, after the shape check.
enum StateCode {
    Halt,
    Inc { tuple: usize },
    Branch { zero: usize, dec: usize },
}

impl MinskyMachine {
    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Structural well-formedness: indices in range and, per state, either
    /// no instruction, one increment, or one zero-test paired with one
    /// decrement on the same counter.
    pub fn validate(&self) -> Result<(), MachineError> {
        if self.states.is_empty() {
            return Err(MachineError::Empty);
        }
        if self.initial >= self.states.len() || self.final_state >= self.states.len() {
            return Err(MachineError::BadEndpoints);
        }
        for (i, t) in self.tuples.iter().enumerate() {
            if t.src >= self.states.len() || t.trg >= self.states.len() || t.counter >= 2 {
                return Err(MachineError::BadIndex(i));
            }
        }
        for q in 0..self.states.len() {
            self.code_of(q)?;
        }
        Ok(())
    }

    fn code_of(&self, q: usize) -> Result<StateCode, MachineError> {
        let mine: Vec<usize> = (0..self.tuples.len())
            .filter(|i| self.tuples[*i].src == q)
            .collect();
        let shape_err = || MachineError::Shape(self.states[q].clone());
        match mine.as_slice() {
            [] => Ok(StateCode::Halt),
            [i] if self.tuples[*i].action == Action::Inc => Ok(StateCode::Inc { tuple: *i }),
            [a, b] => {
                let (ta, tb) = (&self.tuples[*a], &self.tuples[*b]);
                let (zero, dec) = match (ta.action, tb.action) {
                    (Action::ZeroTest, Action::Dec) => (*a, *b),
                    (Action::Dec, Action::ZeroTest) => (*b, *a),
                    _ => return Err(shape_err()),
                };
                if self.tuples[zero].counter != self.tuples[dec].counter {
                    return Err(shape_err());
                }
                Ok(StateCode::Branch { zero, dec })
            }
            _ => Err(shape_err()),
        }
    }
}

impl fmt::Display for MinskyMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "init {}", self.states[self.initial])?;
        writeln!(f, "final {}", self.states[self.final_state])?;
        let mut done = vec![false; self.tuples.len()];
        for (i, t) in self.tuples.iter().enumerate() {
            if done[i] {
                continue;
            }
            let q = &self.states[t.src];
            let c = &self.counters[t.counter];
            match t.action {
                Action::Inc => writeln!(f, "{}: inc {} -> {}", q, c, self.states[t.trg])?,
                Action::ZeroTest | Action::Dec => {
                    let partner = self
                        .tuples
                        .iter()
                        .position(|o| o.src == t.src && o.action != t.action)
                        .expect("a branch tuple travels with its partner");
                    done[partner] = true;
                    let (zero, dec) = if t.action == Action::ZeroTest {
                        (t, &self.tuples[partner])
                    } else {
                        (&self.tuples[partner], t)
                    };
                    writeln!(
                        f,
                        "{}: ifz {} -> {} else dec -> {}",
                        q, c, self.states[zero.trg], self.states[dec.trg]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// A parse failure with the 1-based source line it occurred on. Failures
/// that concern the program as a whole report line 0.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct MachineParseError {
    pub line: usize,
    pub message: String,
}

fn ident_ok(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses the one-instruction-per-line machine format.
///
/// Lines are `q: inc c -> q'` or `q: ifz c -> q' else dec -> q''`, with
/// `#` starting a comment. Optional `init q` and `final q` directives name
/// the endpoints; without them the initial state defaults to the source of
/// the first instruction and the final state to the unique state that has
/// no instruction of its own.
pub fn parse_machine(src: &str) -> Result<MinskyMachine, MachineParseError> {
    let mut states: Vec<String> = Vec::new();
    let mut counters: Vec<String> = Vec::new();
    let mut tuples: Vec<Tuple> = Vec::new();
    let mut init_name: Option<String> = None;
    let mut final_name: Option<String> = None;

    fn intern(pool: &mut Vec<String>, name: &str) -> usize {
        match pool.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                pool.push(name.to_string());
                pool.len() - 1
            }
        }
    }

    for (n, raw) in src.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| MachineParseError { line, message };
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["init", q] if ident_ok(q) => {
                init_name = Some(q.to_string());
                continue;
            }
            ["final", q] if ident_ok(q) => {
                final_name = Some(q.to_string());
                continue;
            }
            _ => {}
        }
        let (head, rest) = text
            .split_once(':')
            .ok_or_else(|| err("expected `state:` before the instruction".into()))?;
        let q = head.trim();
        if !ident_ok(q) {
            return Err(err(format!("bad state name {q:?}")));
        }
        if tuples.iter().any(|t| states[t.src] == q) {
            return Err(err(format!("state {q:?} already has an instruction")));
        }
        let src_id = intern(&mut states, q);
        let words: Vec<&str> = rest.split_whitespace().collect();
        match words.as_slice() {
            ["inc", c, "->", t] if ident_ok(c) && ident_ok(t) => {
                let counter = intern(&mut counters, c);
                let trg = intern(&mut states, t);
                tuples.push(Tuple { src: src_id, action: Action::Inc, counter, trg });
            }
            ["ifz", c, "->", tz, "else", "dec", "->", td]
                if ident_ok(c) && ident_ok(tz) && ident_ok(td) =>
            {
                let counter = intern(&mut counters, c);
                let trg_z = intern(&mut states, tz);
                let trg_d = intern(&mut states, td);
                tuples.push(Tuple { src: src_id, action: Action::ZeroTest, counter, trg: trg_z });
                tuples.push(Tuple { src: src_id, action: Action::Dec, counter, trg: trg_d });
            }
            _ => {
                return Err(err(
                    "expected `inc c -> q` or `ifz c -> q else dec -> q`".into(),
                ))
            }
        }
        if counters.len() > 2 {
            return Err(err("machines have at most two counters".into()));
        }
    }

    if tuples.is_empty() {
        return Err(MachineParseError { line: 0, message: "no instructions".into() });
    }
    for q in [&init_name, &final_name].into_iter().flatten() {
        intern(&mut states, q);
    }
    let initial = match &init_name {
        Some(q) => states.iter().position(|s| s == q).expect("interned above"),
        None => tuples[0].src,
    };
    let final_state = match &final_name {
        Some(q) => states.iter().position(|s| s == q).expect("interned above"),
        None => {
            let sinks: Vec<usize> = (0..states.len())
                .filter(|q| tuples.iter().all(|t| t.src != *q))
                .collect();
            match sinks.as_slice() {
                [q] => *q,
                _ => {
                    return Err(MachineParseError {
                        line: 0,
                        message: format!(
                            "{} states have no instruction; name the accepting one with `final q`",
                            sinks.len()
                        ),
                    })
                }
            }
        }
    };
    // A one-counter program still compiles against the two-counter
    // encodings; the silent counter gets a name that cannot clash.
    while counters.len() < 2 {
        let next = ["c", "d"]
            .iter()
            .find(|n| !counters.iter().any(|c| c == *n))
            .map(|n| n.to_string())
            .unwrap_or_else(|| format!("{}_", counters[0]));
        counters.push(next);
    }
    let m = MinskyMachine {
        states,
        counters: [counters[0].clone(), counters[1].clone()],
        initial,
        final_state,
        tuples,
    };
    m.validate()
        .map_err(|e| MachineParseError { line: 0, message: e.to_string() })?;
    Ok(m)
}

/// A control state with its two counter values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub state: usize,
    pub counters: [u64; 2],
}

/// How an execution ended within the step bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineOutcome {
    /// The final state was reached.
    Accepted,
    /// A non-final state with no instruction was reached.
    Stuck,
    /// The step bound ran out first.
    OutOfSteps,
}

/// A deterministic execution trace: `configs` holds one entry more than
/// `taken`, which lists the index of the tuple applied at each step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineRun {
    pub configs: Vec<MachineConfig>,
    pub taken: Vec<usize>,
    pub outcome: MachineOutcome,
}

impl MachineRun {
    pub fn len(&self) -> usize {
        self.taken.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taken.is_empty()
    }

    pub fn final_config(&self) -> MachineConfig {
        *self.configs.last().expect("a run holds at least its start")
    }
}

/// Runs a machine from its initial state with zeroed counters for at most
/// `max_steps` instructions.
pub fn run_machine(m: &MinskyMachine, max_steps: usize) -> Result<MachineRun, MachineError> {
    m.validate()?;
    let mut cfg = MachineConfig { state: m.initial, counters: [0, 0] };
    let mut configs = vec![cfg];
    let mut taken = Vec::new();
    let outcome = loop {
        if cfg.state == m.final_state {
            break MachineOutcome::Accepted;
        }
        if taken.len() == max_steps {
            break MachineOutcome::OutOfSteps;
        }
        let tuple = match m.code_of(cfg.state).expect("validated above") {
            StateCode::Halt => break MachineOutcome::Stuck,
            StateCode::Inc { tuple } => tuple,
            StateCode::Branch { zero, dec } => {
                if cfg.counters[m.tuples[zero].counter] == 0 {
                    zero
                } else {
                    dec
                }
            }
        };
        let t = m.tuples[tuple];
        match t.action {
            Action::Inc => cfg.counters[t.counter] += 1,
            Action::Dec => cfg.counters[t.counter] -= 1,
            Action::ZeroTest => {}
        }
        cfg.state = t.trg;
        taken.push(tuple);
        configs.push(cfg);
    };
    Ok(MachineRun { configs, taken, outcome })
}

// ---------------------------------------------------------------------
// Shared compilation machinery.

fn singular_rates(vals: &[i64]) -> Vec<Interval> {
    vals.iter().map(|v| Interval::singleton(*v)).collect()
}

fn eq0(v: VarId) -> Atom {
    Atom::cmp(v, Relation::Eq, 0)
}

fn ge0(v: VarId) -> Atom {
    Atom::cmp(v, Relation::Ge, 0)
}

/// Variable equality as a diagonal atom.
fn veq(a: VarId, b: VarId) -> Atom {
    Atom::Diag { x: a, y: b, rel: Relation::Eq, k: 0 }
}

/// Automaton under construction with name-addressed locations.
struct Build {
    h: Automaton,
    locs: BTreeMap<String, LocId>,
}

impl Build {
    fn new(name: &str, vars: &[String]) -> Build {
        let refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
        Build { h: Automaton::new(name, &refs), locs: BTreeMap::new() }
    }

    fn intern(&mut self, name: &str, rates: Vec<Interval>, inv: Guard) -> LocId {
        if let Some(l) = self.locs.get(name) {
            return *l;
        }
        let l = self.h.add_location(name, rates, inv);
        self.locs.insert(name.to_string(), l);
        l
    }
}

/// Picks a base so that no prefixed variable name collides with the names
/// already taken.
fn fresh_var_base(taken: &[String], want: &str, prefixes: &[&str]) -> String {
    let mut base = want.to_string();
    while prefixes.iter().any(|p| taken.contains(&format!("{p}{base}"))) {
        base.push('x');
    }
    base
}

fn find_edge(h: &Automaton, src: LocId, trg: LocId) -> Option<EdgeId> {
    h.edges.iter().position(|e| e.src == src && e.trg == trg).map(EdgeId)
}

// ---------------------------------------------------------------------
// The tick-driven encoding with negative rates.

// Variable layout: the clock pair first, then an (x, y) pair per counter.
const XT: VarId = VarId(0);
const YT: VarId = VarId(1);

fn xc(slot: usize) -> VarId {
    VarId(2 + 2 * slot)
}

fn yc(slot: usize) -> VarId {
    VarId(3 + 2 * slot)
}

/// Rate constant of the division gadget a tuple applies to its own
/// counter. A two-leg gadget with constant k divides the stored value by
/// k*k and takes value * (1/k + 1/k^2) time, so increments divide by 16
/// and zero-tests by 4, keeping pace with the tick spacing. A decrement
/// holds its counter variable frozen instead.
fn self_divisor(a: Action) -> Option<i64> {
    match a {
        Action::Inc => Some(4),
        Action::ZeroTest => Some(2),
        Action::Dec => None,
    }
}

fn wait_name(q: &str, tp: u8) -> String {
    format!("{q}:t{tp}")
}

fn gad_name(q: &str, j: usize, ph: [char; 2], tp: u8) -> String {
    format!("{q}@{j}:{}{}:t{tp}", ph[0], ph[1])
}

/// Whether a counter slot has finished its window work.
fn slot_settled(c: char) -> bool {
    c == 'd' || c == 'h'
}

/// Compiles a machine into a rectangular automaton with singular positive
/// and negative rates and purely rectangular constraints.
///
/// A clock gadget halves-then-halves a dedicated variable so that tick i
/// falls at time 1 - 1/4^i. Each instruction runs between two consecutive
/// ticks as a product of division gadgets over the counter variables, and
/// the zero branch of a test is feasible exactly when the tested variable
/// reaches zero together with the falling clock leg. The waiting locations
/// of the machine's final state are reachable within one time unit iff
/// the canonical simulation arrives there.
pub fn compile_negrates(m: &MinskyMachine) -> Result<Automaton, MachineError> {
    m.validate()?;
    let mut vars = vec!["x_t".to_string(), "y_t".to_string()];
    for c in &m.counters {
        let base = fresh_var_base(&vars, c, &["x_", "y_"]);
        vars.push(format!("x_{base}"));
        vars.push(format!("y_{base}"));
    }
    let mut b = Build::new("negrates", &vars);

    // Rates of one product location: the clock pair always runs its
    // two-leg division by four; a counter pair divides with its own
    // constant while active and freezes once settled.
    let rates = |ph: [char; 2], ks: [i64; 2], tp: u8| -> Vec<Interval> {
        let mut out = vec![0i64; 6];
        let (rxt, ryt) = if tp == 1 { (-2, 1) } else { (1, -2) };
        out[XT.0] = rxt;
        out[YT.0] = ryt;
        for s in 0..2 {
            let (rx, ry) = match ph[s] {
                '1' => (-ks[s], 1),
                '2' => (1, -ks[s]),
                _ => (0, 0),
            };
            out[xc(s).0] = rx;
            out[yc(s).0] = ry;
        }
        singular_rates(&out)
    };
    // Falling variables stay non-negative, which together with the
    // equality guards pins every crossing to its exact instant.
    let invariant = |ph: [char; 2], tp: u8| -> Guard {
        let mut atoms = vec![if tp == 1 { ge0(XT) } else { ge0(YT) }];
        for (s, c) in ph.iter().enumerate() {
            match c {
                '1' => atoms.push(ge0(xc(s))),
                '2' => atoms.push(ge0(yc(s))),
                _ => {}
            }
        }
        Guard::conj(atoms)
    };

    for q in &m.states {
        for tp in [1u8, 2] {
            b.intern(&wait_name(q, tp), rates(['d', 'd'], [2, 2], tp), invariant(['d', 'd'], tp));
        }
    }
    let boot = b.intern("@boot", singular_rates(&[0; 6]), Guard::True);
    b.h.init = boot;

    // Entering the first waiting location primes the clock and both
    // counter variables at one, the encoding of value zero at tick zero.
    let mut seed = Reset::identity(6);
    seed.set(XT, Interval::singleton(1));
    seed.set(xc(0), Interval::singleton(1));
    seed.set(xc(1), Interval::singleton(1));
    let first = b.locs[&wait_name(&m.states[m.initial], 2)];
    b.h.add_edge(boot, Guard::True, seed, first);

    for q in &m.states {
        let w1 = b.locs[&wait_name(q, 1)];
        let w2 = b.locs[&wait_name(q, 2)];
        b.h.add_edge(w1, Guard::conj(vec![eq0(XT)]), Reset::identity(6), w2);
    }

    for (j, t) in m.tuples.iter().enumerate() {
        let q = m.states[t.src].clone();
        let q2 = m.states[t.trg].clone();
        let me = t.counter;
        let other = 1 - me;
        let mut ks = [0i64; 2];
        ks[other] = 2;
        let my_phases: &[char] = match self_divisor(t.action) {
            Some(k) => {
                ks[me] = k;
                &['1', '2', 'd']
            }
            None => &['h'],
        };
        let other_phases: &[char] = &['1', '2', 'd'];

        // Product locations of this tuple's window. The corner where both
        // counters have settled is the target state's waiting location.
        let mut grid: Vec<[char; 2]> = Vec::new();
        for a in my_phases {
            for o in other_phases {
                let mut ph = ['h'; 2];
                ph[me] = *a;
                ph[other] = *o;
                if slot_settled(ph[0]) && slot_settled(ph[1]) {
                    continue;
                }
                grid.push(ph);
                for tp in [1u8, 2] {
                    b.intern(&gad_name(&q, j, ph, tp), rates(ph, ks, tp), invariant(ph, tp));
                }
            }
        }
        let loc_of = |b: &Build, ph: [char; 2], tp: u8| -> LocId {
            if slot_settled(ph[0]) && slot_settled(ph[1]) {
                b.locs[&wait_name(&q2, tp)]
            } else {
                b.locs[&gad_name(&q, j, ph, tp)]
            }
        };

        // The tick fires the instruction.
        let mut entry = ['h'; 2];
        entry[me] = my_phases[0];
        entry[other] = '1';
        let w2 = b.locs[&wait_name(&q, 2)];
        let entry_loc = loc_of(&b, entry, 1);
        b.h.add_edge(w2, Guard::conj(vec![eq0(YT)]), Reset::identity(6), entry_loc);

        for ph in grid {
            for tp in [1u8, 2] {
                let src = loc_of(&b, ph, tp);
                if tp == 1 {
                    let trg = loc_of(&b, ph, 2);
                    b.h.add_edge(src, Guard::conj(vec![eq0(XT)]), Reset::identity(6), trg);
                }
                for s in 0..2 {
                    match ph[s] {
                        '1' => {
                            let mut atoms = vec![eq0(xc(s))];
                            // The zero branch additionally demands the
                            // falling clock leg at zero, which coincides
                            // with the counter crossing exactly on value
                            // zero.
                            if s == me && t.action == Action::ZeroTest {
                                atoms.push(eq0(XT));
                            }
                            let mut next = ph;
                            next[s] = '2';
                            let trg = loc_of(&b, next, tp);
                            b.h.add_edge(src, Guard::conj(atoms), Reset::identity(6), trg);
                        }
                        '2' => {
                            let mut next = ph;
                            next[s] = 'd';
                            let trg = loc_of(&b, next, tp);
                            b.h.add_edge(
                                src,
                                Guard::conj(vec![eq0(yc(s))]),
                                Reset::identity(6),
                                trg,
                            );
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    debug_assert!(b.h.validate().is_ok());
    Ok(b.h)
}

/// The waiting locations of the machine's final state.
pub fn negrates_goal(m: &MinskyMachine, h: &Automaton) -> Result<Vec<LocId>, ModelError> {
    let q = &m.states[m.final_state];
    Ok(vec![
        h.loc_index(&wait_name(q, 1))?,
        h.loc_index(&wait_name(q, 2))?,
    ])
}

// ---------------------------------------------------------------------
// The fixed-rate encoding with diagonal guards.

/// Variable offsets of one auxiliary-counter quadruple. Rates are the
/// same in every location: x and y run at one, z at two, w at three.
fn qx(g: usize) -> VarId {
    VarId(4 * g)
}

fn qy(g: usize) -> VarId {
    VarId(4 * g + 1)
}

fn qz(g: usize) -> VarId {
    VarId(4 * g + 2)
}

fn qw(g: usize) -> VarId {
    VarId(4 * g + 3)
}

/// The auxiliary counter a tuple raises: increments raise the counter's
/// top half and decrements its bottom half, so the machine value is
/// always top minus bottom and both halves only ever grow.
fn gamma_star(t: &Tuple) -> usize {
    2 * t.counter + usize::from(t.action == Action::Inc)
}

fn boot_name(k: Option<u32>) -> String {
    match k {
        Some(k) => format!("@init{k}"),
        None => "@init".to_string(),
    }
}

fn boot_grid_name(k: Option<u32>, ph: [char; 4]) -> String {
    let tag = match k {
        Some(k) => format!("{k}"),
        None => String::new(),
    };
    format!("@init{tag}:{}{}{}{}", ph[0], ph[1], ph[2], ph[3])
}

fn step_grid_name(q: &str, j: usize, ph: [char; 4]) -> String {
    format!("{q}@{j}:{}{}{}{}", ph[0], ph[1], ph[2], ph[3])
}

fn reset_of(vars: &[VarId]) -> Reset {
    Reset::to_zero(16, vars)
}

/// Every combination of per-position phase characters.
fn cartesian(choices: [&[char]; 4]) -> Vec<[char; 4]> {
    let mut out = Vec::new();
    for a in choices[0] {
        for b in choices[1] {
            for c in choices[2] {
                for d in choices[3] {
                    out.push([*a, *b, *c, *d]);
                }
            }
        }
    }
    out
}

/// The move an auxiliary quadruple makes out of phase `c`, if any: the
/// diagonal guard it fires on, the variables it resets, and the phase it
/// enters.
///
/// From the boundary shape (u, 0, 0, 0) the maintenance loop `b -> m -> b`
/// waits for x = z and then y = z, restoring the shape exactly in time
/// 2u. A halving round `r -> i -> p` waits for x = w and then y = z,
/// reaching (u/2, 0, 0, 0) in time u; afterwards `p <-> n` maintains the
/// halved value.
fn pair_move(g: usize, c: char) -> Option<(Atom, Reset, char)> {
    match c {
        'b' => Some((veq(qx(g), qz(g)), reset_of(&[qx(g), qz(g)]), 'm')),
        'm' => Some((veq(qy(g), qz(g)), reset_of(&[qy(g), qz(g), qw(g)]), 'b')),
        'r' => Some((veq(qx(g), qw(g)), reset_of(&[qx(g), qz(g), qw(g)]), 'i')),
        'i' => Some((veq(qy(g), qz(g)), reset_of(&[qy(g), qz(g), qw(g)]), 'p')),
        'p' => Some((veq(qx(g), qz(g)), reset_of(&[qx(g), qz(g)]), 'n')),
        'n' => Some((veq(qy(g), qz(g)), reset_of(&[qy(g), qz(g), qw(g)]), 'p')),
        _ => None,
    }
}

/// Compiles a machine into an automaton whose sixteen variables all keep
/// one fixed, strictly positive, singular rate, with diagonal equality
/// guards doing the counting.
///
/// Each machine counter is split over two auxiliary counters that only
/// ever grow; an auxiliary value v is stored as the pair difference
/// x - y = 1/2^v. `init_rounds` picks the initialization: `Some(p)`
/// unrolls p lock-step halving rounds that raise all four auxiliaries to
/// p, `None` emits a self-looped round that raises them an arbitrary
/// number of times.
pub fn compile_diagonal(
    m: &MinskyMachine,
    init_rounds: Option<u32>,
) -> Result<Automaton, MachineError> {
    m.validate()?;
    let mut vars: Vec<String> = Vec::new();
    for c in &m.counters {
        for half in ["b", "t"] {
            let base = fresh_var_base(&vars, &format!("{c}{half}"), &["x_", "y_", "z_", "w_"]);
            for p in ["x_", "y_", "z_", "w_"] {
                vars.push(format!("{p}{base}"));
            }
        }
    }
    let mut b = Build::new("diagonal", &vars);
    let rate_vec: Vec<i64> = (0..4).flat_map(|_| [1i64, 1, 2, 3]).collect();
    let mk = |b: &mut Build, name: &str| -> LocId {
        let r = singular_rates(&rate_vec);
        b.intern(name, r, Guard::True)
    };

    let seed_loc = mk(&mut b, "@seed");
    b.h.init = seed_loc;

    let (first_boundary, last_boundary) = match init_rounds {
        Some(p) => {
            for k in 0..=p {
                mk(&mut b, &boot_name(Some(k)));
            }
            (boot_name(Some(0)), boot_name(Some(p)))
        }
        None => {
            mk(&mut b, &boot_name(None));
            (boot_name(None), boot_name(None))
        }
    };

    // The seed edge plants the boundary shape (1, 0, 0, 0) in all four
    // quadruples, the encoding of auxiliary value zero.
    let mut seed = Reset::identity(16);
    for g in 0..4 {
        seed.set(qx(g), Interval::singleton(1));
        for v in [qy(g), qz(g), qw(g)] {
            seed.set(v, Interval::singleton(0));
        }
    }
    let first = b.locs[&first_boundary];
    b.h.add_edge(seed_loc, Guard::True, seed, first);

    // Initialization rounds halve all four quadruples in lock step. The
    // all-settled corner of a round's product grid is the next boundary,
    // which for the self-loop form is the single boundary itself.
    let boot_rounds: Vec<(Option<u32>, String, String)> = match init_rounds {
        Some(p) => (0..p)
            .map(|k| (Some(k), boot_name(Some(k)), boot_name(Some(k + 1))))
            .collect(),
        None => vec![(None, boot_name(None), boot_name(None))],
    };
    let boot_phases: &[char] = &['r', 'i', 'd'];
    for (tag, from, to) in boot_rounds {
        for ph in cartesian([boot_phases; 4]) {
            if ph != ['r'; 4] && ph != ['d'; 4] {
                mk(&mut b, &boot_grid_name(tag, ph));
            }
        }
        let loc_of = |b: &Build, ph: [char; 4]| -> LocId {
            if ph == ['r'; 4] {
                b.locs[&from]
            } else if ph == ['d'; 4] {
                b.locs[&to]
            } else {
                b.locs[&boot_grid_name(tag, ph)]
            }
        };
        for ph in cartesian([boot_phases; 4]) {
            let src = loc_of(&b, ph);
            for g in 0..4 {
                let mv = match ph[g] {
                    'r' => Some((veq(qx(g), qw(g)), reset_of(&[qx(g), qz(g), qw(g)]), 'i')),
                    'i' => Some((veq(qy(g), qz(g)), reset_of(&[qy(g), qz(g), qw(g)]), 'd')),
                    _ => None,
                };
                if let Some((guard, reset, to_ph)) = mv {
                    let mut next = ph;
                    next[g] = to_ph;
                    let trg = loc_of(&b, next);
                    b.h.add_edge(src, Guard::conj(vec![guard]), reset, trg);
                }
            }
        }
    }

    for q in &m.states {
        mk(&mut b, q);
    }
    let lb = b.locs[&last_boundary];
    let qi = b.locs[&m.states[m.initial]];
    b.h.add_edge(lb, Guard::True, Reset::identity(16), qi);

    for (j, t) in m.tuples.iter().enumerate() {
        let q = m.states[t.src].clone();
        let lq = b.locs[&q];
        let lq2 = b.locs[&m.states[t.trg]];
        if t.action == Action::ZeroTest {
            let bot = 2 * t.counter;
            let top = bot + 1;
            // At a boundary both pair differences sit in their x
            // components, so equality of the halves is the zero test.
            b.h.add_edge(
                lq,
                Guard::conj(vec![veq(qx(bot), qx(top))]),
                Reset::identity(16),
                lq2,
            );
            continue;
        }
        let star = gamma_star(t);
        let passive: &[char] = &['b', 'm'];
        let active: &[char] = &['r', 'i', 'p', 'n'];
        let mut choices: [&[char]; 4] = [passive; 4];
        choices[star] = active;
        let entry = {
            let mut e = ['b'; 4];
            e[star] = 'r';
            e
        };
        let advance = {
            let mut a = ['b'; 4];
            a[star] = 'p';
            a
        };
        for ph in cartesian(choices) {
            if ph != entry {
                mk(&mut b, &step_grid_name(&q, j, ph));
            }
        }
        let loc_of = |b: &Build, ph: [char; 4]| -> LocId {
            if ph == entry {
                lq
            } else {
                b.locs[&step_grid_name(&q, j, ph)]
            }
        };
        for ph in cartesian(choices) {
            let src = loc_of(&b, ph);
            for g in 0..4 {
                if let Some((guard, reset, to_ph)) = pair_move(g, ph[g]) {
                    let mut next = ph;
                    next[g] = to_ph;
                    let trg = loc_of(&b, next);
                    b.h.add_edge(src, Guard::conj(vec![guard]), reset, trg);
                }
            }
        }
        // The step may only end on a synchronized boundary: every y is
        // zero exactly when its quadruple completed a round this instant,
        // so the gate refuses both early exits and quadruples that missed
        // a crossing and can no longer move.
        let gate = Guard::conj((0..4).map(|g| eq0(qy(g))).collect());
        let adv = loc_of(&b, advance);
        b.h.add_edge(adv, gate, Reset::identity(16), lq2);
    }
    debug_assert!(b.h.validate().is_ok());
    Ok(b.h)
}

/// The location of the machine's final state.
pub fn diagonal_goal(m: &MinskyMachine, h: &Automaton) -> Result<Vec<LocId>, ModelError> {
    Ok(vec![h.loc_index(&m.states[m.final_state])?])
}

// ---------------------------------------------------------------------
// Co-simulation.

/// One exact comparison between a value the encoding promises and the
/// value the replayed run produced. The `counter` column names a machine
/// counter, an auxiliary counter half, or `@time` for the boundary
/// instant itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingCheck {
    pub step: usize,
    pub counter: String,
    pub expected: Q,
    pub observed: Q,
    pub pass: bool,
}

impl EncodingCheck {
    fn row(step: usize, counter: String, expected: Q, observed: Q) -> EncodingCheck {
        let pass = expected == observed;
        EncodingCheck { step, counter, expected, observed, pass }
    }
}

/// Which gadget a [`RoundLog`] row measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundKind {
    /// A two-leg division gadget with rate constant `k`, dividing by k*k.
    Division { k: i64 },
    /// A halving round of an auxiliary quadruple.
    Increment,
    /// A maintenance round of an auxiliary quadruple.
    Maintain,
}

/// Exact measurements of one gadget round, taken from the replayed run.
/// `before` and `after` hold the tracked value, which is the divided
/// variable for divisions and the pair difference for rounds; `restored`
/// records that the round left its helper variables at zero, or for
/// maintenance the whole quadruple exactly where it started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundLog {
    pub step: usize,
    pub counter: String,
    pub kind: RoundKind,
    pub duration: Q,
    pub before: Q,
    pub after: Q,
    pub restored: bool,
}

/// The result of driving a compiled automaton along the canonical run of
/// its machine.
#[derive(Debug, Clone)]
pub struct Cosim {
    pub checks: Vec<EncodingCheck>,
    pub rounds: Vec<RoundLog>,
    pub machine: MachineRun,
    pub run: Run,
    pub reached_goal: bool,
}

impl Cosim {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn duration(&self) -> Q {
        self.run.duration()
    }
}

/// Why a co-simulation could not be carried out. Value disagreements are
/// not errors; they surface as failed [`EncodingCheck`] rows.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CosimError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no location named {0:?}; the automaton does not match this encoding")]
    MissingLocation(String),
    #[error("no edge from {src:?} to {trg:?}")]
    MissingEdge { src: String, trg: String },
    #[error("the canonical run was refused at machine step {step}: {detail}")]
    Rejected { step: usize, detail: String },
}

/// Canonical-path builder: tracks the current location by name, converts
/// absolute event times to delays, and resolves edges by endpoint names.
struct Driver<'a> {
    h: &'a Automaton,
    here: String,
    now: Q,
    pairs: Vec<(Q, EdgeId)>,
    // Machine step each path index belongs to, for error attribution.
    step_of: Vec<usize>,
    step: usize,
}

impl<'a> Driver<'a> {
    fn new(h: &'a Automaton, start: &str) -> Driver<'a> {
        Driver {
            h,
            here: start.to_string(),
            now: Q::zero(),
            pairs: Vec::new(),
            step_of: Vec::new(),
            step: 0,
        }
    }

    fn loc(&self, name: &str) -> Result<LocId, CosimError> {
        self.h
            .loc_index(name)
            .map_err(|_| CosimError::MissingLocation(name.to_string()))
    }

    /// Crosses to `trg` at absolute time `at`, returning the path index.
    fn hop(&mut self, at: Q, trg: &str) -> Result<usize, CosimError> {
        let src = self.loc(&self.here)?;
        let dst = self.loc(trg)?;
        let edge = find_edge(self.h, src, dst).ok_or_else(|| CosimError::MissingEdge {
            src: self.here.clone(),
            trg: trg.to_string(),
        })?;
        let delay = &at - &self.now;
        debug_assert!(!delay.is_negative(), "events must be scheduled forward");
        self.pairs.push((delay, edge));
        self.step_of.push(self.step);
        self.now = at;
        self.here = trg.to_string();
        Ok(self.pairs.len() - 1)
    }

    /// Replays the collected schedule, returning the accepted run and the
    /// elapsed time after each step.
    fn replay(self) -> Result<(Run, Vec<Q>), CosimError> {
        let path = TimedPath::singular(self.h, &self.pairs)?;
        let init = State::zeroed(self.h, self.h.init);
        let run = run_of(self.h, init, path).map_err(|e| match e {
            RunError::Rejected(r) => CosimError::Rejected {
                step: self.step_of.get(r.step).copied().unwrap_or(0),
                detail: describe_rejection(self.h, &r),
            },
            RunError::Model(m) => CosimError::Model(m),
            RunError::StateMismatch { step } => CosimError::Rejected {
                step: self.step_of.get(step).copied().unwrap_or(0),
                detail: "replayed state mismatch".to_string(),
            },
        })?;
        let mut elapsed = Vec::with_capacity(run.path.len());
        let mut acc = Q::zero();
        for s in &run.path.steps {
            acc = &acc + &s.delay;
            elapsed.push(acc.clone());
        }
        Ok((run, elapsed))
    }
}

fn pow_of(base: Q, n: u64) -> Q {
    // Exponents beyond i32 would need runs of astronomical length.
    base.pow(i32::try_from(n).expect("exponent fits in i32"))
}

/// 1/4^n.
fn quarter(n: u64) -> Q {
    pow_of(Q::ratio(1, 4), n)
}

/// 1/2^n.
fn half(n: u64) -> Q {
    pow_of(Q::ratio(1, 2), n)
}

/// Drives the tick-driven compilation along the canonical run of `m` for
/// at most `n_steps` machine steps and replays it through the semantics.
///
/// Check rows compare, at every tick, the elapsed time against 1 - 1/4^i
/// and each counter variable against 1/4^(i+v); a final row block checks
/// the counters once more after the last driven step. Round rows measure
/// every division gadget the run passes through.
pub fn cosimulate_negrates(
    m: &MinskyMachine,
    h: &Automaton,
    n_steps: usize,
) -> Result<Cosim, CosimError> {
    let mr = run_machine(m, n_steps)?;
    let mut d = Driver::new(h, "@boot");
    let boot_idx = d.hop(Q::zero(), &wait_name(&m.states[m.initial], 2))?;

    // Path indices of each tick's landing, of the final landing, and of
    // every division gadget's entry and exit.
    let mut tick_idx: Vec<usize> = vec![boot_idx];
    let mut final_idx: Option<usize> = None;
    let mut division_marks: Vec<(usize, usize, i64, usize, usize)> = Vec::new();

    for (i, tuple_idx) in mr.taken.iter().enumerate() {
        d.step = i;
        let t = m.tuples[*tuple_idx];
        let q = m.states[t.src].clone();
        let q2 = m.states[t.trg].clone();
        let iu = i as u64;
        let ti = Q::one() - quarter(iu);
        let me = t.counter;
        let other = 1 - me;
        let a = quarter(iu + mr.configs[i].counters[me]);
        let bv = quarter(iu + mr.configs[i].counters[other]);
        let last_step = i + 1 == mr.taken.len();

        let name = |ph: [char; 2], tp: u8| -> String {
            if slot_settled(ph[0]) && slot_settled(ph[1]) {
                wait_name(&q2, tp)
            } else {
                gad_name(&q, *tuple_idx, ph, tp)
            }
        };
        let mut ph = ['h'; 2];
        if self_divisor(t.action).is_some() {
            ph[me] = '1';
        }
        ph[other] = '1';
        let mut tp = 1u8;
        let entry_idx = d.hop(ti.clone(), &name(ph, tp))?;
        if i > 0 {
            tick_idx.push(entry_idx);
        }

        // Window events at their offsets from the tick: each active slot
        // crosses mid-gadget at value/k and exits at value*(1/k + 1/k^2),
        // and the clock's falling leg ends halfway through the window.
        enum Mv {
            Mid(usize),
            Exit(usize),
            TickMid,
        }
        let mut events: Vec<(Q, u8, Mv)> = Vec::new();
        if let Some(k) = self_divisor(t.action) {
            let kq = Q::int(k);
            events.push((&a / &kq, me as u8, Mv::Mid(me)));
            events.push((&a / &kq + &a / &(&kq * &kq), me as u8, Mv::Exit(me)));
        }
        events.push((&bv / &Q::int(2), other as u8, Mv::Mid(other)));
        events.push((&bv * &Q::ratio(3, 4), other as u8, Mv::Exit(other)));
        events.push((quarter(iu) / Q::int(2), 2, Mv::TickMid));
        events.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));

        let mut exit_at = [usize::MAX; 2];
        for (at, _, mv) in events {
            match mv {
                Mv::Mid(s) => ph[s] = '2',
                Mv::Exit(s) => ph[s] = 'd',
                Mv::TickMid => tp = 2,
            }
            let idx = d.hop(&ti + &at, &name(ph, tp))?;
            if let Mv::Exit(s) = mv {
                exit_at[s] = idx;
            }
            if last_step && slot_settled(ph[0]) && slot_settled(ph[1]) {
                // Landed in the target's waiting location; the window's
                // trailing clock legs are not part of the driven run.
                break;
            }
        }
        if let Some(k) = self_divisor(t.action) {
            division_marks.push((i, me, k, entry_idx, exit_at[me]));
        }
        division_marks.push((i, other, 2, entry_idx, exit_at[other]));
        if last_step {
            final_idx = Some(d.pairs.len() - 1);
        }
    }

    let (run, elapsed) = d.replay()?;
    let value_at = |idx: usize, slot: usize| -> Q { run.states[idx].vals[xc(slot).0].clone() };

    let mut checks = Vec::new();
    for (i, idx) in tick_idx.iter().enumerate() {
        let iu = i as u64;
        checks.push(EncodingCheck::row(
            i,
            "@time".to_string(),
            Q::one() - quarter(iu),
            elapsed[*idx].clone(),
        ));
        for s in 0..2 {
            checks.push(EncodingCheck::row(
                i,
                m.counters[s].clone(),
                quarter(iu + mr.configs[i].counters[s]),
                value_at(*idx, s),
            ));
        }
    }
    if let Some(idx) = final_idx {
        let n = mr.taken.len();
        for s in 0..2 {
            checks.push(EncodingCheck::row(
                n,
                m.counters[s].clone(),
                quarter(n as u64 + mr.configs[n].counters[s]),
                value_at(idx, s),
            ));
        }
    }

    let mut rounds = Vec::new();
    for (step, slot, k, entry, exit) in division_marks {
        rounds.push(RoundLog {
            step,
            counter: m.counters[slot].clone(),
            kind: RoundKind::Division { k },
            duration: &elapsed[exit] - &elapsed[entry],
            before: value_at(entry, slot),
            after: value_at(exit, slot),
            restored: run.states[exit].vals[yc(slot).0].is_zero(),
        });
    }

    let goal = negrates_goal(m, h)?;
    let reached_goal = goal.contains(&run.final_state().loc);
    Ok(Cosim { checks, rounds, machine: mr, run, reached_goal })
}

/// Drives the fixed-rate compilation along the canonical run of `m`,
/// taking `init_rounds` initialization rounds first, and replays it
/// through the semantics.
///
/// For an automaton compiled with unrolled initialization, `init_rounds`
/// must match the compiled count; the self-loop form accepts any count.
/// Check rows compare, at every step boundary, the elapsed time and each
/// auxiliary pair difference against 1/2^v. Round rows measure every
/// halving and maintenance round.
pub fn cosimulate_diagonal(
    m: &MinskyMachine,
    h: &Automaton,
    init_rounds: u32,
    n_steps: usize,
) -> Result<Cosim, CosimError> {
    let mr = run_machine(m, n_steps)?;
    let unrolled = h.loc_index(&boot_name(Some(0))).is_ok();
    let tag = |k: u32| -> Option<u32> { if unrolled { Some(k) } else { None } };
    let mut d = Driver::new(h, "@seed");
    let aux_name = |g: usize| -> String {
        format!("{}_{}", m.counters[g / 2], if g.is_multiple_of(2) { "bot" } else { "top" })
    };

    // Auxiliary counter values, expected boundary clock, and the marks
    // into the path that the check and round rows are built from.
    let mut v = [0u64; 4];
    let mut exp_time = Q::zero();
    let mut boundary_marks: Vec<(usize, usize, Q, [u64; 4])> = Vec::new();
    let mut round_marks: Vec<(usize, usize, RoundKind, usize, usize)> = Vec::new();

    let mut prev_idx = d.hop(Q::zero(), &boot_name(tag(0)))?;
    for k in 0..init_rounds {
        let u = half(k as u64);
        let next_boundary = if unrolled { boot_name(Some(k + 1)) } else { boot_name(None) };
        let name = |ph: [char; 4]| -> String {
            if ph == ['d'; 4] {
                next_boundary.clone()
            } else {
                boot_grid_name(tag(k), ph)
            }
        };
        let base = d.now.clone();
        let start_idx = prev_idx;
        let mut ph = ['r'; 4];
        for g in 0..4 {
            ph[g] = 'i';
            d.hop(&base + &(&u / &Q::int(2)), &name(ph))?;
        }
        for g in 0..4 {
            ph[g] = 'd';
            let idx = d.hop(&base + &u, &name(ph))?;
            round_marks.push((0, g, RoundKind::Increment, start_idx, idx));
            prev_idx = idx;
        }
        for val in v.iter_mut() {
            *val += 1;
        }
        exp_time = &exp_time + &u;
    }
    let boundary0 = d.hop(d.now.clone(), &m.states[m.initial])?;
    boundary_marks.push((0, boundary0, exp_time.clone(), v));
    let mut step_start_idx = boundary0;

    for (i, tuple_idx) in mr.taken.iter().enumerate() {
        d.step = i;
        let t = m.tuples[*tuple_idx];
        let q = m.states[t.src].clone();
        let q2 = m.states[t.trg].clone();
        if t.action == Action::ZeroTest {
            let idx = d.hop(d.now.clone(), &q2)?;
            boundary_marks.push((i + 1, idx, exp_time.clone(), v));
            step_start_idx = idx;
            continue;
        }
        let star = gamma_star(&t);
        let entry = {
            let mut e = ['b'; 4];
            e[star] = 'r';
            e
        };
        let name = |ph: [char; 4]| -> String {
            if ph == entry {
                q.clone()
            } else {
                step_grid_name(&q, *tuple_idx, ph)
            }
        };

        // The step lasts as long as the slowest single round, so every
        // pair tiles it exactly: the raised pair with its halving round
        // and then maintenance of the halved value, the rest with plain
        // maintenance.
        let dur = Q::int(2) * half(v[0].min(v[2]));
        struct Ev {
            at: Q,
            g: usize,
            to: char,
        }
        let mut events: Vec<Ev> = Vec::new();
        for (g, &vg) in v.iter().enumerate() {
            let u = half(vg);
            if g == star {
                events.push(Ev { at: &u / &Q::int(2), g, to: 'i' });
                events.push(Ev { at: u.clone(), g, to: 'p' });
                let u2 = &u / &Q::int(2);
                let mut o = u.clone();
                while o < dur {
                    events.push(Ev { at: &o + &u2, g, to: 'n' });
                    o = &o + &u;
                    events.push(Ev { at: o.clone(), g, to: 'p' });
                }
                debug_assert_eq!(o, dur, "halving plus maintenance tiles the step");
            } else {
                let two_u = &u * &Q::int(2);
                let mut o = Q::zero();
                while o < dur {
                    events.push(Ev { at: &o + &u, g, to: 'm' });
                    o = &o + &two_u;
                    events.push(Ev { at: o.clone(), g, to: 'b' });
                }
                debug_assert_eq!(o, dur, "maintenance rounds tile the step");
            }
        }
        events.sort_by(|x, y| x.at.cmp(&y.at).then(x.g.cmp(&y.g)));

        let base = d.now.clone();
        let mut ph = entry;
        let mut last_boundary_idx = [step_start_idx; 4];
        for ev in events {
            let from = ph[ev.g];
            ph[ev.g] = ev.to;
            let idx = d.hop(&base + &ev.at, &name(ph))?;
            let round_end = matches!((from, ev.to), ('i', 'p') | ('n', 'p') | ('m', 'b'));
            if round_end {
                let kind = if from == 'i' { RoundKind::Increment } else { RoundKind::Maintain };
                round_marks.push((i, ev.g, kind, last_boundary_idx[ev.g], idx));
                last_boundary_idx[ev.g] = idx;
            }
        }
        let idx = d.hop(&base + &dur, &q2)?;
        v[star] += 1;
        exp_time = &exp_time + &dur;
        boundary_marks.push((i + 1, idx, exp_time.clone(), v));
        step_start_idx = idx;
    }

    let (run, elapsed) = d.replay()?;
    let diff = |idx: usize, g: usize| -> Q {
        (&run.states[idx].vals[qx(g).0] - &run.states[idx].vals[qy(g).0]).abs()
    };

    let mut checks = Vec::new();
    for (step, idx, time, vals) in &boundary_marks {
        checks.push(EncodingCheck::row(
            *step,
            "@time".to_string(),
            time.clone(),
            elapsed[*idx].clone(),
        ));
        for (g, &vg) in vals.iter().enumerate() {
            checks.push(EncodingCheck::row(*step, aux_name(g), half(vg), diff(*idx, g)));
        }
    }

    let mut rounds = Vec::new();
    for (step, g, kind, start, end) in round_marks {
        let quad = |idx: usize| -> [Q; 4] {
            let s = &run.states[idx];
            [
                s.vals[qx(g).0].clone(),
                s.vals[qy(g).0].clone(),
                s.vals[qz(g).0].clone(),
                s.vals[qw(g).0].clone(),
            ]
        };
        let restored = match kind {
            RoundKind::Maintain => quad(start) == quad(end),
            // A halving round leaves the three helpers at zero.
            _ => quad(end)[1..].iter().all(|x| x.is_zero()),
        };
        rounds.push(RoundLog {
            step,
            counter: aux_name(g),
            kind,
            duration: &elapsed[end] - &elapsed[start],
            before: diff(start, g),
            after: diff(end, g),
            restored,
        });
    }

    let reached_goal = mr.outcome == MachineOutcome::Accepted
        && run.final_state().loc == h.loc_index(&m.states[m.final_state])?;
    Ok(Cosim { checks, rounds, machine: mr, run, reached_goal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{RejectReason, TimedStep};

    const LOOPER: &str = "\
# runs forever, touching every instruction kind
q0: inc c -> q1
q1: ifz c -> q2 else dec -> q1
q2: inc d -> q0
final qf
";

    const ACCEPTOR: &str = "\
q0: inc c -> q1
q1: ifz d -> q2 else dec -> q0
q2: inc d -> q3
";

    fn machine(src: &str) -> MinskyMachine {
        parse_machine(src).expect("machine parses")
    }

    #[test]
    fn machine_format_round_trips() {
        let m = machine(LOOPER);
        let again = machine(&m.to_string());
        assert_eq!(m, again);
        let m = machine(ACCEPTOR);
        assert_eq!(m, machine(&m.to_string()));
    }

    #[test]
    fn endpoints_inferred_and_overridable() {
        let m = machine(ACCEPTOR);
        assert_eq!(m.states[m.initial], "q0");
        assert_eq!(m.states[m.final_state], "q3");
        let m = machine("init b\nfinal a\nb: inc c -> a\na: inc c -> b\n");
        assert_eq!(m.states[m.initial], "b");
        assert_eq!(m.states[m.final_state], "a");
    }

    #[test]
    fn parse_errors_name_their_line() {
        let err = parse_machine("q0: inc c -> q1\n\nq1: bump c -> q2\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = parse_machine("q0: inc c -> q1\nq0: inc c -> q2\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("already"));
        let err = parse_machine("q0: inc a -> q1\nq1: inc b -> q2\nq2: inc e -> q3\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("two counters"));
        // Two instruction-less states and no directive is ambiguous.
        let err = parse_machine("q0: ifz c -> qa else dec -> qb\n").unwrap_err();
        assert_eq!(err.line, 0);
    }

    #[test]
    fn interpreter_follows_branches_on_zero() {
        let run = run_machine(&machine(ACCEPTOR), 100).unwrap();
        assert_eq!(run.outcome, MachineOutcome::Accepted);
        // inc c, zero branch on d, inc d.
        assert_eq!(run.len(), 3);
        assert_eq!(run.final_config().counters, [1, 1]);

        let run = run_machine(&machine(LOOPER), 9).unwrap();
        assert_eq!(run.outcome, MachineOutcome::OutOfSteps);
        assert_eq!(run.len(), 9);
        // Period four: inc c, dec c, zero branch, inc d.
        assert_eq!(run.configs[4].counters, [0, 1]);
        assert_eq!(run.configs[8].counters, [0, 2]);

        let stuck = machine("q0: inc c -> q1\nq1: ifz c -> q2 else dec -> qs\nq2: inc c -> q2\nfinal q2\n");
        let run = run_machine(&stuck, 100).unwrap();
        assert_eq!(run.outcome, MachineOutcome::Stuck);
        assert_eq!(run.final_config().counters, [0, 0]);
    }

    #[test]
    fn tick_encoding_holds_for_nine_steps() {
        let m = machine(LOOPER);
        let h = compile_negrates(&m).unwrap();
        let sim = cosimulate_negrates(&m, &h, 9).unwrap();
        assert!(sim.all_pass(), "failed: {:?}", sim.checks.iter().find(|c| !c.pass));
        let ticks: Vec<&EncodingCheck> =
            sim.checks.iter().filter(|c| c.counter == "@time").collect();
        assert_eq!(ticks.len(), 9);
        assert_eq!(ticks[1].expected, Q::ratio(3, 4));
        assert_eq!(ticks[2].expected, Q::ratio(15, 16));
        // Final counter rows once more after the last step.
        assert_eq!(sim.checks.len(), 9 * 3 + 2);
    }

    #[test]
    fn division_rounds_divide_by_k_squared() {
        let m = machine(LOOPER);
        let h = compile_negrates(&m).unwrap();
        let sim = cosimulate_negrates(&m, &h, 8).unwrap();
        assert!(!sim.rounds.is_empty());
        let mut seen = [false, false];
        for r in &sim.rounds {
            let RoundKind::Division { k } = r.kind else {
                panic!("only division rounds here")
            };
            assert!(k == 2 || k == 4);
            seen[(k == 4) as usize] = true;
            assert_eq!(r.after, &r.before / &Q::int(k * k));
            let legs = Q::ratio(1, k) + Q::ratio(1, k * k);
            assert_eq!(r.duration, &r.before * &legs);
            assert!(r.restored);
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn accepting_machines_arrive_inside_the_time_unit() {
        let m = machine(ACCEPTOR);
        let h = compile_negrates(&m).unwrap();
        let sim = cosimulate_negrates(&m, &h, 50).unwrap();
        assert!(sim.reached_goal);
        assert!(sim.duration() < Q::one());
        assert!(sim.all_pass());

        let stuck = machine("q0: inc c -> q1\nq1: ifz c -> q2 else dec -> qs\nq2: inc c -> q2\nfinal q2\n");
        let h = compile_negrates(&stuck).unwrap();
        let sim = cosimulate_negrates(&stuck, &h, 50).unwrap();
        assert!(!sim.reached_goal);
        assert!(sim.all_pass());
    }

    #[test]
    fn zero_branch_needs_clock_agreement() {
        // After one increment the counter holds 1, so the zero branch's
        // mid-gadget crossing misses the clock leg by 3/16 and must be
        // refused on replay.
        let m = machine("q0: inc c -> q1\nq1: ifz c -> qz else dec -> qd\nfinal qz\n");
        let h = compile_negrates(&m).unwrap();
        let hops: Vec<(&str, Q)> = vec![
            ("q0:t2", Q::zero()),
            ("q0@0:11:t1", Q::zero()),
            ("q0@0:21:t1", Q::ratio(1, 4)),
            ("q0@0:d1:t1", Q::ratio(5, 16)),
            ("q0@0:d2:t1", Q::ratio(1, 2)),
            ("q0@0:d2:t2", Q::ratio(1, 2)),
            ("q1:t2", Q::ratio(3, 4)),
            ("q1@1:11:t1", Q::ratio(3, 4)),
            ("q1@1:21:t1", Q::ratio(3, 4) + Q::ratio(1, 32)),
        ];
        let mut here = h.loc_index("@boot").unwrap();
        let mut now = Q::zero();
        let mut pairs = Vec::new();
        for (name, at) in hops {
            let trg = h.loc_index(name).unwrap();
            let e = find_edge(&h, here, trg).expect("edge exists");
            pairs.push((&at - &now, e));
            here = trg;
            now = at;
        }
        let path = TimedPath::singular(&h, &pairs).unwrap();
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        match err {
            RunError::Rejected(r) => {
                assert_eq!(r.step, 8);
                assert!(matches!(r.reason, RejectReason::GuardViolated { .. }));
            }
            other => panic!("expected a guard refusal, got {other:?}"),
        }
    }

    #[test]
    fn negrates_class_profile() {
        let h = compile_negrates(&machine(LOOPER)).unwrap();
        let c = h.classify();
        assert!(c.rectangular);
        assert!(c.singular);
        assert!(c.deterministic_resets);
        assert!(!c.non_negative_rates);
        assert!(h.edges.iter().all(|e| !e.guard.has_diagonal()));
        assert!(h.locations.iter().all(|l| !l.invariant.has_diagonal()));
    }

    #[test]
    fn halving_rounds_halve_and_maintenance_restores() {
        let m = machine(LOOPER);
        let h = compile_diagonal(&m, Some(3)).unwrap();
        let sim = cosimulate_diagonal(&m, &h, 3, 6).unwrap();
        assert!(sim.all_pass(), "failed: {:?}", sim.checks.iter().find(|c| !c.pass));
        let mut kinds = (0, 0);
        for r in &sim.rounds {
            match r.kind {
                RoundKind::Increment => {
                    kinds.0 += 1;
                    assert_eq!(r.after, &r.before / &Q::int(2));
                    assert_eq!(r.duration, r.before);
                }
                RoundKind::Maintain => {
                    kinds.1 += 1;
                    assert_eq!(r.after, r.before);
                    assert_eq!(r.duration, &r.before * &Q::int(2));
                }
                RoundKind::Division { .. } => panic!("no division gadgets here"),
            }
            assert!(r.restored);
        }
        assert!(kinds.0 > 0 && kinds.1 > 0);
    }

    #[test]
    fn accepting_runs_fit_in_three_time_units() {
        // Two machine steps, so two initialization rounds suffice.
        let m = machine("q0: inc c -> q1\nq1: ifz d -> qf else dec -> q0\n");
        let h = compile_diagonal(&m, Some(2)).unwrap();
        let sim = cosimulate_diagonal(&m, &h, 2, 10).unwrap();
        assert!(sim.reached_goal);
        assert!(sim.all_pass());
        assert!(sim.duration() <= Q::int(3));
        assert_eq!(sim.duration(), Q::int(2));

        // The self-loop form admits the same canonical run.
        let h = compile_diagonal(&m, None).unwrap();
        let sim = cosimulate_diagonal(&m, &h, 2, 10).unwrap();
        assert!(sim.reached_goal);
        assert!(sim.all_pass());
        assert_eq!(sim.duration(), Q::int(2));
    }

    #[test]
    fn stale_zero_test_is_refused() {
        // One increment raises c_top to 2 while c_bot stays at 1, so the
        // zero-test diagonal x_cb = x_ct compares 1/2 against 1/4.
        let m = machine("q0: inc c -> q1\nq1: ifz c -> qz else dec -> qd\nfinal qz\n");
        let h = compile_diagonal(&m, Some(1)).unwrap();
        let sim = cosimulate_diagonal(&m, &h, 1, 1).unwrap();
        assert_eq!(sim.run.final_state().loc, h.loc_index("q1").unwrap());
        let zero_edge = find_edge(
            &h,
            h.loc_index("q1").unwrap(),
            h.loc_index("qz").unwrap(),
        )
        .expect("zero branch edge");
        let mut steps = sim.run.path.steps.clone();
        steps.push(TimedStep::singular(&h, Q::zero(), zero_edge).unwrap());
        let path = TimedPath { steps };
        let err = run_of(&h, State::zeroed(&h, h.init), path).unwrap_err();
        match err {
            RunError::Rejected(r) => {
                assert!(matches!(r.reason, RejectReason::GuardViolated { .. }));
            }
            other => panic!("expected a guard refusal, got {other:?}"),
        }
    }

    #[test]
    fn early_advance_is_refused() {
        // Driving only the incremented quadruple reaches the exit corner at
        // time 1, but the idle quadruples still carry y = 1 there, so the
        // advance gate refuses to end the step before they caught up.
        let m = machine("q0: inc c -> q1\n");
        let h = compile_diagonal(&m, Some(0)).unwrap();
        let mut d = Driver::new(&h, "@seed");
        d.hop(Q::zero(), "@init0").unwrap();
        d.hop(Q::zero(), "q0").unwrap();
        d.hop(Q::ratio(1, 2), "q0@0:bibb").unwrap();
        d.hop(Q::one(), "q0@0:bpbb").unwrap();
        d.hop(Q::one(), "q1").unwrap();
        match d.replay() {
            Err(CosimError::Rejected { detail, .. }) => {
                assert!(detail.contains("guard"), "unexpected refusal: {detail}");
            }
            other => panic!("expected the advance gate to refuse, got {other:?}"),
        }
    }

    #[test]
    fn diagonal_class_profile() {
        let h = compile_diagonal(&machine(LOOPER), Some(2)).unwrap();
        let c = h.classify();
        assert!(c.singular);
        assert!(c.fixed_rate);
        assert!(c.strictly_positive_rates);
        assert!(!c.rectangular);
        assert!(h.edges.iter().any(|e| e.guard.has_diagonal()));
        // Invariants stay trivial; only guards carry the diagonals.
        assert!(h.locations.iter().all(|l| matches!(l.invariant, Guard::True)));
    }
}
