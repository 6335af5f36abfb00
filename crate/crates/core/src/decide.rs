//! Time-bounded reachability decisions.
//!
//! [`decide`] answers whether some run of duration at most a given
//! bound, starting from the all-zero valuation at the initial location,
//! reaches a goal location. The class it accepts is rectangular
//! automata whose rates are non-negative with finite upper bounds and
//! whose resets are bounded and non-negative; anything else is refused
//! up front with the offending feature named.
//!
//! The search itself runs on the given automaton. The normal-form
//! pipeline contributes the depth budget: a reachable goal is reachable
//! by a chain of at most [`BoundBundle::witness_cap`] edges, computed
//! from the sizes of the normalized automaton, so a search cut at that
//! depth without finding the goal is a sound no. In practice the
//! search exhausts its frontier long before any realistic cap.

use num::{BigUint, One, ToPrimitive};
use thiserror::Error;

use crate::automaton::Automaton;
use crate::contraction::{cycle_free_cap, path_cap};
use crate::engine::{chain_witness, encode_chain, search, search_parallel, Dwell, SearchResult};
use crate::ids::{EdgeId, LocId};
use crate::interval::Bound;
use crate::lra::LinSys;
use crate::normalize::{normalize, NormalizeError, DEFAULT_BURST_CAP};
use crate::rational::Q;
use crate::semantics::{Run, State};

/// Environment variable holding the worker count for the search.
pub const PARALLELISM_VAR: &str = "TIMECAP_PARALLELISM";

/// Why a query was refused.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OutOfClass {
    #[error("the time bound is negative")]
    NegativeBound,
    #[error("{0} compares two variables")]
    Diagonal(String),
    #[error("rate of {var} at {loc} allows negative values")]
    NegativeRate { loc: String, var: String },
    #[error("rate of {var} at {loc} has no finite upper bound")]
    UnboundedRate { loc: String, var: String },
    #[error("reset of {var} on {edge} is unbounded or allows negative values")]
    UnboundedReset { var: String, edge: String },
}

/// Answer to a reachability query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Reachable. The run replays from the all-zero initial state,
    /// ends in the goal location, and lasts at most the bound.
    Yes(Run),
    /// No run of duration at most the bound reaches the goal.
    No,
}

impl Verdict {
    pub fn witness(&self) -> Option<&Run> {
        match self {
            Verdict::Yes(run) => Some(run),
            Verdict::No => None,
        }
    }
}

/// Search budget derived from an automaton's size and the time bound.
///
/// All members are exact; [`BoundBundle::depth`] clamps the cap to a
/// usable search depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundBundle {
    /// Cap on equality-guarded steps in a least witness:
    /// `n_vars * rmax * bound`.
    pub equality_cap: Q,
    /// Number of unit time windows the bound splits into:
    /// `ceil(bound * (rmax + 1))`.
    pub windows: BigUint,
    /// Length cap for paths holding each simple cycle at most once.
    pub cycle_free_cap: BigUint,
    /// Length cap for one compressed equality-free segment.
    pub segment_cap: BigUint,
    /// Edge-count cap on witnesses: with `E = floor(equality_cap)`,
    /// `(E + max(windows, 1)) * (segment_cap + 1) + E`.
    pub witness_cap: BigUint,
}

impl BoundBundle {
    /// The witness cap as a search depth, clamped to `usize::MAX`.
    pub fn depth(&self) -> usize {
        self.witness_cap.to_usize().unwrap_or(usize::MAX)
    }
}

/// Evaluates the budget formulas on the automaton as given.
///
/// The caller picks the automaton the sizes are read from; [`decide`]
/// hands in the normalized form, whose witnesses the cap is about.
pub fn compute_bounds(h: &Automaton, bound: &Q) -> BoundBundle {
    let rmax = Q::int(h.rmax());
    let equality_cap = &(&Q::int(h.n_vars() as i64) * &rmax) * bound;
    let windows = (bound * &(&rmax + &Q::one()))
        .ceil_int()
        .to_biguint()
        .expect("the bound is non-negative");
    let l = cycle_free_cap(h);
    let k_seg = path_cap(h);
    let e = equality_cap
        .floor_int()
        .to_biguint()
        .expect("the bound is non-negative");
    let spans = &e + windows.clone().max(BigUint::one());
    let witness_cap = spans * (&k_seg + BigUint::one()) + &e;
    BoundBundle {
        equality_cap,
        windows,
        cycle_free_cap: l,
        segment_cap: k_seg,
        witness_cap,
    }
}

/// Rejects inputs outside the decidable class.
fn admit(h: &Automaton, bound: &Q) -> Result<(), OutOfClass> {
    if bound.is_negative() {
        return Err(OutOfClass::NegativeBound);
    }
    for l in &h.locations {
        for (x, r) in l.rates.iter().enumerate() {
            let nonneg = matches!(r.lo(), Bound::Finite(a) if a >= 0);
            if !nonneg {
                return Err(OutOfClass::NegativeRate {
                    loc: l.name.clone(),
                    var: h.vars[x].clone(),
                });
            }
            if !matches!(r.hi(), Bound::Finite(_)) {
                return Err(OutOfClass::UnboundedRate {
                    loc: l.name.clone(),
                    var: h.vars[x].clone(),
                });
            }
        }
        if l.invariant.has_diagonal() {
            return Err(OutOfClass::Diagonal(format!("the invariant of {}", l.name)));
        }
    }
    for e in &h.edges {
        let name = || {
            format!(
                "{} -> {}",
                h.location(e.src).name,
                h.location(e.trg).name
            )
        };
        if e.guard.has_diagonal() {
            return Err(OutOfClass::Diagonal(format!("the guard of {}", name())));
        }
        for x in e.reset.reset_vars() {
            let int = e.reset.get(x).unwrap();
            let lo_ok = matches!(int.lo(), Bound::Finite(a) if a >= 0);
            let hi_ok = matches!(int.hi(), Bound::Finite(_));
            if !lo_ok || !hi_ok {
                return Err(OutOfClass::UnboundedReset {
                    var: h.vars[x.0].clone(),
                    edge: name(),
                });
            }
        }
    }
    Ok(())
}

/// Decides reachability of `goal` within `bound`, using the worker
/// count from the `TIMECAP_PARALLELISM` environment variable.
pub fn decide(h: &Automaton, goal: LocId, bound: &Q) -> Result<Verdict, OutOfClass> {
    let threads = std::env::var(PARALLELISM_VAR)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1);
    decide_with(h, goal, bound, threads)
}

/// [`decide`] with an explicit worker count. The verdict and witness
/// do not depend on it.
pub fn decide_with(
    h: &Automaton,
    goal: LocId,
    bound: &Q,
    threads: usize,
) -> Result<Verdict, OutOfClass> {
    admit(h, bound)?;
    let cap = match normalize(h, goal, DEFAULT_BURST_CAP) {
        Ok(norm) => compute_bounds(&norm.h, bound).depth(),
        Err(NormalizeError::TooManyBursts(_)) => usize::MAX,
        Err(e) => panic!("an admitted automaton must normalize: {e}"),
    };
    let init = State::zeroed(h, h.init);
    let result = if threads > 1 {
        search_parallel(h, &init, &[goal], bound, cap, threads)
    } else {
        search(h, &init, &[goal], bound, cap)
    };
    Ok(match result {
        SearchResult::Found { chain, .. } => {
            let run = chain_witness(h, &init, &chain, bound)
                .expect("a found chain must have a witness");
            Verdict::Yes(run)
        }
        // A cut frontier is still a no: any reachable goal is reachable
        // within witness_cap edges.
        SearchResult::Exhausted { .. } | SearchResult::CapHit { .. } => Verdict::No,
    })
}

/// The linear system of one fixed edge sequence from `init`: per-step
/// delays and displacements, guard and invariant atoms at the dwell
/// endpoints, reset equations, and the duration bound.
///
/// Exact when every rate interval is closed; a strict rate endpoint
/// needs the zero-dwell branch split the searches perform and has no
/// single-system encoding.
pub fn encode_skeleton(h: &Automaton, init: &State, edges: &[EdgeId], bound: &Q) -> LinSys {
    let chain: Vec<(EdgeId, Dwell)> = edges.iter().map(|&e| (e, Dwell::Free)).collect();
    encode_chain(h, init, &chain, bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Reset;
    use crate::guard::{Atom, Guard, Relation};
    use crate::ids::VarId;
    use crate::interval::Interval;
    use crate::lra;
    use crate::testgen::{fig1, random_automaton, rng, GenConfig};

    fn q(n: i64, d: i64) -> Q {
        Q::ratio(n, d)
    }

    fn without_first_edge(h: &Automaton) -> Automaton {
        let vars: Vec<&str> = h.vars.iter().map(|s| s.as_str()).collect();
        let mut out = Automaton::new(&h.name, &vars);
        for l in &h.locations {
            out.add_location(&l.name, l.rates.clone(), l.invariant.clone());
        }
        out.init = h.init;
        for e in h.edges.iter().skip(1) {
            out.add_edge(e.src, e.guard.clone(), e.reset.clone(), e.trg);
        }
        out
    }

    #[test]
    fn worked_example_reaches_the_sink() {
        let h = fig1();
        let v = decide(&h, LocId(4), &Q::one()).unwrap();
        let run = v.witness().expect("the sink is reachable within one");
        assert_eq!(run.final_state().loc, LocId(4));
        assert_eq!(run.duration(), q(5347, 6250));
        let edges: Vec<EdgeId> = run.path.edges().collect();
        let want: Vec<EdgeId> = [0, 1, 0, 1, 3, 6].iter().map(|&e| EdgeId(e)).collect();
        assert_eq!(edges, want);
    }

    #[test]
    fn verdict_flips_without_the_first_loop_edge() {
        let h = without_first_edge(&fig1());
        assert_eq!(decide(&h, LocId(4), &Q::one()).unwrap(), Verdict::No);
    }

    #[test]
    fn tight_bounds_around_the_least_duration() {
        let h = fig1();
        let at = |b: Q| decide(&h, LocId(4), &b).unwrap();
        match at(q(5347, 6250)) {
            Verdict::Yes(run) => assert_eq!(run.duration(), q(5347, 6250)),
            Verdict::No => panic!("reachable exactly at the least duration"),
        }
        assert_eq!(at(q(5346, 6250)), Verdict::No);
        assert_eq!(at(q(139, 250)), Verdict::No);
    }

    #[test]
    fn zero_bound_reaches_only_the_start() {
        let h = fig1();
        match decide(&h, LocId(0), &Q::zero()).unwrap() {
            Verdict::Yes(run) => {
                assert!(run.path.is_empty());
                assert_eq!(run.duration(), Q::zero());
            }
            Verdict::No => panic!("the initial location is reachable at bound zero"),
        }
        assert_eq!(decide(&h, LocId(4), &Q::zero()).unwrap(), Verdict::No);
    }

    #[test]
    fn out_of_class_inputs_are_named() {
        let mk = |rate: Interval, reset: Reset, guard: Guard| {
            let mut h = Automaton::new("gate", &["x", "y"]);
            h.add_location("a", vec![rate, Interval::singleton(1)], Guard::True);
            h.add_location("b", vec![Interval::singleton(0); 2], Guard::True);
            h.add_edge(LocId(0), guard, reset, LocId(1));
            h
        };
        let plain = || Reset::identity(2);

        let h = mk(Interval::closed(-1, 1), plain(), Guard::True);
        assert_eq!(
            decide(&h, LocId(1), &Q::one()),
            Err(OutOfClass::NegativeRate {
                loc: "a".into(),
                var: "x".into(),
            })
        );

        let h = mk(Interval::at_least(0), plain(), Guard::True);
        assert_eq!(
            decide(&h, LocId(1), &Q::one()),
            Err(OutOfClass::UnboundedRate {
                loc: "a".into(),
                var: "x".into(),
            })
        );

        let mut reset = Reset::identity(2);
        reset.set(VarId(0), Interval::at_most(0));
        let h = mk(Interval::singleton(1), reset, Guard::True);
        assert_eq!(
            decide(&h, LocId(1), &Q::one()),
            Err(OutOfClass::UnboundedReset {
                var: "x".into(),
                edge: "a -> b".into(),
            })
        );

        let diag = Guard::Conj(vec![Atom::Diag {
            x: VarId(0),
            y: VarId(1),
            rel: Relation::Le,
            k: 0,
        }]);
        let h = mk(Interval::singleton(1), plain(), diag);
        assert_eq!(
            decide(&h, LocId(1), &Q::one()),
            Err(OutOfClass::Diagonal("the guard of a -> b".into()))
        );

        let h = fig1();
        assert_eq!(
            decide(&h, LocId(4), &-Q::one()),
            Err(OutOfClass::NegativeBound)
        );
    }

    #[test]
    fn budget_formulas_on_known_sizes() {
        let h = fig1();
        let b = compute_bounds(&h, &Q::one());
        assert_eq!(b.equality_cap, Q::int(34));
        assert_eq!(b.windows, BigUint::from(18u32));
        assert_eq!(b.cycle_free_cap, BigUint::from(1285u32));
        assert_eq!(b.segment_cap, BigUint::from(6429u32));
        assert_eq!(b.witness_cap, BigUint::from((34 + 18) * 6430 + 34u32));

        let b = compute_bounds(&h, &q(139, 250));
        assert_eq!(b.equality_cap, q(4726, 250));
        assert_eq!(b.windows, BigUint::from(11u32));
        assert_eq!(b.witness_cap, BigUint::from(186_488u32));

        let b = compute_bounds(&h, &Q::zero());
        assert_eq!(b.equality_cap, Q::zero());
        assert_eq!(b.windows, BigUint::ZERO);
        assert_eq!(b.witness_cap, BigUint::from(6430u32));
    }

    #[test]
    fn skeleton_systems_answer_feasibility() {
        let h = fig1();
        let init = State::zeroed(&h, h.init);
        let four: Vec<EdgeId> = [0, 1, 3, 6].iter().map(|&e| EdgeId(e)).collect();
        let sys = encode_skeleton(&h, &init, &four, &Q::one());
        assert!(lra::feasible(&sys).witness().is_none());

        let six: Vec<EdgeId> = [0, 1, 0, 1, 3, 6].iter().map(|&e| EdgeId(e)).collect();
        let sys = encode_skeleton(&h, &init, &six, &Q::one());
        assert!(lra::feasible(&sys).witness().is_some());

        let sys = encode_skeleton(&h, &init, &[], &Q::zero());
        assert_eq!(lra::feasible(&sys).witness(), Some(Vec::new()));

        let mut still = Automaton::new("still", &["x"]);
        still.add_location("a", vec![Interval::singleton(0)], Guard::True);
        still.add_location("b", vec![Interval::singleton(0)], Guard::True);
        still.add_edge(
            LocId(0),
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Eq, 1)]),
            Reset::identity(1),
            LocId(1),
        );
        let sys = encode_skeleton(&still, &State::zeroed(&still, LocId(0)), &[EdgeId(0)], &Q::one());
        assert!(lra::feasible(&sys).witness().is_none());
    }

    #[test]
    fn yes_is_monotone_in_the_bound() {
        let mut rng = rng(0xdec1de);
        let grid = [Q::zero(), q(1, 2), Q::one(), Q::int(2)];
        for _ in 0..12 {
            let cfg = GenConfig::small_nonneg(2, 3, 5);
            let h = random_automaton(&cfg, &mut rng);
            let goal = LocId(h.locations.len() - 1);
            let mut seen_yes = false;
            for t in &grid {
                match decide(&h, goal, t) {
                    Ok(Verdict::Yes(run)) => {
                        assert!(run.duration() <= *t);
                        assert_eq!(run.final_state().loc, goal);
                        seen_yes = true;
                    }
                    Ok(Verdict::No) => {
                        assert!(!seen_yes, "verdict dropped when the bound grew on {}", h.name);
                    }
                    Err(_) => unreachable!("generated instances are in class"),
                }
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_the_answer() {
        let h = fig1();
        let one = decide_with(&h, LocId(4), &Q::one(), 1).unwrap();
        let three = decide_with(&h, LocId(4), &Q::one(), 3).unwrap();
        assert_eq!(one, three);
        let one = decide_with(&h, LocId(4), &q(139, 250), 1).unwrap();
        let three = decide_with(&h, LocId(4), &q(139, 250), 3).unwrap();
        assert_eq!(one, three);
    }
}
