//! Bounded-depth reference search used to cross-check the engine.
//!
//! Edge chains are explored breadth-first in edge order. A prefix
//! survives only while the linear system of its whole history is
//! feasible, and the first surviving prefix that enters a goal location
//! answers the query. Variable values are carried through the chain as
//! symbolic linear expressions; every candidate system is solved from
//! scratch. Nothing here touches the engine's polytopes, projection, or
//! covering store, so agreement between the two searches is a real
//! check of that machinery against plain enumeration.
//!
//! Every dwell is split into a pinned-zero branch and a strictly
//! positive branch. The split is exact for any rate interval, and it
//! keeps the encoder free of per-location case analysis at the cost of
//! one extra branch per step.

use crate::automaton::Automaton;
use crate::engine::Dwell;
use crate::guard::{Atom, Guard};
use crate::ids::{EdgeId, LocId, VarId};
use crate::interval::{Bound, Interval};
use crate::lra::{self, LinCon, LinSys, LinTerm};
use crate::rational::Q;
use crate::semantics::State;

/// Verdict of [`probe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// A goal location was entered. `chain` is the fewest-edges,
    /// lexicographically least feasible chain that does so, with the
    /// dwell branch recorded per step.
    Reached { chain: Vec<(EdgeId, Dwell)> },
    /// Some frontier level had no feasible extension. No chain of any
    /// length reaches a goal within the bound.
    Unreachable,
    /// The depth or width budget ran out with live prefixes left;
    /// nothing is known beyond the explored lengths.
    Capped,
}

impl Outcome {
    /// The witness chain projected to its edge sequence, if reached.
    pub fn edges(&self) -> Option<Vec<EdgeId>> {
        match self {
            Outcome::Reached { chain } => Some(chain.iter().map(|(e, _)| *e).collect()),
            _ => None,
        }
    }
}

/// One live prefix: its chain plus the symbolic state of the whole
/// history. `vals` gives each variable's current value as a linear
/// expression over the unknowns allocated so far.
struct Prefix {
    chain: Vec<(EdgeId, Dwell)>,
    at: LocId,
    vals: Vec<LinTerm>,
    elapsed: LinTerm,
    cons: Vec<LinCon>,
    unknowns: usize,
}

/// Breadth-first reachability of any location in `goals` by chains of
/// at most `depth_cap` edges, keeping at most `width_cap` live prefixes
/// per level.
///
/// `Reached` and `Unreachable` are conclusive; `Capped` is not. An
/// exhausted level is conclusive at any cap because every run's prefix
/// is itself feasible, so once no prefix of some length survives, no
/// longer chain can either.
pub fn probe(
    h: &Automaton,
    init: &State,
    goals: &[LocId],
    t_bound: &Q,
    depth_cap: usize,
    width_cap: usize,
) -> Outcome {
    if t_bound.is_negative() {
        return Outcome::Unreachable;
    }
    if goals.contains(&init.loc) {
        return Outcome::Reached { chain: Vec::new() };
    }
    let root = Prefix {
        chain: Vec::new(),
        at: init.loc,
        vals: init
            .vals
            .iter()
            .map(|v| LinTerm::constant(v.clone()))
            .collect(),
        elapsed: LinTerm::constant(Q::zero()),
        cons: Vec::new(),
        unknowns: 0,
    };
    let mut frontier = vec![root];
    for _ in 0..depth_cap {
        let mut next: Vec<Prefix> = Vec::new();
        for p in &frontier {
            for edge in h.out_edges(p.at) {
                for mode in [Dwell::Zero, Dwell::Positive] {
                    let Some(ext) = extend(h, p, edge, mode, t_bound) else {
                        continue;
                    };
                    if goals.contains(&h.edge(edge).trg) {
                        return Outcome::Reached { chain: ext.chain };
                    }
                    next.push(ext);
                    if next.len() > width_cap {
                        return Outcome::Capped;
                    }
                }
            }
        }
        if next.is_empty() {
            return Outcome::Unreachable;
        }
        frontier = next;
    }
    Outcome::Capped
}

/// `p` followed by a dwell of the given branch and `edge`, or `None`
/// when the extended history is infeasible within the bound.
fn extend(h: &Automaton, p: &Prefix, edge: EdgeId, mode: Dwell, t_bound: &Q) -> Option<Prefix> {
    let e = h.edge(edge);
    let loc = h.location(p.at);
    let mut unknowns = p.unknowns;
    let mut fresh = || {
        unknowns += 1;
        unknowns - 1
    };
    let mut cons = p.cons.clone();

    let d = fresh();
    match mode {
        Dwell::Zero => cons.push(LinCon::eq(LinTerm::var(d))),
        Dwell::Positive => cons.push(LinCon::lt(LinTerm::var(d).scaled(&-Q::one()))),
        Dwell::Free => unreachable!("probe only branches zero and positive dwell"),
    }

    let mut after = Vec::with_capacity(p.vals.len());
    for (x, val) in p.vals.iter().enumerate() {
        let rate = &loc.rates[x];
        let moved = if mode == Dwell::Zero {
            val.clone()
        } else if let Some(r) = rate.as_singleton() {
            val.plus(&LinTerm::var(d).scaled(&Q::int(r)))
        } else {
            let u = fresh();
            rate_sides(rate, d, u, &mut cons);
            val.plus(&LinTerm::var(u))
        };
        after.push(moved);
    }

    guard_cons(&loc.invariant, &p.vals, &mut cons);
    guard_cons(&loc.invariant, &after, &mut cons);
    guard_cons(&e.guard, &after, &mut cons);

    let elapsed = p.elapsed.plus(&LinTerm::var(d));
    let mut budget = elapsed.clone();
    budget.cst = &budget.cst - t_bound;
    cons.push(LinCon::le(budget));

    let mut vals = Vec::with_capacity(after.len());
    for (x, moved) in after.into_iter().enumerate() {
        match e.reset.get(VarId(x)) {
            None => vals.push(moved),
            Some(int) => {
                if let Some(k) = int.as_singleton() {
                    vals.push(LinTerm::constant(Q::int(k)));
                } else {
                    let w = fresh();
                    let v = LinTerm::var(w);
                    member_cons(int, &v, &mut cons);
                    vals.push(v);
                }
            }
        }
    }

    let mut sys = LinSys::new(unknowns);
    for c in &cons {
        sys.push(c.clone());
    }
    lra::feasible(&sys).witness()?;

    let mut chain = p.chain.clone();
    chain.push((edge, mode));
    Some(Prefix {
        chain,
        at: e.trg,
        vals,
        elapsed,
        cons,
        unknowns,
    })
}

/// `a*d REL u REL b*d` for the rate interval `[a, b]` of a positive
/// dwell. Endpoints must be finite.
fn rate_sides(rate: &Interval, d: usize, u: usize, cons: &mut Vec<LinCon>) {
    let (Bound::Finite(a), Bound::Finite(b)) = (rate.lo(), rate.hi()) else {
        panic!("rate intervals must have finite endpoints");
    };
    let lo = LinTerm::var(d).scaled(&Q::int(a)).minus(&LinTerm::var(u));
    cons.push(if rate.lo_closed() {
        LinCon::le(lo)
    } else {
        LinCon::lt(lo)
    });
    let hi = LinTerm::var(u).minus(&LinTerm::var(d).scaled(&Q::int(b)));
    cons.push(if rate.hi_closed() {
        LinCon::le(hi)
    } else {
        LinCon::lt(hi)
    });
}

/// The guard's atoms over the given value expressions.
fn guard_cons(g: &Guard, vals: &[LinTerm], cons: &mut Vec<LinCon>) {
    match g {
        Guard::True => {}
        Guard::False => cons.push(LinCon::lt(LinTerm::constant(Q::zero()))),
        Guard::Conj(atoms) => {
            for a in atoms {
                match a {
                    Atom::Rect { var, int } => member_cons(int, &vals[var.0], cons),
                    Atom::Diag { x, y, rel, k } => {
                        let diff = vals[x.0].minus(&vals[y.0]);
                        let iv = rel.interval(*k);
                        member_cons(&iv, &diff, cons);
                    }
                }
            }
        }
    }
}

/// `v` lies in `int`; infinite sides impose nothing.
fn member_cons(int: &Interval, v: &LinTerm, cons: &mut Vec<LinCon>) {
    if let Bound::Finite(a) = int.lo() {
        let lo = LinTerm::constant(Q::int(a)).minus(v);
        cons.push(if int.lo_closed() {
            LinCon::le(lo)
        } else {
            LinCon::lt(lo)
        });
    }
    if let Bound::Finite(b) = int.hi() {
        let hi = v.minus(&LinTerm::constant(Q::int(b)));
        cons.push(if int.hi_closed() {
            LinCon::le(hi)
        } else {
            LinCon::lt(hi)
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Reset;
    use crate::engine::{chain_witness, search};
    use crate::guard::Relation;
    use crate::testgen::{fig1, random_automaton, rng, GenConfig};

    fn zero_state(h: &Automaton) -> State {
        State::new(h.init, vec![Q::zero(); h.n_vars()])
    }

    #[test]
    fn finds_the_least_witness_on_the_running_example() {
        let h = fig1();
        let got = probe(&h, &zero_state(&h), &[LocId(4)], &Q::one(), 6, 50_000);
        let edges: Vec<usize> = vec![0, 1, 0, 1, 3, 6];
        let chain: Vec<(EdgeId, Dwell)> = edges
            .iter()
            .map(|&e| (EdgeId(e), Dwell::Positive))
            .collect();
        assert_eq!(got, Outcome::Reached { chain });

        let engine = search(&h, &zero_state(&h), &[LocId(4)], &Q::one(), 12);
        let engine_edges: Vec<EdgeId> = engine
            .found_chain()
            .expect("engine reaches the goal")
            .iter()
            .map(|(e, _)| *e)
            .collect();
        assert_eq!(got.edges().unwrap(), engine_edges);
    }

    #[test]
    fn exhaustion_is_conclusive_and_cycles_are_not() {
        let mut h = Automaton::new("dead_guard", &["x"]);
        h.add_location(
            "a",
            vec![Interval::singleton(1)],
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Le, 1)]),
        );
        h.add_location("b", vec![Interval::singleton(1)], Guard::True);
        h.add_edge(
            LocId(0),
            Guard::conj(vec![Atom::cmp(VarId(0), Relation::Eq, 2)]),
            Reset::identity(1),
            LocId(1),
        );
        let res = probe(&h, &zero_state(&h), &[LocId(1)], &Q::int(5), 10, 100);
        assert_eq!(res, Outcome::Unreachable);

        let mut c = Automaton::new("idle_loop", &["x"]);
        c.add_location("a", vec![Interval::singleton(1)], Guard::True);
        c.add_location("b", vec![Interval::singleton(1)], Guard::True);
        c.add_edge(LocId(0), Guard::True, Reset::identity(1), LocId(0));
        let res = probe(&c, &zero_state(&c), &[LocId(1)], &Q::one(), 4, 100);
        assert_eq!(res, Outcome::Capped);
    }

    #[test]
    fn zero_bound_and_goal_at_start_short_circuit() {
        let h = fig1();
        let at_start = probe(&h, &zero_state(&h), &[LocId(0)], &Q::zero(), 3, 10);
        assert_eq!(at_start, Outcome::Reached { chain: Vec::new() });
        let negative = probe(&h, &zero_state(&h), &[LocId(4)], &-Q::one(), 3, 10);
        assert_eq!(negative, Outcome::Unreachable);
    }

    #[test]
    fn conclusive_probes_match_the_engine() {
        let mut rng = rng(0x0bac1e);
        let mut conclusive = 0;
        for round in 0..60 {
            let cfg = GenConfig::small_nonneg(2, 3, 5);
            let h = random_automaton(&cfg, &mut rng);
            let goal = LocId(h.locations.len() - 1);
            let t = [Q::ratio(1, 2), Q::one(), Q::int(2)][round % 3].clone();
            let init = zero_state(&h);
            let got = probe(&h, &init, &[goal], &t, 6, 3_000);
            let engine = search(&h, &init, &[goal], &t, 40);
            match got {
                Outcome::Capped => continue,
                Outcome::Unreachable => {
                    conclusive += 1;
                    assert!(
                        engine.found_chain().is_none(),
                        "probe exhausted but the engine found {:?} on {}",
                        engine.found_chain(),
                        h.name,
                    );
                }
                Outcome::Reached { ref chain } => {
                    conclusive += 1;
                    let engine_edges: Vec<EdgeId> = engine
                        .found_chain()
                        .unwrap_or_else(|| panic!("probe reached but the engine did not on {}", h.name))
                        .iter()
                        .map(|(e, _)| *e)
                        .collect();
                    assert_eq!(got.edges().unwrap(), engine_edges, "on {}", h.name);
                    let run = chain_witness(&h, &init, chain, &t)
                        .expect("a feasible probe chain must have a witness");
                    assert_eq!(run.final_state().loc, goal);
                    assert!(run.duration() <= t);
                }
            }
        }
        assert!(conclusive >= 20, "only {conclusive} conclusive probes");
    }
}
