//! Symbolic forward reachability over (location, polytope) nodes.
//!
//! A node pairs a location with a convex polytope over `n_vars + 1`
//! dimensions: the variable values and the elapsed time. One search step
//! is a dwell followed by an edge; the dwell is encoded with a delay
//! unknown `d` and per-variable displacement unknowns `u` satisfying
//! `a*d <= u <= b*d` for the rate interval `[a, b]`, which keeps
//! everything linear. Invariants are imposed at both ends of the dwell
//! (they are convex, so this covers the whole segment), the guard at the
//! end, and nothing at all on the arrival state, matching the run
//! semantics where a run may stop the instant it arrives. After each
//! step the system is projected back onto the fixed dimensions.
//!
//! The search is breadth-first over the number of edges, expanding each
//! node's edges in declaration order, so the first goal hit is the
//! witness with the fewest edges and the lexicographically least edge
//! sequence among those. A new node is pruned when an earlier node at
//! the same location already covers its polytope; any continuation of
//! the pruned node exists from the covering one with no more steps and a
//! lexicographically smaller prefix, so pruning preserves both the
//! verdict and the identity of the first witness.
//!
//! Rate intervals must have finite endpoints here (callers reject the
//! rest). Locations whose rate interval has a strict finite endpoint
//! get two branches per edge: a zero dwell with zero displacement, and a
//! strictly positive dwell. With closed endpoints the single `d >= 0`
//! encoding is exact, because `a*d <= u <= b*d` pins `u = 0` at `d = 0`.

use crate::automaton::Automaton;
use crate::guard::{Atom, Guard, Relation};
use crate::ids::{EdgeId, LocId, VarId};
use crate::interval::{Bound, Interval};
use crate::lra::{self, LinCon, LinSys, LinTerm};
use crate::rational::Q;
use crate::semantics::{run_of, Run, State, TimedPath, TimedStep};
use std::collections::{HashMap, VecDeque};

/// A convex polyhedron over a fixed number of dimensions.
#[derive(Debug, Clone)]
pub struct Poly {
    dims: usize,
    sys: LinSys,
}

impl Poly {
    pub fn universe(dims: usize) -> Poly {
        Poly {
            dims,
            sys: LinSys::new(dims),
        }
    }

    /// The single point with the given coordinates.
    pub fn point(vals: &[Q]) -> Poly {
        let mut sys = LinSys::new(vals.len());
        for (i, v) in vals.iter().enumerate() {
            let mut t = LinTerm::var(i);
            t.cst = -v.clone();
            sys.push(LinCon::eq(t));
        }
        Poly {
            dims: vals.len(),
            sys,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn constraints(&self) -> &[LinCon] {
        &self.sys.cons
    }

    pub fn push(&mut self, con: LinCon) {
        self.sys.push(con);
    }

    pub fn is_feasible(&self) -> bool {
        lra::feasible(&self.sys).is_sat()
    }

    /// Some member of the polytope, if it is non-empty.
    pub fn sample(&self) -> Option<Vec<Q>> {
        lra::feasible(&self.sys).witness()
    }

    /// Whether every point of `other` lies in `self`.
    pub fn contains(&self, other: &Poly) -> bool {
        assert_eq!(self.dims, other.dims);
        self.sys
            .cons
            .iter()
            .all(|con| entailed_by(&other.sys, con))
    }

    /// Drops constraints implied by the remaining ones.
    pub fn reduce(&mut self) {
        match lra::compact(self.sys.cons.clone()) {
            Ok(cons) => self.sys.cons = cons,
            Err(()) => {
                self.sys.cons = vec![LinCon::le(LinTerm::constant(Q::one()))];
                return;
            }
        }
        let mut i = 0;
        while i < self.sys.cons.len() {
            let con = self.sys.cons.remove(i);
            if entailed_by(&self.sys, &con) {
                continue;
            }
            self.sys.cons.insert(i, con);
            i += 1;
        }
    }
}

/// Whether every solution of `sys` satisfies `con`.
fn entailed_by(sys: &LinSys, con: &LinCon) -> bool {
    let neg = |t: LinTerm| t.scaled(&-Q::one());
    let negations = match con.rel {
        lra::LinRel::Le => vec![LinCon::lt(neg(con.term.clone()))],
        lra::LinRel::Lt => vec![LinCon::le(neg(con.term.clone()))],
        lra::LinRel::Eq => vec![
            LinCon::lt(con.term.clone()),
            LinCon::lt(neg(con.term.clone())),
        ],
    };
    negations.into_iter().all(|n| {
        let mut s = sys.clone();
        s.push(n);
        !lra::feasible(&s).is_sat()
    })
}

/// Adds `lo REL expr REL hi` constraints for interval membership.
fn member_cons(int: &Interval, expr: &LinTerm, out: &mut Vec<LinCon>) {
    if let Bound::Finite(a) = int.lo() {
        let t = LinTerm::constant(Q::int(a)).minus(expr);
        out.push(if int.lo_closed() {
            LinCon::le(t)
        } else {
            LinCon::lt(t)
        });
    }
    if let Bound::Finite(b) = int.hi() {
        let t = expr.minus(&LinTerm::constant(Q::int(b)));
        out.push(if int.hi_closed() {
            LinCon::le(t)
        } else {
            LinCon::lt(t)
        });
    }
}

fn atom_cons(a: &Atom, view: &dyn Fn(VarId) -> LinTerm, out: &mut Vec<LinCon>) {
    match a {
        Atom::Rect { var, int } => member_cons(int, &view(*var), out),
        Atom::Diag { x, y, rel, k } => {
            let t = view(*x)
                .minus(&view(*y))
                .plus(&LinTerm::constant(-Q::int(*k)));
            match rel {
                Relation::Lt => out.push(LinCon::lt(t)),
                Relation::Le => out.push(LinCon::le(t)),
                Relation::Eq => out.push(LinCon::eq(t)),
                Relation::Ge => out.push(LinCon::le(t.scaled(&-Q::one()))),
                Relation::Gt => out.push(LinCon::lt(t.scaled(&-Q::one()))),
            }
        }
    }
}

/// Translates a guard into constraints, reading variables through `view`.
pub fn guard_cons(g: &Guard, view: &dyn Fn(VarId) -> LinTerm, out: &mut Vec<LinCon>) {
    match g {
        Guard::True => {}
        Guard::False => out.push(LinCon::le(LinTerm::constant(Q::one()))),
        Guard::Conj(atoms) => {
            for a in atoms {
                atom_cons(a, view, out);
            }
        }
    }
}

/// `a*d REL u REL b*d` for the rate interval `[a, b]`.
fn rate_cons(rate: &Interval, d: usize, u: usize, out: &mut Vec<LinCon>) {
    let a = match rate.lo() {
        Bound::Finite(a) => a,
        _ => panic!("rate intervals must have finite endpoints"),
    };
    let b = match rate.hi() {
        Bound::Finite(b) => b,
        _ => panic!("rate intervals must have finite endpoints"),
    };
    let mut lo = LinTerm::var(d).scaled(&Q::int(a));
    lo.add_coef(u, &-Q::one());
    out.push(if rate.lo_closed() {
        LinCon::le(lo)
    } else {
        LinCon::lt(lo)
    });
    let mut hi = LinTerm::var(u);
    hi.add_coef(d, &-Q::int(b));
    out.push(if rate.hi_closed() {
        LinCon::le(hi)
    } else {
        LinCon::lt(hi)
    });
}

/// How the dwell ahead of an edge is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dwell {
    /// `d >= 0`. Exact when no rate endpoint of the location is strict.
    Free,
    /// `d = 0` and zero displacement.
    Zero,
    /// `d > 0` with the rate sides as declared.
    Positive,
}

/// The dwell branches needed at this location for an exact encoding.
pub fn dwell_modes(h: &Automaton, loc: LocId) -> &'static [Dwell] {
    let strict = h.location(loc).rates.iter().any(|r| {
        (matches!(r.lo(), Bound::Finite(_)) && !r.lo_closed())
            || (matches!(r.hi(), Bound::Finite(_)) && !r.hi_closed())
    });
    if strict {
        &[Dwell::Zero, Dwell::Positive]
    } else {
        &[Dwell::Free]
    }
}

/// Pushes the constraints of one dwell-then-edge step. `pre` views the
/// values at the start of the dwell; `d`, `u0 + x` and `v0 + x` are the
/// delay, displacement and post-step value unknowns.
#[allow(clippy::too_many_arguments)]
fn push_step_cons(
    h: &Automaton,
    edge: EdgeId,
    mode: Dwell,
    pre: &dyn Fn(VarId) -> LinTerm,
    d: usize,
    u0: usize,
    v0: usize,
    sys: &mut LinSys,
) {
    let n = h.n_vars();
    let e = h.edge(edge);
    let src = h.location(e.src);
    let mut cons = Vec::new();
    match mode {
        Dwell::Free => cons.push(LinCon::le(LinTerm::var(d).scaled(&-Q::one()))),
        Dwell::Zero => {
            cons.push(LinCon::eq(LinTerm::var(d)));
            for x in 0..n {
                cons.push(LinCon::eq(LinTerm::var(u0 + x)));
            }
        }
        Dwell::Positive => cons.push(LinCon::lt(LinTerm::var(d).scaled(&-Q::one()))),
    }
    if mode != Dwell::Zero {
        for x in 0..n {
            rate_cons(&src.rates[x], d, u0 + x, &mut cons);
        }
    }
    let post = |x: VarId| pre(x).plus(&LinTerm::var(u0 + x.0));
    guard_cons(&src.invariant, pre, &mut cons);
    guard_cons(&src.invariant, &post, &mut cons);
    guard_cons(&e.guard, &post, &mut cons);
    for x in 0..n {
        let nv = LinTerm::var(v0 + x);
        match e.reset.get(VarId(x)) {
            Some(int) => member_cons(int, &nv, &mut cons),
            None => cons.push(LinCon::eq(nv.minus(&post(VarId(x))))),
        }
    }
    for c in cons {
        sys.push(c);
    }
}

/// Eliminates unknowns `0..keep_from` and renumbers the tail to start
/// at zero.
fn project_tail(mut sys: LinSys, keep_from: usize) -> LinSys {
    for u in 0..keep_from {
        sys = lra::eliminate(&sys, u);
    }
    let dims = sys.n_unknowns - keep_from;
    let mut out = LinSys::new(dims);
    for con in sys.cons {
        let mut term = LinTerm::constant(con.term.cst);
        for (u, c) in con.term.coefs {
            debug_assert!(u >= keep_from);
            term.add_coef(u - keep_from, &c);
        }
        out.push(LinCon {
            term,
            rel: con.rel,
        });
    }
    out
}

/// One dwell-then-edge image of `poly`, or `None` when infeasible.
///
/// `poly` must live at the edge's source location; the result lives at
/// its target.
pub fn step(h: &Automaton, t_bound: &Q, poly: &Poly, edge: EdgeId, mode: Dwell) -> Option<Poly> {
    let n = h.n_vars();
    assert_eq!(poly.dims(), n + 1);
    let nn = 3 * n + 3;
    let d = n + 1;
    let u0 = n + 2;
    let v0 = 2 * n + 2;
    let ne = 3 * n + 2;
    let mut sys = LinSys::new(nn);
    for c in poly.constraints() {
        sys.push(c.clone());
    }
    let pre = |x: VarId| LinTerm::var(x.0);
    push_step_cons(h, edge, mode, &pre, d, u0, v0, &mut sys);
    let mut elapse = LinTerm::var(ne);
    elapse.add_coef(n, &-Q::one());
    elapse.add_coef(d, &-Q::one());
    sys.push(LinCon::eq(elapse));
    let mut cap = LinTerm::var(ne);
    cap.cst = -t_bound.clone();
    sys.push(LinCon::le(cap));
    if !lra::feasible(&sys).is_sat() {
        return None;
    }
    let mut out = Poly {
        dims: n + 1,
        sys: project_tail(sys, v0),
    };
    out.reduce();
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Nodes taken off the queue and expanded.
    pub expanded: usize,
    /// Feasible successor polytopes built.
    pub generated: usize,
    /// Successors covered by an earlier polytope at the same location.
    pub pruned: usize,
}

impl SearchStats {
    fn absorb(&mut self, o: &SearchStats) {
        self.expanded += o.expanded;
        self.generated += o.generated;
        self.pruned += o.pruned;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchResult {
    /// The goal was reached; `chain` is the edge sequence of the
    /// fewest-edges, lexicographically least witness.
    Found {
        chain: Vec<(EdgeId, Dwell)>,
        stats: SearchStats,
    },
    /// Every reachable node was covered; the goal is unreachable within
    /// the time bound, at any depth.
    Exhausted { stats: SearchStats },
    /// The frontier was cut at the depth cap without exhausting. The
    /// goal is unreachable by runs of at most `cap` edges; nothing is
    /// known beyond that.
    CapHit { stats: SearchStats },
}

impl SearchResult {
    pub fn found_chain(&self) -> Option<&[(EdgeId, Dwell)]> {
        match self {
            SearchResult::Found { chain, .. } => Some(chain),
            _ => None,
        }
    }

    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchResult::Found { stats, .. }
            | SearchResult::Exhausted { stats }
            | SearchResult::CapHit { stats } => stats,
        }
    }
}

struct Node {
    loc: LocId,
    poly: Poly,
    depth: usize,
    parent: Option<usize>,
    /// Steps taken from the parent (empty for a root, more than one
    /// only for pre-expanded seeds).
    via: Vec<(EdgeId, Dwell)>,
}

fn chain_of(nodes: &[Node], mut at: usize) -> Vec<(EdgeId, Dwell)> {
    let mut segments = Vec::new();
    loop {
        segments.push(at);
        match nodes[at].parent {
            Some(p) => at = p,
            None => break,
        }
    }
    segments
        .into_iter()
        .rev()
        .flat_map(|i| nodes[i].via.iter().copied())
        .collect()
}

/// Queue seeds are expanded; passive seeds only join the covering store.
fn bfs(
    h: &Automaton,
    t_bound: &Q,
    goals: &[LocId],
    cap: usize,
    seeds: Vec<Node>,
    passive: Vec<Node>,
) -> SearchResult {
    let mut nodes: Vec<Node> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut store: HashMap<LocId, Vec<usize>> = HashMap::new();
    for node in passive {
        store.entry(node.loc).or_default().push(nodes.len());
        nodes.push(node);
    }
    for node in seeds {
        debug_assert!(!goals.contains(&node.loc));
        store.entry(node.loc).or_default().push(nodes.len());
        queue.push_back(nodes.len());
        nodes.push(node);
    }
    let mut stats = SearchStats::default();
    let mut truncated = false;
    while let Some(id) = queue.pop_front() {
        if nodes[id].depth >= cap {
            truncated = true;
            continue;
        }
        stats.expanded += 1;
        for edge in h.out_edges(nodes[id].loc) {
            for &mode in dwell_modes(h, nodes[id].loc) {
                let Some(poly) = step(h, t_bound, &nodes[id].poly, edge, mode) else {
                    continue;
                };
                stats.generated += 1;
                let trg = h.edge(edge).trg;
                if goals.contains(&trg) {
                    let mut chain = chain_of(&nodes, id);
                    chain.push((edge, mode));
                    return SearchResult::Found { chain, stats };
                }
                let covered = store
                    .get(&trg)
                    .map(|ids| ids.iter().any(|&s| nodes[s].poly.contains(&poly)))
                    .unwrap_or(false);
                if covered {
                    stats.pruned += 1;
                    continue;
                }
                let node = Node {
                    loc: trg,
                    poly,
                    depth: nodes[id].depth + 1,
                    parent: Some(id),
                    via: vec![(edge, mode)],
                };
                store.entry(trg).or_default().push(nodes.len());
                queue.push_back(nodes.len());
                nodes.push(node);
            }
        }
    }
    if truncated {
        SearchResult::CapHit { stats }
    } else {
        SearchResult::Exhausted { stats }
    }
}

fn root_node(init: &State) -> Node {
    let mut vals = init.vals.clone();
    vals.push(Q::zero());
    Node {
        loc: init.loc,
        poly: Poly::point(&vals),
        depth: 0,
        parent: None,
        via: Vec::new(),
    }
}

/// Breadth-first reachability of any location in `goals` by runs of
/// duration at most `t_bound` and at most `cap` edges.
pub fn search(
    h: &Automaton,
    init: &State,
    goals: &[LocId],
    t_bound: &Q,
    cap: usize,
) -> SearchResult {
    let stats = SearchStats::default();
    if t_bound.is_negative() {
        return SearchResult::Exhausted { stats };
    }
    if goals.contains(&init.loc) {
        return SearchResult::Found {
            chain: Vec::new(),
            stats,
        };
    }
    bfs(h, t_bound, goals, cap, vec![root_node(init)], Vec::new())
}

/// Same result as [`search`], computed over `threads` workers that
/// partition the first-step branches. The verdict and any witness chain
/// are identical to the sequential search; only the exhausted-versus-cap
/// distinction can differ, because workers prune against fewer stored
/// polytopes.
pub fn search_parallel(
    h: &Automaton,
    init: &State,
    goals: &[LocId],
    t_bound: &Q,
    cap: usize,
    threads: usize,
) -> SearchResult {
    if threads <= 1 {
        return search(h, init, goals, t_bound, cap);
    }
    let mut stats = SearchStats::default();
    if t_bound.is_negative() {
        return SearchResult::Exhausted { stats };
    }
    if goals.contains(&init.loc) {
        return SearchResult::Found {
            chain: Vec::new(),
            stats,
        };
    }
    let root = root_node(init);
    if cap == 0 {
        return SearchResult::CapHit { stats };
    }
    stats.expanded += 1;
    let mut branches: Vec<Node> = Vec::new();
    for edge in h.out_edges(init.loc) {
        for &mode in dwell_modes(h, init.loc) {
            let Some(poly) = step(h, t_bound, &root.poly, edge, mode) else {
                continue;
            };
            stats.generated += 1;
            let trg = h.edge(edge).trg;
            if goals.contains(&trg) {
                return SearchResult::Found {
                    chain: vec![(edge, mode)],
                    stats,
                };
            }
            branches.push(Node {
                loc: trg,
                poly,
                depth: 1,
                parent: None,
                via: vec![(edge, mode)],
            });
        }
    }
    let workers = threads.min(branches.len().max(1));
    let mut groups: Vec<Vec<Node>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, b) in branches.into_iter().enumerate() {
        groups[i % workers].push(b);
    }
    let results: Vec<SearchResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = groups
            .into_iter()
            .map(|group| {
                let root = root_node(init);
                scope.spawn(move || bfs(h, t_bound, goals, cap, group, vec![root]))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut best: Option<Vec<(EdgeId, Dwell)>> = None;
    let mut any_cap = false;
    for r in &results {
        stats.absorb(r.stats());
        match r {
            SearchResult::Found { chain, .. } => {
                let better = match &best {
                    None => true,
                    Some(b) => (chain.len(), chain) < (b.len(), b),
                };
                if better {
                    best = Some(chain.clone());
                }
            }
            SearchResult::CapHit { .. } => any_cap = true,
            SearchResult::Exhausted { .. } => {}
        }
    }
    match best {
        Some(chain) => SearchResult::Found { chain, stats },
        None if any_cap => SearchResult::CapHit { stats },
        None => SearchResult::Exhausted { stats },
    }
}

/// The feasibility system of a whole edge chain from `init`: delays,
/// displacements and post-step values for every step, plus the duration
/// bound. Unknown layout per step `i`: delay at `i*(2n+1)`, then `n`
/// displacements, then `n` post-step values.
pub fn encode_chain(
    h: &Automaton,
    init: &State,
    chain: &[(EdgeId, Dwell)],
    t_bound: &Q,
) -> LinSys {
    let n = h.n_vars();
    let width = 2 * n + 1;
    let mut sys = LinSys::new(chain.len() * width);
    let mut at = init.loc;
    for (i, (edge, mode)) in chain.iter().enumerate() {
        assert_eq!(
            h.edge(*edge).src,
            at,
            "chain edges must be connected",
        );
        let base = i * width;
        let init_vals = &init.vals;
        let pre = move |x: VarId| {
            if i == 0 {
                LinTerm::constant(init_vals[x.0].clone())
            } else {
                LinTerm::var((i - 1) * width + 1 + n + x.0)
            }
        };
        push_step_cons(h, *edge, *mode, &pre, base, base + 1, base + 1 + n, &mut sys);
        at = h.edge(*edge).trg;
    }
    let mut duration = LinTerm::constant(-t_bound.clone());
    for i in 0..chain.len() {
        duration.add_coef(i * width, &Q::one());
    }
    sys.push(LinCon::le(duration));
    sys
}

/// Solves the chain system and reassembles a replayable run, or `None`
/// when the chain is infeasible within the bound.
pub fn chain_witness(
    h: &Automaton,
    init: &State,
    chain: &[(EdgeId, Dwell)],
    t_bound: &Q,
) -> Option<Run> {
    let sys = encode_chain(h, init, chain, t_bound);
    let w = lra::feasible(&sys).witness()?;
    let n = h.n_vars();
    let width = 2 * n + 1;
    let mut steps = Vec::with_capacity(chain.len());
    for (i, (edge, _)) in chain.iter().enumerate() {
        let base = i * width;
        let delay = w[base].clone();
        let src = h.edge(*edge).src;
        let rates: Vec<Q> = (0..n)
            .map(|x| {
                if delay.is_zero() {
                    h.location(src).rates[x].pick_element()
                } else {
                    &w[base + 1 + x] / &delay
                }
            })
            .collect();
        let mut step = TimedStep::new(delay, rates, *edge);
        for x in h.edge(*edge).reset.reset_vars() {
            let int = h.edge(*edge).reset.get(x).unwrap();
            if int.as_singleton().is_none() {
                step.reset_choice[x.0] = Some(w[base + 1 + n + x.0].clone());
            }
        }
        steps.push(step);
    }
    let run = run_of(h, init.clone(), TimedPath::new(steps))
        .expect("a feasible chain system must replay");
    debug_assert!(run.duration() <= *t_bound);
    Some(run)
}
