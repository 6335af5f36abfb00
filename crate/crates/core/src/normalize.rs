//! Rewrites that drive an automaton toward an equality-guard normal
//! form while preserving which locations are reachable within a time
//! budget.
//!
//! Three rewrites compose, each returning maps back to its input so a
//! witness found on the output can be replayed on the input:
//!
//! * [`determinize_resets`] replaces every nondeterministic reset by a
//!   reset to zero and shifts later tests on the variable by the window
//!   it was reset into.
//! * [`bound_by_one`] moves the integer part of every variable into the
//!   location, leaving fractional parts that wrap at one.
//! * [`strictify`] compresses chains of edges that fire at one instant
//!   into single burst edges, so consecutive steps of a run can always
//!   be separated by positive dwell.
//!
//! [`normalize`] runs all three and composes the maps. All rewrites are
//! pure; inputs are never mutated.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::automaton::{Automaton, ModelError, Reset};
use crate::contraction::is_simple_cycle;
use crate::engine::{chain_witness, Dwell};
use crate::guard::{interval_sides, Atom, Guard, Relation};
use crate::ids::{EdgeId, LocId, VarId};
use crate::interval::Interval;
use crate::rational::Q;
use crate::semantics::{Run, State};

/// Cap on the number of burst edges [`strictify`] may materialize.
pub const DEFAULT_BURST_CAP: usize = 20_000;

/// Why a rewrite refused its input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("difference constraints between variables are not supported")]
    DiagonalAtoms,
    #[error("every rate must be bounded below by zero")]
    NegativeRates,
    #[error("every reset must pin its variables to zero")]
    ResetsNotZero,
    #[error("materializing burst edges would exceed the cap of {0}")]
    TooManyBursts(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Re-canonicalizes a guard: atoms on the same variable merge by
/// intersection, full intervals drop out, and an empty intersection
/// collapses the whole guard to `False`.
pub fn reduce_guard(g: &Guard) -> Guard {
    match g {
        Guard::Conj(atoms) => Guard::conj(atoms.clone()),
        other => other.clone(),
    }
}

/// Shifts every rectangular atom `x in I` to `x in I - w`, where `w` is
/// the window `x` was last reset into; `windows` holds one interval per
/// variable. A variable reset to a point `p` gets its atoms translated
/// by `-p`; a wider window widens the atom accordingly.
///
/// Diagonal atoms pass through unchanged; callers reject them up front.
pub fn shift_guard(g: &Guard, windows: &[Interval]) -> Guard {
    match g {
        Guard::Conj(atoms) => Guard::conj(
            atoms
                .iter()
                .map(|a| match a {
                    Atom::Rect { var, int } => Atom::Rect {
                        var: *var,
                        int: int.minus(&windows[var.0]),
                    },
                    diag => diag.clone(),
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Rewrites every atom over a variable's value into an atom over its
/// fractional part, given the integer part `parts[x]` of every
/// variable. Fractional parts live in `[0, 1]`; the value `k` is
/// represented as `(k, 0)`, never `(k - 1, 1)`, so equality tests fire
/// only on the canonical representation just after a wrap.
pub fn fractional_guard(g: &Guard, parts: &[i64]) -> Guard {
    let atoms = match g {
        Guard::True => return Guard::True,
        Guard::False => return Guard::False,
        Guard::Conj(atoms) => atoms,
    };
    let mut out = Vec::new();
    for a in atoms {
        let Atom::Rect { var, int } = a else {
            unreachable!("diagonal atoms are rejected before adaptation");
        };
        let i = parts[var.0];
        for (rel, k) in interval_sides(int) {
            // None marks a side that holds at every fractional part.
            let side: Option<Atom> = match rel {
                Relation::Le if k < i => return Guard::False,
                Relation::Le if k == i => Some(Atom::cmp(*var, Relation::Eq, 0)),
                Relation::Le => None,
                Relation::Lt if k <= i => return Guard::False,
                Relation::Lt if k == i + 1 => Some(Atom::cmp(*var, Relation::Lt, 1)),
                Relation::Lt => None,
                Relation::Eq if k == i => Some(Atom::cmp(*var, Relation::Eq, 0)),
                Relation::Eq => return Guard::False,
                Relation::Ge if k <= i => None,
                Relation::Ge if k == i + 1 => Some(Atom::cmp(*var, Relation::Eq, 1)),
                Relation::Ge => return Guard::False,
                Relation::Gt if k < i => None,
                Relation::Gt if k == i => Some(Atom::cmp(*var, Relation::Gt, 0)),
                Relation::Gt => return Guard::False,
            };
            out.extend(side);
        }
    }
    Guard::conj(out)
}

fn resets_to_zero(h: &Automaton) -> bool {
    let zero = Interval::singleton(0);
    h.edges
        .iter()
        .all(|e| e.reset.reset_vars().all(|v| e.reset.get(v) == Some(&zero)))
}

/// Output of [`determinize_resets`]: every reset pins its variables to
/// zero, and each output location remembers the input location it
/// refines.
#[derive(Debug, Clone)]
pub struct Determinized {
    pub h: Automaton,
    /// Output location to input location.
    pub loc_back: Vec<LocId>,
    /// Output edge to input edge.
    pub edge_back: Vec<EdgeId>,
}

/// A location name not yet used in `out`, preferring `want`. Product
/// names from one rewrite can feed the next, so a suffixed name must
/// never recreate a name the input already carried.
fn fresh_name(out: &Automaton, want: String) -> String {
    let taken = |n: &str| out.locations.iter().any(|l| l.name == n);
    if !taken(&want) {
        return want;
    }
    let mut k = out.locations.len();
    loop {
        let cand = format!("{want}~{k}");
        if !taken(&cand) {
            return cand;
        }
        k += 1;
    }
}

/// Replaces every reset `x := I` by `x := 0` and shifts every later
/// test on `x` by `I`. The pending window of each variable is tracked
/// in the location, starting from all-`{0}`, and only window
/// combinations reachable through the edge relation are materialized.
///
/// Every run of the input maps to a run of the output with the same
/// dwell times. The converse can fail: two shifted guards on the same
/// variable may justify themselves with different points of one reset
/// window, which no single run of the input can realize.
pub fn determinize_resets(h: &Automaton) -> Result<Determinized, NormalizeError> {
    if !h.classify().rectangular {
        return Err(NormalizeError::DiagonalAtoms);
    }
    let n = h.n_vars();
    let var_names: Vec<&str> = h.vars.iter().map(|s| s.as_str()).collect();
    let mut out = Automaton::new(&h.name, &var_names);
    let mut loc_back: Vec<LocId> = Vec::new();
    let mut edge_back: Vec<EdgeId> = Vec::new();
    let zero: Vec<Interval> = vec![Interval::singleton(0); n];
    let mut index: HashMap<(LocId, Vec<Interval>), LocId> = HashMap::new();
    let mut contexts: Vec<(LocId, Vec<Interval>)> = Vec::new();
    let mut queue: VecDeque<LocId> = VecDeque::new();

    #[allow(clippy::too_many_arguments)]
    fn intern(
        h: &Automaton,
        node: (LocId, Vec<Interval>),
        zero: &[Interval],
        out: &mut Automaton,
        index: &mut HashMap<(LocId, Vec<Interval>), LocId>,
        contexts: &mut Vec<(LocId, Vec<Interval>)>,
        loc_back: &mut Vec<LocId>,
        queue: &mut VecDeque<LocId>,
    ) -> LocId {
        if let Some(&id) = index.get(&node) {
            return id;
        }
        let base = h.location(node.0);
        let want = if node.1.as_slice() == zero {
            base.name.clone()
        } else {
            format!("{}~{}", base.name, out.locations.len())
        };
        let name = fresh_name(out, want);
        let id = out.add_location(
            &name,
            base.rates.clone(),
            shift_guard(&base.invariant, &node.1),
        );
        index.insert(node.clone(), id);
        contexts.push(node);
        loc_back.push(contexts.last().unwrap().0);
        queue.push_back(id);
        id
    }

    intern(
        h,
        (h.init, zero.clone()),
        &zero,
        &mut out,
        &mut index,
        &mut contexts,
        &mut loc_back,
        &mut queue,
    );
    while let Some(cur) = queue.pop_front() {
        let (base, ctx) = contexts[cur.0].clone();
        for e in h.out_edges(base) {
            let edge = h.edge(e);
            let guard = shift_guard(&edge.guard, &ctx);
            if guard.is_false() {
                continue;
            }
            let reset_vars: Vec<VarId> = edge.reset.reset_vars().collect();
            let mut ctx2 = ctx.clone();
            for &v in &reset_vars {
                ctx2[v.0] = *edge.reset.get(v).unwrap();
            }
            let trg = intern(
                h,
                (edge.trg, ctx2),
                &zero,
                &mut out,
                &mut index,
                &mut contexts,
                &mut loc_back,
                &mut queue,
            );
            out.add_edge(cur, guard, Reset::to_zero(n, &reset_vars), trg);
            edge_back.push(e);
        }
    }
    out.validate()?;
    Ok(Determinized {
        h: out,
        loc_back,
        edge_back,
    })
}

/// Where an output edge of [`bound_by_one`] comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOrigin {
    /// Carries over an input edge.
    Original(EdgeId),
    /// Rolls a variable's fractional part over from one to zero while
    /// stepping its integer part.
    Wrap(VarId),
}

/// Output of [`bound_by_one`].
#[derive(Debug, Clone)]
pub struct Bounded {
    pub h: Automaton,
    /// Output location to input location.
    pub loc_back: Vec<LocId>,
    /// Output edge to its origin.
    pub edge_back: Vec<EdgeOrigin>,
    /// Largest absolute constant of the input; integer parts saturate
    /// one above it.
    pub cmax: i64,
}

/// Keeps every variable inside `[0, 1]` by storing integer parts in the
/// location. One wrap edge per variable fires at value one, resets the
/// fractional part and steps the integer part, saturating one past the
/// largest input constant. The saturation bucket must lie strictly
/// above every constant: inside it no test can tell values apart, while
/// at the constant itself equality tests still can, so a lower cutoff
/// would let them fire on values that already wrapped beyond it. Guards
/// and invariants are rewritten over fractional parts via
/// [`fractional_guard`], and every output invariant additionally caps
/// every variable at one.
///
/// Requires resets to zero and rates bounded below by zero, so that a
/// fractional part never leaves `[0, 1]` between wraps.
pub fn bound_by_one(h: &Automaton) -> Result<Bounded, NormalizeError> {
    let class = h.classify();
    if !class.rectangular {
        return Err(NormalizeError::DiagonalAtoms);
    }
    if !class.non_negative_rates {
        return Err(NormalizeError::NegativeRates);
    }
    if !resets_to_zero(h) {
        return Err(NormalizeError::ResetsNotZero);
    }
    let n = h.n_vars();
    let cmax = h.cmax();
    let var_names: Vec<&str> = h.vars.iter().map(|s| s.as_str()).collect();
    let mut out = Automaton::new(&h.name, &var_names);
    let mut loc_back: Vec<LocId> = Vec::new();
    let mut edge_back: Vec<EdgeOrigin> = Vec::new();
    let bounds = Guard::conj(
        (0..n)
            .map(|v| Atom::cmp(VarId(v), Relation::Le, 1))
            .collect(),
    );
    let zero: Vec<i64> = vec![0; n];
    let mut index: HashMap<(LocId, Vec<i64>), LocId> = HashMap::new();
    let mut contexts: Vec<(LocId, Vec<i64>)> = Vec::new();
    let mut queue: VecDeque<LocId> = VecDeque::new();

    #[allow(clippy::too_many_arguments)]
    fn intern(
        h: &Automaton,
        node: (LocId, Vec<i64>),
        bounds: &Guard,
        out: &mut Automaton,
        index: &mut HashMap<(LocId, Vec<i64>), LocId>,
        contexts: &mut Vec<(LocId, Vec<i64>)>,
        loc_back: &mut Vec<LocId>,
        queue: &mut VecDeque<LocId>,
    ) -> LocId {
        if let Some(&id) = index.get(&node) {
            return id;
        }
        let base = h.location(node.0);
        let want = if node.1.iter().all(|&i| i == 0) {
            base.name.clone()
        } else {
            format!("{}~{}", base.name, out.locations.len())
        };
        let name = fresh_name(out, want);
        let invariant = fractional_guard(&base.invariant, &node.1).and(bounds);
        let id = out.add_location(&name, base.rates.clone(), invariant);
        index.insert(node.clone(), id);
        loc_back.push(node.0);
        contexts.push(node);
        queue.push_back(id);
        id
    }

    intern(
        h,
        (h.init, zero),
        &bounds,
        &mut out,
        &mut index,
        &mut contexts,
        &mut loc_back,
        &mut queue,
    );
    while let Some(cur) = queue.pop_front() {
        let (base, parts) = contexts[cur.0].clone();
        for e in h.out_edges(base) {
            let edge = h.edge(e);
            let guard = fractional_guard(&edge.guard, &parts);
            if guard.is_false() {
                continue;
            }
            let reset_vars: Vec<VarId> = edge.reset.reset_vars().collect();
            let mut parts2 = parts.clone();
            for &v in &reset_vars {
                parts2[v.0] = 0;
            }
            let trg = intern(
                h,
                (edge.trg, parts2),
                &bounds,
                &mut out,
                &mut index,
                &mut contexts,
                &mut loc_back,
                &mut queue,
            );
            out.add_edge(cur, guard, Reset::to_zero(n, &reset_vars), trg);
            edge_back.push(EdgeOrigin::Original(e));
        }
        for v in 0..n {
            let mut parts2 = parts.clone();
            parts2[v] = (parts[v] + 1).min(cmax + 1);
            let trg = intern(
                h,
                (base, parts2),
                &bounds,
                &mut out,
                &mut index,
                &mut contexts,
                &mut loc_back,
                &mut queue,
            );
            let guard = Guard::conj(vec![Atom::cmp(VarId(v), Relation::Eq, 1)]);
            out.add_edge(cur, guard, Reset::to_zero(n, &[VarId(v)]), trg);
            edge_back.push(EdgeOrigin::Wrap(VarId(v)));
        }
    }
    out.validate()?;
    Ok(Bounded {
        h: out,
        loc_back,
        edge_back,
        cmax,
    })
}

/// Output of [`strictify`]. Locations are unchanged; each output edge
/// fires a nonempty chain of input edges at one instant.
#[derive(Debug, Clone)]
pub struct Strictified {
    pub h: Automaton,
    /// Output edge to the input edges it fires, in order.
    pub edge_bursts: Vec<Vec<EdgeId>>,
}

/// Compresses every chain of input edges that can fire at a single
/// instant into one burst edge, so a run of the output never needs two
/// consecutive steps with zero dwell between them.
///
/// Within a burst no time passes: a variable reset by an earlier burst
/// edge is still zero, so later guards and the invariants of the
/// locations passed through are evaluated with those variables pinned
/// to zero. The final location's invariant is not part of the burst
/// guard; arrival leaves the target invariant unchecked. A burst that
/// repeats a simple cycle it already contains adds nothing over its
/// shorter form, so enumeration stops there; every prefix of an
/// admitted burst is admitted as well.
///
/// Requires resets to zero. Fails once the output would exceed
/// `max_edges` edges.
pub fn strictify(h: &Automaton, max_edges: usize) -> Result<Strictified, NormalizeError> {
    if !resets_to_zero(h) {
        return Err(NormalizeError::ResetsNotZero);
    }
    let var_names: Vec<&str> = h.vars.iter().map(|s| s.as_str()).collect();
    let mut out = Automaton::new(&h.name, &var_names);
    for l in &h.locations {
        out.add_location(&l.name, l.rates.clone(), l.invariant.clone());
    }
    out.init = h.init;
    let mut bursts: Vec<Vec<EdgeId>> = Vec::new();
    for l in 0..h.locations.len() {
        let mut path = Vec::new();
        extend_bursts(
            h,
            LocId(l),
            &mut path,
            Guard::True,
            BTreeSet::new(),
            max_edges,
            &mut out,
            &mut bursts,
        )?;
    }
    out.validate()?;
    Ok(Strictified {
        h: out,
        edge_bursts: bursts,
    })
}

#[allow(clippy::too_many_arguments)]
fn extend_bursts(
    h: &Automaton,
    src: LocId,
    path: &mut Vec<EdgeId>,
    guard: Guard,
    reset: BTreeSet<VarId>,
    max_edges: usize,
    out: &mut Automaton,
    bursts: &mut Vec<Vec<EdgeId>>,
) -> Result<(), NormalizeError> {
    let end = path.last().map(|e| h.edge(*e).trg);
    for e in h.out_edges(end.unwrap_or(src)) {
        path.push(e);
        if repeats_a_cycle(h, path) {
            path.pop();
            continue;
        }
        let mut g2 = guard.clone();
        if let Some(mid) = end {
            g2 = g2.and(&h.location(mid).invariant.subst_zero(&reset));
        }
        g2 = g2.and(&h.edge(e).guard.subst_zero(&reset));
        if g2.is_false() {
            path.pop();
            continue;
        }
        if out.edges.len() >= max_edges {
            path.pop();
            return Err(NormalizeError::TooManyBursts(max_edges));
        }
        let mut r2 = reset.clone();
        r2.extend(h.edge(e).reset.reset_vars());
        let rv: Vec<VarId> = r2.iter().copied().collect();
        out.add_edge(src, g2.clone(), Reset::to_zero(h.n_vars(), &rv), h.edge(e).trg);
        bursts.push(path.clone());
        extend_bursts(h, src, path, g2, r2, max_edges, out, bursts)?;
        path.pop();
    }
    Ok(())
}

/// Whether the last edge of `path` completes a second occurrence of a
/// simple cycle the path already contains. Only occurrences ending at
/// the last position can be new.
fn repeats_a_cycle(h: &Automaton, path: &[EdgeId]) -> bool {
    let n = path.len();
    for a in 0..n {
        let tail = &path[a..];
        if !is_simple_cycle(h, tail) {
            continue;
        }
        let len = n - a;
        for b in 0..a {
            if path[b..b + len] == *tail {
                return true;
            }
        }
    }
    false
}

/// Output of [`normalize`].
#[derive(Debug, Clone)]
pub struct Normalized {
    pub h: Automaton,
    /// Output locations whose input image is the requested goal.
    pub goals: Vec<LocId>,
    /// Output location to input location.
    pub loc_back: Vec<LocId>,
    /// Output edge to the input edges it fires, in order. Wrap steps
    /// have no input image and are dropped, so a chain may be empty.
    pub edge_lift: Vec<Vec<EdgeId>>,
}

/// Runs [`determinize_resets`], [`bound_by_one`] and [`strictify`] in
/// that order and composes their maps. Reaching any location of
/// `goals` in the output within a budget corresponds to reaching
/// `goal` in the input within the same budget, subject to the caveat
/// on [`determinize_resets`] when the input has nondeterministic
/// resets.
pub fn normalize(
    h: &Automaton,
    goal: LocId,
    max_edges: usize,
) -> Result<Normalized, NormalizeError> {
    let det = determinize_resets(h)?;
    let bnd = bound_by_one(&det.h)?;
    let st = strictify(&bnd.h, max_edges)?;
    let loc_back: Vec<LocId> = bnd.loc_back.iter().map(|&l| det.loc_back[l.0]).collect();
    let goals: Vec<LocId> = (0..st.h.locations.len())
        .map(LocId)
        .filter(|l| loc_back[l.0] == goal)
        .collect();
    let edge_lift: Vec<Vec<EdgeId>> = st
        .edge_bursts
        .iter()
        .map(|burst| {
            burst
                .iter()
                .filter_map(|&be| match bnd.edge_back[be.0] {
                    EdgeOrigin::Original(de) => Some(det.edge_back[de.0]),
                    EdgeOrigin::Wrap(_) => None,
                })
                .collect()
        })
        .collect();
    Ok(Normalized {
        h: st.h,
        goals,
        loc_back,
        edge_lift,
    })
}

/// Replays a witness chain found on a normalized automaton as a run of
/// the original automaton. Wrap steps disappear and their dwell folds
/// into the next fired edge; dwell kinds merge so a step known to take
/// positive time keeps that requirement.
///
/// Returns `None` when no run of the original can follow the lifted
/// chain within the budget, which can happen for inputs with
/// nondeterministic resets.
pub fn lift_witness(
    h: &Automaton,
    norm: &Normalized,
    init: &State,
    chain: &[(EdgeId, Dwell)],
    t_bound: &Q,
) -> Option<Run> {
    let mut lifted: Vec<(EdgeId, Dwell)> = Vec::new();
    let mut pending = Dwell::Zero;
    for (e, mode) in chain {
        pending = merge_dwell(pending, *mode);
        let burst = &norm.edge_lift[e.0];
        for (k, oe) in burst.iter().enumerate() {
            let m = if k == 0 { pending } else { Dwell::Zero };
            lifted.push((*oe, m));
        }
        if !burst.is_empty() {
            pending = Dwell::Zero;
        }
    }
    chain_witness(h, init, &lifted, t_bound)
}

// Positive dwell anywhere keeps the merged step positive; otherwise a
// free component leaves it free.
fn merge_dwell(a: Dwell, b: Dwell) -> Dwell {
    match (a, b) {
        (Dwell::Positive, _) | (_, Dwell::Positive) => Dwell::Positive,
        (Dwell::Free, _) | (_, Dwell::Free) => Dwell::Free,
        _ => Dwell::Zero,
    }
}

/// Mechanical check of the shape the pipeline aims for: singular
/// non-negative rates, rectangular constraints, deterministic resets,
/// and every guard either `true` on an edge that resets nothing, or a
/// conjunction of `x = 1` atoms whose variables are exactly the ones
/// the edge resets to zero.
pub fn is_equality_normal_form(h: &Automaton) -> bool {
    let class = h.classify();
    if !(class.singular
        && class.non_negative_rates
        && class.rectangular
        && class.deterministic_resets)
    {
        return false;
    }
    let one = Interval::singleton(1);
    let zero = Interval::singleton(0);
    h.edges.iter().all(|e| match &e.guard {
        Guard::True => e.reset.is_identity(),
        Guard::False => false,
        Guard::Conj(atoms) => {
            let mut tested: BTreeSet<VarId> = BTreeSet::new();
            for a in atoms {
                match a {
                    Atom::Rect { var, int } if *int == one => {
                        tested.insert(*var);
                    }
                    _ => return false,
                }
            }
            let reset: BTreeSet<VarId> = e.reset.reset_vars().collect();
            reset == tested && reset.iter().all(|&v| e.reset.get(v) == Some(&zero))
        }
    })
}
