//! Hand-built example models and seeded random generators.
//!
//! Everything here is deterministic: random generation always goes
//! through a caller-supplied RNG, and tests seed it explicitly, so a
//! failing case can be reproduced from its seed.

use crate::automaton::{Automaton, Reset};
use crate::guard::{Atom, Guard, Relation};
use crate::ids::VarId;
use crate::interval::Interval;
use crate::lra::{LinCon, LinRel, LinSys, LinTerm};
use crate::rational::Q;
use crate::semantics::{run_of, Run, State, TimedPath};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A fresh deterministic RNG for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The two-variable, five-location automaton used as the running example
/// throughout the tests.
///
/// Every location caps both variables at one. The first variable is the
/// "fast" one in the initial location; the only way into the sink `l4` is
/// the equality-guarded chain through `l3`, and the branch through `l2`
/// is dead because its exit guard needs a value of 3 that the invariant
/// never allows.
///
/// Edge order: `l0->l1`, `l1->l0`, `l0->l2`, `l0->l3`, `l2->l2`,
/// `l2->l4`, `l3->l4`.
pub fn fig1() -> Automaton {
    let mut h = Automaton::new("fig1", &["x", "y"]);
    let x = VarId(0);
    let y = VarId(1);
    let inv = Guard::conj(vec![
        Atom::cmp(x, Relation::Le, 1),
        Atom::cmp(y, Relation::Le, 1),
    ]);
    let r = |a: i64, b: i64| vec![Interval::singleton(a), Interval::singleton(b)];
    let l0 = h.add_location("l0", r(5, 2), inv.clone());
    let l1 = h.add_location("l1", r(2, 5), inv.clone());
    let l2 = h.add_location("l2", r(1, 17), inv.clone());
    let l3 = h.add_location("l3", r(10, 7), inv.clone());
    let l4 = h.add_location("l4", r(0, 0), inv);
    let guard_x1 = Guard::conj(vec![Atom::cmp(x, Relation::Eq, 1)]);
    let guard_y1 = Guard::conj(vec![Atom::cmp(y, Relation::Eq, 1)]);
    let reset_x = Reset::to_zero(2, &[x]);
    let reset_y = Reset::to_zero(2, &[y]);
    h.add_edge(l0, guard_x1.clone(), reset_x.clone(), l1);
    h.add_edge(l1, guard_y1.clone(), reset_y.clone(), l0);
    h.add_edge(l0, guard_x1.clone(), reset_x.clone(), l2);
    h.add_edge(l0, guard_x1.clone(), reset_x.clone(), l3);
    h.add_edge(
        l2,
        Guard::conj(vec![Atom::cmp(y, Relation::Le, 1)]),
        reset_y,
        l2,
    );
    h.add_edge(
        l2,
        Guard::conj(vec![Atom::cmp(x, Relation::Eq, 3)]),
        reset_x.clone(),
        l4,
    );
    h.add_edge(l3, guard_x1, reset_x, l4);
    h.init = l0;
    h.validate().expect("the example automaton is well-formed");
    h
}

/// Shape parameters for [`random_automaton`].
#[derive(Debug, Clone)]
pub struct GenConfig {
    pub n_vars: usize,
    pub n_locs: usize,
    pub n_edges: usize,
    pub max_rate: i64,
    pub max_const: i64,
    /// Singleton rates only.
    pub singular: bool,
    /// Rate intervals within `[0, inf)`.
    pub nonneg: bool,
    /// Singleton resets only.
    pub det_resets: bool,
    /// All resets go to zero (implies deterministic resets).
    pub resets_to_zero: bool,
    pub allow_strict: bool,
    pub allow_diag: bool,
}

impl GenConfig {
    /// A small rectangular automaton with non-negative rates, the class
    /// the decision procedure accepts.
    pub fn small_nonneg(n_vars: usize, n_locs: usize, n_edges: usize) -> GenConfig {
        GenConfig {
            n_vars,
            n_locs,
            n_edges,
            max_rate: 2,
            max_const: 2,
            singular: false,
            nonneg: true,
            det_resets: false,
            resets_to_zero: false,
            allow_strict: false,
            allow_diag: false,
        }
    }
}

fn random_rate(cfg: &GenConfig, rng: &mut impl Rng) -> Interval {
    let lo_min = if cfg.nonneg { 0 } else { -cfg.max_rate };
    let a = rng.gen_range(lo_min..=cfg.max_rate);
    if cfg.singular || rng.gen_bool(0.5) {
        Interval::singleton(a)
    } else {
        let b = rng.gen_range(a..=cfg.max_rate);
        Interval::closed(a, b)
    }
}

fn random_rel(cfg: &GenConfig, rng: &mut impl Rng) -> Relation {
    let mut rels = vec![Relation::Le, Relation::Ge, Relation::Eq];
    if cfg.allow_strict {
        rels.push(Relation::Lt);
        rels.push(Relation::Gt);
    }
    rels[rng.gen_range(0..rels.len())]
}

fn random_guard(cfg: &GenConfig, rng: &mut impl Rng) -> Guard {
    if rng.gen_bool(0.4) {
        return Guard::True;
    }
    let n_atoms = rng.gen_range(1..=2);
    let mut atoms = Vec::new();
    for _ in 0..n_atoms {
        if cfg.allow_diag && cfg.n_vars >= 2 && rng.gen_bool(0.3) {
            let x = rng.gen_range(0..cfg.n_vars);
            let mut y = rng.gen_range(0..cfg.n_vars);
            while y == x {
                y = rng.gen_range(0..cfg.n_vars);
            }
            atoms.push(Atom::Diag {
                x: VarId(x),
                y: VarId(y),
                rel: random_rel(cfg, rng),
                k: rng.gen_range(-cfg.max_const..=cfg.max_const),
            });
        } else {
            let v = VarId(rng.gen_range(0..cfg.n_vars));
            let k = rng.gen_range(0..=cfg.max_const);
            atoms.push(Atom::cmp(v, random_rel(cfg, rng), k));
        }
    }
    Guard::conj(atoms)
}

fn random_invariant(cfg: &GenConfig, rng: &mut impl Rng) -> Guard {
    if rng.gen_bool(0.4) {
        return Guard::True;
    }
    let mut atoms = Vec::new();
    for v in 0..cfg.n_vars {
        if rng.gen_bool(0.5) {
            let k = rng.gen_range(1..=cfg.max_const.max(1));
            let rel = if cfg.allow_strict && rng.gen_bool(0.25) {
                Relation::Lt
            } else {
                Relation::Le
            };
            atoms.push(Atom::cmp(VarId(v), rel, k));
        }
    }
    Guard::conj(atoms)
}

fn random_reset(cfg: &GenConfig, rng: &mut impl Rng) -> Reset {
    let mut r = Reset::identity(cfg.n_vars);
    for v in 0..cfg.n_vars {
        if rng.gen_bool(1.0 / 3.0) {
            let int = if cfg.resets_to_zero {
                Interval::singleton(0)
            } else if cfg.det_resets || rng.gen_bool(0.6) {
                Interval::singleton(rng.gen_range(0..=cfg.max_const))
            } else {
                let a = rng.gen_range(0..=cfg.max_const);
                let b = rng.gen_range(a..=cfg.max_const);
                Interval::closed(a, b)
            };
            r.set(VarId(v), int);
        }
    }
    r
}

/// A random well-formed automaton with the given shape.
pub fn random_automaton(cfg: &GenConfig, rng: &mut impl Rng) -> Automaton {
    let var_names: Vec<String> = (0..cfg.n_vars).map(|i| format!("x{}", i)).collect();
    let var_refs: Vec<&str> = var_names.iter().map(|s| s.as_str()).collect();
    let mut h = Automaton::new("gen", &var_refs);
    for i in 0..cfg.n_locs {
        let rates = (0..cfg.n_vars).map(|_| random_rate(cfg, rng)).collect();
        let inv = random_invariant(cfg, rng);
        h.add_location(&format!("s{}", i), rates, inv);
    }
    for _ in 0..cfg.n_edges {
        let src = crate::ids::LocId(rng.gen_range(0..cfg.n_locs));
        let trg = crate::ids::LocId(rng.gen_range(0..cfg.n_locs));
        let guard = random_guard(cfg, rng);
        let reset = random_reset(cfg, rng);
        h.add_edge(src, guard, reset, trg);
    }
    h.init = crate::ids::LocId(0);
    h.validate().expect("generated automaton is well-formed");
    h
}

/// A random automaton in equality normal form: singular non-negative
/// rates, every invariant caps every variable at one, and every guard is
/// either `true` with no reset or a conjunction of `x == 1` atoms whose
/// tested variables are exactly the reset ones.
pub fn random_normal_form(
    n_vars: usize,
    n_locs: usize,
    n_edges: usize,
    max_rate: i64,
    rng: &mut impl Rng,
) -> Automaton {
    let var_names: Vec<String> = (0..n_vars).map(|i| format!("x{}", i)).collect();
    let var_refs: Vec<&str> = var_names.iter().map(|s| s.as_str()).collect();
    let mut h = Automaton::new("nf", &var_refs);
    let inv = Guard::conj(
        (0..n_vars)
            .map(|v| Atom::cmp(VarId(v), Relation::Le, 1))
            .collect(),
    );
    for i in 0..n_locs {
        let rates = (0..n_vars)
            .map(|_| Interval::singleton(rng.gen_range(0..=max_rate)))
            .collect();
        h.add_location(&format!("s{}", i), rates, inv.clone());
    }
    for _ in 0..n_edges {
        let src = crate::ids::LocId(rng.gen_range(0..n_locs));
        let trg = crate::ids::LocId(rng.gen_range(0..n_locs));
        if rng.gen_bool(0.5) {
            h.add_edge(src, Guard::True, Reset::identity(n_vars), trg);
        } else {
            let tested: Vec<VarId> = (0..n_vars)
                .filter(|_| rng.gen_bool(0.5))
                .map(VarId)
                .collect();
            let tested = if tested.is_empty() {
                vec![VarId(rng.gen_range(0..n_vars))]
            } else {
                tested
            };
            let guard = Guard::conj(
                tested
                    .iter()
                    .map(|v| Atom::cmp(*v, Relation::Eq, 1))
                    .collect(),
            );
            h.add_edge(src, guard, Reset::to_zero(n_vars, &tested), trg);
        }
    }
    h.init = crate::ids::LocId(0);
    h.validate().expect("generated automaton is well-formed");
    h
}

/// A rational `n / (d * scale)` with `n` drawn from `0..=d`.
fn random_fraction_of(budget: &Q, rng: &mut impl Rng) -> Q {
    let d = 8;
    let n = rng.gen_range(0..=d);
    budget * &Q::ratio(n, d)
}

/// A replayable run on a normal-form automaton that fires only
/// `true`-guarded edges and whose duration stays within
/// `1 / (rmax + 1)`, which also keeps every sampled value at or below
/// one. Returns `None` if the walk gets stuck before taking any step.
pub fn random_equality_free_run(
    h: &Automaton,
    max_steps: usize,
    rng: &mut impl Rng,
) -> Option<Run> {
    let rmax = h.rmax();
    let budget = Q::one() / Q::int(rmax + 1);
    // Starting at or below 1/(rmax+1) leaves room for rmax/(rmax+1) of
    // growth without crossing one.
    let vals: Vec<Q> = (0..h.n_vars())
        .map(|_| random_fraction_of(&budget, rng))
        .collect();
    let s0 = State::new(h.init, vals);
    let mut remaining = budget.clone();
    let mut at = h.init;
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let candidates: Vec<_> = h
            .out_edges(at)
            .into_iter()
            .filter(|e| h.edge(*e).guard.is_true() && h.edge(*e).reset.is_identity())
            .collect();
        if candidates.is_empty() {
            break;
        }
        let e = candidates[rng.gen_range(0..candidates.len())];
        let delay = random_fraction_of(&remaining, rng);
        remaining -= &delay;
        steps.push((delay, e));
        at = h.edge(e).trg;
    }
    if steps.is_empty() {
        return None;
    }
    let path = TimedPath::singular(h, &steps).expect("singular by construction");
    let run = run_of(h, s0, path).expect("the generated walk respects the semantics");
    Some(run)
}

/// A random structurally chained timed path of up to `max_len` steps.
/// The delays, slopes and reset choices are well-typed but the path is
/// not necessarily replayable.
pub fn random_timed_path(h: &Automaton, max_len: usize, rng: &mut impl Rng) -> TimedPath {
    let mut at = crate::ids::LocId(rng.gen_range(0..h.locations.len()));
    let mut steps = Vec::new();
    for _ in 0..max_len {
        let out = h.out_edges(at);
        if out.is_empty() {
            break;
        }
        let e = out[rng.gen_range(0..out.len())];
        let delay = Q::ratio(rng.gen_range(0..=8), 8);
        let rates: Vec<Q> = h
            .location(at)
            .rates
            .iter()
            .map(|r| r.pick_element())
            .collect();
        let mut step = crate::semantics::TimedStep::new(delay, rates, e);
        for v in h.edge(e).reset.reset_vars() {
            let int = h.edge(e).reset.get(v).unwrap();
            if int.as_singleton().is_none() {
                step.reset_choice[v.0] = Some(int.pick_element());
            }
        }
        steps.push(step);
        at = h.edge(e).trg;
    }
    TimedPath::new(steps)
}

/// A random small linear system: up to `max_unknowns` unknowns, up to
/// `max_cons` constraints, integer coefficients and constants in
/// `[-4, 4]`.
pub fn random_linsys(max_unknowns: usize, max_cons: usize, rng: &mut impl Rng) -> LinSys {
    let n = rng.gen_range(1..=max_unknowns);
    let m = rng.gen_range(1..=max_cons);
    let mut sys = LinSys::new(n);
    for _ in 0..m {
        let mut term = LinTerm::constant(Q::int(rng.gen_range(-4..=4)));
        for u in 0..n {
            let c = rng.gen_range(-4..=4);
            if c != 0 {
                term.add_coef(u, &Q::int(c));
            }
        }
        let rel = match rng.gen_range(0..6) {
            0..=2 => LinRel::Le,
            3 | 4 => LinRel::Lt,
            _ => LinRel::Eq,
        };
        sys.push(LinCon { term, rel });
    }
    sys
}

/// Independent satisfiability check by exhaustive vertex enumeration.
///
/// Strict constraints `t < 0` are replaced by `t + eps <= 0` with a
/// single shared fresh unknown `eps`, bounded to `[0, 1]`; the original
/// system is satisfiable over the rationals iff some vertex of the boxed,
/// relaxed polytope has `eps > 0`. The box at `2^20` is far beyond any
/// value a system with coefficients bounded by 4 can force, so it never
/// cuts off a needed vertex.
pub fn vertex_feasible(sys: &LinSys) -> bool {
    let n = sys.n_unknowns;
    let eps = n;
    let d = n + 1;
    let big = Q::int(1 << 20);

    // Rows: term <= 0 or term = 0 over n+1 unknowns.
    let mut rows: Vec<(LinTerm, LinRel)> = Vec::new();
    for con in &sys.cons {
        let mut term = con.term.clone();
        let rel = match con.rel {
            LinRel::Lt => {
                term.add_coef(eps, &Q::one());
                LinRel::Le
            }
            other => other,
        };
        rows.push((term, rel));
    }
    let mut eps_lo = LinTerm::zero();
    eps_lo.add_coef(eps, &-Q::one());
    rows.push((eps_lo, LinRel::Le));
    let mut eps_hi = LinTerm::constant(-Q::one());
    eps_hi.add_coef(eps, &Q::one());
    rows.push((eps_hi, LinRel::Le));
    for u in 0..n {
        let mut up = LinTerm::constant(-big.clone());
        up.add_coef(u, &Q::one());
        rows.push((up, LinRel::Le));
        let mut down = LinTerm::constant(-big.clone());
        down.add_coef(u, &-Q::one());
        rows.push((down, LinRel::Le));
    }

    let holds = |point: &[Q]| {
        rows.iter().all(|(term, rel)| {
            let v = term.eval(point);
            match rel {
                LinRel::Le => !v.is_positive(),
                LinRel::Eq => v.is_zero(),
                LinRel::Lt => unreachable!("strict rows were relaxed"),
            }
        })
    };

    // Try every d-subset of rows as a candidate tight set.
    let m = rows.len();
    let mut subset: Vec<usize> = (0..d).collect();
    let mut best_eps: Option<Q> = None;
    loop {
        if let Some(point) = solve_square(&subset, &rows, d) {
            if holds(&point) {
                let e = point[eps].clone();
                if best_eps.as_ref().map(|b| &e > b).unwrap_or(true) {
                    best_eps = Some(e);
                }
            }
        }
        // Advance the combination.
        let mut i = d;
        loop {
            if i == 0 {
                return best_eps.map(|e| e.is_positive()).unwrap_or(false);
            }
            i -= 1;
            if subset[i] != i + m - d {
                subset[i] += 1;
                for j in i + 1..d {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Solves the square system in which the selected rows are tight
/// (treated as equalities). Returns `None` when the rows are not
/// independent.
fn solve_square(subset: &[usize], rows: &[(LinTerm, LinRel)], d: usize) -> Option<Vec<Q>> {
    // Augmented matrix [A | -cst], one row per selected constraint.
    let mut m: Vec<Vec<Q>> = subset
        .iter()
        .map(|&r| {
            let (term, _) = &rows[r];
            let mut row: Vec<Q> = (0..d).map(|u| term.coef(u)).collect();
            row.push(-term.cst.clone());
            row
        })
        .collect();
    for col in 0..d {
        let pivot = (col..d).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for cell in m[col][col..=d].iter_mut() {
            *cell = &*cell / &p;
        }
        let pivot_row: Vec<Q> = m[col][col..=d].to_vec();
        for (r, row) in m.iter_mut().enumerate().take(d) {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (cell, pc) in row[col..=d].iter_mut().zip(&pivot_row) {
                    *cell = &*cell - &(&f * pc);
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[d].clone()).collect())
}
