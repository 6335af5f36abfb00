//! Syntactic compression of timed paths.
//!
//! A path that takes the same simple cycle twice can be shortened by
//! folding the two passes into one, adding up the dwell times
//! position by position. Iterating this to a fixpoint yields a path
//! that contains each simple cycle at most once, which caps its length
//! by a function of the automaton's size alone. The compression never
//! looks at guards or invariants, so the result is not guaranteed to
//! replay; what it preserves exactly is the total duration and, for
//! every variable, the summed rate-times-dwell contribution.
//!
//! [`contract`] refines this by first cutting the path at the first
//! and last edge that resets each variable. Those steps are kept
//! verbatim and only the stretches between them are compressed, so the
//! elapsed time from the start of the path to each such reset is also
//! preserved.

use crate::automaton::Automaton;
use crate::ids::{EdgeId, VarId};
use crate::semantics::{TimedPath, TimedStep};
use num::{BigUint, One};

/// Longest possible path that contains each simple cycle at most once:
/// `|Loc| * (2^(|Edges|+1) + 1)`.
pub fn cycle_free_cap(h: &Automaton) -> BigUint {
    let pow = BigUint::one() << (h.edges.len() + 1);
    BigUint::from(h.locations.len()) * (pow + 1u32)
}

/// Length cap for [`contract`] output: at most `2|X|` kept reset steps
/// and `2|X| + 1` compressed stretches of at most [`cycle_free_cap`]
/// steps each.
pub fn path_cap(h: &Automaton) -> BigUint {
    let n = BigUint::from(2 * h.n_vars());
    &n + (&n + 1u32) * cycle_free_cap(h)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionReport {
    pub input_len: usize,
    pub output_len: usize,
    /// Number of fold operations applied.
    pub iterations: usize,
    /// `[j, k, j2, k2]` per fold: the two merged windows, indexed into
    /// the working path at the time of that fold (offset by the
    /// enclosing segment's start when folding between kept resets).
    pub merges: Vec<[usize; 4]>,
    pub cycle_free_cap: BigUint,
    pub path_cap: BigUint,
}

/// First and last positions resetting each variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetLandmarks {
    /// Indexed by variable; each entry holds zero, one, or two
    /// positions, in increasing order.
    pub per_var: Vec<Vec<usize>>,
}

impl ResetLandmarks {
    /// All landmark positions across variables, sorted and deduplicated.
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.per_var.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

pub fn reset_landmarks(h: &Automaton, path: &TimedPath) -> ResetLandmarks {
    let per_var = (0..h.n_vars())
        .map(|x| {
            let mut hits = path
                .steps
                .iter()
                .enumerate()
                .filter(|(_, s)| h.edge(s.edge).reset.get(VarId(x)).is_some())
                .map(|(i, _)| i);
            match (hits.next(), hits.next_back()) {
                (None, _) => Vec::new(),
                (Some(f), None) => vec![f],
                (Some(f), Some(l)) => vec![f, l],
            }
        })
        .collect();
    ResetLandmarks { per_var }
}

pub(crate) fn is_simple_cycle(h: &Automaton, edges: &[EdgeId]) -> bool {
    let first = match edges.first() {
        Some(e) => *e,
        None => return false,
    };
    if h.edge(*edges.last().unwrap()).trg != h.edge(first).src {
        return false;
    }
    let mut srcs: Vec<_> = edges.iter().map(|e| h.edge(*e).src).collect();
    srcs.sort_unstable();
    srcs.windows(2).all(|w| w[0] != w[1])
}

/// The least `[j, k, j2, k2]` such that the windows `j..=k` and
/// `j2..=k2` hold the same edges and form a simple cycle.
fn find_fold(h: &Automaton, path: &TimedPath) -> Option<[usize; 4]> {
    let n = path.len();
    if n < 2 {
        return None;
    }
    let e: Vec<EdgeId> = path.steps.iter().map(|s| s.edge).collect();
    for j in 0..n - 1 {
        for k in j..n - 1 {
            if !is_simple_cycle(h, &e[j..=k]) {
                continue;
            }
            let len = k - j + 1;
            for j2 in k + 1..n {
                let k2 = j2 + len - 1;
                if k2 > n - 1 {
                    break;
                }
                if e[j..=k] == e[j2..=k2] {
                    return Some([j, k, j2, k2]);
                }
            }
        }
    }
    None
}

/// Merges the window at `j2..=k2` into the one at `j..=k`. Dwell times
/// add up; the merged rate vector is the dwell-weighted average, which
/// keeps each variable's total contribution unchanged and stays inside
/// the (convex) rate intervals. Reset choices of the first window win.
fn fold_at(path: &TimedPath, [j, k, j2, k2]: [usize; 4]) -> TimedPath {
    let mut steps = Vec::with_capacity(path.len() - (k - j + 1));
    steps.extend_from_slice(&path.steps[..j]);
    for m in 0..=(k - j) {
        let a = &path.steps[j + m];
        let b = &path.steps[j2 + m];
        debug_assert_eq!(a.edge, b.edge);
        let t = &a.delay + &b.delay;
        let rates = if t.is_zero() {
            a.rates.clone()
        } else {
            a.rates
                .iter()
                .zip(&b.rates)
                .map(|(ra, rb)| (ra * &a.delay + rb * &b.delay) / &t)
                .collect()
        };
        let mut s = TimedStep::new(t, rates, a.edge);
        s.reset_choice = a.reset_choice.clone();
        steps.push(s);
    }
    steps.extend_from_slice(&path.steps[k + 1..j2]);
    steps.extend_from_slice(&path.steps[k2 + 1..]);
    TimedPath::new(steps)
}

/// One fold, or the path unchanged when no simple cycle repeats.
pub fn contract_once(h: &Automaton, path: &TimedPath) -> TimedPath {
    match find_fold(h, path) {
        Some(q) => fold_at(path, q),
        None => path.clone(),
    }
}

/// Folds until no simple cycle occurs twice. The output length is at
/// most [`cycle_free_cap`]; duration and per-variable effect match the
/// input exactly.
pub fn contract_fixpoint(h: &Automaton, path: &TimedPath) -> (TimedPath, ContractionReport) {
    let mut cur = path.clone();
    let mut merges = Vec::new();
    while let Some(q) = find_fold(h, &cur) {
        cur = fold_at(&cur, q);
        merges.push(q);
    }
    let report = ContractionReport {
        input_len: path.len(),
        output_len: cur.len(),
        iterations: merges.len(),
        merges,
        cycle_free_cap: cycle_free_cap(h),
        path_cap: path_cap(h),
    };
    (cur, report)
}

/// Compresses between reset landmarks. The first and last step to
/// reset each variable are kept as they are, with their distance from
/// the path start intact; everything in between is folded to fixpoint.
/// The output length is at most [`path_cap`].
pub fn contract(h: &Automaton, path: &TimedPath) -> (TimedPath, ContractionReport) {
    let marks = reset_landmarks(h, path).union();
    let mut steps = Vec::new();
    let mut merges = Vec::new();
    let mut iterations = 0;
    let mut start = 0;
    let mut compress = |lo: usize, hi: usize, steps: &mut Vec<TimedStep>| {
        let seg = TimedPath::new(path.steps[lo..hi].to_vec());
        let (folded, rep) = contract_fixpoint(h, &seg);
        iterations += rep.iterations;
        merges.extend(
            rep.merges
                .iter()
                .map(|&[a, b, c, d]| [a + lo, b + lo, c + lo, d + lo]),
        );
        steps.extend(folded.steps);
    };
    for &i in &marks {
        compress(start, i, &mut steps);
        steps.push(path.steps[i].clone());
        start = i + 1;
    }
    compress(start, path.len(), &mut steps);
    let out = TimedPath::new(steps);
    let report = ContractionReport {
        input_len: path.len(),
        output_len: out.len(),
        iterations,
        merges,
        cycle_free_cap: cycle_free_cap(h),
        path_cap: path_cap(h),
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::Reset;
    use crate::guard::Guard;
    use crate::interval::Interval;
    use crate::rational::Q;
    use crate::semantics::{effect, run_of};
    use crate::testgen::{
        fig1, random_automaton, random_equality_free_run, random_normal_form, random_timed_path,
        rng, GenConfig,
    };

    /// One entry location and a two-edge loop below it.
    fn hook() -> Automaton {
        let mut h = Automaton::new("hook", &["x"]);
        let l0 = h.add_location("l0", vec![Interval::singleton(1)], Guard::True);
        let l1 = h.add_location("l1", vec![Interval::singleton(2)], Guard::True);
        let l2 = h.add_location("l2", vec![Interval::singleton(3)], Guard::True);
        h.add_edge(l0, Guard::True, Reset::identity(1), l1);
        h.add_edge(l1, Guard::True, Reset::identity(1), l2);
        h.add_edge(l2, Guard::True, Reset::identity(1), l1);
        h.init = l0;
        h.validate().unwrap();
        h
    }

    fn path(h: &Automaton, steps: &[(i64, usize)]) -> TimedPath {
        TimedPath::singular(
            h,
            &steps
                .iter()
                .map(|(t, e)| (Q::int(*t), EdgeId(*e)))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn a_repeated_two_edge_cycle_folds_once() {
        let h = hook();
        // e1.e2 goes l1 -> l2 -> l1: a simple cycle taken twice.
        let p = path(&h, &[(1, 0), (2, 1), (3, 2), (4, 1), (5, 2)]);
        let folded = contract_once(&h, &p);
        assert_eq!(
            folded.steps.iter().map(|s| s.edge).collect::<Vec<_>>(),
            vec![EdgeId(0), EdgeId(1), EdgeId(2)]
        );
        let delays: Vec<Q> = folded.steps.iter().map(|s| s.delay.clone()).collect();
        assert_eq!(delays, vec![Q::int(1), Q::int(6), Q::int(8)]);
        assert_eq!(folded.duration(), Q::int(15));
        assert_eq!(p.duration(), Q::int(15));
        // Now each simple cycle occurs at most once.
        let again = contract_once(&h, &folded);
        assert_eq!(again, folded);
    }

    #[test]
    fn fixpoint_preserves_duration_and_effect() {
        let mut r = rng(71);
        let cfg = GenConfig::small_nonneg(2, 3, 6);
        let mut checked = 0;
        for _ in 0..40 {
            let h = random_automaton(&cfg, &mut r);
            let p = random_timed_path(&h, 50, &mut r);
            if p.len() < 10 {
                continue;
            }
            checked += 1;
            let (out, rep) = contract_fixpoint(&h, &p);
            assert_eq!(out.duration(), p.duration());
            for x in 0..h.n_vars() {
                assert_eq!(effect(&out, VarId(x)), effect(&p, VarId(x)));
            }
            assert!(out.len() <= p.len());
            assert_eq!(rep.input_len, p.len());
            assert_eq!(rep.output_len, out.len());
            assert!(find_fold(&h, &out).is_none());
            assert!(BigUint::from(out.len()) <= rep.cycle_free_cap);
        }
        assert!(checked > 20, "only {} paths were long enough", checked);
    }

    #[test]
    fn landmarks_keep_first_and_last_reset_only() {
        let mut h = Automaton::new("resets", &["x", "y"]);
        let l = h.add_location("l", vec![Interval::singleton(1); 2], Guard::True);
        let mut rx = Reset::identity(2);
        rx.set(VarId(0), Interval::singleton(0));
        h.add_edge(l, Guard::True, Reset::identity(2), l);
        h.add_edge(l, Guard::True, rx, l);
        h.init = l;
        h.validate().unwrap();
        // x is reset at positions 2, 7 and 9; y never.
        let p = path(
            &h,
            &[
                (1, 0),
                (1, 0),
                (1, 1),
                (1, 0),
                (1, 0),
                (1, 0),
                (1, 0),
                (1, 1),
                (1, 0),
                (1, 1),
            ],
        );
        let lm = reset_landmarks(&h, &p);
        assert_eq!(lm.per_var[0], vec![2, 9]);
        assert_eq!(lm.per_var[1], Vec::<usize>::new());
        assert_eq!(lm.union(), vec![2, 9]);

        let once = path(&h, &[(1, 0), (1, 0), (1, 0), (1, 0), (1, 1)]);
        assert_eq!(reset_landmarks(&h, &once).per_var[0], vec![4]);
    }

    #[test]
    fn contract_without_resets_equals_plain_fixpoint() {
        let h = hook();
        let p = path(&h, &[(1, 0), (2, 1), (3, 2), (4, 1), (5, 2)]);
        let (a, _) = contract(&h, &p);
        let (b, _) = contract_fixpoint(&h, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn caps_on_the_running_example() {
        let h = fig1();
        assert_eq!(cycle_free_cap(&h), BigUint::from(1285u32));
        assert_eq!(path_cap(&h), BigUint::from(6429u32));
    }

    #[test]
    fn landmark_distances_survive_contraction() {
        let mut r = rng(72);
        let cfg = GenConfig {
            resets_to_zero: true,
            ..GenConfig::small_nonneg(2, 3, 7)
        };
        let mut with_landmarks = 0;
        for _ in 0..40 {
            let h = random_automaton(&cfg, &mut r);
            let p = random_timed_path(&h, 40, &mut r);
            let (out, rep) = contract(&h, &p);
            assert_eq!(out.duration(), p.duration());
            assert!(BigUint::from(out.len()) <= rep.path_cap);
            let before = reset_landmarks(&h, &p);
            let after = reset_landmarks(&h, &out);
            let prefix = |pp: &TimedPath, upto: usize| {
                pp.steps[..=upto]
                    .iter()
                    .map(|s| s.delay.clone())
                    .sum::<Q>()
            };
            for x in 0..h.n_vars() {
                assert_eq!(before.per_var[x].len(), after.per_var[x].len());
                if !before.per_var[x].is_empty() {
                    with_landmarks += 1;
                }
                for (i, j) in before.per_var[x].iter().zip(&after.per_var[x]) {
                    assert_eq!(
                        h.edge(p.steps[*i].edge).src,
                        h.edge(out.steps[*j].edge).src
                    );
                    assert_eq!(prefix(&p, *i), prefix(&out, *j));
                }
            }
        }
        assert!(with_landmarks > 10);
    }

    #[test]
    fn short_bounded_runs_replay_after_contraction() {
        // Equality-free runs of small duration keep every variable
        // under 1, so the compressed path must replay and land on the
        // same final state.
        let mut r = rng(73);
        let mut replayed = 0;
        for seed in 0..80 {
            let mut gen = rng(9000 + seed);
            let h = random_normal_form(2, 3, 6, 2, &mut gen);
            let Some(run) = random_equality_free_run(&h, 30, &mut r) else {
                continue;
            };
            let (out, rep) = contract(&h, &run.path);
            let replay = run_of(&h, run.initial.clone(), out)
                .expect("contracted equality-free path must replay");
            assert_eq!(replay.final_state(), run.final_state());
            assert_eq!(replay.duration(), run.duration());
            assert!(BigUint::from(replay.len()) <= rep.path_cap);
            replayed += 1;
        }
        assert!(replayed > 30, "only {} runs replayed", replayed);
    }
}
