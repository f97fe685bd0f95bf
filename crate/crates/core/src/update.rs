//! Re-optimization after edits that prefers keeping previously shown labels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateId, ConflictGraph, Labeling, UpdateParams};
use crate::solvers::{self, Algorithm, Progress, SolverParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub ratio: f64,
    pub kept: usize,
    pub added: usize,
    pub dropped: usize,
}

/// Intersection over union of two labelings; two empty labelings are fully stable.
pub fn stability(old: &Labeling, new: &Labeling) -> StabilityReport {
    let kept = old.selected.intersection(&new.selected).count();
    let added = new.len() - kept;
    let dropped = old.len() - kept;
    let union = kept + added + dropped;
    StabilityReport {
        ratio: if union == 0 { 1.0 } else { kept as f64 / union as f64 },
        kept,
        added,
        dropped,
    }
}

/// Copy of `graph` with ε added to every vertex that was in `previous`.
pub fn boost_weights(graph: &ConflictGraph, previous: &Labeling, params: &UpdateParams) -> Result<ConflictGraph> {
    params.validate()?;
    let eps = params.effective_epsilon(previous.len());
    let mut boosted = graph.clone();
    if eps > 0.0 {
        for &id in &previous.selected {
            if let Some(w) = graph.weight(id) {
                boosted.set_weight(id, w + eps)?;
            }
        }
    }
    Ok(boosted)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub labeling: Labeling,
    pub report: StabilityReport,
    /// Set by the exact solver; `None` for heuristics.
    pub optimal: Option<bool>,
}

fn fixed_set(graph: &ConflictGraph) -> Result<BTreeSet<CandidateId>> {
    let fixed: BTreeSet<CandidateId> = graph.fixed().collect();
    for &a in &fixed {
        if let Some(b) = graph.neighbors(a).find(|b| fixed.contains(b)) {
            return Err(Error::FixationConflict(a.min(b), a.max(b)));
        }
    }
    Ok(fixed)
}

/// Adds `candidates` to `kept` in max-weight order (ties by id) whenever they
/// do not conflict with anything already kept.
pub(crate) fn thin(
    graph: &ConflictGraph,
    kept: &mut BTreeSet<CandidateId>,
    candidates: impl IntoIterator<Item = CandidateId>,
) {
    let mut order: Vec<(f64, CandidateId)> = candidates
        .into_iter()
        .filter_map(|id| graph.weight(id).map(|w| (w, id)))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, id) in order {
        if !kept.contains(&id) && !graph.neighbors(id).any(|n| kept.contains(&n)) {
            kept.insert(id);
        }
    }
}

/// The part of `labeling` still shown on `graph`: live labels, dropping the
/// lighter side of every conflict.
pub fn restrict(graph: &ConflictGraph, labeling: &Labeling) -> Labeling {
    let mut kept = BTreeSet::new();
    thin(graph, &mut kept, labeling.selected.iter().copied());
    Labeling::from_selection(graph, kept)
}

/// Re-solves `graph` after edits. GREEDY extends the conflict-free part of
/// `previous`; every other algorithm solves the ε-boosted instance with the
/// fixed labels pre-selected and their conflicts removed.
pub fn update_labeling(
    graph: &ConflictGraph,
    previous: &Labeling,
    algorithm: Algorithm,
    params: &UpdateParams,
    solver: &SolverParams,
    progress: Option<&Progress>,
) -> Result<UpdateOutcome> {
    params.validate()?;
    let fixed = fixed_set(graph)?;
    let (selected, optimal) = if algorithm == Algorithm::Greedy {
        let mut preset = fixed.clone();
        thin(graph, &mut preset, previous.selected.iter().copied());
        let l = solvers::solve_greedy(graph, &preset, solver.seed)?;
        (l.selected, None)
    } else {
        let mut reduced = boost_weights(graph, previous, params)?;
        let blocked: BTreeSet<CandidateId> = fixed
            .iter()
            .flat_map(|&f| std::iter::once(f).chain(graph.neighbors(f)))
            .collect();
        for &id in &blocked {
            reduced.remove_vertex(id)?;
        }
        let mut hint = BTreeSet::new();
        thin(&reduced, &mut hint, previous.selected.iter().copied());
        let out = solvers::solve(algorithm, &reduced, &hint, solver, progress)?;
        let mut selected = out.labeling.selected;
        selected.extend(fixed.iter().copied());
        (selected, out.optimal)
    };
    let labeling = Labeling::from_selection(graph, selected);
    let report = stability(previous, &labeling);
    Ok(UpdateOutcome {
        labeling,
        report,
        optimal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_labeling, VertexInfo};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(weights: &[f64], edges: &[(u32, u32)]) -> ConflictGraph {
        ConflictGraph::from_parts(
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| (CandidateId(i as u32), VertexInfo::new(w, i as u32))),
            edges.iter().map(|&(a, b)| (CandidateId(a), CandidateId(b))),
        )
        .unwrap()
    }

    fn set(ids: &[u32]) -> BTreeSet<CandidateId> {
        ids.iter().map(|&i| CandidateId(i)).collect()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: u32) -> ConflictGraph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.25) {
                    edges.push((a, b));
                }
            }
        }
        graph(&vec![1.0; n as usize], &edges)
    }

    /// Best selection by brute force under `score`.
    fn brute<F: Fn(&BTreeSet<CandidateId>) -> (u64, u64)>(g: &ConflictGraph, score: F) -> (u64, u64) {
        let ids: Vec<CandidateId> = g.ids().collect();
        let mut best = (0, 0);
        for mask in 0u32..(1 << ids.len()) {
            let s: BTreeSet<CandidateId> = (0..ids.len()).filter(|i| mask >> i & 1 == 1).map(|i| ids[i]).collect();
            if g.edges().any(|(a, b)| s.contains(&a) && s.contains(&b)) {
                continue;
            }
            best = best.max(score(&s));
        }
        best
    }

    #[test]
    fn stability_examples() {
        let g = graph(&[1.0; 3], &[]);
        let l = |ids: &[u32]| Labeling::from_selection(&g, set(ids));
        assert_eq!(stability(&l(&[0, 1]), &l(&[0, 1])).ratio, 1.0);
        let r = stability(&l(&[0, 1]), &l(&[1, 2]));
        assert!((r.ratio - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!((r.kept, r.added, r.dropped), (1, 1, 1));
        assert_eq!(stability(&l(&[0]), &l(&[2])).ratio, 0.0);
        assert_eq!(stability(&l(&[]), &l(&[])).ratio, 1.0);
        assert_eq!(stability(&l(&[]), &l(&[1])).ratio, 0.0);
    }

    #[test]
    fn boosting() {
        let g = graph(&[1.0; 3], &[(0, 1)]);
        let prev = Labeling::from_selection(&g, set(&[0]));
        let b = boost_weights(&g, &prev, &UpdateParams::default()).unwrap();
        assert_eq!(b.weight(CandidateId(0)), Some(2.0));
        assert_eq!(b.weight(CandidateId(1)), Some(1.0));
        let zero = UpdateParams {
            epsilon: 0.0,
            strict_mode: false,
        };
        assert_eq!(boost_weights(&g, &prev, &zero).unwrap(), g);
        let bad = UpdateParams {
            epsilon: -1.0,
            strict_mode: false,
        };
        assert!(boost_weights(&g, &prev, &bad).is_err());

        let g10 = graph(&[1.0; 10], &[]);
        let prev10 = Labeling::from_selection(&g10, g10.ids());
        let strict = UpdateParams {
            epsilon: 1.0,
            strict_mode: true,
        };
        let b = boost_weights(&g10, &prev10, &strict).unwrap();
        assert!((b.weight(CandidateId(3)).unwrap() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn noop_update_is_fully_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [6, 10, 14] {
            let g = random_graph(&mut rng, n);
            let prev = solvers::solve_exact(&g, &Default::default()).unwrap().labeling;
            for alg in [Algorithm::Exact, Algorithm::Greedy] {
                let out =
                    update_labeling(&g, &prev, alg, &UpdateParams::default(), &SolverParams::default(), None).unwrap();
                assert_eq!(out.report.ratio, 1.0, "{alg} n={n}");
            }
        }
    }

    #[test]
    fn exact_update_maximizes_boosted_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 8 + trial % 8;
            let g = random_graph(&mut rng, n);
            let prev: BTreeSet<CandidateId> = g.ids().filter(|_| rng.gen_bool(0.4)).collect();
            let prev = Labeling::from_selection(&g, prev);
            let params = UpdateParams {
                epsilon: [0.0, 0.5, 1.0, 3.0][trial as usize % 4],
                strict_mode: false,
            };
            let out = update_labeling(&g, &prev, Algorithm::Exact, &params, &SolverParams::default(), None).unwrap();
            assert!(validate_labeling(&g, &out.labeling).is_empty());
            let scale = 1000.0;
            let score = |s: &BTreeSet<CandidateId>| {
                let w: f64 = s
                    .iter()
                    .map(|id| 1.0 + if prev.contains(*id) { params.epsilon } else { 0.0 })
                    .sum();
                ((w * scale).round() as u64, 0)
            };
            assert_eq!(score(&out.labeling.selected), brute(&g, score), "trial {trial}");
        }
    }

    #[test]
    fn strict_mode_is_lexicographic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let g = random_graph(&mut rng, 12);
            let prev: BTreeSet<CandidateId> = g.ids().filter(|_| rng.gen_bool(0.5)).collect();
            let prev = Labeling::from_selection(&g, prev);
            let params = UpdateParams {
                epsilon: 0.0,
                strict_mode: true,
            };
            let out = update_labeling(&g, &prev, Algorithm::Exact, &params, &SolverParams::default(), None).unwrap();
            let score =
                |s: &BTreeSet<CandidateId>| (s.len() as u64, s.iter().filter(|id| prev.contains(**id)).count() as u64);
            assert_eq!(score(&out.labeling.selected), brute(&g, score), "trial {trial}");
        }
    }

    #[test]
    fn fixed_labels_survive() {
        // Path 0-1-2: fixing the middle forces the lighter solution.
        let mut g = graph(&[1.0; 3], &[(0, 1), (1, 2)]);
        g.set_fixed(CandidateId(1), true).unwrap();
        let prev = Labeling::from_selection(&g, set(&[0, 2]));
        for alg in Algorithm::ALL {
            let out =
                update_labeling(&g, &prev, alg, &UpdateParams::default(), &SolverParams::default(), None).unwrap();
            assert_eq!(out.labeling.selected, set(&[1]), "{alg}");
            assert_eq!(out.report.dropped, 2);
        }
        g.set_fixed(CandidateId(0), true).unwrap();
        let err = update_labeling(
            &g,
            &prev,
            Algorithm::Exact,
            &UpdateParams::default(),
            &SolverParams::default(),
            None,
        );
        assert!(matches!(
            err,
            Err(Error::FixationConflict(CandidateId(0), CandidateId(1)))
        ));
    }

    #[test]
    fn deleted_previous_label_is_dropped() {
        let full = graph(&[1.0; 3], &[(1, 2)]);
        let prev = Labeling::from_selection(&full, set(&[0, 1]));
        let mut g = full.clone();
        g.remove_edge(CandidateId(1), CandidateId(2));
        g.remove_vertex(CandidateId(1)).unwrap();
        let out = update_labeling(
            &g,
            &prev,
            Algorithm::Exact,
            &UpdateParams::default(),
            &SolverParams::default(),
            None,
        )
        .unwrap();
        assert!(out.report.dropped >= 1);
        assert!(out.labeling.contains(CandidateId(0)));
    }

    #[test]
    fn greedy_keeps_conflict_free_previous() {
        // After an edit 0 and 1 conflict; the heavier (tie: lower id) survives.
        let g = graph(&[1.0, 1.0, 1.0, 1.0], &[(0, 1), (2, 3)]);
        let prev = Labeling {
            selected: set(&[0, 1, 3]),
            total_weight: 3.0,
        };
        let out = update_labeling(
            &g,
            &prev,
            Algorithm::Greedy,
            &UpdateParams::default(),
            &SolverParams::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.labeling.selected, set(&[0, 3]));
    }

    #[test]
    fn empty_previous_is_initial_solve() {
        let g = graph(&[1.0; 3], &[(0, 1)]);
        let out = update_labeling(
            &g,
            &Labeling::empty(),
            Algorithm::Exact,
            &UpdateParams::default(),
            &SolverParams::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.labeling.len(), 2);
        assert_eq!(out.report.ratio, 0.0);
    }
}
