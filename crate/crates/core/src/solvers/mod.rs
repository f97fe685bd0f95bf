//! Solvers for the labeling problem on a conflict graph.

mod dense;
mod exact;
mod greedy;
mod local;
mod maxsat;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use exact::{scaled_weight, solve_exact, solve_exact_with_hint, ExactParams, ExactSolution};
pub use greedy::{solve_falp, solve_greedy, solve_mis};
pub use local::{solve_chain, solve_popmusic, ChainParams, PopmusicParams};
pub use maxsat::to_pmaxsat;

use crate::error::{Error, Result};
use crate::model::{CandidateId, ConflictGraph, Labeling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Mis,
    Falp,
    Chain,
    Popmusic,
    #[serde(alias = "mhs")]
    Exact,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Greedy,
        Algorithm::Mis,
        Algorithm::Falp,
        Algorithm::Chain,
        Algorithm::Popmusic,
        Algorithm::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::Mis => "mis",
            Algorithm::Falp => "falp",
            Algorithm::Chain => "chain",
            Algorithm::Popmusic => "popmusic",
            Algorithm::Exact => "exact",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "mhs" {
            return Ok(Algorithm::Exact);
        }
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| Error::UnknownAlgorithm(s.to_string()))
    }
}

/// Parameters for every solver, so callers can dispatch by [`Algorithm`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub seed: u64,
    pub chain: ChainParams,
    pub popmusic: PopmusicParams,
    pub exact: ExactParams,
}

impl SolverParams {
    pub fn with_seed(seed: u64) -> Self {
        let mut p = SolverParams::default();
        p.set_seed(seed);
        p
    }

    /// Propagates `seed` to every randomized solver.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.chain.rng_seed = seed;
        self.popmusic.chain.rng_seed = seed;
    }
}

/// Shared completion fraction in per-mille, readable while a solve runs.
#[derive(Clone, Debug, Default)]
pub struct Progress(Arc<AtomicU32>);

impl Progress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_fraction(&self, f: f64) {
        let permille = (f.clamp(0.0, 1.0) * 1000.0) as u32;
        self.0.store(permille, Ordering::Relaxed);
    }

    pub fn percent(&self) -> f64 {
        f64::from(self.0.load(Ordering::Relaxed)) / 10.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub labeling: Labeling,
    /// Set by the exact solver; `None` for heuristics.
    pub optimal: Option<bool>,
}

/// Runs `algorithm` on `graph`. `preset` is honored by GREEDY directly; the
/// other algorithms receive it as an incumbent hint (EXACT) or ignore it, so
/// callers needing hard pre-selection should remove it from the graph first.
pub fn solve(
    algorithm: Algorithm,
    graph: &ConflictGraph,
    preset: &BTreeSet<CandidateId>,
    params: &SolverParams,
    progress: Option<&Progress>,
) -> Result<SolveOutcome> {
    let heuristic = |labeling| SolveOutcome {
        labeling,
        optimal: None,
    };
    let outcome = match algorithm {
        Algorithm::Greedy => heuristic(solve_greedy(graph, preset, params.seed)?),
        Algorithm::Mis => heuristic(solve_mis(graph)),
        Algorithm::Falp => heuristic(solve_falp(graph)),
        Algorithm::Chain => {
            let initial = solve_falp(graph);
            heuristic(local::chain_with_progress(graph, &initial, &params.chain, progress)?)
        }
        Algorithm::Popmusic => heuristic(local::popmusic_with_progress(graph, &params.popmusic, progress)?),
        Algorithm::Exact => {
            let s = exact::exact_with_hint(graph, &params.exact, Some(preset), progress)?;
            SolveOutcome {
                labeling: s.labeling,
                optimal: Some(s.optimal),
            }
        }
    };
    if let Some(p) = progress {
        p.set_fraction(1.0);
    }
    Ok(outcome)
}
