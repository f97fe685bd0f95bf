//! Randomized modification experiment: an initial solve followed by rounds
//! of font changes and deletions, each answered by an update.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::index;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candgen::TextMetricsConfig;
use crate::edits::{Edit, Workspace};
use crate::error::{Error, Result};
use crate::io::Dataset;
use crate::model::{validate_labeling, CandidateId, Labeling, UpdateParams};
use crate::solvers::{self, Algorithm, SolverParams};
use crate::update::update_labeling;

type RepResult = Result<(Vec<SimRow>, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub init_algorithm: Algorithm,
    pub update_algorithm: Algorithm,
    /// Total runs including the initial solve.
    pub rounds: usize,
    pub repetitions: usize,
    pub rng_seed: u64,
    pub enlarge_pct: f64,
    pub enlarge_size: f64,
    pub shrink_pct: f64,
    pub shrink_size: f64,
    pub delete_pct: f64,
    pub initial_font: f64,
    pub epsilon: f64,
    pub strict_mode: bool,
    pub metrics: TextMetricsConfig,
    pub solver: SolverParams,
    /// Worker threads for repetitions; results do not depend on it.
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mut solver = SolverParams::default();
        solver.exact.node_limit = Some(DEFAULT_EXACT_NODES);
        SimConfig {
            init_algorithm: Algorithm::Exact,
            update_algorithm: Algorithm::Exact,
            rounds: 5,
            repetitions: 50,
            rng_seed: 0,
            enlarge_pct: 0.01,
            enlarge_size: 20.0,
            shrink_pct: 0.03,
            shrink_size: 5.0,
            delete_pct: 0.01,
            initial_font: 10.0,
            epsilon: 1.0,
            strict_mode: false,
            metrics: TextMetricsConfig::default(),
            solver,
            threads: 1,
        }
    }
}

/// Node budget that keeps exact runs reproducible regardless of machine speed.
pub const DEFAULT_EXACT_NODES: u64 = 2_000;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pcts = [self.enlarge_pct, self.shrink_pct, self.delete_pct];
        if pcts.iter().any(|p| !(0.0..=1.0).contains(p)) || pcts.iter().sum::<f64>() > 1.0 {
            return Err(Error::InvalidInput(
                "percentages must lie in [0, 1] and sum to at most 1".into(),
            ));
        }
        for s in [self.enlarge_size, self.shrink_size, self.initial_font] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidInput(format!("font sizes must be positive, got {s}")));
            }
        }
        if self.rounds == 0 || self.repetitions == 0 {
            return Err(Error::InvalidInput("rounds and repetitions must be at least 1".into()));
        }
        self.update_params().validate()?;
        self.metrics.validate()
    }

    pub fn update_params(&self) -> UpdateParams {
        UpdateParams {
            epsilon: self.epsilon,
            strict_mode: self.strict_mode,
        }
    }

    fn same_experiment(&self, other: &SimConfig) -> bool {
        let strip = |c: &SimConfig| SimConfig {
            init_algorithm: Algorithm::Greedy,
            update_algorithm: Algorithm::Greedy,
            threads: 1,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub repetition: usize,
    pub round: usize,
    pub labeled: usize,
    /// Versus the previous round; absent for the initial solve.
    pub stability: Option<f64>,
    pub weight: f64,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub labeled_mean: f64,
    pub labeled_quartiles: [f64; 3],
    pub stability_mean: Option<f64>,
    pub stability_quartiles: Option<[f64; 3]>,
    pub millis_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub dataset: String,
    pub features: usize,
    pub config: SimConfig,
    pub rows: Vec<SimRow>,
    /// Conflict graph construction time per repetition, kept out of `rows`.
    pub build_millis: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Lower quartile, median and upper quartile by linear interpolation.
fn quartiles(xs: &[f64]) -> [f64; 3] {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    [at(0.25), at(0.5), at(0.75)]
}

impl SimReport {
    pub fn rounds(&self) -> Vec<RoundStats> {
        (0..self.config.rounds)
            .map(|round| {
                let rows: Vec<&SimRow> = self.rows.iter().filter(|r| r.round == round).collect();
                let labeled: Vec<f64> = rows.iter().map(|r| r.labeled as f64).collect();
                let stab: Vec<f64> = rows.iter().filter_map(|r| r.stability).collect();
                let millis: Vec<f64> = rows.iter().map(|r| r.millis).collect();
                RoundStats {
                    round,
                    labeled_mean: mean(&labeled),
                    labeled_quartiles: quartiles(&labeled),
                    stability_mean: (!stab.is_empty()).then(|| mean(&stab)),
                    stability_quartiles: (!stab.is_empty()).then(|| quartiles(&stab)),
                    millis_mean: mean(&millis),
                }
            })
            .collect()
    }

    /// Mean stability over all update rounds, `None` with a single round.
    pub fn mean_stability(&self) -> Option<f64> {
        let s: Vec<f64> = self.rows.iter().filter_map(|r| r.stability).collect();
        (!s.is_empty()).then(|| mean(&s))
    }

    /// Mean labeled count over all rounds and repetitions.
    pub fn mean_labeled(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.labeled as f64).collect::<Vec<_>>())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record([
            "repetition",
            "round",
            "algorithm_init",
            "algorithm_update",
            "labeled",
            "stability",
            "weight",
            "millis",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.repetition.to_string(),
                r.round.to_string(),
                self.config.init_algorithm.to_string(),
                self.config.update_algorithm.to_string(),
                r.labeled.to_string(),
                r.stability.map(|s| format!("{s:.6}")).unwrap_or_default(),
                format!("{:.6}", r.weight),
                format!("{:.3}", r.millis),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn run_simulation(dataset: &Dataset, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    dataset.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let seeds: Vec<u64> = (0..cfg.repetitions).map(|_| master.next_u64()).collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RepResult>>> = Mutex::new((0..cfg.repetitions).map(|_| None).collect());
    let threads = cfg.threads.clamp(1, cfg.repetitions);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let rep = next.fetch_add(1, Ordering::Relaxed);
                if rep >= cfg.repetitions {
                    break;
                }
                let out = run_repetition(dataset, cfg, rep, seeds[rep]);
                results.lock().expect("worker panicked")[rep] = Some(out);
            });
        }
    });

    let mut rows = Vec::with_capacity(cfg.repetitions * cfg.rounds);
    let mut build_millis = Vec::with_capacity(cfg.repetitions);
    for r in results.into_inner().expect("worker panicked") {
        let (r_rows, build) = r.expect("every repetition ran")?;
        rows.extend(r_rows);
        build_millis.push(build);
    }
    Ok(SimReport {
        dataset: dataset.name.clone(),
        features: dataset.features.len(),
        config: cfg.clone(),
        rows,
        build_millis,
    })
}

fn millis_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn run_repetition(dataset: &Dataset, cfg: &SimConfig, repetition: usize, seed: u64) -> Result<(Vec<SimRow>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solver = cfg.solver;
    solver.set_seed(seed);
    let mut store = dataset.store(cfg.initial_font, cfg.metrics)?;
    store.shrink_precedence = true;
    let t = Instant::now();
    let mut ws = Workspace::new(store)?;
    let build = millis_since(t);

    let t = Instant::now();
    let mut labeling = solvers::solve(cfg.init_algorithm, ws.graph(), &BTreeSet::new(), &solver, None)?.labeling;
    let mut rows = vec![row(repetition, 0, &labeling, None, millis_since(t))];
    check(&ws, &labeling)?;

    for round in 1..cfg.rounds {
        for edit in sample_edits(&ws, cfg, &mut rng) {
            ws.apply_edit(&edit)?;
        }
        let t = Instant::now();
        let out = update_labeling(
            ws.graph(),
            &labeling,
            cfg.update_algorithm,
            &cfg.update_params(),
            &solver,
            None,
        )?;
        let millis = millis_since(t);
        check(&ws, &out.labeling)?;
        rows.push(row(repetition, round, &out.labeling, Some(out.report.ratio), millis));
        labeling = out.labeling;
    }
    Ok((rows, build))
}

fn row(repetition: usize, round: usize, l: &Labeling, stability: Option<f64>, millis: f64) -> SimRow {
    SimRow {
        repetition,
        round,
        labeled: l.len(),
        stability,
        weight: l.total_weight,
        millis,
    }
}

fn check(ws: &Workspace, l: &Labeling) -> Result<()> {
    match validate_labeling(ws.graph(), l).first() {
        None => Ok(()),
        Some(v) => Err(Error::InvalidInput(format!(
            "solver returned an invalid labeling: {v:?}"
        ))),
    }
}

/// Disjoint uniform samples of live candidates sized by the configured
/// percentages, turned into edits on their features. Shrinks follow enlarges
/// so a feature hit by both ends up small.
pub fn sample_edits(ws: &Workspace, cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Edit> {
    let live: Vec<CandidateId> = ws.store().live_candidates().map(|c| c.id).collect();
    let n = live.len();
    let count = |pct: f64| (pct * n as f64).floor() as usize;
    let (ke, ks, kd) = (count(cfg.enlarge_pct), count(cfg.shrink_pct), count(cfg.delete_pct));
    let picked = index::sample(rng, n, (ke + ks + kd).min(n)).into_vec();
    let feature = |i: usize| {
        let c = ws.store().candidate(live[i]).expect("live candidate");
        ws.store().feature(c.feature).expect("owning feature").id.clone()
    };
    let mut edits = Vec::with_capacity(picked.len());
    for &i in &picked[..ke] {
        edits.push(Edit::SetFontSize {
            feature: feature(i),
            size: cfg.enlarge_size,
        });
    }
    for &i in &picked[ke..ke + ks] {
        edits.push(Edit::SetFontSize {
            feature: feature(i),
            size: cfg.shrink_size,
        });
    }
    let mut deleted = BTreeSet::new();
    for &i in &picked[ke + ks..] {
        let f = feature(i);
        if deleted.insert(f.clone()) {
            edits.push(Edit::DeleteFeature { feature: f });
        }
    }
    edits
}

/// One CSV row per report with run-level means; reports must describe the
/// same experiment up to the algorithms used.
pub fn compare_runs(reports: &[SimReport]) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("no reports to compare".into()))?;
    for r in &reports[1..] {
        if r.dataset != first.dataset || r.features != first.features || !r.config.same_experiment(&first.config) {
            return Err(Error::ConfigMismatch(format!(
                "report {}/{} differs from {}/{} beyond its algorithms",
                r.config.init_algorithm,
                r.config.update_algorithm,
                first.config.init_algorithm,
                first.config.update_algorithm
            )));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "algorithm_init",
        "algorithm_update",
        "features",
        "labeled_initial",
        "labeled_final",
        "labeled_mean",
        "stability_mean",
        "millis_initial",
        "millis_update",
    ])?;
    for r in reports {
        let rounds = r.rounds();
        let last = rounds.last().expect("at least one round");
        let upd: Vec<f64> = r.rows.iter().filter(|x| x.round > 0).map(|x| x.millis).collect();
        w.write_record([
            r.config.init_algorithm.to_string(),
            r.config.update_algorithm.to_string(),
            r.features.to_string(),
            format!("{:.2}", rounds[0].labeled_mean),
            format!("{:.2}", last.labeled_mean),
            format!("{:.2}", r.mean_labeled()),
            r.mean_stability().map(|s| format!("{s:.4}")).unwrap_or_default(),
            format!("{:.2}", rounds[0].millis_mean),
            if upd.is_empty() {
                String::new()
            } else {
                format!("{:.2}", mean(&upd))
            },
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
