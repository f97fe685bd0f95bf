use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pflp::candgen::TextMetricsConfig;
use pflp::io::{self, generate_grid_dataset, Dataset, DatasetFormat};
use pflp::model::{validate_labeling, PositionModel};
use pflp::service::{self, ServeConfig};
use pflp::sim::{self, SimConfig, SimReport};
use pflp::solvers::{self, Algorithm, SolverParams};
use pflp::{Error, Result};

#[derive(Parser)]
#[command(name = "pflp", version, about = "Point-feature label placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic jittered-grid dataset as simple JSON.
    Generate {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compute an initial labeling and print it as JSON.
    Solve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, short, default_value = "exact")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        exact: ExactArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Encode the conflict graph as weighted partial MaxSAT (WDIMACS).
    Wcnf {
        #[command(flatten)]
        input: InputArgs,
        /// Multiplier turning real weights into integer clause weights.
        #[arg(long, default_value_t = 1_000_000)]
        scale: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the modification experiment and write per-round CSV.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long = "init", default_value = "exact")]
        init_algorithm: Algorithm,
        #[arg(long = "update", default_value = "exact")]
        update_algorithm: Algorithm,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 50)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = sim::DEFAULT_EXACT_NODES)]
        exact_nodes: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Full JSON report, usable with `compare`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate several simulation reports side by side.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Directory with static assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 30)]
    rows: u32,
    #[arg(long, default_value_t = 30)]
    cols: u32,
    #[arg(long, default_value_t = 18.0)]
    spacing: f64,
    #[arg(long, default_value_t = 4.0)]
    jitter: f64,
    #[arg(long, default_value_t = 8)]
    name_length: usize,
    #[arg(long = "grid-seed", default_value_t = 7)]
    grid_seed: u64,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset file; a generated grid is used when omitted.
    #[arg(long, short)]
    dataset: Option<PathBuf>,
    /// geojson or simple-json; guessed from the extension by default.
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    zoom: Option<u8>,
    /// Candidate positions per feature: 4 or 8.
    #[arg(long)]
    model: Option<u8>,
    #[arg(long, default_value_t = 10.0)]
    font_size: f64,
}

#[derive(Args)]
struct ExactArgs {
    /// Seconds before the exact solver returns its best labeling so far.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<u64>,
}

impl InputArgs {
    fn dataset(&self) -> Result<Dataset> {
        let mut d = match &self.dataset {
            Some(path) => {
                let format = self.format.unwrap_or_else(|| DatasetFormat::from_path(path));
                let loaded = io::load_dataset(path, format)?;
                for w in &loaded.warnings {
                    log::warn!("{w}");
                }
                loaded.dataset
            }
            None => {
                let g = &self.grid;
                generate_grid_dataset(g.rows, g.cols, g.spacing, g.jitter, g.name_length, g.grid_seed)?
            }
        };
        if let Some(z) = self.zoom {
            d.zoom = z;
        }
        if let Some(m) = self.model {
            d.position_model = PositionModel::try_from(m).map_err(Error::InvalidInput)?;
        }
        Ok(d)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { grid, out } => {
            let d = generate_grid_dataset(
                grid.rows,
                grid.cols,
                grid.spacing,
                grid.jitter,
                grid.name_length,
                grid.grid_seed,
            )?;
            emit(out.as_deref(), &io::dataset_to_json(&d)?)
        }
        Command::Solve {
            input,
            algorithm,
            seed,
            exact,
            out,
        } => {
            let d = input.dataset()?;
            let ws = pflp::edits::Workspace::new(d.store(input.font_size, TextMetricsConfig::default())?)?;
            let mut params = SolverParams::with_seed(seed);
            params.exact.time_limit = Duration::try_from_secs_f64(exact.time_limit)
                .map_err(|e| Error::InvalidInput(format!("bad time limit: {e}")))?;
            params.exact.node_limit = exact.node_limit;
            let t = Instant::now();
            let outcome = solvers::solve(algorithm, ws.graph(), &BTreeSet::new(), &params, None)?;
            let millis = t.elapsed().as_secs_f64() * 1000.0;
            debug_assert!(validate_labeling(ws.graph(), &outcome.labeling).is_empty());
            let labels: Vec<_> = outcome
                .labeling
                .selected
                .iter()
                .filter_map(|&id| ws.store().candidate(id))
                .collect();
            let body = json!({
                "dataset": d.name,
                "algorithm": algorithm,
                "features": d.features.len(),
                "candidates": ws.graph().vertex_count(),
                "conflicts": ws.graph().edge_count(),
                "labeled": outcome.labeling.len(),
                "total_weight": outcome.labeling.total_weight,
                "optimal": outcome.optimal,
                "millis": millis,
                "labels": labels,
            });
            emit(out.as_deref(), &(serde_json::to_string_pretty(&body)? + "\n"))
        }
        Command::Wcnf { input, scale, out } => {
            if scale == 0 {
                return Err(Error::InvalidInput("scale must be positive".into()));
            }
            let d = input.dataset()?;
            let graph = d
                .store(input.font_size, TextMetricsConfig::default())?
                .conflict_graph()?;
            emit(out.as_deref(), &solvers::to_pmaxsat(&graph, scale).to_wdimacs())
        }
        Command::Simulate {
            input,
            init_algorithm,
            update_algorithm,
            rounds,
            repetitions,
            seed,
            epsilon,
            strict,
            exact_nodes,
            threads,
            csv,
            report,
        } => {
            let d = input.dataset()?;
            let mut cfg = SimConfig {
                init_algorithm,
                update_algorithm,
                rounds,
                repetitions,
                rng_seed: seed,
                epsilon,
                strict_mode: strict,
                initial_font: input.font_size,
                threads,
                ..SimConfig::default()
            };
            cfg.solver.exact.node_limit = Some(exact_nodes);
            let r = sim::run_simulation(&d, &cfg)?;
            for s in r.rounds() {
                log::info!(
                    "round {}: labeled {:.1}, stability {}",
                    s.round,
                    s.labeled_mean,
                    s.stability_mean.map_or("-".into(), |v| format!("{v:.4}"))
                );
            }
            if let Some(p) = report {
                fs::write(p, serde_json::to_string(&r)? + "\n")?;
            }
            emit(csv.as_deref(), &r.to_csv()?)
        }
        Command::Compare { reports } => {
            let loaded = reports
                .iter()
                .map(|p| Ok(serde_json::from_str::<SimReport>(&fs::read_to_string(p)?)?))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", sim::compare_runs(&loaded)?);
            Ok(())
        }
        Command::Serve { bind, static_dir } => {
            let rt = tokio::runtime::Runtime::new()?;
            log::info!("listening on http://{bind}");
            rt.block_on(service::serve(ServeConfig {
                bind: Some(bind),
                static_dir,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
