use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use physgp::config::{Preset, RunConfig};
use physgp::data_io::{load_batch, simulate_simple, strain_records_for, write_curvature_csv, write_strain_csv, CurvatureBatch};
use physgp::detection::{
    auc_grid, default_auc_grid, detection_series, roc_analysis, train, write_auc_grid_csv, write_roc_csv,
    write_series_csv,
};
use physgp::estimation::{fit_map, EmpiricalStats};
use physgp::gp::write_posterior_csv;
use physgp::rng::DEFAULT_SEED;
use physgp::tuning::{tune_nu, write_tuning_csv};
use physgp::Error;

#[derive(Parser)]
#[command(name = "physgp", version, about = "Physics-informed GP monitoring of instrumented sleepers")]
struct Cli {
    /// TOML configuration file (falls back to $PHYSGP_CONFIG)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (0 = one per core); results do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "sec4.3")]
    Sec43,
    EiDrop,
    KDrop,
    #[value(name = "both-10pct")]
    Both10Pct,
    Null,
}

impl From<ScenarioArg> for Preset {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Sec43 => Preset::Sec43,
            ScenarioArg::EiDrop => Preset::EiDrop,
            ScenarioArg::KDrop => Preset::KDrop,
            ScenarioArg::Both10Pct => Preset::Both10Pct,
            ScenarioArg::Null => Preset::Null,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Curvature,
    Strain,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    /// Only the requested scenario
    None,
    /// 3 x 3 corners and midpoints of the change grid
    Sub,
    /// The full 11 x 11 change grid
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated curvature (or strain) dataset
    Simulate {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value = "curvature")]
        format: DataFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MAP estimate of (k, EI, sigma2) from a dataset
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 9)]
        nu: usize,
        /// Axle load (N); defaults to the configured value
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out MSE curve over N_u and the selected N_u
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
        /// Held-out sensor, 1-based
        #[arg(long)]
        holdout: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        /// MSE curve CSV
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary (stdout if omitted)
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Posterior mean, variance and 95% band of curvature and deflection
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 9)]
        nu: usize,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch log-likelihood series, signalling statistic and per-batch fits
    Detect {
        #[arg(long)]
        data: PathBuf,
        /// Batch length B; defaults to the configured value
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        nu: Option<usize>,
        /// Rows used for training (defaults to one batch)
        #[arg(long)]
        train_rows: Option<usize>,
        /// Skip the per-batch parameter re-estimation
        #[arg(long)]
        no_refit: bool,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Null-distribution mean and sd of the training log-likelihood
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        nu: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo ROC rates and AUC
    Roc {
        #[arg(long, value_enum, default_value = "both-10pct")]
        scenario: ScenarioArg,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, value_enum, default_value = "none")]
        grid: GridArg,
        /// ROC CSV of the requested scenario
        #[arg(long)]
        out: Option<PathBuf>,
        /// AUC grid CSV
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn out_err(path: Option<&Path>) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::io(path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf), e)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Error> {
    let mut w = open_out(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(out_err(path))
}

fn meta(seed: u64, extra: &str) -> String {
    format!("version={} seed={seed} {extra}", env!("CARGO_PKG_VERSION"))
}

fn training_stats(batch: &CurvatureBatch) -> Result<EmpiricalStats, Error> {
    EmpiricalStats::from_batch(batch)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = RunConfig::resolve(cli.config.as_deref())?;
    let seed = cli.seed;
    let schedule = cfg.anneal.with_seed(seed);
    let beam = &cfg.beam;
    let sim = &cfg.simulation;
    match cli.command {
        Command::Simulate { scenario, format, out } => {
            let preset = Preset::from(scenario);
            let batch = match sim.scenario(preset)? {
                Some(s) => s.simulate(beam, seed)?,
                None => simulate_simple(&sim.simple_mean, sim.simple_noise_var, sim.simple_rows, seed)?,
            };
            let header = meta(seed, &format!("scenario={}", preset.name()));
            let mut w = open_out(out.as_deref())?;
            match format {
                DataFormat::Curvature => write_curvature_csv(&mut w, &header, &batch, beam)?,
                DataFormat::Strain => {
                    write_strain_csv(&mut w, &header, &strain_records_for(&batch, beam, 0.0)).map_err(out_err(out.as_deref()))?
                }
            }
            w.flush().map_err(out_err(out.as_deref()))
        }
        Command::Fit { data, nu, p, out } => {
            let batch = load_batch(&data, beam)?;
            let fit = fit_map(&training_stats(&batch)?, nu, beam, &cfg.prior, &schedule, p.unwrap_or(sim.p))?;
            write_json(out.as_deref(), &fit.report())
        }
        Command::Tune { data, n_min, n_max, holdout, p, out, summary } => {
            let batch = load_batch(&data, beam)?;
            let result = tune_nu(
                &training_stats(&batch)?,
                beam,
                &cfg.prior,
                &schedule,
                p.unwrap_or(sim.p),
                n_min.unwrap_or(cfg.tuning.n_min),
                n_max.unwrap_or(cfg.tuning.n_max),
                holdout.unwrap_or(cfg.tuning.holdout),
            )?;
            if let Some(path) = out.as_deref() {
                let mut w = open_out(Some(path))?;
                write_tuning_csv(&mut w, &meta(seed, ""), &result)
                    .and_then(|_| w.flush())
                    .map_err(out_err(Some(path)))?;
            }
            write_json(summary.as_deref(), &serde_json::json!({ "selected_N_u": result.selected }))
        }
        Command::Predict { data, nu, points, p, out } => {
            let batch = load_batch(&data, beam)?;
            let fit = fit_map(&training_stats(&batch)?, nu, beam, &cfg.prior, &schedule, p.unwrap_or(sim.p))?;
            let grid = fit.model.posterior_grid(points);
            let mut w = open_out(out.as_deref())?;
            let header = meta(seed, &format!("N_u={nu} k={} EI={} sigma2={}", fit.theta.k, fit.theta.ei, fit.theta.sigma2));
            write_posterior_csv(&mut w, &header, &grid)
                .and_then(|_| w.flush())
                .map_err(out_err(out.as_deref()))
        }
        Command::Detect { data, batch, nu, train_rows, no_refit, p, out } => {
            let mut det = cfg.detection.clone();
            det.batch_len = batch.unwrap_or(det.batch_len);
            det.n_u = nu.unwrap_or(det.n_u);
            det.validate()?;
            let stream = load_batch(&data, beam)?;
            let n_train = train_rows.unwrap_or(det.batch_len);
            if n_train > stream.n_rows() {
                return Err(Error::InsufficientData { needed: n_train, got: stream.n_rows() });
            }
            let p = p.unwrap_or(sim.p);
            let generator = physgp::beam::PhysicsParams::new(p, sim.k0, sim.ei0)?;
            let training = train(&stream.slice(0, n_train), &generator, sim.noise_var, beam, &cfg.prior, &schedule, &det, seed)?;
            let batches = stream.batches(det.batch_len);
            let refit = (!no_refit).then_some((&cfg.prior, &schedule, det.n_u));
            let series = detection_series(&batches, &training.fit.model, training.null, refit)?;
            let mut w = open_out(out.as_deref())?;
            write_series_csv(&mut w, &meta(seed, &format!("B={} N_u={}", det.batch_len, det.n_u)), &series)
                .and_then(|_| w.flush())
                .map_err(out_err(out.as_deref()))
        }
        Command::Calibrate { data, batch, nu, reps, p, out } => {
            let mut det = cfg.detection.clone();
            det.batch_len = batch.unwrap_or(det.batch_len);
            det.n_u = nu.unwrap_or(det.n_u);
            det.n_null_reps = reps.unwrap_or(det.n_null_reps);
            det.validate()?;
            let stream = load_batch(&data, beam)?;
            if stream.n_rows() < det.batch_len {
                return Err(Error::InsufficientData { needed: det.batch_len, got: stream.n_rows() });
            }
            let p = p.unwrap_or(sim.p);
            let generator = physgp::beam::PhysicsParams::new(p, sim.k0, sim.ei0)?;
            let training = train(&stream.slice(0, det.batch_len), &generator, sim.noise_var, beam, &cfg.prior, &schedule, &det, seed)?;
            write_json(out.as_deref(), &training.null)
        }
        Command::Roc { scenario, reps, grid, out, grid_out } => {
            let preset = Preset::from(scenario);
            let base = sim
                .scenario(preset)?
                .ok_or_else(|| Error::Config(format!("scenario {} has no change point", preset.name())))?;
            let reps = reps.unwrap_or(cfg.detection.n_roc_reps);
            let roc = roc_analysis(&base, beam, &cfg.prior, &schedule, &cfg.detection, reps, seed)?;
            let header = meta(seed, &format!("scenario={}", preset.name()));
            let mut w = open_out(out.as_deref())?;
            write_roc_csv(&mut w, &header, &roc)
                .and_then(|_| w.flush())
                .map_err(out_err(out.as_deref()))?;
            let cells = match grid {
                GridArg::None => return Ok(()),
                GridArg::Full => default_auc_grid(),
                GridArg::Sub => {
                    let mut c = Vec::new();
                    for ei in [6.0e11, 7.0e11, 8.0e11] {
                        for k in [300.0, 375.0, 450.0] {
                            c.push((ei, k));
                        }
                    }
                    c
                }
            };
            let cells = auc_grid(&base, &cells, beam, &cfg.prior, &schedule, &cfg.detection, reps, seed)?;
            let mut w = open_out(grid_out.as_deref())?;
            write_auc_grid_csv(&mut w, &header, &cells)
                .and_then(|_| w.flush())
                .map_err(out_err(grid_out.as_deref()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("physgp: cannot start {} worker threads: {e}", cli.jobs);
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("physgp: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("physgp: {e}");
            ExitCode::from(1)
        }
    }
}
