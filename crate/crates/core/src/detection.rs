//! Batch-wise monitoring: log marginal likelihood of new batches under a
//! trained model, re-estimated parameters per batch, the signalling
//! statistic and Monte Carlo ROC rates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::beam::{BeamConfig, PhysicsParams};
use crate::data_io::{clean_curvature, simulate_dataset, CurvatureBatch};
use crate::error::{Error, Result};
use crate::estimation::{fit_map, AnnealSchedule, EmpiricalStats, FitResult, PriorSpec};
use crate::gp::JointModel;
use crate::rng::derive_seed;

const STREAM_DATA: u64 = 1;
const STREAM_NULL: u64 = 2;
const STREAM_FIT: u64 = 3;

/// How the threshold multiplier `a` is applied to `p_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScale {
    /// Signal when `log_ml < μ0 − a·σ0`, i.e. `p_i < Φ(−a)`.
    #[default]
    Likelihood,
    /// Signal when `p_i < μ0 − a·σ0`, comparing the probability with a
    /// log-likelihood value.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Batch length `B`.
    pub batch_len: usize,
    /// Threshold multipliers `a`, strictly increasing (so thresholds
    /// `μ0 − a·σ0` strictly decrease).
    pub gamma_multipliers: Vec<f64>,
    pub n_null_reps: usize,
    pub n_roc_reps: usize,
    pub threshold_scale: ThresholdScale,
    /// Number of simulation points `N_u` used by every fit.
    pub n_u: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            batch_len: 5,
            gamma_multipliers: (0..=6).map(|i| 0.5 + 0.25 * i as f64).collect(),
            n_null_reps: 1000,
            n_roc_reps: 200,
            threshold_scale: ThresholdScale::Likelihood,
            n_u: 9,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_len < 2 {
            return Err(Error::Config(format!("batch length must be >= 2, got {}", self.batch_len)));
        }
        if self.gamma_multipliers.is_empty() {
            return Err(Error::Config("threshold grid is empty".into()));
        }
        if self.gamma_multipliers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("threshold multipliers must be strictly increasing".into()));
        }
        if self.n_null_reps < 30 {
            return Err(Error::Config(format!("n_null_reps must be >= 30, got {}", self.n_null_reps)));
        }
        Ok(())
    }
}

/// A simulated stream with a parameter change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub before: PhysicsParams,
    pub after: PhysicsParams,
    pub change_at: usize,
    pub n_points: usize,
    pub noise_var: f64,
}

/// Default curvature noise variance of the simulated streams.
pub const DEFAULT_NOISE_VAR: f64 = 2.5e-13;
pub const DEFAULT_LOAD: f64 = 125_000.0;

impl Scenario {
    pub fn new(before: PhysicsParams, after: PhysicsParams) -> Self {
        Scenario {
            before,
            after,
            change_at: 50,
            n_points: 100,
            noise_var: DEFAULT_NOISE_VAR,
        }
    }

    pub fn with_after(&self, after: PhysicsParams) -> Self {
        Scenario { after, ..*self }
    }

    pub fn simulate(&self, cfg: &BeamConfig, seed: u64) -> Result<CurvatureBatch> {
        simulate_dataset(&self.before, &self.after, self.change_at, self.n_points, self.noise_var, cfg, seed)
    }
}

/// Log marginal likelihood of every batch's mean under the trained model.
/// The covariance is factorised once, inside `model`.
pub fn batch_likelihoods(batches: &[CurvatureBatch], model: &JointModel) -> Result<Vec<f64>> {
    batches
        .iter()
        .map(|b| model.log_marginal_for_curvature(&EmpiricalStats::from_batch(b)?.mu_f))
        .collect()
}

/// Independent fit per batch. Every fit uses the same schedule (and seed);
/// failures are kept in place so the series stays aligned.
pub fn batch_params(
    batches: &[CurvatureBatch],
    n_u: usize,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    p: f64,
) -> Vec<Result<FitResult>> {
    batches
        .par_iter()
        .map(|b| fit_map(&EmpiricalStats::from_batch(b)?, n_u, cfg, prior, schedule, p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub mu0: f64,
    pub sigma0: f64,
    pub n_reps: usize,
}

/// Normal fit to the training-batch log likelihood over `n_reps` fresh
/// batches of length `batch_len` simulated under `generator`.
pub fn calibrate_null(
    model: &JointModel,
    generator: &PhysicsParams,
    batch_len: usize,
    noise_var: f64,
    n_reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    if n_reps < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n_reps });
    }
    let cfg = model.config();
    let values = (0..n_reps)
        .map(|r| {
            let s = derive_seed(seed, STREAM_NULL, r as u64);
            let batch = simulate_dataset(generator, generator, 0, batch_len, noise_var, cfg, s)?;
            model.log_marginal_for_curvature(&EmpiricalStats::from_batch(&batch)?.mu_f)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mu0 = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu0) * (v - mu0)).sum::<f64>() / (n - 1.0);
    Ok(NullCalibration {
        mu0,
        sigma0: var.sqrt(),
        n_reps,
    })
}

fn std_normal() -> StdNormal {
    StdNormal::new(0.0, 1.0).expect("unit normal")
}

/// `p_i = Φ((log_ml − μ0) / σ0)`.
pub fn signal_stat(log_ml: f64, mu0: f64, sigma0: f64) -> Result<f64> {
    if !(sigma0 > 0.0) {
        return Err(Error::ParameterRange(format!("sigma0 must be > 0, got {sigma0}")));
    }
    Ok(std_normal().cdf((log_ml - mu0) / sigma0))
}

/// Whether `p_i` signals at multiplier `a`.
pub fn signals(p_i: f64, a: f64, null: &NullCalibration, scale: ThresholdScale) -> bool {
    match scale {
        ThresholdScale::Likelihood => p_i < std_normal().cdf(-a),
        ThresholdScale::Literal => p_i < null.mu0 - a * null.sigma0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub batch_index: usize,
    pub log_ml: f64,
    pub p_i: f64,
    pub k_hat: Option<f64>,
    pub ei_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSeries {
    pub points: Vec<SeriesPoint>,
    pub null: NullCalibration,
}

impl DetectionSeries {
    pub fn log_ml(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.log_ml).collect()
    }

    pub fn k_hat(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.k_hat).collect()
    }

    pub fn ei_hat(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.ei_hat).collect()
    }
}

/// Scores `batches` under `model` and, when `refit` is given, re-estimates
/// the parameters of every batch.
pub fn detection_series(
    batches: &[CurvatureBatch],
    model: &JointModel,
    null: NullCalibration,
    refit: Option<(&PriorSpec, &AnnealSchedule, usize)>,
) -> Result<DetectionSeries> {
    let log_ml = batch_likelihoods(batches, model)?;
    let fits = match refit {
        Some((prior, schedule, n_u)) => {
            batch_params(batches, n_u, model.config(), prior, schedule, model.theta().p)
        }
        None => Vec::new(),
    };
    let points = log_ml
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let fit = fits.get(i).and_then(|f| f.as_ref().ok());
            Ok(SeriesPoint {
                batch_index: i,
                log_ml: l,
                p_i: signal_stat(l, null.mu0, null.sigma0)?,
                k_hat: fit.map(|f| f.theta.k),
                ei_hat: fit.map(|f| f.theta.ei),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DetectionSeries { points, null })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_series_csv<W: Write>(out: &mut W, header: &str, series: &DetectionSeries) -> std::io::Result<()> {
    writeln!(
        out,
        "# physgp-detection-v1 {header} mu0={} sigma0={}",
        series.null.mu0, series.null.sigma0
    )?;
    writeln!(out, "batch_index,log_ml,p_i,k_hat,EI_hat")?;
    for p in &series.points {
        writeln!(out, "{},{},{:e},{},{}", p.batch_index, p.log_ml, p.p_i, opt(p.k_hat), opt(p.ei_hat))?;
    }
    Ok(())
}

/// A trained model on the first batch of a stream plus its null calibration.
#[derive(Debug, Clone)]
pub struct Training {
    pub fit: FitResult,
    pub null: NullCalibration,
}

/// Fits on `batch` and calibrates the null by simulating under `generator`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    batch: &CurvatureBatch,
    generator: &PhysicsParams,
    noise_var: f64,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    det: &DetectionConfig,
    seed: u64,
) -> Result<Training> {
    let stats = EmpiricalStats::from_batch(batch)?;
    let fit = fit_map(&stats, det.n_u, cfg, prior, schedule, generator.p)?;
    let null = calibrate_null(&fit.model, generator, det.batch_len, noise_var, det.n_null_reps, seed)?;
    Ok(Training { fit, null })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub gamma_multipliers: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub n_reps: usize,
}

impl RocResult {
    /// `Σ_γ TPR(γ)·(1 − FPR(γ))` over the threshold grid.
    pub fn auc_sum(&self) -> f64 {
        self.tpr.iter().zip(&self.fpr).map(|(t, f)| t * (1.0 - f)).sum()
    }

    /// The sum above divided by the number of thresholds, so it lies in
    /// `[0, 1]`.
    pub fn auc(&self) -> f64 {
        self.auc_sum() / self.tpr.len() as f64
    }

    /// Trapezoidal area under the ROC points, closed with (0,0) and (1,1).
    pub fn auc_trapezoid(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.fpr.iter().copied().zip(self.tpr.iter().copied()).collect();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }
}

pub fn write_roc_csv<W: Write>(out: &mut W, header: &str, roc: &RocResult) -> std::io::Result<()> {
    writeln!(
        out,
        "# physgp-roc-v1 {header} reps={} auc={} auc_sum={} auc_trapezoid={}",
        roc.n_reps,
        roc.auc(),
        roc.auc_sum(),
        roc.auc_trapezoid()
    )?;
    writeln!(out, "gamma_multiplier,tpr,fpr")?;
    for ((a, t), f) in roc.gamma_multipliers.iter().zip(&roc.tpr).zip(&roc.fpr) {
        writeln!(out, "{a},{t},{f}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucCell {
    pub ei_1: f64,
    pub k_1: f64,
    pub roc: RocResult,
}

pub fn write_auc_grid_csv<W: Write>(out: &mut W, header: &str, cells: &[AucCell]) -> std::io::Result<()> {
    writeln!(out, "# physgp-auc-grid-v1 {header}")?;
    writeln!(out, "EI_1,k_1,auc,auc_sum,auc_trapezoid")?;
    for c in cells {
        writeln!(out, "{:e},{},{},{},{}", c.ei_1, c.k_1, c.roc.auc(), c.roc.auc_sum(), c.roc.auc_trapezoid())?;
    }
    Ok(())
}

/// The `(EI_1, k_1)` grid `EI_1 ∈ 6.0e11..=8.0e11` (step 2e10) by
/// `k_1 ∈ 300..=450` (step 15).
pub fn default_auc_grid() -> Vec<(f64, f64)> {
    let mut cells = Vec::with_capacity(121);
    for i in 0..=10 {
        for j in 0..=10 {
            cells.push((6.0e11 + 2.0e10 * i as f64, 300.0 + 15.0 * j as f64));
        }
    }
    cells
}

// Per-replication signal counts for one scenario: [threshold] -> (TP, FP).
fn count_signals(
    data: &CurvatureBatch,
    training: &Training,
    det: &DetectionConfig,
    change_batch: usize,
) -> Result<Vec<(usize, usize)>> {
    let batches = data.batches(det.batch_len);
    let log_ml = batch_likelihoods(&batches, &training.fit.model)?;
    let p: Vec<f64> = log_ml
        .iter()
        .map(|&l| signal_stat(l, training.null.mu0, training.null.sigma0))
        .collect::<Result<_>>()?;
    Ok(det
        .gamma_multipliers
        .iter()
        .map(|&a| {
            let hit = |i: &usize| signals(p[*i], a, &training.null, det.threshold_scale);
            let tp = (change_batch..p.len()).filter(hit).count();
            let fp = (0..change_batch).filter(hit).count();
            (tp, fp)
        })
        .collect())
}

/// ROC rates for every `after` parameter set, sharing noise (common random
/// numbers) and the per-replication training fit across cells. The
/// training batch is the first batch of each replication, which precedes
/// the change and is therefore identical for every cell.
#[allow(clippy::too_many_arguments)]
pub fn roc_surface(
    base: &Scenario,
    afters: &[PhysicsParams],
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    det: &DetectionConfig,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<RocResult>> {
    det.validate()?;
    let b = det.batch_len;
    if !base.change_at.is_multiple_of(b) || base.change_at < b || base.change_at >= base.n_points {
        return Err(Error::Config(format!(
            "change point {} must be a positive multiple of the batch length {b} inside the stream",
            base.change_at
        )));
    }
    let change_batch = base.change_at / b;
    let n_batches = base.n_points / b;
    let per_rep = (0..n_reps)
        .into_par_iter()
        .map(|j| {
            let data_seed = derive_seed(seed, STREAM_DATA, j as u64);
            let null_data = base.with_after(base.before).simulate(cfg, data_seed)?;
            let sched = schedule.with_seed(derive_seed(seed, STREAM_FIT, j as u64));
            let training = train(
                &null_data.slice(0, b),
                &base.before,
                base.noise_var,
                cfg,
                prior,
                &sched,
                det,
                derive_seed(seed, STREAM_NULL, j as u64),
            )?;
            afters
                .iter()
                .map(|after| {
                    let data = base.with_after(*after).simulate(cfg, data_seed)?;
                    count_signals(&data, &training, det, change_batch)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let n_pre = change_batch as f64;
    let n_post = (n_batches - change_batch) as f64;
    Ok((0..afters.len())
        .map(|c| {
            let mut tpr = vec![0.0; det.gamma_multipliers.len()];
            let mut fpr = vec![0.0; det.gamma_multipliers.len()];
            for rep in &per_rep {
                for (g, (tp, fp)) in rep[c].iter().enumerate() {
                    tpr[g] += *tp as f64 / n_post;
                    fpr[g] += *fp as f64 / n_pre;
                }
            }
            let n = n_reps.max(1) as f64;
            RocResult {
                gamma_multipliers: det.gamma_multipliers.clone(),
                tpr: tpr.into_iter().map(|v| v / n).collect(),
                fpr: fpr.into_iter().map(|v| v / n).collect(),
                n_reps,
            }
        })
        .collect())
}

/// ROC rates for a single scenario.
pub fn roc_analysis(
    scenario: &Scenario,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    det: &DetectionConfig,
    n_reps: usize,
    seed: u64,
) -> Result<RocResult> {
    Ok(roc_surface(scenario, &[scenario.after], cfg, prior, schedule, det, n_reps, seed)?
        .pop()
        .expect("one cell"))
}

/// AUC for every `(EI_1, k_1)` cell, all other scenario settings from `base`.
#[allow(clippy::too_many_arguments)]
pub fn auc_grid(
    base: &Scenario,
    cells: &[(f64, f64)],
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    det: &DetectionConfig,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<AucCell>> {
    let afters = cells
        .iter()
        .map(|&(ei, k)| PhysicsParams::new(base.before.p, k, ei))
        .collect::<Result<Vec<_>>>()?;
    let rocs = roc_surface(base, &afters, cfg, prior, schedule, det, n_reps, seed)?;
    Ok(cells
        .iter()
        .zip(rocs)
        .map(|(&(ei_1, k_1), roc)| AucCell { ei_1, k_1, roc })
        .collect())
}

/// Mean curvature shift between two parameter sets, in units of the batch
/// mean's noise standard deviation, per sensor.
pub fn shift_in_batch_sd(a: &PhysicsParams, b: &PhysicsParams, noise_var: f64, batch_len: usize, cfg: &BeamConfig) -> Result<Vec<f64>> {
    let (ca, cb) = (clean_curvature(a, cfg)?, clean_curvature(b, cfg)?);
    let sd = (noise_var / batch_len as f64).sqrt();
    Ok(ca.iter().zip(&cb).map(|(x, y)| (x - y).abs() / sd).collect())
}

/// Draws `n` null batches and returns their `p` statistics under `training`.
pub fn null_p_values(
    training: &Training,
    generator: &PhysicsParams,
    batch_len: usize,
    noise_var: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cfg = training.fit.model.config();
    (0..n)
        .map(|r| {
            let batch = simulate_dataset(generator, generator, 0, batch_len, noise_var, cfg, derive_seed(seed, 0xF5E5, r as u64))?;
            let l = training.fit.model.log_marginal_for_curvature(&EmpiricalStats::from_batch(&batch)?.mu_f)?;
            signal_stat(l, training.null.mu0, training.null.sigma0)
        })
        .collect()
}
