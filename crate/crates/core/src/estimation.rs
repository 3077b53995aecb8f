//! Empirical curvature moments, the log-normal regulariser and MAP
//! estimation of `θ = (σ², k, EI)` by simulated annealing.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beam::{flexibility, BeamConfig};
use crate::data_io::CurvatureBatch;
use crate::error::{Error, Result};
use crate::gp::{JointDesign, JointModel};
use crate::kernels::HyperParams;
use crate::rng::{derive_seed, rng_from_seed, DEFAULT_SEED};

/// Per-sensor sample mean and (1/M-normalised) variance of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub mu_f: Vec<f64>,
    pub sigma_f_diag: Vec<f64>,
    pub m: usize,
}

// Summing sorted values makes the result independent of row order.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

impl EmpiricalStats {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InsufficientData { needed: 2, got: m });
        }
        let n = rows[0].len();
        let mut mu_f = Vec::with_capacity(n);
        let mut sigma_f_diag = Vec::with_capacity(n);
        for j in 0..n {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            // shifting by the column minimum keeps a constant column exact
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = lo + sorted_sum(col.iter().map(|v| v - lo).collect()) / m as f64;
            let var = sorted_sum(col.iter().map(|v| (v - mean) * (v - mean)).collect()) / m as f64;
            mu_f.push(mean);
            sigma_f_diag.push(var);
        }
        Ok(EmpiricalStats { mu_f, sigma_f_diag, m })
    }

    pub fn from_batch(batch: &CurvatureBatch) -> Result<Self> {
        Self::from_rows(batch.rows())
    }

    /// Stats restricted to the given sensor columns.
    pub fn select(&self, cols: &[usize]) -> EmpiricalStats {
        EmpiricalStats {
            mu_f: cols.iter().map(|&j| self.mu_f[j]).collect(),
            sigma_f_diag: cols.iter().map(|&j| self.sigma_f_diag[j]).collect(),
            m: self.m,
        }
    }
}

pub fn empirical_stats(batch: &CurvatureBatch) -> Result<EmpiricalStats> {
    EmpiricalStats::from_batch(batch)
}

/// Log-normal density parameters: `ln x ~ N(m, s²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub m: f64,
    pub s: f64,
}

impl LogNormal {
    pub fn log_density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.m) / self.s;
        -x.ln() - 0.5 * (2.0 * PI * self.s * self.s).ln() - 0.5 * z * z
    }

    pub fn mode(&self) -> f64 {
        (self.m - self.s * self.s).exp()
    }

    pub fn median(&self) -> f64 {
        self.m.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub sigma2: LogNormal,
    pub k: LogNormal,
    pub ei: LogNormal,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            sigma2: LogNormal { m: 2.5, s: 0.125 },
            k: LogNormal { m: 5.0, s: 0.25 },
            ei: LogNormal { m: 28.0, s: 0.25 },
        }
    }
}

impl PriorSpec {
    /// Same locations with every scale replaced by `s`.
    pub fn with_scale(&self, s: f64) -> Self {
        PriorSpec {
            sigma2: LogNormal { s, ..self.sigma2 },
            k: LogNormal { s, ..self.k },
            ei: LogNormal { s, ..self.ei },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("sigma2", self.sigma2), ("k", self.k), ("ei", self.ei)] {
            if !(q.s > 0.0 && q.s.is_finite() && q.m.is_finite()) {
                return Err(Error::Config(format!("prior for {name} needs finite m and s > 0")));
            }
        }
        Ok(())
    }

    fn components(&self) -> [LogNormal; 3] {
        [self.sigma2, self.k, self.ei]
    }

    /// Componentwise prior modes `(σ², k, EI)`.
    pub fn mode(&self) -> [f64; 3] {
        self.components().map(|q| q.mode())
    }
}

/// Sum of the three log-normal log densities; `-∞` for nonpositive values.
pub fn log_prior(theta: &HyperParams, prior: &PriorSpec) -> f64 {
    prior.sigma2.log_density(theta.sigma2) + prior.k.log_density(theta.k) + prior.ei.log_density(theta.ei)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub n_iters: usize,
    /// Temperature at step `n` is `exp(-delta · n / n_iters)`.
    pub delta: f64,
    /// Random-walk standard deviation of `(ln σ², ln k, ln EI)`.
    pub proposal_std: [f64; 3],
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            n_iters: 2000,
            delta: 5.0,
            proposal_std: [0.05; 3],
            restarts: 3,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::Config("n_iters must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if self.proposal_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("proposal std must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        AnnealSchedule { rng_seed: seed, ..*self }
    }

    pub fn temperature(&self, n: usize) -> f64 {
        (-self.delta * n as f64 / self.n_iters as f64).exp()
    }
}

/// The regularised objective `log p(Y_θ | θ) + log g(θ)` for one batch.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    stats: &'a EmpiricalStats,
    n_u: usize,
    cfg: &'a BeamConfig,
    prior: &'a PriorSpec,
    p: f64,
}

impl<'a> Objective<'a> {
    pub fn new(stats: &'a EmpiricalStats, n_u: usize, cfg: &'a BeamConfig, prior: &'a PriorSpec, p: f64) -> Result<Self> {
        cfg.validate()?;
        prior.validate()?;
        if stats.mu_f.len() != cfg.n_sensors() {
            return Err(Error::Config(format!(
                "{} curvature means for {} sensors",
                stats.mu_f.len(),
                cfg.n_sensors()
            )));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::ParameterRange(format!("p must be > 0, got {p}")));
        }
        Ok(Objective { stats, n_u, cfg, prior, p })
    }

    pub fn theta(&self, log_theta: [f64; 3]) -> HyperParams {
        let [s2, k, ei] = log_theta.map(f64::exp);
        HyperParams { k, ei, sigma2: s2, p: self.p }
    }

    /// Model at `θ` with `Y_θ` rebuilt for its flexibility.
    pub fn model(&self, theta: &HyperParams) -> Result<JointModel> {
        let design = JointDesign::with_simulations(
            self.n_u,
            flexibility(theta.k, theta.ei),
            self.cfg,
            &self.stats.mu_f,
            &self.stats.sigma_f_diag,
        )?;
        JointModel::new(design, *theta, self.cfg)
    }

    /// Returns `(objective, log ML)`; `-∞` where the model is undefined.
    pub fn eval(&self, theta: &HyperParams) -> (f64, f64) {
        let lp = log_prior(theta, self.prior);
        if !lp.is_finite() {
            return (f64::NEG_INFINITY, f64::NEG_INFINITY);
        }
        match self.model(theta) {
            Ok(model) if model.log_marginal().is_finite() => (model.log_marginal() + lp, model.log_marginal()),
            _ => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: HyperParams,
    pub lambda: f64,
    pub objective: f64,
    pub log_ml: f64,
    /// Objective at the prior mode (the first restart's starting point).
    pub start_objective: f64,
    pub n_u: usize,
    pub n_iters: usize,
    pub seed: u64,
    pub model: JointModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta_hat: ThetaReport,
    pub lambda_hat: f64,
    pub objective: f64,
    pub log_ml: f64,
    pub n_iters: usize,
    pub seed: u64,
    #[serde(rename = "N_u")]
    pub n_u: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub k: f64,
    #[serde(rename = "EI")]
    pub ei: f64,
    pub sigma2: f64,
    pub p: f64,
}

impl FitResult {
    pub fn report(&self) -> FitReport {
        FitReport {
            theta_hat: ThetaReport {
                k: self.theta.k,
                ei: self.theta.ei,
                sigma2: self.theta.sigma2,
                p: self.theta.p,
            },
            lambda_hat: self.lambda,
            objective: self.objective,
            log_ml: self.log_ml,
            n_iters: self.n_iters,
            seed: self.seed,
            n_u: self.n_u,
        }
    }
}

struct Chain {
    best: [f64; 3],
    best_value: f64,
}

fn anneal_chain<R: Rng>(obj: &Objective, start: [f64; 3], schedule: &AnnealSchedule, rng: &mut R) -> Chain {
    let value = |l: [f64; 3]| obj.eval(&obj.theta(l)).0;
    let mut current = start;
    let mut current_value = value(start);
    let mut chain = Chain { best: start, best_value: current_value };
    for n in 1..=schedule.n_iters {
        let mut proposal = current;
        for (v, s) in proposal.iter_mut().zip(schedule.proposal_std) {
            let z: f64 = StandardNormal.sample(rng);
            *v += s * z;
        }
        let proposal_value = value(proposal);
        let accept = if proposal_value >= current_value {
            true
        } else if proposal_value.is_finite() {
            let t = schedule.temperature(n);
            rng.random::<f64>() < ((proposal_value - current_value) / t).exp()
        } else {
            false
        };
        if accept {
            current = proposal;
            current_value = proposal_value;
            if current_value > chain.best_value {
                chain.best = current;
                chain.best_value = current_value;
            }
        }
    }
    chain
}

/// MAP estimate of `θ` for one batch's statistics. Restart 0 starts at the
/// prior mode, later restarts at prior draws; the best state visited over
/// all restarts is returned.
pub fn fit_map(
    stats: &EmpiricalStats,
    n_u: usize,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    p: f64,
) -> Result<FitResult> {
    schedule.validate()?;
    let obj = Objective::new(stats, n_u, cfg, prior, p)?;
    let mode = prior.mode().map(f64::ln);
    let start_objective = obj.eval(&obj.theta(mode)).0;
    let mut best: Option<Chain> = None;
    for r in 0..schedule.restarts {
        let mut rng = rng_from_seed(derive_seed(schedule.rng_seed, 0xA11EA1, r as u64));
        let start = if r == 0 {
            mode
        } else {
            let comps = prior.components();
            std::array::from_fn(|i| {
                Normal::new(comps[i].m, comps[i].s)
                    .expect("validated prior scale")
                    .sample(&mut rng)
            })
        };
        let chain = anneal_chain(&obj, start, schedule, &mut rng);
        if best.as_ref().is_none_or(|b| chain.best_value > b.best_value) {
            best = Some(chain);
        }
    }
    let best = best.expect("at least one restart");
    if !best.best_value.is_finite() {
        return Err(Error::OptimizationFailure(
            "every visited parameter gave a non-finite objective".into(),
        ));
    }
    let theta = obj.theta(best.best);
    let model = obj.model(&theta)?;
    Ok(FitResult {
        theta,
        lambda: theta.lambda(),
        objective: best.best_value,
        log_ml: model.log_marginal(),
        start_objective,
        n_u,
        n_iters: schedule.n_iters,
        seed: schedule.rng_seed,
        model,
    })
}
