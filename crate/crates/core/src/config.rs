//! TOML run configuration: beam geometry, prior, annealing schedule,
//! detection settings and simulation defaults.
//!
//! ```toml
//! [beam]
//! span = 2500.0
//! sensor_coords = [500.0, 1250.0, 2000.0]
//! curvature_sign = "positive"
//!
//! [prior]
//! k = { m = 5.0, s = 0.25 }
//!
//! [anneal]
//! n_iters = 2000
//!
//! [detection]
//! batch_len = 5
//! threshold_scale = "likelihood"
//!
//! [simulation]
//! p = 125000.0
//! noise_var = 2.5e-13
//! ```
//!
//! Every section and key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beam::{BeamConfig, PhysicsParams};
use crate::detection::{DetectionConfig, Scenario, DEFAULT_LOAD, DEFAULT_NOISE_VAR};
use crate::error::{Error, Result};
use crate::estimation::{AnnealSchedule, PriorSpec};
use crate::tuning::DEFAULT_HOLDOUT;

/// Environment variable consulted when no config path is given.
pub const CONFIG_ENV: &str = "PHYSGP_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Axle load `p` (N).
    pub p: f64,
    /// Noise variance of the change-point streams.
    pub noise_var: f64,
    /// Noise variance of the small five-draw dataset.
    pub simple_noise_var: f64,
    pub simple_mean: Vec<f64>,
    pub simple_rows: usize,
    /// Pre-change ballast stiffness `k_0` (N/mm²).
    pub k0: f64,
    /// Pre-change flexural rigidity `EI_0` (N·mm²).
    pub ei0: f64,
    pub n_points: usize,
    pub change_at: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            p: DEFAULT_LOAD,
            noise_var: DEFAULT_NOISE_VAR,
            simple_noise_var: 1e-12,
            simple_mean: vec![-1e-5, 2.45e-6, -1e-5],
            simple_rows: 5,
            k0: 450.0,
            ei0: 8e11,
            n_points: 100,
            change_at: 50,
        }
    }
}

impl SimulationConfig {
    pub fn before(&self) -> Result<PhysicsParams> {
        PhysicsParams::new(self.p, self.k0, self.ei0)
    }

    /// Change-point stream for a preset; `None` for the five-draw dataset.
    pub fn scenario(&self, preset: Preset) -> Result<Option<Scenario>> {
        let before = self.before()?;
        let (k1, ei1) = match preset {
            Preset::Sec43 => return Ok(None),
            Preset::EiDrop => (self.k0, 0.75 * self.ei0),
            Preset::KDrop => (self.k0 * 2.0 / 3.0, self.ei0),
            Preset::Both10Pct => (0.9 * self.k0, 0.9 * self.ei0),
            Preset::Null => (self.k0, self.ei0),
        };
        Ok(Some(Scenario {
            before,
            after: PhysicsParams::new(self.p, k1, ei1)?,
            change_at: self.change_at,
            n_points: self.n_points,
            noise_var: self.noise_var,
        }))
    }
}

/// Named simulated datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Five i.i.d. draws around a fixed curvature mean.
    Sec43,
    /// `EI` falls by a quarter at the change point (8e11 to 6e11 by default).
    EiDrop,
    /// `k` falls by a third (450 to 300 by default).
    KDrop,
    /// Both `k` and `EI` fall by 10%.
    Both10Pct,
    /// No change.
    Null,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Sec43, Preset::EiDrop, Preset::KDrop, Preset::Both10Pct, Preset::Null];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sec43 => "sec4.3",
            Preset::EiDrop => "ei-drop",
            Preset::KDrop => "k-drop",
            Preset::Both10Pct => "both-10pct",
            Preset::Null => "null",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub n_min: usize,
    pub n_max: usize,
    /// Held-out sensor, 1-based.
    pub holdout: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            n_min: 2,
            n_max: 14,
            holdout: DEFAULT_HOLDOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub prior: PriorSpec,
    pub anneal: AnnealSchedule,
    pub detection: DetectionConfig,
    pub simulation: SimulationConfig,
    pub tuning: TuningConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Loads `path` if given, else the file named by `PHYSGP_CONFIG`, else
    /// the defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(&PathBuf::from(p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.beam.validate()?;
        self.prior.validate()?;
        self.anneal.validate()?;
        self.detection.validate()?;
        if !(self.simulation.p > 0.0) {
            return Err(Error::Config(format!("load p must be > 0, got {}", self.simulation.p)));
        }
        if !(self.simulation.noise_var >= 0.0 && self.simulation.simple_noise_var >= 0.0) {
            return Err(Error::Config("noise variances must be >= 0".into()));
        }
        self.simulation.before()?;
        if self.simulation.change_at > self.simulation.n_points {
            return Err(Error::Config("simulation.change_at exceeds simulation.n_points".into()));
        }
        if self.tuning.n_min > self.tuning.n_max {
            return Err(Error::Config("tuning.n_min exceeds tuning.n_max".into()));
        }
        Ok(())
    }
}
