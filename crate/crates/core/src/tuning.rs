//! Choice of the number of simulation points `N_u` by held-out prediction
//! error at one sensor.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::BeamConfig;
use crate::error::{Error, Result};
use crate::estimation::{fit_map, AnnealSchedule, EmpiricalStats, PriorSpec};
use crate::rng::derive_seed;

const STREAM_TUNE: u64 = 0x7E5E;

/// Default held-out sensor (1-based).
pub const DEFAULT_HOLDOUT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    #[serde(rename = "N_u")]
    pub n_u: usize,
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Fits on every sensor except `holdout` (1-based) and scores the
/// posterior of curvature at the held-out coordinate against its mean.
pub fn mse_at_holdout(
    n_u: usize,
    stats: &EmpiricalStats,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    p: f64,
    holdout: usize,
) -> Result<MsePoint> {
    let n_f = cfg.n_sensors();
    if n_f < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n_f });
    }
    if holdout == 0 || holdout > n_f {
        return Err(Error::Config(format!("holdout sensor {holdout} outside 1..={n_f}")));
    }
    if stats.mu_f.len() != n_f {
        return Err(Error::Config(format!("{} curvature means for {n_f} sensors", stats.mu_f.len())));
    }
    let h = holdout - 1;
    let keep: Vec<usize> = (0..n_f).filter(|&j| j != h).collect();
    let train_cfg = cfg.with_sensors(keep.iter().map(|&j| cfg.sensor_coords[j]).collect());
    let fit = fit_map(&stats.select(&keep), n_u, &train_cfg, prior, schedule, p)?;
    let z = fit.model.posterior_f(cfg.sensor_coords[h]);
    let bias2 = (z.mean - stats.mu_f[h]).powi(2);
    Ok(MsePoint {
        n_u,
        bias2,
        variance: z.variance,
        mse: bias2 + z.variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    #[serde(rename = "selected_N_u")]
    pub selected: usize,
    pub curve: Vec<MsePoint>,
}

/// Index of the smallest MSE; values equal to within a relative 1e-12 go
/// to the earlier (smaller `N_u`) entry.
pub fn select_min(curve: &[MsePoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, pt) in curve.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) => {
                let cur = curve[b].mse;
                if pt.mse < cur && (cur - pt.mse) > 1e-12 * cur.abs().max(pt.mse.abs()) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Evaluates every `N_u` in `n_min..=n_max`, each with its own sub-seed of
/// `schedule.rng_seed`, and picks the minimiser.
#[allow(clippy::too_many_arguments)]
pub fn tune_nu(
    stats: &EmpiricalStats,
    cfg: &BeamConfig,
    prior: &PriorSpec,
    schedule: &AnnealSchedule,
    p: f64,
    n_min: usize,
    n_max: usize,
    holdout: usize,
) -> Result<TuningResult> {
    if n_min > n_max {
        return Err(Error::Config(format!("N_u interval [{n_min}, {n_max}] is empty")));
    }
    let curve = (n_min..=n_max)
        .into_par_iter()
        .map(|n_u| {
            let sched = schedule.with_seed(derive_seed(schedule.rng_seed, STREAM_TUNE, n_u as u64));
            mse_at_holdout(n_u, stats, cfg, prior, &sched, p, holdout)
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = curve[select_min(&curve).expect("nonempty interval")].n_u;
    Ok(TuningResult { selected, curve })
}

pub fn write_tuning_csv<W: Write>(out: &mut W, header: &str, result: &TuningResult) -> std::io::Result<()> {
    writeln!(out, "# physgp-tuning-v1 {header} selected_N_u={}", result.selected)?;
    writeln!(out, "N_u,bias2,variance,mse")?;
    for pt in &result.curve {
        writeln!(out, "{},{:e},{:e},{:e}", pt.n_u, pt.bias2, pt.variance, pt.mse)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(n_u: usize, mse: f64) -> MsePoint {
        MsePoint { n_u, bias2: mse, variance: 0.0, mse }
    }

    #[test]
    fn tie_goes_to_smaller_nu() {
        let curve = [pt(2, 3.0), pt(3, 1.0), pt(4, 1.0 * (1.0 + 1e-14)), pt(5, 1.0 - 1e-14)];
        assert_eq!(select_min(&curve), Some(1));
        let curve = [pt(2, 3.0), pt(3, 2.0), pt(4, 1.0)];
        assert_eq!(select_min(&curve), Some(2));
        assert_eq!(select_min(&[]), None);
    }

    #[test]
    fn degenerate_interval() {
        let cfg = BeamConfig::default();
        let stats = EmpiricalStats::from_rows(&[vec![-1.1e-5, 2.5e-6, -1.2e-5], vec![-1.2e-5, 2.4e-6, -1.1e-5]]).unwrap();
        let sched = AnnealSchedule { n_iters: 100, restarts: 1, ..AnnealSchedule::default() };
        let r = tune_nu(&stats, &cfg, &PriorSpec::default(), &sched, 125_000.0, 5, 5, 3).unwrap();
        assert_eq!(r.selected, 5);
        assert_eq!(r.curve.len(), 1);
        let p = r.curve[0];
        assert!(p.bias2 >= 0.0 && p.variance >= 0.0);
        assert_eq!(p.mse, p.bias2 + p.variance);
        assert!(tune_nu(&stats, &cfg, &PriorSpec::default(), &sched, 125_000.0, 6, 5, 3).is_err());
    }

    #[test]
    fn holdout_bounds() {
        let cfg = BeamConfig::default();
        let stats = EmpiricalStats::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let s = AnnealSchedule::default();
        assert!(mse_at_holdout(2, &stats, &cfg, &PriorSpec::default(), &s, 1.0, 0).is_err());
        assert!(mse_at_holdout(2, &stats, &cfg, &PriorSpec::default(), &s, 1.0, 4).is_err());
    }
}
