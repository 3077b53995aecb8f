//! Joint Gaussian process over deflection shape `u` (simulated at `X_u`) and
//! curvature `f` (observed at `X_f`).

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::beam::{deflection_shapes, BeamConfig};
use crate::error::{Error, Result};
use crate::kernels::{HyperParams, JointKernel};

/// Relative diagonal jitter applied before the first factorisation attempt.
pub const BASE_JITTER: f64 = 1e-10;
/// Number of ×10 escalations tried after the base attempt fails.
pub const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDesign {
    /// Simulation coordinates `X_u` (mm).
    pub xu: Vec<f64>,
    /// Sensor coordinates `X_f` (mm).
    pub xf: Vec<f64>,
    /// Stacked targets `[w(X_u, λ), μ̂_f]`.
    pub y: Vec<f64>,
    /// Diagonal of the curvature noise covariance `Σ_f`.
    pub noise_f: Vec<f64>,
}

impl JointDesign {
    pub fn new(xu: Vec<f64>, xf: Vec<f64>, y: Vec<f64>, noise_f: Vec<f64>) -> Result<Self> {
        let design = JointDesign { xu, xf, y, noise_f };
        design.validate()?;
        Ok(design)
    }

    /// Design with `X_u` evenly spaced and `Y = [w(X_u, λ), mean_f]`.
    pub fn with_simulations(
        n_u: usize,
        lambda: f64,
        cfg: &BeamConfig,
        mean_f: &[f64],
        noise_f: &[f64],
    ) -> Result<Self> {
        let xu = evenly_spaced(n_u, cfg.span);
        let mut y = deflection_shapes(&xu, lambda, cfg)?;
        y.extend_from_slice(mean_f);
        JointDesign::new(xu, cfg.sensor_coords.clone(), y, noise_f.to_vec())
    }

    pub fn len(&self) -> usize {
        self.xu.len() + self.xf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.len() {
            return Err(Error::Config(format!(
                "target length {} does not match N_u + N_f = {}",
                self.y.len(),
                self.len()
            )));
        }
        if self.noise_f.len() != self.xf.len() {
            return Err(Error::Config(format!(
                "noise diagonal has {} entries for {} sensors",
                self.noise_f.len(),
                self.xf.len()
            )));
        }
        if let Some(v) = self.noise_f.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("noise variance must be >= 0, got {v}")));
        }
        Ok(())
    }

    /// Replaces the curvature part of `Y`.
    pub fn with_curvature_targets(&self, mean_f: &[f64]) -> Result<Self> {
        if mean_f.len() != self.xf.len() {
            return Err(Error::Config(format!(
                "expected {} curvature targets, got {}",
                self.xf.len(),
                mean_f.len()
            )));
        }
        let mut y = self.y[..self.xu.len()].to_vec();
        y.extend_from_slice(mean_f);
        Ok(JointDesign { y, ..self.clone() })
    }
}

/// `n` evenly spaced coordinates covering `[0, d]`; a single point sits at
/// midspan.
pub fn evenly_spaced(n: usize, d: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![d / 2.0],
        _ => (0..n).map(|i| d * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Joint covariance without jitter.
pub fn joint_covariance(design: &JointDesign, theta: &HyperParams, cfg: &BeamConfig) -> DMatrix<f64> {
    let kern = JointKernel::new(theta, cfg);
    let nu = design.xu.len();
    let n = design.len();
    let coord = |i: usize| if i < nu { design.xu[i] } else { design.xf[i - nu] };
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = match (i < nu, j < nu) {
                (true, true) => kern.uu(coord(i), coord(j)),
                (false, true) => kern.fu(coord(i), coord(j)),
                (true, false) => kern.uf(coord(i), coord(j)),
                (false, false) => kern.ff(coord(i), coord(j)),
            };
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    for (i, s) in design.noise_f.iter().enumerate() {
        k[(nu + i, nu + i)] += s;
    }
    k
}

// The u and f blocks differ in scale by ten or more orders of magnitude, so
// jitter is proportional to each diagonal entry: the same as a uniform
// jitter on the unit-diagonal correlation matrix.
fn add_jitter(k: &mut DMatrix<f64>, rel: f64) {
    let n = k.nrows();
    let mean_diag = if n == 0 { 0.0 } else { k.trace() / n as f64 };
    for i in 0..n {
        let d = k[(i, i)];
        k[(i, i)] += rel * if d > 0.0 { d } else { mean_diag };
    }
}

/// Joint covariance with the base jitter applied.
pub fn assemble_k(design: &JointDesign, theta: &HyperParams, cfg: &BeamConfig) -> DMatrix<f64> {
    let mut k = joint_covariance(design, theta, cfg);
    add_jitter(&mut k, BASE_JITTER);
    k
}

fn gaussian_log_density(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>) -> f64 {
    let l = chol.l_dirty();
    let log_det: f64 = 2.0 * (0..y.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let white = l
        .view_range(.., ..)
        .solve_lower_triangular(y)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * log_det - 0.5 * white.norm_squared() - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

/// Gaussian log density of `y` under `N(0, k)`.
pub fn log_marginal(y: &[f64], k: &DMatrix<f64>) -> Result<f64> {
    if k.nrows() != y.len() || k.ncols() != y.len() {
        return Err(Error::Config(format!(
            "covariance is {}x{} but target has length {}",
            k.nrows(),
            k.ncols(),
            y.len()
        )));
    }
    let chol = Cholesky::new(k.clone()).ok_or(Error::CholeskyFailure { attempts: 0 })?;
    Ok(gaussian_log_density(&chol, &DVector::from_column_slice(y)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPoint {
    pub x: f64,
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorPoint {
    /// Central 95% band `mean ± 1.96 sd`.
    pub fn band95(&self) -> (f64, f64) {
        let half = 1.96 * self.variance.sqrt();
        (self.mean - half, self.mean + half)
    }
}

/// A joint model whose covariance has been factorised once; posterior and
/// likelihood queries reuse the factor.
#[derive(Debug, Clone)]
pub struct JointModel {
    theta: HyperParams,
    cfg: BeamConfig,
    kernel: JointKernel,
    design: JointDesign,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_ml: f64,
    jitter: f64,
}

impl JointModel {
    pub fn new(design: JointDesign, theta: HyperParams, cfg: &BeamConfig) -> Result<Self> {
        design.validate()?;
        theta.validate()?;
        let raw = joint_covariance(&design, &theta, cfg);
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::CholeskyFailure { attempts: 0 });
        }
        let mut rel = BASE_JITTER;
        let mut found = None;
        for _ in 0..=JITTER_ESCALATIONS {
            let mut k = raw.clone();
            add_jitter(&mut k, rel);
            if let Some(chol) = Cholesky::new(k) {
                found = Some(chol);
                break;
            }
            rel *= 10.0;
        }
        let chol = found.ok_or(Error::CholeskyFailure {
            attempts: JITTER_ESCALATIONS,
        })?;
        let y = DVector::from_column_slice(&design.y);
        let alpha = chol.solve(&y);
        let log_ml = gaussian_log_density(&chol, &y);
        Ok(JointModel {
            theta,
            cfg: cfg.clone(),
            kernel: JointKernel::new(&theta, cfg),
            design,
            chol,
            alpha,
            log_ml,
            jitter: rel,
        })
    }

    pub fn theta(&self) -> &HyperParams {
        &self.theta
    }

    pub fn design(&self) -> &JointDesign {
        &self.design
    }

    pub fn config(&self) -> &BeamConfig {
        &self.cfg
    }

    /// Relative jitter that made the factorisation succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_ml
    }

    /// Log marginal likelihood of different targets under the same
    /// covariance.
    pub fn log_marginal_of(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.design.len() {
            return Err(Error::Config(format!(
                "expected {} targets, got {}",
                self.design.len(),
                y.len()
            )));
        }
        Ok(gaussian_log_density(&self.chol, &DVector::from_column_slice(y)))
    }

    /// Log marginal likelihood with the curvature targets replaced.
    pub fn log_marginal_for_curvature(&self, mean_f: &[f64]) -> Result<f64> {
        let design = self.design.with_curvature_targets(mean_f)?;
        self.log_marginal_of(&design.y)
    }

    fn condition(&self, x: f64, q: DVector<f64>, prior_var: f64) -> PosteriorPoint {
        let mean = q.dot(&self.alpha);
        let white = self
            .chol
            .l_dirty()
            .view_range(.., ..)
            .solve_lower_triangular(&q)
            .expect("Cholesky factor has a positive diagonal");
        let variance = (prior_var - white.norm_squared()).max(0.0);
        PosteriorPoint { x, mean, variance }
    }

    /// Posterior of curvature `f(x)`.
    pub fn posterior_f(&self, x: f64) -> PosteriorPoint {
        let k = &self.kernel;
        let q = DVector::from_iterator(
            self.design.len(),
            self.design
                .xu
                .iter()
                .map(|&xu| k.fu(x, xu))
                .chain(self.design.xf.iter().map(|&xf| k.ff(x, xf))),
        );
        self.condition(x, q, k.ff(x, x))
    }

    /// Posterior of the deflection shape `u(x)`.
    pub fn posterior_u(&self, x: f64) -> PosteriorPoint {
        let k = &self.kernel;
        let q = DVector::from_iterator(
            self.design.len(),
            self.design
                .xu
                .iter()
                .map(|&xu| k.uu(x, xu))
                .chain(self.design.xf.iter().map(|&xf| k.uf(x, xf))),
        );
        self.condition(x, q, k.uu(x, x))
    }

    /// Posteriors of `f` and `u` on `n` evenly spaced points over the span.
    pub fn posterior_grid(&self, n: usize) -> Vec<(PosteriorPoint, PosteriorPoint)> {
        evenly_spaced(n, self.cfg.span)
            .into_iter()
            .map(|x| (self.posterior_f(x), self.posterior_u(x)))
            .collect()
    }
}

pub fn write_posterior_csv<W: Write>(
    out: &mut W,
    header: &str,
    grid: &[(PosteriorPoint, PosteriorPoint)],
) -> std::io::Result<()> {
    if !header.is_empty() {
        writeln!(out, "# {header}")?;
    }
    writeln!(out, "x_mm,f_mean,f_var,u_mean,u_var,f_lo95,f_hi95,u_lo95,u_hi95")?;
    for (f, u) in grid {
        let (flo, fhi) = f.band95();
        let (ulo, uhi) = u.band95();
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            f.x, f.mean, f.variance, u.mean, u.variance, flo, fhi, ulo, uhi
        )?;
    }
    Ok(())
}
