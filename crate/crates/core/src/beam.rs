//! Finite beam on an elastic (Winkler) foundation, free at both ends, loaded
//! by two equal point forces placed symmetrically about midspan.
//!
//! The deflection is `y(x) = (p λ / k) w(x, λ)` with the dimensionless shape
//! function `w`. On `[0, x1]` the shape is the free-end homogeneous solution
//! `v`, on `[x1, x2]` the load at `x1` adds a term whose third derivative
//! jumps by `4λ³`, and on `[x2, d]` the shape is mirrored.
//!
//! All lengths are millimetres, forces newtons, `k` is N/mm² and `EI` is
//! N·mm², so `λ` is mm⁻¹ and curvature is mm⁻¹.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible `λ·d`; products of two `cosh` factors overflow beyond
/// roughly twice this.
pub const MAX_LAMBDA_SPAN: f64 = 350.0;

/// Sign relating curvature to the second derivative of deflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureSign {
    /// `f = -(p λ / k) w''`: the operator form `-d²y/dx² = f`.
    Negative,
    /// `f = +(p λ / k) w''`: the finite-difference generator form. This is
    /// the convention under which the analytic shape reproduces measured
    /// curvature signs (hogging at the load points, sagging at midspan).
    #[default]
    Positive,
}

impl CurvatureSign {
    pub fn factor(self) -> f64 {
        match self {
            CurvatureSign::Negative => -1.0,
            CurvatureSign::Positive => 1.0,
        }
    }
}

/// Geometry of the sleeper and its sensor network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    /// Span `d` (mm).
    pub span: f64,
    /// Offset `c` (mm); loads sit at `x1 = (d - 2c) / 2` and `x2 = d - x1`.
    pub half_spacing: f64,
    /// Sensor coordinates `X_f` (mm).
    pub sensor_coords: Vec<f64>,
    /// Distance between the top and bottom FBG rows (mm).
    pub strand_sep: f64,
    pub curvature_sign: CurvatureSign,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            span: 2500.0,
            half_spacing: 750.0,
            sensor_coords: vec![500.0, 1250.0, 2000.0],
            strand_sep: 91.5,
            curvature_sign: CurvatureSign::Positive,
        }
    }
}

impl BeamConfig {
    pub fn x1(&self) -> f64 {
        (self.span - 2.0 * self.half_spacing) / 2.0
    }

    pub fn x2(&self) -> f64 {
        self.span - self.x1()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_coords.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, x1, x2) = (self.span, self.x1(), self.x2());
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Config(format!("span must be positive, got {d}")));
        }
        if !(0.0 < x1 && x1 < x2 && x2 < d) {
            return Err(Error::Config(format!(
                "load points must satisfy 0 < x1 < x2 < d, got x1={x1}, x2={x2}, d={d}"
            )));
        }
        if let Some(&x) = self.sensor_coords.iter().find(|&&x| !(x > 0.0 && x < d)) {
            return Err(Error::Config(format!(
                "sensor coordinate {x} not inside (0, {d})"
            )));
        }
        if !(self.strand_sep > 0.0) {
            return Err(Error::Config(format!(
                "strand separation must be positive, got {}",
                self.strand_sep
            )));
        }
        Ok(())
    }

    /// Same geometry with a different sensor set.
    pub fn with_sensors(&self, sensor_coords: Vec<f64>) -> Self {
        BeamConfig {
            sensor_coords,
            ..self.clone()
        }
    }
}

/// Flexibility `λ = (k / 4EI)^(1/4)`.
pub fn flexibility(k: f64, ei: f64) -> f64 {
    (k / (4.0 * ei)).powf(0.25)
}

/// Physical parameters of the loaded beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// Point-load magnitude (N).
    pub p: f64,
    /// Ballast stiffness (N/mm²).
    pub k: f64,
    /// Flexural rigidity (N·mm²).
    pub ei: f64,
}

impl PhysicsParams {
    pub fn new(p: f64, k: f64, ei: f64) -> Result<Self> {
        let params = PhysicsParams { p, k, ei };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(Error::ParameterRange(format!("load p must be >= 0, got {}", self.p)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::ParameterRange(format!("k must be > 0, got {}", self.k)));
        }
        if !(self.ei > 0.0 && self.ei.is_finite()) {
            return Err(Error::ParameterRange(format!("EI must be > 0, got {}", self.ei)));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        flexibility(self.k, self.ei)
    }

    /// Deflection amplitude `p λ / k` (mm).
    pub fn amplitude(&self) -> f64 {
        self.p * self.lambda() / self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureMethod {
    Analytic,
    CentralDifference { h: f64 },
}

impl Default for CurvatureMethod {
    fn default() -> Self {
        CurvatureMethod::CentralDifference { h: 1.0 }
    }
}

// Load-dependent coefficients of the free-end solution `v`.
struct ShapeCoefficients {
    lambda: f64,
    x1: f64,
    x2: f64,
    span: f64,
    even: f64,
    odd: f64,
}

impl ShapeCoefficients {
    fn new(lambda: f64, cfg: &BeamConfig) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::ParameterRange(format!("lambda must be > 0, got {lambda}")));
        }
        let (d, x1, x2) = (cfg.span, cfg.x1(), cfg.x2());
        if lambda * d > MAX_LAMBDA_SPAN {
            return Err(Error::ParameterRange(format!(
                "lambda*d = {} exceeds the hyperbolic overflow bound {MAX_LAMBDA_SPAN}",
                lambda * d
            )));
        }
        let (a1, a2) = (lambda * x1, lambda * x2);
        let (ch1, sh1, c1, s1) = (a1.cosh(), a1.sinh(), a1.cos(), a1.sin());
        let (ch2, sh2, c2, s2) = (a2.cosh(), a2.sinh(), a2.cos(), a2.sin());
        let denom = (lambda * d).sinh() + (lambda * d).sin();
        Ok(ShapeCoefficients {
            lambda,
            x1,
            x2,
            span: d,
            even: 2.0 * (ch1 * c2 + ch2 * c1) / denom,
            odd: (ch1 * s2 - sh1 * c2 + ch2 * s1 - sh2 * c1) / denom,
        })
    }

    // (value, second derivative w.r.t. x) on [0, x2]
    fn eval_left(&self, x: f64) -> (f64, f64) {
        let l = self.lambda;
        let a = l * x;
        let (ch, sh, c, s) = (a.cosh(), a.sinh(), a.cos(), a.sin());
        let mut value = self.even * ch * c + self.odd * (ch * s + sh * c);
        let mut second = self.even * (-2.0 * sh * s) + self.odd * 2.0 * (sh * c - ch * s);
        if x > self.x1 {
            let b = l * (x - self.x1);
            let (chb, shb, cb, sb) = (b.cosh(), b.sinh(), b.cos(), b.sin());
            value += chb * sb - shb * cb;
            second += 2.0 * (chb * sb + shb * cb);
        }
        (value, second * l * l)
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        if x > self.x2 {
            self.eval_left(self.span - x)
        } else {
            self.eval_left(x)
        }
    }
}

fn check_domain(x: f64, lo: f64, hi: f64) -> Result<()> {
    if x >= lo && x <= hi {
        Ok(())
    } else {
        Err(Error::Domain { x, lo, hi })
    }
}

/// Dimensionless shape `w(x, λ)`.
pub fn deflection_shape(x: f64, lambda: f64, cfg: &BeamConfig) -> Result<f64> {
    check_domain(x, 0.0, cfg.span)?;
    Ok(ShapeCoefficients::new(lambda, cfg)?.eval(x).0)
}

/// Shape values at many coordinates, sharing the load coefficients.
pub fn deflection_shapes(xs: &[f64], lambda: f64, cfg: &BeamConfig) -> Result<Vec<f64>> {
    let coeffs = ShapeCoefficients::new(lambda, cfg)?;
    xs.iter()
        .map(|&x| {
            check_domain(x, 0.0, cfg.span)?;
            Ok(coeffs.eval(x).0)
        })
        .collect()
}

/// Closed-form `w''(x, λ)` (mm⁻²).
pub fn deflection_shape_second_derivative(x: f64, lambda: f64, cfg: &BeamConfig) -> Result<f64> {
    check_domain(x, 0.0, cfg.span)?;
    Ok(ShapeCoefficients::new(lambda, cfg)?.eval(x).1)
}

/// Vertical deflection `y = (p λ / k) w(x, λ)` in mm.
pub fn deflection(x: f64, params: &PhysicsParams, cfg: &BeamConfig) -> Result<f64> {
    params.validate()?;
    Ok(params.amplitude() * deflection_shape(x, params.lambda(), cfg)?)
}

/// Curvature implied by the beam model at `x`, using `cfg.curvature_sign`.
pub fn curvature_physics(
    x: f64,
    params: &PhysicsParams,
    cfg: &BeamConfig,
    method: CurvatureMethod,
) -> Result<f64> {
    curvature_with_sign(x, params, cfg, method, cfg.curvature_sign)
}

pub fn curvature_with_sign(
    x: f64,
    params: &PhysicsParams,
    cfg: &BeamConfig,
    method: CurvatureMethod,
    sign: CurvatureSign,
) -> Result<f64> {
    params.validate()?;
    let coeffs = ShapeCoefficients::new(params.lambda(), cfg)?;
    let w2 = match method {
        CurvatureMethod::Analytic => {
            check_domain(x, 0.0, cfg.span)?;
            coeffs.eval(x).1
        }
        CurvatureMethod::CentralDifference { h } => {
            if !(h > 0.0) {
                return Err(Error::ParameterRange(format!("step h must be > 0, got {h}")));
            }
            check_domain(x, h, cfg.span - h)?;
            (coeffs.eval(x + h).0 - 2.0 * coeffs.eval(x).0 + coeffs.eval(x - h).0) / (h * h)
        }
    };
    Ok(sign.factor() * params.amplitude() * w2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGridPoint {
    pub x: f64,
    pub w: f64,
    pub y: f64,
    pub curvature: f64,
}

/// Evaluates the beam model on `n` evenly spaced points over `[0, d]`.
/// Where a difference stencil would leave the beam the analytic second
/// derivative is used instead.
pub fn evaluate_grid(
    params: &PhysicsParams,
    cfg: &BeamConfig,
    method: CurvatureMethod,
    n: usize,
) -> Result<Vec<BeamGridPoint>> {
    if n < 2 {
        return Err(Error::Config("grid needs at least two points".into()));
    }
    params.validate()?;
    let amp = params.amplitude();
    let lambda = params.lambda();
    (0..n)
        .map(|i| {
            let x = cfg.span * i as f64 / (n - 1) as f64;
            let w = deflection_shape(x, lambda, cfg)?;
            let m = match method {
                CurvatureMethod::CentralDifference { h } if x < h || x > cfg.span - h => {
                    CurvatureMethod::Analytic
                }
                m => m,
            };
            Ok(BeamGridPoint {
                x,
                w,
                y: amp * w,
                curvature: curvature_physics(x, params, cfg, m)?,
            })
        })
        .collect()
}

pub fn write_grid_csv<W: Write>(out: &mut W, header: &str, grid: &[BeamGridPoint]) -> std::io::Result<()> {
    if !header.is_empty() {
        writeln!(out, "# {header}")?;
    }
    writeln!(out, "x_mm,w,y_mm,curvature")?;
    for p in grid {
        writeln!(out, "{},{:e},{:e},{:e}", p.x, p.w, p.y, p.curvature)?;
    }
    Ok(())
}
