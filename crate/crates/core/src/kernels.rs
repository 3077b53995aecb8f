//! Squared-exponential prior on the deflection shape `u` and the covariances
//! it induces on curvature `f = a · u''`, with `a = ±p λ / k`.

use serde::{Deserialize, Serialize};

use crate::beam::{flexibility, BeamConfig, PhysicsParams};
use crate::error::{Error, Result};

/// Hyperparameters `θ = (k, EI, σ²)` plus the known load `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub k: f64,
    pub ei: f64,
    /// Reciprocal length-scale parameter of the squared-exponential kernel.
    pub sigma2: f64,
    pub p: f64,
}

impl HyperParams {
    pub fn new(k: f64, ei: f64, sigma2: f64, p: f64) -> Result<Self> {
        let theta = HyperParams { k, ei, sigma2, p };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("EI", self.ei), ("sigma2", self.sigma2), ("p", self.p)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ParameterRange(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        flexibility(self.k, self.ei)
    }

    pub fn physics(&self) -> PhysicsParams {
        PhysicsParams {
            p: self.p,
            k: self.k,
            ei: self.ei,
        }
    }
}

/// `k_uu(x, x') = exp(-(σ²/2) ((x - x') / d)²)`.
pub fn k_uu(x: f64, xp: f64, sigma2: f64, d: f64) -> f64 {
    let r = (x - xp) / d;
    (-0.5 * sigma2 * r * r).exp()
}

/// Cross-covariance between `u(x)` and `f(x')`.
pub fn k_uf(x: f64, xp: f64, theta: &HyperParams, cfg: &BeamConfig) -> f64 {
    JointKernel::new(theta, cfg).uf(x, xp)
}

/// Cross-covariance between `f(x)` and `u(x')`.
pub fn k_fu(x: f64, xp: f64, theta: &HyperParams, cfg: &BeamConfig) -> f64 {
    JointKernel::new(theta, cfg).fu(x, xp)
}

/// Auto-covariance of curvature.
pub fn k_ff(x: f64, xp: f64, theta: &HyperParams, cfg: &BeamConfig) -> f64 {
    JointKernel::new(theta, cfg).ff(x, xp)
}

/// The three kernels with their constant factors precomputed.
#[derive(Debug, Clone, Copy)]
pub struct JointKernel {
    sigma2: f64,
    span: f64,
    // σ²/d²
    curv: f64,
    // curvature operator scale a
    op: f64,
}

impl JointKernel {
    pub fn new(theta: &HyperParams, cfg: &BeamConfig) -> Self {
        JointKernel {
            sigma2: theta.sigma2,
            span: cfg.span,
            curv: theta.sigma2 / (cfg.span * cfg.span),
            op: cfg.curvature_sign.factor() * theta.p * theta.lambda() / theta.k,
        }
    }

    /// Scale `a` of the operator `f = a · d²u/dx²`.
    pub fn operator_scale(&self) -> f64 {
        self.op
    }

    // s = σ² ((x - x') / d)²
    fn scaled_lag(&self, x: f64, xp: f64) -> f64 {
        let r = (x - xp) / self.span;
        self.sigma2 * r * r
    }

    pub fn uu(&self, x: f64, xp: f64) -> f64 {
        (-0.5 * self.scaled_lag(x, xp)).exp()
    }

    pub fn uf(&self, x: f64, xp: f64) -> f64 {
        let s = self.scaled_lag(x, xp);
        self.op * self.curv * (s - 1.0) * (-0.5 * s).exp()
    }

    pub fn fu(&self, x: f64, xp: f64) -> f64 {
        self.uf(xp, x)
    }

    pub fn ff(&self, x: f64, xp: f64) -> f64 {
        let s = self.scaled_lag(x, xp);
        self.op * self.op * self.curv * self.curv * (3.0 - 6.0 * s + s * s) * (-0.5 * s).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::CurvatureSign;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prior_theta() -> HyperParams {
        HyperParams::new(5f64.exp(), 28f64.exp(), 2.5f64.exp(), 125_000.0).unwrap()
    }

    fn operator_cfg() -> BeamConfig {
        BeamConfig {
            curvature_sign: CurvatureSign::Negative,
            ..BeamConfig::default()
        }
    }

    #[test]
    fn unit_at_zero_lag_and_unit_normalised_lag() {
        assert_eq!(k_uu(700.0, 700.0, 3.0, 2500.0), 1.0);
        let v = k_uu(0.0, 2500.0, 2.5f64.exp(), 2500.0);
        assert!((v - (-(2.5f64.exp()) / 2.0).exp()).abs() < 1e-15);
        assert!((v - 2.27e-3).abs() < 1e-5);
    }

    #[test]
    fn lag_zero_closed_forms_under_operator_sign() {
        let cfg = operator_cfg();
        let t = prior_theta();
        let (s2, p, l, k, d) = (t.sigma2, t.p, t.lambda(), t.k, cfg.span);
        let uf0 = k_uf(900.0, 900.0, &t, &cfg);
        assert!((uf0 - s2 * p * l / (d * d * k)).abs() <= 1e-14 * uf0.abs());
        let ff0 = k_ff(900.0, 900.0, &t, &cfg);
        let want = 3.0 * s2 * s2 * p * p * l * l / (d.powi(4) * k * k);
        assert!((ff0 - want).abs() <= 1e-13 * want);
        // flipping the convention flips only the cross term
        let pos = BeamConfig::default();
        assert_eq!(k_uf(900.0, 900.0, &t, &pos), -uf0);
        assert_eq!(k_ff(900.0, 900.0, &t, &pos), ff0);
    }

    /// Richardson-extrapolated central second difference with steps 10 mm
    /// and 5 mm. A plain 0.01 mm step leaves ~1e-5 relative round-off at
    /// d = 2500 (and far more when nested); the extrapolated remainder is
    /// O((h σ / d)⁴) ≈ 1e-7.
    fn second_difference(f: impl Fn(f64) -> f64, z: f64) -> f64 {
        let d2 = |h: f64| (f(z + h) - 2.0 * f(z) + f(z - h)) / (h * h);
        (4.0 * d2(5.0) - d2(10.0)) / 3.0
    }

    #[test]
    fn cross_kernel_matches_second_difference() {
        for cfg in [operator_cfg(), BeamConfig::default()] {
            let t = prior_theta();
            let a = JointKernel::new(&t, &cfg).operator_scale();
            let (x, xp) = (500.0, 1250.0);
            let fd = a * second_difference(|z| k_uu(x, z, t.sigma2, cfg.span), xp);
            let exact = k_uf(x, xp, &t, &cfg);
            assert!(((fd - exact) / exact).abs() < 1e-5, "{fd} vs {exact}");
        }
    }

    #[test]
    fn auto_kernel_matches_nested_differences() {
        let cfg = operator_cfg();
        let t = prior_theta();
        let kern = JointKernel::new(&t, &cfg);
        let a = kern.operator_scale();
        let (x, xp) = (500.0, 2000.0);
        let inner = |z: f64| a * second_difference(|w| k_uu(z, w, t.sigma2, cfg.span), xp);
        let fd = a * second_difference(inner, x);
        let exact = kern.ff(x, xp);
        assert!(((fd - exact) / exact).abs() < 1e-4, "{fd} vs {exact}");
    }

    #[test]
    fn gram_matrix_psd() {
        let cfg = BeamConfig::default();
        let t = prior_theta();
        let kern = JointKernel::new(&t, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2500.0)).collect();
        let g = DMatrix::from_fn(20, 20, |i, j| kern.ff(xs[i], xs[j]));
        let eig = g.symmetric_eigenvalues();
        let (min, max) = eig.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        assert!(min >= -1e-10 * max, "min eig {min}, max {max}");
    }

    #[test]
    fn vanishing_sigma2_limit() {
        let cfg = BeamConfig::default();
        let t = HyperParams::new(150.0, 1e12, 1e-12, 125_000.0).unwrap();
        assert!((k_uu(0.0, 2500.0, t.sigma2, cfg.span) - 1.0).abs() < 1e-11);
        assert!(k_uf(0.0, 1000.0, &t, &cfg).abs() < 1e-15);
        assert!(k_ff(0.0, 1000.0, &t, &cfg).abs() < 1e-25);
    }

    proptest! {
        #[test]
        fn kernels_even_in_lag(a in 0.0f64..2500.0, b in 0.0f64..2500.0, ls2 in 0.0f64..4.0) {
            let t = HyperParams::new(300.0, 7e11, ls2.exp(), 125_000.0).unwrap();
            let cfg = BeamConfig::default();
            prop_assert_eq!(k_uu(a, b, t.sigma2, cfg.span), k_uu(b, a, t.sigma2, cfg.span));
            prop_assert_eq!(k_uf(a, b, &t, &cfg), k_uf(b, a, &t, &cfg));
            prop_assert_eq!(k_fu(a, b, &t, &cfg), k_uf(a, b, &t, &cfg));
            prop_assert_eq!(k_ff(a, b, &t, &cfg), k_ff(b, a, &t, &cfg));
        }
    }
}
