//! C interface to `physgp`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_fit`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`PhysgpStatus`]; on failure a description is available from
//! [`physgp_last_error_message`] on the same thread. Outputs are written
//! through caller-provided pointers only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use physgp::beam::{curvature_physics, deflection, CurvatureMethod, PhysicsParams};
use physgp::config::RunConfig;
use physgp::data_io::{CurvatureBatch, DataSource};
use physgp::detection::signal_stat;
use physgp::estimation::{fit_map, EmpiricalStats, FitResult};
use physgp::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysgpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Cholesky = 4,
    InsufficientData = 5,
    Optimization = 6,
    Parse = 7,
    Panic = 8,
}

/// Beam geometry, prior and annealing settings.
pub struct PhysgpConfig {
    inner: RunConfig,
}

/// A fitted joint model.
pub struct PhysgpModel {
    fit: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PhysgpStatus {
    match err {
        Error::Domain { .. } => PhysgpStatus::Domain,
        Error::ParameterRange(_) | Error::Config(_) => PhysgpStatus::InvalidArgument,
        Error::CholeskyFailure { .. } => PhysgpStatus::Cholesky,
        Error::InsufficientData { .. } => PhysgpStatus::InsufficientData,
        Error::OptimizationFailure(_) => PhysgpStatus::Optimization,
        Error::Schema { .. } | Error::Pairing(_) | Error::Monotonicity { .. } | Error::Io { .. } => {
            PhysgpStatus::Parse
        }
    }
}

struct Fail(PhysgpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PhysgpStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PhysgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhysgpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PhysgpStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn read_rows(data: *const f64, n_rows: usize, n_cols: usize) -> Result<CurvatureBatch, Fail> {
    if data.is_null() {
        return Err(null("data"));
    }
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Fail(PhysgpStatus::InvalidArgument, "n_rows * n_cols overflows".into()))?;
    let flat = std::slice::from_raw_parts(data, len);
    let rows = flat.chunks(n_cols.max(1)).take(n_rows).map(<[f64]>::to_vec).collect();
    let times = (0..n_rows).map(|i| i as f64).collect();
    Ok(CurvatureBatch::new(times, rows, DataSource::Ingested)?)
}

/// Message describing the last failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn physgp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn physgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration. Never returns NULL.
#[no_mangle]
pub extern "C" fn physgp_config_new() -> *mut PhysgpConfig {
    Box::into_raw(Box::new(PhysgpConfig {
        inner: RunConfig::default(),
    }))
}

/// Parses a TOML configuration into a new handle.
///
/// # Safety
/// `toml` must be NULL or a NUL-terminated string; `out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_config_from_toml(toml: *const c_char, out: *mut *mut PhysgpConfig) -> PhysgpStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| Fail(PhysgpStatus::Parse, "configuration is not UTF-8".into()))?;
        let inner = RunConfig::from_toml(text)?;
        out.write(Box::into_raw(Box::new(PhysgpConfig { inner })));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn physgp_config_free(cfg: *mut PhysgpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets the annealing seed used by later fits.
///
/// # Safety
/// `cfg` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn physgp_config_set_seed(cfg: *mut PhysgpConfig, seed: u64) -> PhysgpStatus {
    guard(|| {
        let c = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        c.inner.anneal.rng_seed = seed;
        Ok(())
    })
}

/// Deflection `y(x)` (mm) of the beam under load `p` (N).
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_deflection(
    cfg: *const PhysgpConfig,
    p: f64,
    k: f64,
    ei: f64,
    x: f64,
    out: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let v = deflection(x, &PhysicsParams::new(p, k, ei)?, &c.inner.beam)?;
        write(out, v, "out")
    })
}

/// Analytic curvature (mm⁻¹) at `x`.
///
/// # Safety
/// `cfg` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_curvature(
    cfg: *const PhysgpConfig,
    p: f64,
    k: f64,
    ei: f64,
    x: f64,
    out: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let params = PhysicsParams::new(p, k, ei)?;
        let v = curvature_physics(x, &params, &c.inner.beam, CurvatureMethod::Analytic)?;
        write(out, v, "out")
    })
}

/// MAP fit on a row-major `n_rows × n_cols` curvature matrix whose columns
/// follow the configured sensors.
///
/// # Safety
/// `cfg` must be a live handle, `data` must point to `n_rows * n_cols`
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_fit(
    cfg: *const PhysgpConfig,
    data: *const f64,
    n_rows: usize,
    n_cols: usize,
    n_u: usize,
    p: f64,
    out: *mut *mut PhysgpModel,
) -> PhysgpStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let batch = read_rows(data, n_rows, n_cols)?;
        batch.check_sensors(&c.inner.beam)?;
        let stats = EmpiricalStats::from_batch(&batch)?;
        let fit = fit_map(&stats, n_u, &c.inner.beam, &c.inner.prior, &c.inner.anneal, p)?;
        out.write(Box::into_raw(Box::new(PhysgpModel { fit })));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`physgp_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn physgp_model_free(model: *mut PhysgpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fitted parameters. Any output pointer may be NULL to skip it.
///
/// # Safety
/// `model` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_model_theta(
    model: *const PhysgpModel,
    k: *mut f64,
    ei: *mut f64,
    sigma2: *mut f64,
    lambda: *mut f64,
    objective: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let t = m.fit.theta;
        for (ptr, v) in [(k, t.k), (ei, t.ei), (sigma2, t.sigma2), (lambda, m.fit.lambda), (objective, m.fit.objective)] {
            if !ptr.is_null() {
                ptr.write(v);
            }
        }
        Ok(())
    })
}

/// Posterior mean and variance of curvature at `x`.
///
/// # Safety
/// `model` must be a live handle; `mean` and `variance` writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_model_posterior_f(
    model: *const PhysgpModel,
    x: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if mean.is_null() || variance.is_null() {
            return Err(null("output"));
        }
        let pt = m.fit.model.posterior_f(x);
        mean.write(pt.mean);
        variance.write(pt.variance);
        Ok(())
    })
}

/// Posterior mean and variance of the deflection shape at `x`.
///
/// # Safety
/// `model` must be a live handle; `mean` and `variance` writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_model_posterior_u(
    model: *const PhysgpModel,
    x: f64,
    mean: *mut f64,
    variance: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if mean.is_null() || variance.is_null() {
            return Err(null("output"));
        }
        let pt = m.fit.model.posterior_u(x);
        mean.write(pt.mean);
        variance.write(pt.variance);
        Ok(())
    })
}

/// Log marginal likelihood of a batch (its column means) under the fitted
/// model.
///
/// # Safety
/// `model` must be a live handle, `data` must point to `n_rows * n_cols`
/// doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_model_batch_log_ml(
    model: *const PhysgpModel,
    data: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> PhysgpStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let batch = read_rows(data, n_rows, n_cols)?;
        let stats = EmpiricalStats::from_batch(&batch)?;
        let v = m.fit.model.log_marginal_for_curvature(&stats.mu_f)?;
        write(out, v, "out")
    })
}

/// `Φ((log_ml − mu0) / sigma0)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn physgp_signal_stat(log_ml: f64, mu0: f64, sigma0: f64, out: *mut f64) -> PhysgpStatus {
    guard(|| write(out, signal_stat(log_ml, mu0, sigma0)?, "out"))
}
