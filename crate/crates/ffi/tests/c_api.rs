use std::ffi::CStr;
use std::ptr;

use physgp_ffi::*;

fn last_error() -> String {
    let p = physgp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const P: f64 = 125_000.0;

// rows of curvature around the default sensors
fn sample_rows() -> Vec<f64> {
    let base = [-1.186e-5, 2.459e-6, -1.186e-5];
    (0..5)
        .flat_map(|i| base.map(|b| b + 1e-7 * ((i * 7 + 3) % 5) as f64 - 2e-7))
        .collect()
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(physgp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn deflection_and_curvature() {
    let cfg = physgp_config_new();
    let mut y0 = 0.0;
    let mut y1 = 0.0;
    unsafe {
        assert_eq!(physgp_deflection(cfg, P, 5f64.exp(), 28f64.exp(), 0.0, &mut y0), PhysgpStatus::Ok);
        assert_eq!(physgp_deflection(cfg, P, 5f64.exp(), 28f64.exp(), 2500.0, &mut y1), PhysgpStatus::Ok);
    }
    assert!((y0 - y1).abs() < 1e-9);
    assert!((y0 - 0.5228).abs() < 1e-3);
    let mut kappa = 0.0;
    unsafe {
        assert_eq!(physgp_curvature(cfg, P, 450.0, 8e11, 1250.0, &mut kappa), PhysgpStatus::Ok);
    }
    assert!((kappa - 2.459e-6).abs() < 5e-9);
    unsafe { physgp_config_free(cfg) };
}

#[test]
fn error_codes_and_messages() {
    let cfg = physgp_config_new();
    let mut out = 0.0;
    unsafe {
        assert_eq!(physgp_deflection(cfg, P, 450.0, 8e11, -1.0, &mut out), PhysgpStatus::Domain);
        assert!(last_error().contains("outside"));
        assert_eq!(physgp_deflection(cfg, P, -1.0, 8e11, 10.0, &mut out), PhysgpStatus::InvalidArgument);
        assert_eq!(physgp_deflection(ptr::null(), P, 450.0, 8e11, 10.0, &mut out), PhysgpStatus::NullPointer);
        assert_eq!(physgp_deflection(cfg, P, 450.0, 8e11, 10.0, ptr::null_mut()), PhysgpStatus::NullPointer);
        assert_eq!(physgp_signal_stat(0.0, 0.0, 0.0, &mut out), PhysgpStatus::InvalidArgument);
        physgp_config_free(cfg);
        physgp_config_free(ptr::null_mut());
        physgp_model_free(ptr::null_mut());
    }
}

#[test]
fn config_from_toml() {
    let mut cfg = ptr::null_mut();
    let good = c"[anneal]\nn_iters = 50\nrestarts = 1\n";
    let bad = c"[anneal]\nn_iters = 0\n";
    unsafe {
        assert_eq!(physgp_config_from_toml(good.as_ptr(), &mut cfg), PhysgpStatus::Ok);
        assert!(!cfg.is_null());
        physgp_config_free(cfg);
        let mut other = ptr::null_mut();
        assert_eq!(physgp_config_from_toml(bad.as_ptr(), &mut other), PhysgpStatus::InvalidArgument);
        assert!(other.is_null());
        assert!(last_error().contains("n_iters"));
    }
}

#[test]
fn fit_posterior_and_batch_scoring() {
    let mut cfg = ptr::null_mut();
    let rows = sample_rows();
    unsafe {
        assert_eq!(physgp_config_from_toml(c"[anneal]\nn_iters = 1000\n".as_ptr(), &mut cfg), PhysgpStatus::Ok);
        assert_eq!(physgp_config_set_seed(cfg, 11), PhysgpStatus::Ok);
        let mut model = ptr::null_mut();
        assert_eq!(physgp_fit(cfg, rows.as_ptr(), 5, 3, 9, P, &mut model), PhysgpStatus::Ok);
        let (mut k, mut ei, mut s2, mut lam) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            physgp_model_theta(model, &mut k, &mut ei, &mut s2, &mut lam, ptr::null_mut()),
            PhysgpStatus::Ok
        );
        assert!(k > 0.0 && ei > 0.0 && s2 > 0.0);
        assert!((lam - (k / (4.0 * ei)).powf(0.25)).abs() < 1e-15);

        let (mut m, mut v) = (0.0, 0.0);
        assert_eq!(physgp_model_posterior_f(model, 1250.0, &mut m, &mut v), PhysgpStatus::Ok);
        assert!(v >= 0.0);
        assert!((m - 2.459e-6).abs() < 1e-6);
        assert_eq!(physgp_model_posterior_u(model, 1250.0, &mut m, &mut v), PhysgpStatus::Ok);
        assert!(m.is_finite() && v >= 0.0);

        let mut same = 0.0;
        let mut shifted = 0.0;
        assert_eq!(physgp_model_batch_log_ml(model, rows.as_ptr(), 5, 3, &mut same), PhysgpStatus::Ok);
        let moved: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| if i % 3 == 1 { r + 2e-6 } else { *r })
            .collect();
        assert_eq!(physgp_model_batch_log_ml(model, moved.as_ptr(), 5, 3, &mut shifted), PhysgpStatus::Ok);
        assert!(shifted < same, "{shifted} vs {same}");

        let mut p = 0.0;
        assert_eq!(physgp_signal_stat(same, same, 1.0, &mut p), PhysgpStatus::Ok);
        assert!((p - 0.5).abs() < 1e-12);

        assert_eq!(physgp_fit(cfg, rows.as_ptr(), 5, 2, 6, P, &mut model), PhysgpStatus::InvalidArgument);
        assert_eq!(physgp_fit(cfg, rows.as_ptr(), 1, 3, 6, P, &mut model), PhysgpStatus::InsufficientData);
        physgp_model_free(model);
        physgp_config_free(cfg);
    }
}

#[test]
fn fits_are_reproducible_for_a_seed() {
    let rows = sample_rows();
    let run = |seed: u64| unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(physgp_config_from_toml(c"[anneal]\nn_iters = 200\n".as_ptr(), &mut cfg), PhysgpStatus::Ok);
        physgp_config_set_seed(cfg, seed);
        let mut model = ptr::null_mut();
        assert_eq!(physgp_fit(cfg, rows.as_ptr(), 5, 3, 4, P, &mut model), PhysgpStatus::Ok);
        let mut k = 0.0;
        physgp_model_theta(model, &mut k, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        physgp_model_free(model);
        physgp_config_free(cfg);
        k
    };
    assert_eq!(run(3).to_bits(), run(3).to_bits());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/physgp.h")).unwrap();
    for name in [
        "physgp_last_error_message",
        "physgp_version",
        "physgp_config_new",
        "physgp_config_from_toml",
        "physgp_config_free",
        "physgp_config_set_seed",
        "physgp_deflection",
        "physgp_curvature",
        "physgp_fit",
        "physgp_model_free",
        "physgp_model_theta",
        "physgp_model_posterior_f",
        "physgp_model_posterior_u",
        "physgp_model_batch_log_ml",
        "physgp_signal_stat",
        "typedef struct PhysgpModel PhysgpModel",
        "PHYSGP_STATUS_CHOLESKY = 4",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
