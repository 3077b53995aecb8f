//! End-to-end checks of the estimation, detection and tuning pipeline on
//! simulated data.

use physgp::beam::{BeamConfig, PhysicsParams};
use physgp::config::{Preset, SimulationConfig};
use physgp::data_io::{
    clean_curvature, load_batch, simulate_dataset, strain_records_for, write_strain_csv,
};
use physgp::detection::{
    auc_grid, calibrate_null, null_p_values, roc_surface, train, DetectionConfig, Scenario,
};
use physgp::estimation::{fit_map, AnnealSchedule, EmpiricalStats, PriorSpec};
use physgp::rng::derive_seed;
use physgp::tuning::{mse_at_holdout, tune_nu};

const P: f64 = 125_000.0;
const SEED: u64 = 20_190_415;

fn null_scenario() -> Scenario {
    SimulationConfig::default().scenario(Preset::Null).unwrap().unwrap()
}

#[test]
fn first_batch_fit_lies_in_plausible_range() {
    let cfg = BeamConfig::default();
    let data = SimulationConfig::default().scenario(Preset::EiDrop).unwrap().unwrap().simulate(&cfg, SEED).unwrap();
    let stats = EmpiricalStats::from_batch(&data.batches(5)[0]).unwrap();
    let fit = fit_map(&stats, 9, &cfg, &PriorSpec::default(), &AnnealSchedule::default().with_seed(SEED), P).unwrap();
    assert!((100.0..=900.0).contains(&fit.theta.k), "k {}", fit.theta.k);
    assert!((2e11..=1.6e12).contains(&fit.theta.ei), "EI {}", fit.theta.ei);
}

#[test]
fn null_calibration_is_stable_and_uniform() {
    let cfg = BeamConfig::default();
    let s = null_scenario();
    let det = DetectionConfig::default();
    let data = s.simulate(&cfg, SEED).unwrap();
    let tr = train(&data.batches(5)[0], &s.before, s.noise_var, &cfg, &PriorSpec::default(), &AnnealSchedule::default(), &det, SEED)
        .unwrap();
    let n = 500;
    let a = calibrate_null(&tr.fit.model, &s.before, 5, s.noise_var, n, 1).unwrap();
    let b = calibrate_null(&tr.fit.model, &s.before, 5, s.noise_var, 2 * n, 1).unwrap();
    assert!(a.sigma0 > 0.0);
    assert!((a.mu0 - b.mu0).abs() < 3.0 * a.sigma0 / (n as f64).sqrt(), "{a:?} {b:?}");

    // 5000 draws keep the sampling spread of the KS statistic well under
    // the tolerance.
    let mut p = null_p_values(&tr, &s.before, 5, s.noise_var, 5000, 99).unwrap();
    p.sort_by(f64::total_cmp);
    let m = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / m).max((i + 1) as f64 / m - v))
        .fold(0.0, f64::max);
    assert!(ks < 0.1, "KS statistic {ks}");
}

#[test]
fn null_scenario_halves_are_exchangeable() {
    let cfg = BeamConfig::default();
    let s = null_scenario();
    let det = DetectionConfig { n_null_reps: 200, ..DetectionConfig::default() };
    let roc = &roc_surface(&s, &[s.before], &cfg, &PriorSpec::default(), &AnnealSchedule::default(), &det, 100, SEED)
        .unwrap()[0];
    for (t, f) in roc.tpr.iter().zip(&roc.fpr) {
        assert!((t - f).abs() <= 0.1, "TPR {t} FPR {f}");
    }
    let n = roc.fpr.len() as f64;
    let reference = roc.fpr.iter().map(|f| f * (1.0 - f)).sum::<f64>() / n;
    assert!((roc.auc() - reference).abs() <= 0.15, "AUC {} reference {reference}", roc.auc());
}

#[test]
fn larger_stiffness_drop_is_easier_to_detect() {
    let cfg = BeamConfig::default();
    let det = DetectionConfig { n_null_reps: 200, ..DetectionConfig::default() };
    let cells = [(7.8e11, 420.0), (7.8e11, 435.0)];
    let grid = auc_grid(&null_scenario(), &cells, &cfg, &PriorSpec::default(), &AnnealSchedule::default(), &det, 100, SEED)
        .unwrap();
    assert!(grid[0].roc.auc() > grid[1].roc.auc(), "{} vs {}", grid[0].roc.auc(), grid[1].roc.auc());
}

#[test]
fn tuning_on_simulated_change_data() {
    let cfg = BeamConfig::default();
    let data = SimulationConfig::default().scenario(Preset::EiDrop).unwrap().unwrap().simulate(&cfg, SEED).unwrap();
    let stats = EmpiricalStats::from_batch(&data).unwrap();
    let r = tune_nu(&stats, &cfg, &PriorSpec::default(), &AnnealSchedule::default(), P, 2, 14, 3).unwrap();
    assert!((6..=12).contains(&r.selected), "selected {}", r.selected);
}

#[test]
fn tuning_on_low_noise_strain_data() {
    let cfg = BeamConfig::default();
    let before = PhysicsParams::new(P, 450.0, 8e11).unwrap();
    let batch = simulate_dataset(&before, &before, 0, 200, 1e-16, &cfg, SEED).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strain.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    write_strain_csv(&mut f, "low-noise", &strain_records_for(&batch, &cfg, 40.0)).unwrap();
    drop(f);
    let loaded = load_batch(&path, &cfg).unwrap();
    assert_eq!(loaded.n_rows(), 200);
    let stats = EmpiricalStats::from_batch(&loaded).unwrap();
    let r = tune_nu(&stats, &cfg, &PriorSpec::default(), &AnnealSchedule::default(), P, 2, 14, 3).unwrap();
    // Data that follow the beam model exactly favour many simulation points;
    // the curve still has an interior minimum.
    let mse = |n: usize| r.curve.iter().find(|p| p.n_u == n).unwrap().mse;
    assert!((4..14).contains(&r.selected), "selected {}", r.selected);
    assert!(mse(r.selected) < mse(2) && mse(r.selected) < mse(14));
}

#[test]
fn physics_helps_on_noiseless_data() {
    let cfg = BeamConfig::default();
    let clean = clean_curvature(&PhysicsParams::new(P, 450.0, 8e11).unwrap(), &cfg).unwrap();
    let stats = EmpiricalStats::from_rows(&[clean.clone(), clean]).unwrap();
    let prior = PriorSpec::default();
    let mse = |n_u: usize| {
        let sched = AnnealSchedule::default().with_seed(derive_seed(SEED, 1, n_u as u64));
        mse_at_holdout(n_u, &stats, &cfg, &prior, &sched, P, 3).unwrap().mse
    };
    let curve: Vec<f64> = (0..=6).map(mse).collect();
    // A single midspan point (N_u = 3 adds one) does not help the
    // prediction at the third sensor; from there on each point does.
    for n in 3..6 {
        assert!(curve[n + 1] < curve[n], "{curve:?}");
    }
    assert!(curve[6] < 0.5 * curve[0], "{curve:?}");
}

#[test]
fn ten_percent_drop_shifts_means_by_less_than_noise() {
    let cfg = BeamConfig::default();
    let sim = SimulationConfig::default();
    let s = sim.scenario(Preset::Both10Pct).unwrap().unwrap();
    let a = clean_curvature(&s.before, &cfg).unwrap();
    let b = clean_curvature(&s.after, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 3.0 * sim.noise_var.sqrt(), "{x:e} {y:e}");
    }
}

#[test]
fn predictive_band_covers_generator_at_sensors() {
    let cfg = BeamConfig::default();
    let s = null_scenario();
    let truth = clean_curvature(&s.before, &cfg).unwrap();
    let (mut inside, mut total) = (0, 0);
    for r in 0..10 {
        let data = s.simulate(&cfg, derive_seed(SEED, 2, r)).unwrap();
        let stats = EmpiricalStats::from_batch(&data).unwrap();
        let fit = fit_map(&stats, 6, &cfg, &PriorSpec::default(), &AnnealSchedule::default(), P).unwrap();
        for (x, t) in cfg.sensor_coords.iter().zip(&truth) {
            let (lo, hi) = fit.model.posterior_f(*x).band95();
            total += 1;
            if (lo..=hi).contains(t) {
                inside += 1;
            }
        }
    }
    assert!(inside as f64 >= 0.9 * total as f64, "{inside}/{total}");
}
