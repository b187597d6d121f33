//! Independent reference computations checked against the library.

use harvest_rl::energy::{
    calibrate_active_time, periodic_load, simulate_discharge, LifetimeTarget, NodeEnergyConfig, WINDOW_SECONDS,
};
use harvest_rl::trace::gen_events;

/// Zero light draws the same charge every window, so the voltage falls
/// linearly from full to the operational floor.
fn closed_form_lifetime(period: f64, cfg: &NodeEnergyConfig) -> f64 {
    let cycle = period + cfg.t_active;
    let n = ((WINDOW_SECONDS / cycle).floor()).max(1.0);
    let charge = n * cfg.i_send * cfg.t_active + (WINDOW_SECONDS - n * cfg.t_active) * cfg.i_sleep;
    (cfg.v_max - cfg.v_min_operational) * cfg.capacitance / charge * WINDOW_SECONDS
}

#[test]
fn discharge_matches_closed_form() {
    for t_active in [2.0, 7.6, 11.8] {
        for c in [1.0, 1.5] {
            let cfg = NodeEnergyConfig { t_active, capacitance: c, ..NodeEnergyConfig::default() };
            for period in [15.0, 60.0, 300.0, 600.0, 900.0] {
                let sim = simulate_discharge(period, &cfg, cfg.v_max, false);
                let oracle = closed_form_lifetime(period, &cfg);
                assert!((sim / oracle - 1.0).abs() < 1e-9, "t_a {t_active} C {c} period {period}: {sim} vs {oracle}");
            }
        }
    }
}

#[test]
fn send_count_arithmetic() {
    let cfg = NodeEnergyConfig { t_active: 7.6, ..NodeEnergyConfig::default() };
    assert_eq!(periodic_load(15.0, 900.0, &cfg).n_sends, 39);
    assert_eq!(periodic_load(60.0, 900.0, &cfg).n_sends, 13);
    assert_eq!(periodic_load(300.0, 900.0, &cfg).n_sends, 2);
    assert_eq!(periodic_load(900.0, 900.0, &cfg).n_sends, 1);
}

#[test]
fn calibration_recovers_a_planted_active_time() {
    let planted = NodeEnergyConfig { t_active: 5.0, ..NodeEnergyConfig::default() };
    let target = LifetimeTarget::new(60.0, simulate_discharge(60.0, &planted, planted.v_max, false));
    let cal = calibrate_active_time(&[target], &NodeEnergyConfig::default(), false).unwrap();
    assert!((cal.t_active - 5.0).abs() <= 0.1, "recovered {}", cal.t_active);
}

#[test]
fn one_hundred_weekdays_count_is_poisson() {
    let weekdays = vec![false; 100];
    for seed in 0..20 {
        let n = gen_events(100, 50.0, 20.0, &weekdays, seed).unwrap().len() as f64;
        let sigma = 5000f64.sqrt();
        assert!((n - 5000.0).abs() <= 3.0 * sigma, "seed {seed}: {n}");
    }
}

#[test]
fn weekly_mean_count_is_290() {
    let runs = 400;
    let total: usize = (0..runs).map(|s| gen_events(7, 50.0, 20.0, &[], s).unwrap().len()).sum();
    let mean = total as f64 / runs as f64;
    // Standard error of the mean of a Poisson(290) count.
    let se = (290.0 / runs as f64).sqrt();
    assert!((mean - 290.0).abs() <= 4.0 * se, "mean weekly count {mean}");
}
