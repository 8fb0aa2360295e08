use std::f64::consts::PI;

use dbsrc_core::sweep::ScenarioSummary;
use dbsrc_core::{
    evaluate, plant_step, run_scenario, Compensation, FirstOrderLag, OperatingMode, OperatingPoint,
    ScenarioConfig, ScenarioError, SwitchingParams, Uncertainties,
};

fn short(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        ..ScenarioConfig::default()
    }
}

#[test]
fn default_run_charges_to_cv() {
    let cfg = ScenarioConfig::default();
    let trace = run_scenario(&cfg).unwrap();
    let sum = ScenarioSummary::from_trace(&cfg, &trace);
    assert!(sum.cc_error < 0.01, "cc error {}", sum.cc_error);
    assert!((trace.final_voltage - cfg.v_cv).abs() < 1.0);
    assert!(sum.tail_delta_error < 1e-3);
    assert!(trace.visits_in_order(&[
        OperatingMode::LowPowerBuck,
        OperatingMode::Buck,
        OperatingMode::Boost,
        OperatingMode::LowPowerBoost,
    ]));
    assert_eq!(trace.rows.len(), cfg.steps());
}

#[test]
fn charge_bookkeeping_matches_delivery() {
    let cfg = short(5.0);
    let trace = run_scenario(&cfg).unwrap();
    assert!((trace.final_charge - trace.delivered).abs() < 1e-9 * trace.delivered.max(1.0));
}

#[test]
fn seeded_noise_is_reproducible() {
    let cfg = ScenarioConfig {
        noise: 0.01,
        seed: 42,
        ..short(3.0)
    };
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    let c = run_scenario(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn exact_plant_tracks_at_least_as_well() {
    let with = ScenarioConfig::default();
    let without = ScenarioConfig {
        uncertainties: Uncertainties::none(),
        ..with.clone()
    };
    let a = ScenarioSummary::from_trace(&with, &run_scenario(&with).unwrap());
    let b = ScenarioSummary::from_trace(&without, &run_scenario(&without).unwrap());
    assert!(
        b.cc_error <= a.cc_error + 1e-12,
        "{} vs {}",
        b.cc_error,
        a.cc_error
    );
    assert!(b.tail_sigma_error < 1e-9 && b.tail_delta_error < 1e-9);
}

#[test]
fn coarser_step_reaches_same_state() {
    let fine = ScenarioConfig::default();
    let coarse = ScenarioConfig {
        dt: 2.0 * fine.dt,
        ..fine.clone()
    };
    let a = run_scenario(&fine).unwrap();
    let b = run_scenario(&coarse).unwrap();
    let rel = (a.final_voltage - b.final_voltage).abs() / a.final_voltage;
    assert!(
        rel < 1e-3,
        "final voltage {} vs {}",
        a.final_voltage,
        b.final_voltage
    );
}

#[test]
fn series_arrangement_also_charges() {
    let cfg = ScenarioConfig {
        compensation: Compensation::Series,
        ..ScenarioConfig::default()
    };
    let trace = run_scenario(&cfg).unwrap();
    let sum = ScenarioSummary::from_trace(&cfg, &trace);
    assert!(sum.cc_error < 0.02, "cc error {}", sum.cc_error);
    assert!((trace.final_voltage - cfg.v_cv).abs() < 1.0);
}

#[test]
fn decimation_keeps_every_nth_row() {
    let full = run_scenario(&short(0.5)).unwrap();
    let thin = run_scenario(&ScenarioConfig {
        decimate: 10,
        ..short(0.5)
    })
    .unwrap();
    assert_eq!(thin.rows.len(), full.rows.len().div_ceil(10));
    for (k, row) in thin.rows.iter().enumerate() {
        assert_eq!(*row, full.rows[10 * k]);
    }
    assert_eq!(thin.final_charge, full.final_charge);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ScenarioConfig {
            dt: 0.0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            decimate: 0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            v_full: 200.0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            initial_charge: 31.0,
            ..ScenarioConfig::default()
        },
        ScenarioConfig {
            noise: f64::NAN,
            ..ScenarioConfig::default()
        },
    ];
    for cfg in bad {
        assert!(matches!(run_scenario(&cfg), Err(ScenarioError::Config(_))));
    }
}

#[test]
fn plant_applies_offset_and_inductance_error() {
    let cfg = ScenarioConfig::default();
    let p = SwitchingParams::new(2.0, 0.3, 0.5, 2.0 * PI * 120e3);
    let op = OperatingPoint::new(0.9, cfg.v_in).unwrap();
    let u = Uncertainties::default();
    let out = plant_step(&p, &u, &op, &cfg.tank).unwrap();
    let shifted = SwitchingParams { beta: 0.4, ..p };
    let ss = evaluate(&shifted, 0.9, &cfg.tank.with_inductance_scale(1.05)).unwrap();
    assert_eq!(out.w, ss.transconductance);
    assert_eq!(out.sigma, ss.angles.map(|a| a.sigma));
    let nominal = plant_step(&p, &Uncertainties::none(), &op, &cfg.tank).unwrap();
    assert_eq!(
        nominal.w,
        evaluate(&p, 0.9, &cfg.tank).unwrap().transconductance
    );
}

#[test]
fn lag_settles_to_input() {
    let mut lag = FirstOrderLag::new(1e-3, 1e-4, 0.0);
    let first = lag.step(1.0);
    assert!((first - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
    for _ in 0..1000 {
        lag.step(1.0);
    }
    assert!((lag.value - 1.0).abs() < 1e-12);
}
