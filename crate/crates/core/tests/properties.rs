use std::f64::consts::PI;

use dbsrc_core::{
    alignment_angles, beta_zero_maps, frequency_from_impedance, fully_driven_maps,
    harmonic_coefficients, inversion_residual, invert, q_combine, q_split, sync_rect_residual,
    tank_impedance, transconductance, ControlReferences, Mode, SwitchingParams, TankConfig,
};
use proptest::prelude::*;

fn tank() -> TankConfig {
    TankConfig::new(80e-6, 47e-9, 1.875, 2.0 * PI * 165e3).unwrap()
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip_recovers_references(
        sigma in 0.02f64..0.6,
        delta in -0.5f64..0.5,
        gain in 0.05f64..2.5,
        s_add in 0.0f64..1.0,
    ) {
        let r = invert(&ControlReferences::new(sigma, delta).with_s_add(s_add), gain);
        prop_assume!(r.feasible && !r.is_collapsed(gain));
        let c = harmonic_coefficients(&r.params(1.0), gain);
        let a = alignment_angles(&c, r.beta).unwrap();
        prop_assert!(angle_diff(a.sigma, sigma) < 1e-9, "sigma {} vs {}", a.sigma, sigma);
        prop_assert!(angle_diff(a.delta, delta) < 1e-9, "delta {} vs {}", a.delta, delta);
    }

    #[test]
    fn residual_vanishes_on_feasible_points(
        sigma in -0.6f64..0.6,
        delta in -0.6f64..0.6,
        gain in 0.0f64..3.0,
        s_add in 0.0f64..PI,
    ) {
        let r = invert(&ControlReferences::new(sigma, delta).with_s_add(s_add), gain);
        prop_assume!(r.feasible);
        prop_assert!(inversion_residual(r.d, r.s, sigma, delta, gain).abs() < 1e-9);
        prop_assert!(harmonic_coefficients(&r.params(1.0), gain).a >= -1e-12);
        prop_assert!((0.0..=PI).contains(&r.d) && (0.0..=PI).contains(&r.s));
        prop_assert!(r.s >= r.s_min - 1e-12);
    }

    #[test]
    fn q_split_inverts_q_combine_in_buck(d in 0.0f64..PI, s in 0.0f64..PI) {
        prop_assert_eq!(q_split(q_combine(d, s, Mode::Buck), s), (d, s));
    }

    #[test]
    fn q_split_inverts_q_combine_in_boost(s in 1e-9f64..PI) {
        let (d, s2) = q_split(q_combine(PI, s, Mode::Boost), 0.0);
        prop_assert_eq!(d, PI);
        prop_assert!((s2 - s).abs() < 1e-15);
    }

    #[test]
    fn aligned_waveforms_rectify_synchronously(gain in 0.01f64..3.0) {
        let (d, s) = beta_zero_maps(gain);
        let p = SwitchingParams::new(d, s, 0.0, 1.0);
        prop_assert!(sync_rect_residual(&p, gain).abs() < 1e-12);
        let c = harmonic_coefficients(&p, gain);
        prop_assert!(c.b.abs() < 1e-12 * (1.0 + c.a.abs()));
    }

    #[test]
    fn fully_driven_magnitude_identity(g_star in 0.3f64..1.0, gain in 0.05f64..2.5) {
        let (beta, s) = fully_driven_maps(gain, g_star);
        let p = SwitchingParams::new(PI, s, beta, 1.0);
        let c = harmonic_coefficients(&p, gain);
        let a = alignment_angles(&c, beta).unwrap();
        prop_assert!(a.delta.abs() < 1e-9, "delta {}", a.delta);
        prop_assert!((a.sigma - gain.min(g_star).acos()).abs() < 1e-9);
        let expected = 8.0 * (1.0 - gain * (beta + s).cos()).sqrt();
        prop_assert!((c.magnitude() - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn frequency_solves_the_impedance(z in 1e-3f64..500.0) {
        let t = tank();
        let omega = frequency_from_impedance(z, &t).unwrap();
        prop_assert!(omega > t.resonant_omega());
        let back = tank_impedance(omega, &t);
        prop_assert!((back - z).abs() <= 1e-9 * z.max(1.0));
    }

    #[test]
    fn full_short_carries_no_power(
        sigma in 0.05f64..0.5,
        delta in 0.0f64..0.3,
        gain in 0.1f64..2.0,
    ) {
        let r = invert(&ControlReferences::new(sigma, delta).with_s_add(PI), gain);
        prop_assume!(r.feasible);
        prop_assert_eq!(r.s, PI);
        let w = transconductance(&r.params(t_omega()), gain, &tank()).unwrap();
        prop_assert!(w.abs() < 1e-12);
    }
}

fn t_omega() -> f64 {
    tank().omega_max
}
