//! Properties that span the channel, controller and estimator.

use proptest::prelude::*;

use polarlink::channel::{received_power, LinkScenario, NoiseModel};
use polarlink::controller::{exhaustive_sweep, link_probe, optimize_link, SweepConfig};
use polarlink::estimator::{estimate_rotation, EstimatorConfig};
use polarlink::jones::RotationAngle;
use polarlink::metasurface::{BiasSetting, SurfaceModel};

fn deg(d: f64) -> RotationAngle {
    RotationAngle::from_degrees(d).unwrap()
}

fn surface_link(rx: f64, bypass: f64) -> LinkScenario {
    LinkScenario {
        surface: Some(SurfaceModel::default()),
        rx_orientation: deg(rx),
        bypass_fraction: bypass,
        ..Default::default()
    }
}

#[test]
fn orthogonal_link_gains_at_least_ten_db() {
    let s = surface_link(90.0, 0.0);
    let (_, best) = optimize_link(&s, &SweepConfig::default()).unwrap();
    let base = received_power(&s.without_surface(), None).unwrap();
    assert!(best.rx_power_dbm - base.rx_power_dbm >= 10.0);
}

#[test]
fn bypass_one_makes_the_surface_irrelevant() {
    let s = surface_link(90.0, 1.0);
    let trace = exhaustive_sweep(&mut link_probe(&s), 3.0, &SweepConfig::default()).unwrap();
    let base = received_power(&s.without_surface(), None)
        .unwrap()
        .rx_power_dbm;
    assert!(trace
        .entries
        .iter()
        .all(|e| (e.power_dbm - base).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_ignores_tx_power(rx in 0.0f64..180.0, bypass in 0.0f64..0.9, shift in -40.0f64..40.0) {
        let s = surface_link(rx, bypass);
        let (a, _) = optimize_link(&s, &SweepConfig::default()).unwrap();
        let (b, _) = optimize_link(&s.with_tx_power(shift), &SweepConfig::default()).unwrap();
        prop_assert_eq!(a.best, b.best);
    }

    #[test]
    fn optimum_ignores_tx_power_with_noise(rx in 0.0f64..180.0, shift in -40.0f64..40.0) {
        // Noise is multiplicative and seeded independently of transmit power.
        let s = LinkScenario { noise: NoiseModel::default(), ..surface_link(rx, 0.3) };
        let (a, _) = optimize_link(&s, &SweepConfig::default()).unwrap();
        let (b, _) = optimize_link(&s.with_tx_power(shift), &SweepConfig::default()).unwrap();
        prop_assert_eq!(a.best, b.best);
    }

    #[test]
    fn perceived_rotation_never_exceeds_table(vx in 0.0f64..30.0, vy in 0.0f64..30.0, bypass in 0.0f64..1.0) {
        let s = surface_link(0.0, bypass);
        let bias = BiasSetting::new(vx, vy).unwrap();
        let table = s.surface.as_ref().unwrap().effective_rotation(bias).degrees();
        let seen = s.received_field(Some(bias)).unwrap().major_axis().degrees();
        prop_assert!(seen >= -1e-9 && seen <= table + 1e-9);
        if bypass == 0.0 {
            prop_assert!((seen - table).abs() < 1e-9);
        }
    }
}

#[test]
fn estimated_max_rotation_non_increasing_in_bypass() {
    let cfg = EstimatorConfig {
        bias_step_v: 2.0,
        ..Default::default()
    };
    let mut prev = f64::INFINITY;
    for k in 0..=10 {
        let b = k as f64 / 10.0;
        let e = estimate_rotation(&surface_link(90.0, b), &cfg).unwrap();
        assert!(
            e.theta_max_rot <= prev,
            "bypass {b}: {} > {prev}",
            e.theta_max_rot
        );
        assert!(
            0.0 <= e.theta_min_rot && e.theta_min_rot <= e.theta_max_rot && e.theta_max_rot <= 90.0
        );
        prev = e.theta_max_rot;
    }
}
