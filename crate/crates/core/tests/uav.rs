use airs_core::scenario::ScenarioConfig;
use airs_core::uav::{apply_action, propulsion_energy, scale_action, EnergyModel, FlightEnvelope, UavState};
use airs_core::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hover_and_climb_slots() {
    let m = EnergyModel::default();
    let hover = propulsion_energy(&m, Vec3::ZERO, 1.0).unwrap();
    assert!((hover - 288.06).abs() < 1e-9, "{hover}");
    let climb = propulsion_energy(&m, Vec3::new(0.0, 0.0, 1.0), 1.0).unwrap();
    assert!((climb - (288.06 + 2.0 * 9.8)).abs() < 1e-9, "{climb}");
    assert!((climb - 307.66).abs() < 1e-9);
}

#[test]
fn horizontal_speed_scan_has_an_interior_minimum_below_hover() {
    let m = EnergyModel::default();
    let hover = m.power(0.0, 0.0);
    let speeds: Vec<f64> = (0..=3000).map(|k| k as f64 * 0.01).collect();
    let powers: Vec<f64> = speeds.iter().map(|&v| m.power(v, 0.0)).collect();
    let (best, p_min) = powers
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &p)| if p < acc.1 { (i, p) } else { acc });
    assert!(best > 0 && best < speeds.len() - 1, "minimum at the scan edge");
    assert!(p_min < hover);
    assert!(speeds[best] < m.tip_speed);
    for w in powers.windows(2) {
        assert!((w[1] - w[0]).abs() < 0.5, "jump in power curve");
    }
}

#[test]
fn bounded_actions_from_interior_points_stay_inside() {
    let env = FlightEnvelope::from_scenario(&ScenarioConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let start = Vec3::new(
            rng.random_range(env.min.x..env.max.x),
            rng.random_range(env.min.y..env.max.y),
            rng.random_range(env.min.z..env.max.z),
        );
        let raw = [
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ];
        let state = UavState {
            position: start,
            last_action: Vec3::ZERO,
            slot_duration: 1.0,
        };
        let (next, _) = apply_action(&state, scale_action(raw, 30.0), &env);
        assert!(env.contains(next.position));
    }
}

proptest! {
    #[test]
    fn energy_strictly_increases_with_vertical_speed(vh in 0.0f64..30.0, vv in 0.0f64..10.0, dv in 0.001f64..5.0) {
        let m = EnergyModel::default();
        prop_assert!(m.power(vh, vv + dv) > m.power(vh, vv));
    }

    #[test]
    fn in_bounds_moves_are_exact_vector_sums(
        x in 100.0f64..500.0, y in 100.0f64..500.0, z in 90.0f64..110.0,
        a in prop::array::uniform3(-1.0f64..=1.0),
    ) {
        let env = FlightEnvelope::from_scenario(&ScenarioConfig::default());
        let state = UavState { position: Vec3::new(x, y, z), last_action: Vec3::ZERO, slot_duration: 1.0 };
        let d = scale_action(a, 10.0);
        let (next, violated) = apply_action(&state, d, &env);
        prop_assert!(!violated);
        prop_assert_eq!(next.position, state.position + d);
    }

    #[test]
    fn scaled_displacement_never_exceeds_d_max(a in prop::array::uniform3(-5.0f64..5.0), d_max in 0.0f64..50.0) {
        prop_assert!(scale_action(a, d_max).norm() <= d_max * (1.0 + 1e-12));
    }
}
