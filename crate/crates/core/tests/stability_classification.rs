use msfq_core::{
    classify, classify_majority, distance_metric, ChainState, ClassifyOptions, ModelConfig,
    Occupancy, SimulationSpec, VerdictReason,
};
use proptest::prelude::*;

fn timeline_config(lambda: f64) -> ModelConfig {
    ModelConfig::new(lambda, 15.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap()
}

fn verdict(lambda: f64) -> msfq_core::MajorityVerdict {
    let spec = SimulationSpec::new(timeline_config(lambda), ChainState::ORIGIN, 1e4, 0);
    classify_majority(&spec, 10, &ClassifyOptions::default(), &[1, 2, 3]).unwrap()
}

#[test]
fn light_loads_are_stationary() {
    for lambda in [4.0, 5.0] {
        let v = verdict(lambda);
        assert!(v.stationary, "λ={lambda}: {v:?}");
    }
}

#[test]
fn load_of_six_is_non_stationary() {
    let v = verdict(6.0);
    assert!(!v.stationary, "λ=6 classified stationary: {v:?}");
}

#[test]
fn stationary_metric_settles() {
    let mut rel_changes: Vec<f64> = (0..10)
        .map(|seed| {
            let spec = SimulationSpec::new(timeline_config(4.0), ChainState::ORIGIN, 1e4, seed);
            let (v, traj) = classify(&spec, 10).unwrap();
            assert_eq!(v.reason, VerdictReason::Converged);
            let m: Vec<f64> = traj.metrics().collect();
            let mut diffs: Vec<f64> = m[m.len() - 4..]
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .collect();
            diffs.sort_by(f64::total_cmp);
            diffs[1] / v.final_metric
        })
        .collect();
    rel_changes.sort_by(f64::total_cmp);
    let median = 0.5 * (rel_changes[4] + rel_changes[5]);
    assert!(median < 0.1, "median relative change {median}");
}

#[test]
fn start_far_from_origin_still_converges() {
    // Draining a modest backlog is not growth.
    let spec = SimulationSpec::new(timeline_config(4.0), ChainState::new(2, 10), 5e3, 4);
    let (v, traj) = classify(&spec, 10).unwrap();
    assert!(v.stationary, "{v:?} {traj:?}");
}

#[test]
fn thresholds_are_configurable() {
    let spec = SimulationSpec::new(timeline_config(4.0), ChainState::ORIGIN, 1e3, 4);
    let bad = ClassifyOptions {
        growth_factor: 0.5,
        ..ClassifyOptions::default()
    };
    assert!(msfq_core::classify_with(&spec, 10, &bad).is_err());
}

fn occupancy() -> impl Strategy<Value = Occupancy> {
    prop::collection::vec(((0u32..50, 0u32..50), 0.001f64..1.0), 1..20).prop_map(|v| {
        Occupancy::from_weights(v.into_iter().map(|((i, j), w)| (ChainState::new(i, j), w)))
            .unwrap()
    })
}

proptest! {
    #[test]
    fn metric_is_linear_in_the_distribution(a in occupancy(), b in occupancy(), t in 0.0f64..=1.0) {
        let mix = Occupancy::from_probabilities(
            a.iter().map(|(s, p)| (s, t * p)).chain(b.iter().map(|(s, p)| (s, (1.0 - t) * p))),
        ).unwrap();
        let lhs = distance_metric(&mix).unwrap();
        let rhs = t * distance_metric(&a).unwrap() + (1.0 - t) * distance_metric(&b).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
    }

    #[test]
    fn metric_vanishes_only_at_origin(a in occupancy()) {
        let m = distance_metric(&a).unwrap();
        prop_assert!(m >= 0.0);
        let all_origin = a.iter().all(|(s, _)| s == ChainState::ORIGIN);
        prop_assert_eq!(m == 0.0, all_origin);
    }
}
