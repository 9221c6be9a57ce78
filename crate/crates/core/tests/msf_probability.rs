use std::sync::OnceLock;

use msfq_core::msf::{enumerate_stationary_set_with, msf_probability_given_set};
use msfq_core::{
    enumerate_stationary_set, is_stationary_state, msf_probability, ChainState, EnumerationOptions,
    Error, ModelConfig, MsfMode, MsfOptions, StationarySet, TriggerScenario, TriggerStart,
};
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    per_state_duration: f64,
    replications: usize,
    frontiers: Vec<GoldenFrontier>,
}

#[derive(Deserialize)]
struct GoldenFrontier {
    seed: u64,
    frontier: Vec<u32>,
}

fn light_base() -> ModelConfig {
    ModelConfig::new(4.0, 15.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap()
}

fn light_set() -> &'static StationarySet {
    static SET: OnceLock<StationarySet> = OnceLock::new();
    SET.get_or_init(|| enumerate_stationary_set(&light_base(), 5_000.0, 3).unwrap())
}

fn assert_downward_closed(set: &StationarySet) {
    assert!(
        set.frontier.windows(2).all(|w| w[1] <= w[0]),
        "{:?}",
        set.frontier
    );
    for s in set.states() {
        for i in 0..=s.orbit {
            for j in 0..=s.queue {
                assert!(set.contains(ChainState::new(i, j)));
            }
        }
    }
}

#[test]
fn light_load_frontier_matches_golden() {
    let golden: Golden = serde_json::from_str(include_str!("golden/frontier_l4_m15.json")).unwrap();
    for g in &golden.frontiers {
        let opts = EnumerationOptions {
            per_state_duration: golden.per_state_duration,
            replications: golden.replications,
            seed: g.seed,
            ..EnumerationOptions::default()
        };
        let set = if g.seed == 0 {
            light_set().clone()
        } else {
            enumerate_stationary_set_with(&light_base(), &opts).unwrap()
        };
        assert_eq!(set.frontier, g.frontier, "seed {}", g.seed);
        assert!(!set.base_unstable);
        assert!(set.frontier[0] >= 20);
        assert!(is_stationary_state(&set, ChainState::ORIGIN));
        assert_downward_closed(&set);
    }
}

#[test]
fn membership_follows_the_frontier() {
    let set = light_set();
    let f0 = set.frontier[0];
    assert!(is_stationary_state(set, ChainState::new(0, f0)));
    assert!(!is_stationary_state(set, ChainState::new(0, f0 + 1)));
    let beyond = set.frontier.len() as u32;
    assert!(!is_stationary_state(set, ChainState::new(beyond, 0)));
}

#[test]
fn enumeration_is_independent_of_batch_size() {
    let opts = |batch| EnumerationOptions {
        per_state_duration: 500.0,
        replications: 3,
        seed: 9,
        batch,
        ..EnumerationOptions::default()
    };
    let a = enumerate_stationary_set_with(&light_base(), &opts(1)).unwrap();
    let b = enumerate_stationary_set_with(&light_base(), &opts(7)).unwrap();
    assert_eq!(a, b);
    assert_downward_closed(&a);
}

#[test]
fn overloaded_base_is_rejected() {
    let base = ModelConfig::new(30.0, 1.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap();
    let scenario = TriggerScenario {
        base,
        trigger: base,
        trigger_duration: 60.0,
    };
    assert_eq!(
        msf_probability(&scenario, 1_000.0, 100),
        Err(Error::BaseUnstable)
    );
}

fn light_scenario(lambda: f64, duration: f64) -> TriggerScenario {
    TriggerScenario {
        base: light_base(),
        trigger: light_base().with_lambda(lambda).unwrap(),
        trigger_duration: duration,
    }
}

fn light_probability(lambda: f64, duration: f64) -> f64 {
    let options = MsfOptions {
        seed: 3,
        ..MsfOptions::default()
    };
    let r = msf_probability_given_set(&light_scenario(lambda, duration), light_set(), &options)
        .unwrap();
    assert_eq!(r.replications, 200);
    assert_eq!(r.probability, r.non_stationary as f64 / 200.0);
    r.probability
}

#[test]
fn no_trigger_no_failure() {
    let p = light_probability(4.0, 100.0);
    assert!(p < 0.05, "p = {p}");
}

/// Counts adjacent decreases in a sequence that should be non-decreasing.
fn violations(ps: &[f64]) -> usize {
    ps.windows(2).filter(|w| w[1] < w[0]).count()
}

#[test]
fn monotone_in_trigger_load() {
    let ps: Vec<f64> = [4.0, 7.0, 10.0, 13.0, 16.0]
        .into_iter()
        .map(|l| light_probability(l, 60.0))
        .collect();
    assert!(violations(&ps) <= 1, "{ps:?}");
    assert!(ps[0] < 0.05 && ps[4] > 0.95, "{ps:?}");
}

#[test]
fn monotone_in_trigger_duration() {
    let ps: Vec<f64> = [5.0, 15.0, 30.0, 60.0, 120.0]
        .into_iter()
        .map(|d| light_probability(12.0, d))
        .collect();
    assert!(violations(&ps) <= 1, "{ps:?}");
    assert!(ps[4] > ps[0], "{ps:?}");
}

#[test]
fn alternative_modes_stay_in_range() {
    let scenario = light_scenario(10.0, 60.0);
    for (mode, start) in [
        (MsfMode::PaperLiteral, TriggerStart::Origin),
        (
            MsfMode::Replication,
            TriggerStart::WarmUp { duration: 500.0 },
        ),
        (
            MsfMode::PaperLiteral,
            TriggerStart::WarmUp { duration: 500.0 },
        ),
    ] {
        let options = MsfOptions {
            mode,
            start,
            trigger_replications: 50,
            ..MsfOptions::default()
        };
        let r = msf_probability_given_set(&scenario, light_set(), &options).unwrap();
        assert!((0.0..=1.0).contains(&r.probability), "{r:?}");
        assert_eq!(r.mode, mode);
    }
    // A trigger that always diverges returns 1 in either mode.
    let storm = light_scenario(60.0, 100.0);
    for mode in [MsfMode::PaperLiteral, MsfMode::Replication] {
        let options = MsfOptions {
            mode,
            trigger_replications: 20,
            ..MsfOptions::default()
        };
        let r = msf_probability_given_set(&storm, light_set(), &options).unwrap();
        assert_eq!(r.probability, 1.0);
    }
}

#[test]
fn surge_threshold_endpoints() {
    let base = ModelConfig::new(30.0, 40.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap();
    let set = enumerate_stationary_set(&base, 5_000.0, 3).unwrap();
    let p = |lambda: f64| {
        let scenario = TriggerScenario {
            base,
            trigger: base.with_lambda(lambda).unwrap(),
            trigger_duration: 60.0,
        };
        msf_probability_given_set(&scenario, &set, &MsfOptions::default())
            .unwrap()
            .probability
    };
    let low = p(31.0);
    let high = p(45.0);
    assert!(low < 0.05, "λ'=31: {low}");
    assert!(high > 0.95, "λ'=45: {high}");
}
