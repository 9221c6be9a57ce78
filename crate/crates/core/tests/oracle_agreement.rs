//! Monte Carlo occupancy against the exact solve of the truncated chain.

use msfq_core::{
    simulate, solve_stationary, ChainState, Kernel, ModelConfig, SimulationSpec, TruncatedChain,
};

fn light_load() -> ModelConfig {
    ModelConfig::new(4.0, 15.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap()
}

fn mc_tv(exact: &msfq_core::Occupancy, duration: f64, seed: u64) -> f64 {
    mc_tv_with(light_load(), exact, duration, seed)
}

fn mc_tv_with(config: ModelConfig, exact: &msfq_core::Occupancy, duration: f64, seed: u64) -> f64 {
    let spec = SimulationSpec::new(config, ChainState::ORIGIN, duration, seed);
    simulate(&spec)
        .unwrap()
        .occupancy
        .unwrap()
        .total_variation(exact)
}

#[test]
fn light_load_truncation_is_tight() {
    let sol = solve_stationary(&TruncatedChain::build(&light_load(), 30, 60)).unwrap();
    assert!(
        sol.boundary_mass < 1e-4,
        "boundary mass {}",
        sol.boundary_mass
    );
    assert!(sol.residual < 1e-8, "residual {}", sol.residual);
    assert!(!sol.truncation_warning);
    assert!((sol.distribution.total() - 1.0).abs() < 1e-9);
    assert!(sol.distribution.iter().all(|(_, p)| p >= 0.0));

    let tv = mc_tv(&sol.distribution, 1e5, 1);
    assert!(tv < 0.05, "tv = {tv}");
}

/// Under the split kernel the storm corner of a 30×60 box is absorbing, so the
/// truncated chain's stationary law sits on the boundary.
#[test]
fn light_load_truncation_is_tight_for_literal_kernel() {
    let config = light_load().with_kernel(Kernel::Literal);
    let sol = solve_stationary(&TruncatedChain::build(&config, 30, 60)).unwrap();
    assert!(
        sol.boundary_mass < 1e-4,
        "boundary mass {}",
        sol.boundary_mass
    );
    assert!(sol.residual < 1e-8, "residual {}", sol.residual);
    let tv = mc_tv_with(config, &sol.distribution, 1e5, 1);
    assert!(tv < 0.05, "tv = {tv}");
}

#[test]
fn split_kernel_matches_on_a_box_without_the_storm() {
    let sol = solve_stationary(&TruncatedChain::build(&light_load(), 20, 40)).unwrap();
    assert!(
        sol.boundary_mass < 1e-4,
        "boundary mass {}",
        sol.boundary_mass
    );
    let tv = mc_tv(&sol.distribution, 1e5, 1);
    assert!(tv < 0.05, "tv = {tv}");
}

#[test]
fn agreement_improves_with_duration() {
    let exact = solve_stationary(&TruncatedChain::build(&light_load(), 20, 40))
        .unwrap()
        .distribution;
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let short = median((0..10).map(|s| mc_tv(&exact, 1e4, s)).collect());
    let long = median((0..10).map(|s| mc_tv(&exact, 1e5, 50 + s)).collect());
    assert!(
        long < short,
        "median tv {long} at 1e5 s vs {short} at 1e4 s"
    );
}
