//! Shared fixtures for the criterion benches.

use msfq_core::{ChainState, ModelConfig, SimulationSpec};

/// The light-load configuration used throughout the timeline experiments.
pub fn light_load() -> ModelConfig {
    ModelConfig::new(4.0, 15.0, 1.0).expect("valid config")
}

/// The base configuration of the load-surge validation runs.
pub fn surge_base() -> ModelConfig {
    ModelConfig::new(30.0, 40.0, 1.0).expect("valid config")
}

pub fn simulation(config: ModelConfig, duration: f64) -> SimulationSpec {
    SimulationSpec::new(config, ChainState::ORIGIN, duration, 7)
}
