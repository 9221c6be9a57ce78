//! Retry-storm metastable failures as a retrial-orbit Markov chain.
//!
//! The chain tracks `(orbit, queue)`: timed-out requests waiting to retry,
//! and requests waiting for service. On top of the transition kernel
//! ([`model`]) this crate provides a seeded Monte Carlo engine ([`engine`]),
//! a distance-based stationarity classifier ([`stability`]), the
//! metastable-failure probability of a load-surge or capacity-drop trigger
//! ([`msf`]), multi-phase timelines and parameter sweeps ([`scenario`]), and
//! exact reference solutions for testing ([`oracle`]).

pub mod engine;
pub mod error;
pub mod model;
pub mod msf;
pub mod occupancy;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod stability;

pub use engine::{
    sample_exponential, simulate, Estimator, SimulationResult, SimulationSpec, Simulator,
};
pub use error::{Error, Result};
pub use model::{
    flows, poisson_cdf, retry_curve, retry_probability, transitions, ChainState, Kernel,
    ModelConfig, RetryMode, RetryTable, Transition, TransitionKind,
};
pub use msf::{
    enumerate_stationary_set, is_stationary_state, msf_probability, EnumerationOptions, MsfMode,
    MsfOptions, MsfReport, StationarySet, TriggerScenario, TriggerStart,
};
pub use occupancy::Occupancy;
pub use oracle::{mm1_stationary, solve_stationary, StationarySolution, TruncatedChain};
pub use scenario::{
    run_sweep, run_timeline, Phase, SweepRow, Timeline, TimelineSample, TimelineTrace,
};
pub use stability::{
    classify, classify_majority, classify_with, distance_metric, ClassifyOptions,
    DistanceTrajectory, MajorityVerdict, StationarityVerdict, VerdictReason,
};
