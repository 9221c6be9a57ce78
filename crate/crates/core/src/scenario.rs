//! Multi-phase timelines and parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Estimator, SimulationSpec, Simulator, DEFAULT_STATE_CAP};
use crate::error::{ensure_positive, Error, Result};
use crate::model::{ChainState, ModelConfig};
use crate::stability::{classify_majority, distance_metric, ClassifyOptions, VerdictReason};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Phase {
    pub config: ModelConfig,
    pub duration: f64,
}

/// Phases simulated back to back on one chain. The state at the end of a
/// phase is the start of the next.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timeline {
    pub phases: Vec<Phase>,
    pub seed: u64,
    /// Metric sampling window in seconds. Windows restart at each phase.
    pub window: f64,
    pub initial: ChainState,
    pub estimator: Estimator,
    pub state_cap: u32,
}

impl Timeline {
    pub fn new(phases: Vec<Phase>, seed: u64, window: f64) -> Self {
        Self {
            phases,
            seed,
            window,
            initial: ChainState::ORIGIN,
            estimator: Estimator::SojournTime,
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::param("phases", "at least one phase is required"));
        }
        for p in &self.phases {
            ensure_positive("phase.duration", p.duration)?;
        }
        ensure_positive("window", self.window)?;
        if u64::from(self.state_cap) <= self.initial.load() {
            return Err(Error::param("state_cap", "must exceed the initial load"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimelineSample {
    /// End of the window.
    pub time: f64,
    pub state: ChainState,
    /// Distance metric of this window's occupancy alone.
    pub metric: f64,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineTrace {
    pub samples: Vec<TimelineSample>,
    /// `(time, phase)` at which the state cap was breached, ending the trace.
    pub diverged_at: Option<(f64, usize)>,
}

impl TimelineTrace {
    pub fn phase_samples(&self, phase: usize) -> impl Iterator<Item = &TimelineSample> {
        self.samples.iter().filter(move |s| s.phase == phase)
    }
}

pub fn run_timeline(timeline: &Timeline) -> Result<TimelineTrace> {
    timeline.validate()?;
    let first = &timeline.phases[0];
    let mut sim = Simulator::new(
        &first.config,
        timeline.initial,
        timeline.seed,
        timeline.estimator,
        timeline.state_cap,
    );
    let mut samples = Vec::new();
    let mut phase_start = 0.0;
    for (index, phase) in timeline.phases.iter().enumerate() {
        sim.set_config(&phase.config);
        let phase_end = phase_start + phase.duration;
        let mut t = phase_start;
        while t < phase_end {
            let end = (t + timeline.window).min(phase_end);
            sim.reset_statistics();
            sim.run_until(end);
            if sim.diverged() {
                return Ok(TimelineTrace {
                    samples,
                    diverged_at: Some((sim.time(), index)),
                });
            }
            samples.push(TimelineSample {
                time: end,
                state: sim.state(),
                metric: distance_metric(&sim.occupancy())?,
                phase: index,
            });
            t = end;
        }
        phase_start = phase_end;
    }
    Ok(TimelineTrace {
        samples,
        diverged_at: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOptions {
    pub window_count: usize,
    pub classify: ClassifyOptions,
    pub estimator: Estimator,
    pub state_cap: u32,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            window_count: 10,
            classify: ClassifyOptions::default(),
            estimator: Estimator::SojournTime,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: ModelConfig,
    pub stationary: bool,
    /// Majority reason; for a non-stationary point the most frequent
    /// non-stationary reason, preferring a cap breach on ties.
    pub reason: VerdictReason,
    pub votes_stationary: usize,
    pub votes: usize,
    /// Median final metric of the stationary votes.
    pub final_metric: Option<f64>,
}

/// Classifies every grid point from `(0, 0)` with a majority over `seeds`.
pub fn run_sweep(
    grid: &[ModelConfig],
    per_point_duration: f64,
    seeds: &[u64],
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::param("grid", "at least one grid point is required"));
    }
    ensure_positive("per_point_duration", per_point_duration)?;
    grid.par_iter()
        .map(|config| {
            let mut spec = SimulationSpec::new(*config, ChainState::ORIGIN, per_point_duration, 0);
            spec.estimator = options.estimator;
            spec.state_cap = options.state_cap;
            let m = classify_majority(&spec, options.window_count, &options.classify, seeds)?;
            let reason = if m.stationary {
                VerdictReason::Converged
            } else {
                let count = |r| m.verdicts.iter().filter(|v| v.reason == r).count();
                if count(VerdictReason::StateCapBreach) >= count(VerdictReason::MetricGrowth) {
                    VerdictReason::StateCapBreach
                } else {
                    VerdictReason::MetricGrowth
                }
            };
            Ok(SweepRow {
                config: *config,
                stationary: m.stationary,
                reason,
                votes_stationary: m.votes_stationary,
                votes: m.votes,
                final_metric: if m.stationary {
                    m.median_metric()
                } else {
                    None
                },
            })
        })
        .collect()
}
