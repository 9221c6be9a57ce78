//! Monte Carlo simulation of the chain.
//!
//! Each step enumerates the transitions out of the current state, draws an
//! exponential time `−ln(1−r)/rate` for every one of them, and fires the
//! earliest. Per-state statistics accumulate until the simulated clock
//! reaches the requested duration or the total occupancy exceeds the state
//! cap.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::model::{transitions_with, ChainState, ModelConfig, RetryTable};
use crate::occupancy::Occupancy;
use crate::rng::{rng_from_seed, SimRng};

pub const DEFAULT_STATE_CAP: u32 = 500;

/// How per-state statistics become an occupancy distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Time spent in each state over total time.
    #[default]
    SojournTime,
    /// Number of entries into each state, normalized.
    VisitCount,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSpec {
    pub config: ModelConfig,
    pub initial: ChainState,
    /// Simulated seconds.
    pub duration: f64,
    pub seed: u64,
    pub estimator: Estimator,
    /// The run is abandoned as divergent once `orbit + queue` exceeds this.
    pub state_cap: u32,
    /// Leading fraction of `duration` excluded from occupancy statistics.
    pub burn_in_fraction: f64,
    /// Record `(time, state)` every this many seconds.
    pub trajectory_stride: Option<f64>,
}

impl SimulationSpec {
    pub fn new(config: ModelConfig, initial: ChainState, duration: f64, seed: u64) -> Self {
        Self {
            config,
            initial,
            duration,
            seed,
            estimator: Estimator::default(),
            state_cap: DEFAULT_STATE_CAP,
            burn_in_fraction: 0.0,
            trajectory_stride: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("duration", self.duration)?;
        if self.state_cap == 0 || u64::from(self.state_cap) <= self.initial.load() {
            return Err(Error::param(
                "state_cap",
                format!(
                    "must exceed the initial load {} (got {})",
                    self.initial.load(),
                    self.state_cap
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::param("burn_in_fraction", "must be in [0, 1)"));
        }
        if let Some(stride) = self.trajectory_stride {
            ensure_positive("trajectory_stride", stride)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    /// Absent when the run diverged.
    pub occupancy: Option<Occupancy>,
    pub trajectory: Vec<(f64, ChainState)>,
    pub diverged: bool,
    pub final_state: ChainState,
    /// Simulated time reached; less than the duration only on divergence.
    pub final_time: f64,
    pub transitions_executed: u64,
}

/// Inverse-CDF exponential sample `−ln(1−r)/rate` for `r ∈ (0, 1)`.
pub fn sample_exponential(rate: f64, r: f64) -> Result<f64> {
    ensure_positive("rate", rate)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param("r", format!("must lie in (0, 1), got {r}")));
    }
    Ok(-(-r).ln_1p() / rate)
}

/// Dense per-state weights, grown on demand.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    rows: Vec<Vec<f64>>,
    total: f64,
}

impl Accumulator {
    fn add(&mut self, s: ChainState, w: f64) {
        let (i, j) = (s.orbit as usize, s.queue as usize);
        if self.rows.len() <= i {
            self.rows.resize_with(i + 1, Vec::new);
        }
        let row = &mut self.rows[i];
        if row.len() <= j {
            row.resize(j + 1, 0.0);
        }
        row[j] += w;
        self.total += w;
    }

    fn clear(&mut self) {
        self.rows.iter_mut().for_each(|r| r.fill(0.0));
        self.total = 0.0;
    }

    fn weights(&self) -> impl Iterator<Item = (ChainState, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(move |(j, &w)| (ChainState::new(i as u32, j as u32), w))
        })
    }
}

/// A resumable simulation. [`simulate`] is the one-shot entry point; the
/// stability classifier and timelines drive a `Simulator` directly to read
/// statistics at window boundaries or switch configs mid-run.
#[derive(Debug, Clone)]
pub struct Simulator {
    table: RetryTable,
    state: ChainState,
    time: f64,
    rng: SimRng,
    estimator: Estimator,
    state_cap: u32,
    stats: Accumulator,
    executed: u64,
    diverged: bool,
    stride: Option<f64>,
    next_sample: f64,
    trajectory: Vec<(f64, ChainState)>,
}

impl Simulator {
    pub fn new(
        config: &ModelConfig,
        initial: ChainState,
        seed: u64,
        estimator: Estimator,
        state_cap: u32,
    ) -> Self {
        Self {
            table: RetryTable::new(config, state_cap as usize + 2),
            state: initial,
            time: 0.0,
            rng: rng_from_seed(seed),
            estimator,
            state_cap,
            stats: Accumulator::default(),
            executed: 0,
            diverged: u64::from(state_cap) < initial.load(),
            stride: None,
            next_sample: 0.0,
            trajectory: Vec::new(),
        }
    }

    pub fn record_trajectory(&mut self, stride: f64) {
        self.stride = Some(stride);
        self.next_sample = self.time;
    }

    /// Switches parameters without touching the chain state or clock.
    pub fn set_config(&mut self, config: &ModelConfig) {
        if self.table.config() != config {
            self.table = RetryTable::new(config, self.state_cap as usize + 2);
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.table.config()
    }

    pub fn state(&self) -> ChainState {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn transitions_executed(&self) -> u64 {
        self.executed
    }

    pub fn trajectory(&self) -> &[(f64, ChainState)] {
        &self.trajectory
    }

    pub fn take_trajectory(&mut self) -> Vec<(f64, ChainState)> {
        std::mem::take(&mut self.trajectory)
    }

    pub fn reset_statistics(&mut self) {
        self.stats.clear();
    }

    /// Occupancy accumulated since the last reset. With nothing accumulated
    /// yet, all mass sits on the current state.
    pub fn occupancy(&self) -> Occupancy {
        if self.stats.total > 0.0 {
            Occupancy::from_weights(self.stats.weights())
                .expect("accumulated weights are positive and finite")
        } else {
            Occupancy::point_mass(self.state)
        }
    }

    fn sample_until(&mut self, t: f64) {
        if let Some(stride) = self.stride {
            while self.next_sample <= t {
                self.trajectory.push((self.next_sample, self.state));
                self.next_sample += stride;
            }
        }
    }

    /// Advances the clock to `t_end`, or until the state cap is breached.
    pub fn run_until(&mut self, t_end: f64) {
        while !self.diverged && self.time < t_end {
            let p = self.table.get(self.state.queue);
            let list = transitions_with(self.table.config(), self.state, p);

            let mut best_dt = f64::INFINITY;
            let mut best = None;
            for t in list.iter() {
                let r: f64 = self.rng.sample(Open01);
                let dt = -(-r).ln_1p() / t.rate;
                if dt < best_dt {
                    best_dt = dt;
                    best = Some(t.target);
                }
            }

            let next_time = self.time + best_dt;
            let Some(target) = best.filter(|_| next_time < t_end) else {
                // Nothing fires before the horizon; the pending draws are
                // discarded, which memorylessness permits.
                self.sample_until(t_end);
                self.dwell(t_end - self.time);
                self.time = t_end;
                return;
            };

            self.sample_until(next_time);
            self.dwell(best_dt);
            self.time = next_time;
            self.state = target;
            self.executed += 1;
            if self.estimator == Estimator::VisitCount {
                self.stats.add(target, 1.0);
            }
            if self.state.load() > u64::from(self.state_cap) {
                self.diverged = true;
            }
        }
    }

    fn dwell(&mut self, dt: f64) {
        if self.estimator == Estimator::SojournTime && dt > 0.0 {
            self.stats.add(self.state, dt);
        }
    }
}

/// Runs one simulation to completion.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulationResult> {
    spec.validate()?;
    let mut sim = Simulator::new(
        &spec.config,
        spec.initial,
        spec.seed,
        spec.estimator,
        spec.state_cap,
    );
    if let Some(stride) = spec.trajectory_stride {
        sim.record_trajectory(stride);
    }
    if spec.burn_in_fraction > 0.0 {
        sim.run_until(spec.burn_in_fraction * spec.duration);
        sim.reset_statistics();
    }
    sim.run_until(spec.duration);
    let diverged = sim.diverged();
    Ok(SimulationResult {
        occupancy: (!diverged).then(|| sim.occupancy()),
        final_state: sim.state(),
        final_time: sim.time(),
        transitions_executed: sim.transitions_executed(),
        diverged,
        trajectory: sim.take_trajectory(),
    })
}
