//! Metastable-failure probability of a triggering event.
//!
//! First the stationary states of the base configuration are enumerated:
//! rows `i = 0, 1, …` are scanned upward in `j` from `(i, 0)`, each state is
//! classified by simulating from it, and a row ends at its first
//! non-stationary state. The scan stops at the first row whose `(i, 0)` is
//! already non-stationary. Then the trigger configuration is simulated for
//! the trigger duration, and the probability of ending outside the
//! stationary set is reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Estimator, SimulationSpec, Simulator, DEFAULT_STATE_CAP};
use crate::error::{ensure_positive, Error, Result};
use crate::model::{ChainState, ModelConfig};
use crate::rng::derive_seed;
use crate::stability::{classify_majority, ClassifyOptions};

// Seed stream tags, so each phase of the computation draws independently.
const STREAM_SCAN: u64 = 0;
const STREAM_REVOTE: u64 = 1;
const STREAM_TRIGGER: u64 = 2;
const STREAM_WARM_UP: u64 = 3;
const STREAM_LITERAL: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriggerScenario {
    /// Normal-case configuration.
    pub base: ModelConfig,
    /// Configuration while the trigger is active.
    pub trigger: ModelConfig,
    /// Seconds the trigger lasts.
    pub trigger_duration: f64,
}

impl TriggerScenario {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("trigger_duration", self.trigger_duration)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    /// Simulated seconds per classification.
    pub per_state_duration: f64,
    /// Seeds per state; the majority verdict decides.
    pub replications: usize,
    pub window_count: usize,
    pub classify: ClassifyOptions,
    pub estimator: Estimator,
    pub state_cap: u32,
    pub seed: u64,
    /// States of a row classified concurrently. Results do not depend on it.
    pub batch: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            per_state_duration: 5_000.0,
            replications: 3,
            window_count: 10,
            classify: ClassifyOptions::default(),
            estimator: Estimator::SojournTime,
            state_cap: DEFAULT_STATE_CAP,
            seed: 0,
            batch: rayon::current_num_threads().max(4),
        }
    }
}

impl EnumerationOptions {
    fn validate(&self) -> Result<()> {
        ensure_positive("per_state_duration", self.per_state_duration)?;
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        if self.window_count < 4 {
            return Err(Error::param("window_count", "must be at least 4"));
        }
        Ok(())
    }
}

/// Stationary states of a base configuration, stored as a frontier:
/// `(i, j)` is stationary iff `i < frontier.len()` and `j ≤ frontier[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StationarySet {
    pub frontier: Vec<u32>,
    /// `(0, 0)` itself is non-stationary; the set is empty.
    pub base_unstable: bool,
    /// States whose replications disagreed.
    pub split_votes: usize,
    /// Rows clipped or re-voted to restore downward closure.
    pub repairs: usize,
    /// Number of states classified, including re-votes.
    pub classifications: usize,
}

impl StationarySet {
    pub fn len(&self) -> usize {
        self.frontier.iter().map(|&f| f as usize + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frontier.is_empty()
    }

    pub fn contains(&self, state: ChainState) -> bool {
        self.frontier
            .get(state.orbit as usize)
            .is_some_and(|&f| state.queue <= f)
    }

    pub fn states(&self) -> impl Iterator<Item = ChainState> + '_ {
        self.frontier
            .iter()
            .enumerate()
            .flat_map(|(i, &f)| (0..=f).map(move |j| ChainState::new(i as u32, j)))
    }
}

pub fn is_stationary_state(set: &StationarySet, state: ChainState) -> bool {
    set.contains(state)
}

struct Scanner<'a> {
    base: &'a ModelConfig,
    opts: &'a EnumerationOptions,
    split_votes: usize,
    classifications: usize,
}

impl Scanner<'_> {
    fn vote(&self, state: ChainState, stream: u64, replications: usize) -> Result<(bool, bool)> {
        if state.load() >= u64::from(self.opts.state_cap) {
            return Ok((false, false));
        }
        let seeds: Vec<u64> = (0..replications as u64)
            .map(|r| {
                derive_seed(
                    self.opts.seed,
                    &[stream, u64::from(state.orbit), u64::from(state.queue), r],
                )
            })
            .collect();
        let mut spec = SimulationSpec::new(*self.base, state, self.opts.per_state_duration, 0);
        spec.estimator = self.opts.estimator;
        spec.state_cap = self.opts.state_cap;
        let m = classify_majority(&spec, self.opts.window_count, &self.opts.classify, &seeds)?;
        Ok((m.stationary, m.split()))
    }

    /// Scans row `orbit` from `start` upward and returns the last stationary
    /// queue length, or `None` if `start` itself is non-stationary. Stops
    /// early once `limit` is reached.
    fn scan_row(&mut self, orbit: u32, start: u32, limit: Option<u32>) -> Result<Option<u32>> {
        let cap = self.opts.state_cap.saturating_sub(orbit);
        let end = limit.map_or(cap, |l| l.saturating_add(1).min(cap));
        let batch = self.opts.batch.max(1) as u32;
        let mut last = None;
        let mut j = start;
        while j < end {
            let hi = j.saturating_add(batch).min(end);
            let votes = (j..hi)
                .into_par_iter()
                .map(|q| {
                    self.vote(
                        ChainState::new(orbit, q),
                        STREAM_SCAN,
                        self.opts.replications,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            for (q, (stationary, split)) in (j..hi).zip(votes) {
                self.classifications += 1;
                self.split_votes += usize::from(split);
                if !stationary {
                    return Ok(last);
                }
                last = Some(q);
            }
            j = hi;
        }
        Ok(last)
    }
}

pub fn enumerate_stationary_set(
    base: &ModelConfig,
    per_state_duration: f64,
    replications: usize,
) -> Result<StationarySet> {
    let opts = EnumerationOptions {
        per_state_duration,
        replications,
        ..EnumerationOptions::default()
    };
    enumerate_stationary_set_with(base, &opts)
}

pub fn enumerate_stationary_set_with(
    base: &ModelConfig,
    opts: &EnumerationOptions,
) -> Result<StationarySet> {
    opts.validate()?;
    let mut scanner = Scanner {
        base,
        opts,
        split_votes: 0,
        classifications: 0,
    };

    let mut frontier: Vec<u32> = Vec::new();
    for orbit in 0..opts.state_cap {
        match scanner.scan_row(orbit, 0, None)? {
            Some(f) => frontier.push(f),
            None => break,
        }
    }

    // Monte Carlo noise can leave a row longer than the one above it. Re-vote
    // the state that ended the shorter row with fresh seeds; if it flips, keep
    // scanning that row, then clip the longer one.
    let mut repairs = 0;
    for i in 1..frontier.len() {
        if frontier[i] <= frontier[i - 1] {
            continue;
        }
        repairs += 1;
        let above = i - 1;
        let probe = ChainState::new(above as u32, frontier[above] + 1);
        let (flipped, _) = scanner.vote(probe, STREAM_REVOTE, 2 * opts.replications + 1)?;
        scanner.classifications += 1;
        if flipped {
            let ceiling = if above > 0 {
                frontier[i].min(frontier[above - 1])
            } else {
                frontier[i]
            };
            let extended = scanner
                .scan_row(above as u32, probe.queue + 1, Some(ceiling))?
                .unwrap_or(probe.queue);
            frontier[above] = extended.min(ceiling);
        }
        frontier[i] = frontier[i].min(frontier[above]);
    }

    Ok(StationarySet {
        base_unstable: frontier.is_empty(),
        frontier,
        split_votes: scanner.split_votes,
        repairs,
        classifications: scanner.classifications,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsfMode {
    /// Fraction of independent trigger runs that end outside the stationary
    /// set.
    #[default]
    Replication,
    /// Occupancy mass of a single trigger run on non-stationary states.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TriggerStart {
    #[default]
    Origin,
    /// Run the base config from `(0, 0)` for `duration` seconds first and
    /// start the trigger from wherever it ends.
    WarmUp { duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsfOptions {
    pub mode: MsfMode,
    pub trigger_replications: usize,
    pub start: TriggerStart,
    pub seed: u64,
    pub enumeration: EnumerationOptions,
}

impl Default for MsfOptions {
    fn default() -> Self {
        Self {
            mode: MsfMode::default(),
            trigger_replications: 200,
            start: TriggerStart::default(),
            seed: 0,
            enumeration: EnumerationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsfReport {
    pub probability: f64,
    pub mode: MsfMode,
    pub replications: usize,
    /// Replications ending outside the stationary set (diverged included).
    pub non_stationary: usize,
    /// Replications that breached the state cap during the trigger.
    pub diverged: usize,
    pub stationary_set_size: usize,
    pub frontier: Vec<u32>,
}

/// Builds the stationary set for `scenario.base` and evaluates the trigger.
pub fn msf_probability(
    scenario: &TriggerScenario,
    per_state_duration: f64,
    trigger_replications: usize,
) -> Result<MsfReport> {
    let mut options = MsfOptions {
        trigger_replications,
        ..MsfOptions::default()
    };
    options.enumeration.per_state_duration = per_state_duration;
    msf_probability_with(scenario, &options)
}

pub fn msf_probability_with(scenario: &TriggerScenario, options: &MsfOptions) -> Result<MsfReport> {
    scenario.validate()?;
    let set = enumerate_stationary_set_with(&scenario.base, &options.enumeration)?;
    msf_probability_given_set(scenario, &set, options)
}

/// Evaluates a trigger against an already enumerated stationary set, which
/// must belong to `scenario.base`.
pub fn msf_probability_given_set(
    scenario: &TriggerScenario,
    set: &StationarySet,
    options: &MsfOptions,
) -> Result<MsfReport> {
    scenario.validate()?;
    if set.base_unstable {
        return Err(Error::BaseUnstable);
    }
    if let TriggerStart::WarmUp { duration } = options.start {
        ensure_positive("warm_up", duration)?;
    }
    let cap = options.enumeration.state_cap;
    let estimator = options.enumeration.estimator;

    // Start state for replication `r`, or `None` if the warm-up diverged.
    let start_state = |r: u64| -> Option<ChainState> {
        match options.start {
            TriggerStart::Origin => Some(ChainState::ORIGIN),
            TriggerStart::WarmUp { duration } => {
                let seed = derive_seed(options.seed, &[STREAM_WARM_UP, r]);
                let mut sim =
                    Simulator::new(&scenario.base, ChainState::ORIGIN, seed, estimator, cap);
                sim.run_until(duration);
                (!sim.diverged()).then(|| sim.state())
            }
        }
    };

    let (probability, replications, non_stationary, diverged) = match options.mode {
        MsfMode::Replication => {
            let n = options.trigger_replications;
            if n == 0 {
                return Err(Error::param("trigger_replications", "must be at least 1"));
            }
            // (ended outside the set, diverged)
            let outcomes: Vec<(bool, bool)> = (0..n as u64)
                .into_par_iter()
                .map(|r| {
                    let Some(start) = start_state(r) else {
                        return (true, true);
                    };
                    let seed = derive_seed(options.seed, &[STREAM_TRIGGER, r]);
                    let mut sim = Simulator::new(&scenario.trigger, start, seed, estimator, cap);
                    sim.run_until(scenario.trigger_duration);
                    if sim.diverged() {
                        (true, true)
                    } else {
                        (!set.contains(sim.state()), false)
                    }
                })
                .collect();
            let ns = outcomes.iter().filter(|o| o.0).count();
            let dv = outcomes.iter().filter(|o| o.1).count();
            (ns as f64 / n as f64, n, ns, dv)
        }
        MsfMode::PaperLiteral => match start_state(0) {
            None => (1.0, 1, 1, 1),
            Some(start) => {
                let seed = derive_seed(options.seed, &[STREAM_LITERAL]);
                let mut sim = Simulator::new(&scenario.trigger, start, seed, estimator, cap);
                sim.run_until(scenario.trigger_duration);
                if sim.diverged() {
                    (1.0, 1, 1, 1)
                } else {
                    let p = sim
                        .occupancy()
                        .mass_where(|s| !set.contains(s))
                        .clamp(0.0, 1.0);
                    (p, 1, usize::from(!set.contains(sim.state())), 0)
                }
            }
        },
    };

    Ok(MsfReport {
        probability,
        mode: options.mode,
        replications,
        non_stationary,
        diverged,
        stationary_set_size: set.len(),
        frontier: set.frontier.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(frontier: Vec<u32>) -> StationarySet {
        StationarySet {
            base_unstable: frontier.is_empty(),
            frontier,
            split_votes: 0,
            repairs: 0,
            classifications: 0,
        }
    }

    #[test]
    fn frontier_membership() {
        let s = set(vec![5, 3, 0]);
        assert!(is_stationary_state(&s, ChainState::ORIGIN));
        assert!(is_stationary_state(&s, ChainState::new(0, 5)));
        assert!(is_stationary_state(&s, ChainState::new(1, 3)));
        assert!(!is_stationary_state(&s, ChainState::new(1, 4)));
        assert!(is_stationary_state(&s, ChainState::new(2, 0)));
        assert!(!is_stationary_state(&s, ChainState::new(3, 0)));
        assert_eq!(s.len(), 6 + 4 + 1);
        assert_eq!(s.states().count(), s.len());
    }

    #[test]
    fn unstable_base_is_flagged() {
        let base = ModelConfig::new(30.0, 1.0, 1.0).unwrap();
        let opts = EnumerationOptions {
            per_state_duration: 500.0,
            ..EnumerationOptions::default()
        };
        let s = enumerate_stationary_set_with(&base, &opts).unwrap();
        assert!(s.base_unstable);
        assert!(s.is_empty());
        let scenario = TriggerScenario {
            base,
            trigger: base,
            trigger_duration: 10.0,
        };
        assert_eq!(
            msf_probability_given_set(&scenario, &s, &MsfOptions::default()),
            Err(Error::BaseUnstable)
        );
    }

    #[test]
    fn options_are_validated() {
        let base = ModelConfig::new(4.0, 15.0, 1.0).unwrap();
        let opts = EnumerationOptions {
            replications: 0,
            ..EnumerationOptions::default()
        };
        assert!(enumerate_stationary_set_with(&base, &opts).is_err());
        let scenario = TriggerScenario {
            base,
            trigger: base,
            trigger_duration: 0.0,
        };
        assert!(
            msf_probability_given_set(&scenario, &set(vec![3]), &MsfOptions::default()).is_err()
        );
    }
}
