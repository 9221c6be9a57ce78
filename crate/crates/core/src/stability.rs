//! Distance metric and the stationary / non-stationary classifier.

use serde::{Deserialize, Serialize};

use crate::engine::{SimulationSpec, Simulator};
use crate::error::{Error, Result};
use crate::occupancy::Occupancy;

/// Tolerance on `Σ p = 1` accepted by [`distance_metric`].
const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Expected distance from `(0, 0)`: `Σ √(i² + j²) · P_ij`.
pub fn distance_metric(occupancy: &Occupancy) -> Result<f64> {
    let total = occupancy.total();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::param(
            "occupancy",
            format!("probabilities sum to {total}, expected 1"),
        ));
    }
    Ok(occupancy.iter().map(|(s, p)| s.distance() * p).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Leading fraction of the run excluded from window statistics.
    pub burn_in_fraction: f64,
    /// Final-window metric over first-window metric above which the run
    /// counts as growing.
    pub growth_factor: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            burn_in_fraction: 0.1,
            growth_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictReason {
    Converged,
    MetricGrowth,
    StateCapBreach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityVerdict {
    pub stationary: bool,
    pub reason: VerdictReason,
    /// Last-window metric; meaningful only when stationary.
    pub final_metric: f64,
}

/// `(window_end_time, metric)` with cumulative post-burn-in occupancy.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DistanceTrajectory {
    pub windows: Vec<(f64, f64)>,
}

impl DistanceTrajectory {
    pub fn metrics(&self) -> impl Iterator<Item = f64> + '_ {
        self.windows.iter().map(|&(_, m)| m)
    }
}

/// Least-squares slope of `y` against `x`.
pub(crate) fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn classify(
    spec: &SimulationSpec,
    window_count: usize,
) -> Result<(StationarityVerdict, DistanceTrajectory)> {
    classify_with(spec, window_count, &ClassifyOptions::default())
}

/// Simulates `spec` in `window_count` equal post-burn-in windows and judges
/// whether the distance metric settles.
///
/// Non-stationary if the run breaches the state cap, or if the last window's
/// metric exceeds `growth_factor` times the first window's *and* the
/// least-squares slope over the last half of the windows is positive.
pub fn classify_with(
    spec: &SimulationSpec,
    window_count: usize,
    options: &ClassifyOptions,
) -> Result<(StationarityVerdict, DistanceTrajectory)> {
    spec.validate()?;
    if window_count < 4 {
        return Err(Error::param("window_count", "must be at least 4"));
    }
    if !(0.0..1.0).contains(&options.burn_in_fraction) {
        return Err(Error::param("burn_in_fraction", "must be in [0, 1)"));
    }
    if !(options.growth_factor.is_finite() && options.growth_factor >= 1.0) {
        return Err(Error::param("growth_factor", "must be finite and >= 1"));
    }

    let mut sim = Simulator::new(
        &spec.config,
        spec.initial,
        spec.seed,
        spec.estimator,
        spec.state_cap,
    );
    let burn_in = options.burn_in_fraction * spec.duration;
    sim.run_until(burn_in);
    sim.reset_statistics();

    let width = (spec.duration - burn_in) / window_count as f64;
    let mut trajectory = DistanceTrajectory::default();
    for w in 1..=window_count {
        if sim.diverged() {
            break;
        }
        let end = if w == window_count {
            spec.duration
        } else {
            burn_in + width * w as f64
        };
        sim.run_until(end);
        if sim.diverged() {
            break;
        }
        trajectory
            .windows
            .push((end, distance_metric(&sim.occupancy())?));
    }

    let final_metric = trajectory.windows.last().map_or(0.0, |w| w.1);
    let reason = if sim.diverged() {
        VerdictReason::StateCapBreach
    } else {
        let first = trajectory.windows[0].1;
        let tail = &trajectory.windows[window_count / 2..];
        if final_metric > options.growth_factor * first && ls_slope(tail) > 0.0 {
            VerdictReason::MetricGrowth
        } else {
            VerdictReason::Converged
        }
    };
    let verdict = StationarityVerdict {
        stationary: reason == VerdictReason::Converged,
        reason,
        final_metric,
    };
    Ok((verdict, trajectory))
}

/// Majority vote of [`classify_with`] over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorityVerdict {
    pub stationary: bool,
    pub votes_stationary: usize,
    pub votes: usize,
    pub verdicts: Vec<StationarityVerdict>,
}

impl MajorityVerdict {
    pub fn split(&self) -> bool {
        self.votes_stationary != 0 && self.votes_stationary != self.votes
    }

    /// Median final metric of the stationary votes, if any.
    pub fn median_metric(&self) -> Option<f64> {
        let mut m: Vec<f64> = self
            .verdicts
            .iter()
            .filter(|v| v.stationary)
            .map(|v| v.final_metric)
            .collect();
        if m.is_empty() {
            return None;
        }
        m.sort_by(f64::total_cmp);
        Some(m[m.len() / 2])
    }
}

/// Runs one classification per seed (in parallel) and takes the majority.
/// Ties count as non-stationary.
pub fn classify_majority(
    spec: &SimulationSpec,
    window_count: usize,
    options: &ClassifyOptions,
    seeds: &[u64],
) -> Result<MajorityVerdict> {
    use rayon::prelude::*;

    if seeds.is_empty() {
        return Err(Error::param("seeds", "at least one seed is required"));
    }
    let verdicts = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = spec.clone();
            s.seed = seed;
            classify_with(&s, window_count, options).map(|(v, _)| v)
        })
        .collect::<Result<Vec<_>>>()?;
    let votes_stationary = verdicts.iter().filter(|v| v.stationary).count();
    Ok(MajorityVerdict {
        stationary: 2 * votes_stationary > verdicts.len(),
        votes_stationary,
        votes: verdicts.len(),
        verdicts,
    })
}
