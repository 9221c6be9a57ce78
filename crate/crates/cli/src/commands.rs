use msfq_core::msf::{enumerate_stationary_set_with, msf_probability_given_set};
use msfq_core::scenario::SweepOptions;
use msfq_core::{
    retry_curve, run_sweep, run_timeline, simulate, ChainState, ClassifyOptions,
    EnumerationOptions, ModelConfig, MsfOptions, Phase, SimulationSpec, Timeline, TriggerScenario,
    TriggerStart, VerdictReason,
};
use serde::Serialize;
use tracing::info;

use crate::config::Config;
use crate::output::{fmt_float, OutputDir};
use crate::CliError;

/// What a command reports back for the manifest.
pub struct Outcome {
    pub seeds: Vec<u64>,
    /// Command arguments that are not part of the config.
    pub arguments: serde_json::Value,
}

impl Outcome {
    fn seeded(seeds: Vec<u64>) -> Self {
        Self {
            seeds,
            arguments: serde_json::Value::Null,
        }
    }
}

pub fn retry_prob(
    mu: f64,
    tau: f64,
    max_queue_len: u32,
    out: &mut OutputDir,
) -> Result<Outcome, CliError> {
    let config = ModelConfig::new(1.0, mu, tau)?;
    let rows = retry_curve(&config, max_queue_len)
        .into_iter()
        .map(|(l, p)| vec![l.to_string(), fmt_float(p)])
        .collect();
    out.csv("retry_prob.csv", &["queue_len", "p_retry"], rows)?;
    Ok(Outcome {
        seeds: vec![],
        arguments: serde_json::json!({ "max_queue_len": max_queue_len }),
    })
}

fn classify_options(config: &Config) -> ClassifyOptions {
    ClassifyOptions {
        burn_in_fraction: config.simulation.burn_in,
        growth_factor: config.simulation.growth_factor,
    }
}

#[derive(Serialize)]
struct VerdictDoc {
    stationary: bool,
    reason: VerdictReason,
    final_metric: f64,
    windows: Vec<WindowDoc>,
    diverged: bool,
    final_state: ChainState,
    final_time: f64,
    transitions_executed: u64,
}

#[derive(Serialize)]
struct WindowDoc {
    time: f64,
    metric: f64,
}

pub fn simulate_cmd(config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let s = &config.simulation;
    let mut spec = SimulationSpec::new(
        config.model()?,
        ChainState::new(s.initial_orbit, s.initial_queue),
        s.duration,
        s.seed,
    );
    spec.estimator = s.estimator.into();
    spec.state_cap = s.state_cap;
    spec.burn_in_fraction = s.burn_in;
    spec.trajectory_stride = s.trajectory_stride;

    let (verdict, windows) = msfq_core::classify_with(&spec, s.windows, &classify_options(config))?;
    let result = simulate(&spec)?;
    info!(
        stationary = verdict.stationary,
        diverged = result.diverged,
        "simulation done"
    );

    let rows = result
        .occupancy
        .iter()
        .flat_map(|occ| occ.iter())
        .map(|(st, p)| vec![st.orbit.to_string(), st.queue.to_string(), fmt_float(p)])
        .collect();
    out.csv("occupancy.csv", &["orbit", "queue", "probability"], rows)?;
    if s.trajectory_stride.is_some() {
        let rows = result
            .trajectory
            .iter()
            .map(|(t, st)| vec![fmt_float(*t), st.orbit.to_string(), st.queue.to_string()])
            .collect();
        out.csv("trajectory.csv", &["time", "orbit", "queue"], rows)?;
    }
    let doc = VerdictDoc {
        stationary: verdict.stationary,
        reason: verdict.reason,
        final_metric: verdict.final_metric,
        windows: windows
            .windows
            .iter()
            .map(|&(time, metric)| WindowDoc { time, metric })
            .collect(),
        diverged: result.diverged,
        final_state: result.final_state,
        final_time: result.final_time,
        transitions_executed: result.transitions_executed,
    };
    out.json("verdict.json", &doc)?;
    Ok(Outcome::seeded(vec![s.seed]))
}

pub fn timeline_cmd(config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let section = config
        .timeline
        .as_ref()
        .ok_or(CliError::missing("timeline"))?;
    if section.phases.is_empty() {
        return Err(CliError::Config("timeline.phases must not be empty".into()));
    }
    let phases = section
        .phases
        .iter()
        .map(|p| {
            Ok(Phase {
                config: config.model_with(p.lambda, p.mu)?,
                duration: p.duration,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let s = &config.simulation;
    let mut timeline = Timeline::new(phases, s.seed, section.window);
    timeline.initial = ChainState::new(s.initial_orbit, s.initial_queue);
    timeline.estimator = s.estimator.into();
    timeline.state_cap = s.state_cap;
    let trace = run_timeline(&timeline)?;

    let mut rows: Vec<Vec<String>> = trace
        .samples
        .iter()
        .map(|x| {
            vec![
                fmt_float(x.time),
                x.state.orbit.to_string(),
                x.state.queue.to_string(),
                fmt_float(x.metric),
                x.phase.to_string(),
                String::new(),
            ]
        })
        .collect();
    if let Some((time, phase)) = trace.diverged_at {
        info!(time, phase, "timeline diverged");
        rows.push(vec![
            fmt_float(time),
            String::new(),
            String::new(),
            String::new(),
            phase.to_string(),
            "diverged".into(),
        ]);
    }
    out.csv(
        "timeline.csv",
        &["time", "orbit", "queue", "metric", "phase", "event"],
        rows,
    )?;
    Ok(Outcome::seeded(vec![s.seed]))
}

pub fn sweep_cmd(config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let section = config.sweep.as_ref().ok_or(CliError::missing("sweep"))?;
    let mus = section.mus.clone().ok_or(CliError::missing("sweep.mus"))?;
    let seeds = section.seeds.clone().unwrap_or_default();
    if seeds.is_empty() {
        return Err(CliError::Config("sweep.seeds must not be empty".into()));
    }
    let mut grid = Vec::with_capacity(mus.len() * section.lambdas.len());
    for &mu in &mus {
        for &lambda in &section.lambdas {
            grid.push(config.model_with(Some(lambda), Some(mu))?);
        }
    }
    let s = &config.simulation;
    let options = SweepOptions {
        window_count: s.windows,
        classify: classify_options(config),
        estimator: s.estimator.into(),
        state_cap: s.state_cap,
    };
    let duration = section.duration.unwrap_or(s.duration);
    let rows = run_sweep(&grid, duration, &seeds, &options)?
        .into_iter()
        .map(|r| {
            vec![
                fmt_float(r.config.lambda()),
                fmt_float(r.config.mu()),
                if r.stationary {
                    "stationary"
                } else {
                    "non-stationary"
                }
                .into(),
                r.final_metric.map(fmt_float).unwrap_or_default(),
                reason_label(r.reason).into(),
                r.votes_stationary.to_string(),
                r.votes.to_string(),
            ]
        })
        .collect();
    out.csv(
        "sweep.csv",
        &[
            "lambda",
            "mu",
            "verdict",
            "metric",
            "reason",
            "votes_stationary",
            "votes",
        ],
        rows,
    )?;
    Ok(Outcome::seeded(seeds))
}

fn reason_label(r: VerdictReason) -> &'static str {
    match r {
        VerdictReason::Converged => "converged",
        VerdictReason::MetricGrowth => "metric-growth",
        VerdictReason::StateCapBreach => "state-cap-breach",
    }
}

#[derive(Serialize)]
struct MsfDoc {
    p_ms: f64,
    stationary_set_size: usize,
    frontier: Vec<u32>,
    mode: msfq_core::MsfMode,
    replications: usize,
    non_stationary: usize,
    diverged: usize,
    base_replications: usize,
    split_votes: usize,
    repairs: usize,
}

pub fn msf_cmd(config: &Config, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let trigger = config
        .trigger
        .as_ref()
        .ok_or(CliError::missing("trigger"))?;
    let base = config.model()?;
    let scenario = TriggerScenario {
        base,
        trigger: config.model_with(trigger.lambda, trigger.mu)?,
        trigger_duration: trigger.duration,
    };
    let s = &config.simulation;
    let options = MsfOptions {
        mode: s.mode.into(),
        trigger_replications: s.trigger_replications,
        start: match s.warm_up {
            Some(duration) => TriggerStart::WarmUp { duration },
            None => TriggerStart::Origin,
        },
        seed: s.seed,
        enumeration: EnumerationOptions {
            per_state_duration: s.per_state_duration,
            replications: s.replications,
            window_count: s.windows,
            classify: classify_options(config),
            estimator: s.estimator.into(),
            state_cap: s.state_cap,
            seed: s.seed,
            ..EnumerationOptions::default()
        },
    };
    let set = enumerate_stationary_set_with(&base, &options.enumeration)?;
    info!(
        size = set.len(),
        split_votes = set.split_votes,
        classifications = set.classifications,
        "stationary set enumerated"
    );
    let report = msf_probability_given_set(&scenario, &set, &options)?;
    out.json(
        "msf.json",
        &MsfDoc {
            p_ms: report.probability,
            stationary_set_size: report.stationary_set_size,
            frontier: report.frontier,
            mode: report.mode,
            replications: report.replications,
            non_stationary: report.non_stationary,
            diverged: report.diverged,
            base_replications: s.replications,
            split_votes: set.split_votes,
            repairs: set.repairs,
        },
    )?;
    Ok(Outcome::seeded(vec![s.seed]))
}
