//! Run configuration: one TOML file per run, every default materialized
//! before the run so the manifest can replay it.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use msfq_core::{Estimator, Kernel, ModelConfig, MsfMode, RetryMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    #[default]
    Sojourn,
    Visit,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Sojourn => Estimator::SojournTime,
            EstimatorArg::Visit => Estimator::VisitCount,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    #[default]
    Replication,
    PaperLiteral,
}

impl From<ModeArg> for MsfMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Replication => MsfMode::Replication,
            ModeArg::PaperLiteral => MsfMode::PaperLiteral,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerSection>,
    pub simulation: SimulationSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline: Option<TimelineSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    /// Defaults to `1 / tau`.
    pub mu0: Option<f64>,
    pub kernel: Kernel,
    pub retry: RetryMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    /// Defaults to the base arrival rate.
    pub lambda: Option<f64>,
    /// Defaults to the base service rate.
    pub mu: Option<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub duration: f64,
    pub seed: u64,
    pub initial_orbit: u32,
    pub initial_queue: u32,
    pub state_cap: u32,
    pub estimator: EstimatorArg,
    pub windows: usize,
    pub burn_in: f64,
    pub growth_factor: f64,
    /// Record the state every this many seconds (`simulate` only).
    pub trajectory_stride: Option<f64>,
    pub per_state_duration: f64,
    pub replications: usize,
    pub trigger_replications: usize,
    pub mode: ModeArg,
    /// Run the base config this long before each trigger instead of starting
    /// the trigger at `(0, 0)`.
    pub warm_up: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            duration: 1e4,
            seed: 0,
            initial_orbit: 0,
            initial_queue: 0,
            state_cap: msfq_core::engine::DEFAULT_STATE_CAP,
            estimator: EstimatorArg::Sojourn,
            windows: 10,
            burn_in: 0.1,
            growth_factor: 2.0,
            trajectory_stride: None,
            per_state_duration: 5_000.0,
            replications: 3,
            trigger_replications: 200,
            mode: ModeArg::Replication,
            warm_up: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineSection {
    #[serde(default = "default_window")]
    pub window: f64,
    pub phases: Vec<PhaseSection>,
}

fn default_window() -> f64 {
    50.0
}

/// One timeline phase; unset rates inherit from `[model]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    /// Defaults to `[model.mu]`.
    pub mus: Option<Vec<f64>>,
    /// Per-point duration; defaults to `simulation.duration`.
    pub duration: Option<f64>,
    /// Majority-vote seeds; defaults to three derived from `simulation.seed`.
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills derived defaults in place so the serialized config is complete.
    pub fn resolve(&mut self) {
        let m = &mut self.model;
        if m.mu0.is_none() {
            m.mu0 = m.tau.filter(|t| *t > 0.0).map(|t| 1.0 / t);
        }
        if let Some(t) = &mut self.trigger {
            t.lambda = t.lambda.or(self.model.lambda);
            t.mu = t.mu.or(self.model.mu);
        }
        if let Some(tl) = &mut self.timeline {
            for p in &mut tl.phases {
                p.lambda = p.lambda.or(self.model.lambda);
                p.mu = p.mu.or(self.model.mu);
            }
        }
        if let Some(s) = &mut self.sweep {
            if s.mus.is_none() {
                s.mus = self.model.mu.map(|mu| vec![mu]);
            }
            s.duration = s.duration.or(Some(self.simulation.duration));
            if s.seeds.is_none() {
                let base = self.simulation.seed;
                s.seeds = Some(
                    (0..3)
                        .map(|k| msfq_core::rng::derive_seed(base, &[k]))
                        .collect(),
                );
            }
        }
        if self.output.dir.is_none() {
            self.output.dir = Some(PathBuf::from("out"));
        }
    }

    /// The base model with `[model]` overrides of arrival and service rate.
    pub fn model_with(
        &self,
        lambda: Option<f64>,
        mu: Option<f64>,
    ) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let lambda = lambda
            .or(m.lambda)
            .ok_or(CliError::missing("model.lambda"))?;
        let mu = mu.or(m.mu).ok_or(CliError::missing("model.mu"))?;
        let tau = m.tau.ok_or(CliError::missing("model.tau"))?;
        let mut config = ModelConfig::new(lambda, mu, tau)?
            .with_kernel(m.kernel)
            .with_retry(m.retry);
        if let Some(mu0) = m.mu0 {
            config = config.with_mu0(mu0)?;
        }
        Ok(config)
    }

    pub fn model(&self) -> Result<ModelConfig, CliError> {
        self.model_with(None, None)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("[model]\nlamda = 4.0\n").unwrap_err();
        assert!(matches!(err, CliError::Config(msg) if msg.contains("lamda")));
        assert!(Config::parse("[modle]\n").is_err());
    }

    #[test]
    fn defaults_are_materialized() {
        let mut c = Config::parse(
            "[model]\nlambda = 30.0\nmu = 40.0\ntau = 0.5\n[trigger]\nlambda = 37.0\nduration = 60.0\n[sweep]\nlambdas = [1.0]\n",
        )
        .unwrap();
        c.resolve();
        assert_eq!(c.model.mu0, Some(2.0));
        let t = c.trigger.as_ref().unwrap();
        assert_eq!((t.lambda, t.mu), (Some(37.0), Some(40.0)));
        let s = c.sweep.as_ref().unwrap();
        assert_eq!(s.mus, Some(vec![40.0]));
        assert_eq!(s.seeds.as_ref().unwrap().len(), 3);
        assert_eq!(c.out_dir(), PathBuf::from("out"));
    }

    #[test]
    fn kernel_and_modes_parse() {
        let c = Config::parse(
            "[model]\nkernel = \"literal\"\nretry = \"disabled\"\n[simulation]\nmode = \"paper-literal\"\nestimator = \"visit\"\n",
        )
        .unwrap();
        assert_eq!(c.model.kernel, Kernel::Literal);
        assert_eq!(c.model.retry, RetryMode::Disabled);
        assert_eq!(c.simulation.mode, ModeArg::PaperLiteral);
        assert_eq!(c.simulation.estimator, EstimatorArg::Visit);
    }

    #[test]
    fn missing_model_fields_are_config_errors() {
        let c = Config::parse("[model]\nmu = 15.0\ntau = 1.0\n").unwrap();
        assert!(matches!(c.model(), Err(CliError::Config(_))));
    }
}
