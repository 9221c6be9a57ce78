//! The retrial-orbit queueing model: parameters, retry probabilities and the
//! CTMC transition kernel.
//!
//! A state `(i, j)` holds `i` timed-out requests waiting in the orbit and `j`
//! requests in the primary queue. Arrivals come at rate λ, the queue serves
//! at rate μ, and each orbit request retries independently at rate μ0. An
//! arrival or retrial that finds `j` requests ahead times out with
//! probability `P_j = P(N(τ) ≤ j)`, where `N(τ)` is the number of services
//! completed within the timeout.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};

/// Above this mean, `e^{-mean}` underflows and the CDF is summed in log space.
const LOG_SPACE_MEAN: f64 = 700.0;

/// How the arrival and retrial flows are divided between "times out" and
/// "does not time out".
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Arrivals split into λ(1−P_j) and λP_j, retrials into iμ0(1−P_j) and
    /// iμ0P_j. Total arrival and retrial flow is conserved.
    #[default]
    Split,
    /// The diagram read literally: λ to `(i, j+1)` *and* λP_j to
    /// `(i+1, j+1)`, iμ0 to `(i−1, j+1)` *and* iμ0P_j to `(i, j+1)`.
    /// Kept for comparison only; it inflates the offered load.
    Literal,
}

/// Test hook for the timeout mechanism.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetryMode {
    #[default]
    Timeout,
    /// Forces `P_j = 0`, reducing the chain to an M/M/1 queue.
    Disabled,
}

/// Parameters of the chain. All rates are per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConfig {
    lambda: f64,
    mu: f64,
    tau: f64,
    mu0: f64,
    kernel: Kernel,
    retry: RetryMode,
}

impl ModelConfig {
    /// Builds a config with the retrial rate defaulted to `1/tau`.
    pub fn new(lambda: f64, mu: f64, tau: f64) -> Result<Self> {
        ensure_positive("lambda", lambda)?;
        ensure_positive("mu", mu)?;
        ensure_positive("tau", tau)?;
        let mu0 = ensure_positive("mu0", 1.0 / tau)?;
        Ok(Self {
            lambda,
            mu,
            tau,
            mu0,
            kernel: Kernel::default(),
            retry: RetryMode::default(),
        })
    }

    pub fn with_mu0(mut self, mu0: f64) -> Result<Self> {
        self.mu0 = ensure_positive("mu0", mu0)?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = ensure_positive("lambda", lambda)?;
        Ok(self)
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        self.mu = ensure_positive("mu", mu)?;
        Ok(self)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_retry(mut self, retry: RetryMode) -> Self {
        self.retry = retry;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn retry(&self) -> RetryMode {
        self.retry
    }

    /// Mean number of services completed within one timeout, `μτ`.
    pub fn service_mean(&self) -> f64 {
        self.mu * self.tau
    }
}

/// A point `(orbit, queue)` of the two-dimensional state space.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ChainState {
    pub orbit: u32,
    pub queue: u32,
}

impl ChainState {
    pub const ORIGIN: ChainState = ChainState { orbit: 0, queue: 0 };

    pub const fn new(orbit: u32, queue: u32) -> Self {
        Self { orbit, queue }
    }

    /// Total occupancy `orbit + queue`.
    pub fn load(&self) -> u64 {
        u64::from(self.orbit) + u64::from(self.queue)
    }

    /// Euclidean distance from `(0, 0)`.
    pub fn distance(&self) -> f64 {
        let i = f64::from(self.orbit);
        let j = f64::from(self.queue);
        (i * i + j * j).sqrt()
    }
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.orbit, self.queue)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TransitionKind {
    ArrivalNoRetry,
    ArrivalWithRetry,
    Departure,
    RetrialSuccess,
    RetrialReRetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub target: ChainState,
    pub rate: f64,
    /// For the superposed `(i, j+1)` entry this is the arrival flow when it
    /// is present, else the re-retry flow; see [`flows`] for the breakdown.
    pub kind: TransitionKind,
}

/// Up to four superposed transitions out of one state, without allocating.
#[derive(Debug, Clone, Copy)]
pub struct Transitions {
    items: [Transition; 4],
    len: usize,
}

impl Transitions {
    fn push(&mut self, target: ChainState, rate: f64, kind: TransitionKind) {
        if rate > 0.0 {
            self.items[self.len] = Transition { target, rate, kind };
            self.len += 1;
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.iter().map(|t| t.rate).sum()
    }
}

impl Deref for Transitions {
    type Target = [Transition];

    fn deref(&self) -> &[Transition] {
        &self.items[..self.len]
    }
}

/// Successive values of the Poisson CDF `P(N ≤ k)` for `k = 0, 1, 2, …`.
///
/// Terms follow the recurrence `term_{n+1} = term_n · mean/(n+1)`; for
/// `mean > 700` the running sum is kept as a log-sum-exp.
#[derive(Debug, Clone)]
struct PoissonCdfSeries {
    mean: f64,
    n: u64,
    log_space: bool,
    // linear space
    term: f64,
    sum: f64,
    // log space
    log_term: f64,
    log_sum: f64,
}

impl PoissonCdfSeries {
    fn new(mean: f64) -> Self {
        let log_space = mean > LOG_SPACE_MEAN;
        let term = (-mean).exp();
        Self {
            mean,
            n: 0,
            log_space,
            term,
            sum: term,
            log_term: -mean,
            log_sum: -mean,
        }
    }

    fn value(&self) -> f64 {
        let v = if self.log_space {
            self.log_sum.exp()
        } else {
            self.sum
        };
        v.clamp(0.0, 1.0)
    }

    /// Whether the remaining tail is below double precision of the sum.
    fn saturated(&self) -> bool {
        // Beyond 2·mean successive terms shrink by at least half, so the tail
        // is bounded by the current term.
        if (self.n as f64) <= 2.0 * self.mean {
            return false;
        }
        if self.log_space {
            self.log_term - self.log_sum < -40.0
        } else {
            self.term <= self.sum * 1e-17
        }
    }

    fn advance(&mut self) {
        self.n += 1;
        let ratio = self.mean / self.n as f64;
        if self.log_space {
            self.log_term += ratio.ln();
            let (hi, lo) = if self.log_term > self.log_sum {
                (self.log_term, self.log_sum)
            } else {
                (self.log_sum, self.log_term)
            };
            self.log_sum = hi + (lo - hi).exp().ln_1p();
        } else {
            self.term *= ratio;
            self.sum += self.term;
        }
    }
}

/// `P(N ≤ k)` for `N ~ Poisson(mean)`.
pub fn poisson_cdf(k: u64, mean: f64) -> Result<f64> {
    ensure_positive("mean", mean)?;
    let mut series = PoissonCdfSeries::new(mean);
    while series.n < k {
        if series.saturated() {
            return Ok(1.0);
        }
        series.advance();
    }
    Ok(series.value())
}

/// Probability that a request with `queue_len` requests ahead of it times
/// out: `P(N(τ) ≤ L)` with `N(τ) ~ Poisson(μτ)`.
///
/// Computed directly; hot loops should go through a [`RetryTable`].
pub fn retry_probability(config: &ModelConfig, queue_len: u32) -> f64 {
    match config.retry {
        RetryMode::Disabled => 0.0,
        RetryMode::Timeout => poisson_cdf(u64::from(queue_len), config.service_mean())
            .expect("service mean validated by ModelConfig"),
    }
}

/// Memoized `retry_probability` for one config over `L = 0..len`.
///
/// Immutable once built, so workers can share it or build their own.
#[derive(Debug, Clone)]
pub struct RetryTable {
    config: ModelConfig,
    values: Vec<f64>,
}

impl RetryTable {
    pub fn new(config: &ModelConfig, len: usize) -> Self {
        let values = match config.retry {
            RetryMode::Disabled => vec![0.0; len],
            RetryMode::Timeout => {
                let mut series = PoissonCdfSeries::new(config.service_mean());
                let mut values = Vec::with_capacity(len);
                while values.len() < len {
                    values.push(series.value());
                    if series.saturated() {
                        values.resize(len, 1.0);
                        break;
                    }
                    series.advance();
                }
                values
            }
        };
        Self {
            config: *config,
            values,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, queue_len: u32) -> f64 {
        match self.values.get(queue_len as usize) {
            Some(&p) => p,
            None => retry_probability(&self.config, queue_len),
        }
    }
}

/// Per-flow rates before superposition.
#[derive(Debug, Clone, Copy)]
struct FlowRates {
    arrival_no_retry: f64,
    arrival_with_retry: f64,
    departure: f64,
    retrial_success: f64,
    retrial_re_retry: f64,
}

fn flow_rates(config: &ModelConfig, state: ChainState, p: f64) -> FlowRates {
    let lambda = config.lambda;
    let orbit_rate = f64::from(state.orbit) * config.mu0;
    let departure = if state.queue > 0 { config.mu } else { 0.0 };
    match config.kernel {
        Kernel::Split => FlowRates {
            arrival_no_retry: lambda * (1.0 - p),
            arrival_with_retry: lambda * p,
            departure,
            retrial_success: orbit_rate * (1.0 - p),
            retrial_re_retry: orbit_rate * p,
        },
        Kernel::Literal => FlowRates {
            arrival_no_retry: lambda,
            arrival_with_retry: lambda * p,
            departure,
            retrial_success: orbit_rate,
            retrial_re_retry: orbit_rate * p,
        },
    }
}

fn targets(state: ChainState) -> (ChainState, ChainState, ChainState, ChainState) {
    let ChainState { orbit: i, queue: j } = state;
    (
        ChainState::new(i, j + 1),
        ChainState::new(i + 1, j + 1),
        ChainState::new(i, j.saturating_sub(1)),
        ChainState::new(i.saturating_sub(1), j + 1),
    )
}

/// Superposed transitions out of `state` given its retry probability `p`.
pub fn transitions_with(config: &ModelConfig, state: ChainState, p: f64) -> Transitions {
    let r = flow_rates(config, state, p);
    let (up, up_orbit, down, from_orbit) = targets(state);
    let mut out = Transitions {
        items: [Transition {
            target: state,
            rate: 0.0,
            kind: TransitionKind::ArrivalNoRetry,
        }; 4],
        len: 0,
    };
    let up_kind = if r.arrival_no_retry > 0.0 {
        TransitionKind::ArrivalNoRetry
    } else {
        TransitionKind::RetrialReRetry
    };
    out.push(up, r.arrival_no_retry + r.retrial_re_retry, up_kind);
    out.push(
        up_orbit,
        r.arrival_with_retry,
        TransitionKind::ArrivalWithRetry,
    );
    out.push(down, r.departure, TransitionKind::Departure);
    if state.orbit > 0 {
        out.push(
            from_orbit,
            r.retrial_success,
            TransitionKind::RetrialSuccess,
        );
    }
    out
}

/// Superposed transitions out of `state`; zero-rate entries are omitted.
pub fn transitions(config: &ModelConfig, state: ChainState) -> Transitions {
    transitions_with(config, state, retry_probability(config, state.queue))
}

/// The individual flows out of `state` before superposition, one per kind.
pub fn flows(config: &ModelConfig, state: ChainState) -> Vec<Transition> {
    let r = flow_rates(config, state, retry_probability(config, state.queue));
    let (up, up_orbit, down, from_orbit) = targets(state);
    let mut out = vec![
        Transition {
            target: up,
            rate: r.arrival_no_retry,
            kind: TransitionKind::ArrivalNoRetry,
        },
        Transition {
            target: up_orbit,
            rate: r.arrival_with_retry,
            kind: TransitionKind::ArrivalWithRetry,
        },
        Transition {
            target: down,
            rate: r.departure,
            kind: TransitionKind::Departure,
        },
        Transition {
            target: up,
            rate: r.retrial_re_retry,
            kind: TransitionKind::RetrialReRetry,
        },
    ];
    if state.orbit > 0 {
        out.push(Transition {
            target: from_orbit,
            rate: r.retrial_success,
            kind: TransitionKind::RetrialSuccess,
        });
    }
    out.retain(|t| t.rate > 0.0);
    out
}

/// `(L, P_retry(L))` for `L = 0..=max_queue_len`.
pub fn retry_curve(config: &ModelConfig, max_queue_len: u32) -> Vec<(u32, f64)> {
    let table = RetryTable::new(config, max_queue_len as usize + 1);
    (0..=max_queue_len).map(|l| (l, table.get(l))).collect()
}
