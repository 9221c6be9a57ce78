//! Independent reference solutions for validating the Monte Carlo engine:
//! the closed-form M/M/1 law and an exact stationary solve of the chain
//! truncated to a finite box.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{transitions, ChainState, ModelConfig};
use crate::occupancy::Occupancy;

/// Boundary mass at or above which a truncation is flagged as too small.
pub const BOUNDARY_MASS_WARNING: f64 = 0.01;

/// `(1 − ρ) ρ^j`, the stationary queue-length law of an M/M/1 queue.
pub fn mm1_stationary(rho: f64, j: u32) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(
            "rho",
            format!("must lie in (0, 1), got {rho}"),
        ));
    }
    Ok((1.0 - rho) * rho.powi(j as i32))
}

/// The chain restricted to `0..=max_orbit × 0..=max_queue`, with a dense
/// generator matrix. Transitions that would leave the box are redirected to
/// the state they clip to; those that clip back onto their source vanish.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    max_orbit: u32,
    max_queue: u32,
    generator: DMatrix<f64>,
}

impl TruncatedChain {
    pub fn build(config: &ModelConfig, max_orbit: u32, max_queue: u32) -> Self {
        let cols = max_queue as usize + 1;
        let n = (max_orbit as usize + 1) * cols;
        let index = |s: ChainState| s.orbit as usize * cols + s.queue as usize;
        let mut q = DMatrix::<f64>::zeros(n, n);
        for i in 0..=max_orbit {
            for j in 0..=max_queue {
                let from = ChainState::new(i, j);
                let row = index(from);
                for t in transitions(config, from).iter() {
                    let to = ChainState::new(
                        t.target.orbit.min(max_orbit),
                        t.target.queue.min(max_queue),
                    );
                    if to != from {
                        q[(row, index(to))] += t.rate;
                    }
                }
                let out: f64 = q.row(row).iter().sum();
                q[(row, row)] = -out;
            }
        }
        Self {
            max_orbit,
            max_queue,
            generator: q,
        }
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn max_orbit(&self) -> u32 {
        self.max_orbit
    }

    pub fn max_queue(&self) -> u32 {
        self.max_queue
    }

    pub fn state_count(&self) -> usize {
        self.generator.nrows()
    }

    pub fn state_at(&self, index: usize) -> ChainState {
        let cols = self.max_queue as usize + 1;
        ChainState::new((index / cols) as u32, (index % cols) as u32)
    }

    fn on_boundary(&self, s: ChainState) -> bool {
        s.orbit == self.max_orbit || s.queue == self.max_queue
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarySolution {
    pub distribution: Occupancy,
    /// Probability on the outermost row and column of the box.
    pub boundary_mass: f64,
    /// `‖πQ‖∞` of the returned vector.
    pub residual: f64,
    /// Set when `boundary_mass ≥ 1%`: the box is too small to trust.
    pub truncation_warning: bool,
}

/// Solves `πQ = 0, Σπ = 1` by dense LU, replacing the last balance equation
/// with the normalization row.
pub fn solve_stationary(chain: &TruncatedChain) -> Result<StationarySolution> {
    let n = chain.state_count();
    let mut a = chain.generator.transpose();
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;

    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numerical("generator system is singular".into()))?;
    if pi.iter().any(|p| !p.is_finite() || *p < -1e-9) {
        return Err(Error::Numerical(
            "stationary solve produced negative or non-finite mass".into(),
        ));
    }
    let pi = pi.map(|p| p.max(0.0));
    let residual = (pi.transpose() * &chain.generator).amax();

    let mut boundary_mass = 0.0;
    let mut probs = Vec::with_capacity(n);
    for (k, &p) in pi.iter().enumerate() {
        let s = chain.state_at(k);
        if chain.on_boundary(s) {
            boundary_mass += p;
        }
        if p > 0.0 {
            probs.push((s, p));
        }
    }
    Ok(StationarySolution {
        distribution: Occupancy::from_weights(probs)?,
        boundary_mass,
        residual,
        truncation_warning: boundary_mass >= BOUNDARY_MASS_WARNING,
    })
}
