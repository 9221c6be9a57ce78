use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ChainState;

/// A probability distribution over chain states.
///
/// Ordered by `(orbit, queue)` so iteration and serialization are
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Occupancy(BTreeMap<ChainState, f64>);

impl Occupancy {
    /// Normalizes non-negative weights to sum to one. Zero weights are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (ChainState, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (state, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param(
                    "weights",
                    format!("bad weight {w} at {state}"),
                ));
            }
            if w > 0.0 {
                *map.entry(state).or_insert(0.0) += w;
            }
        }
        let total: f64 = map.values().sum();
        if total <= 0.0 {
            return Err(Error::param("weights", "total weight is zero"));
        }
        map.values_mut().for_each(|w| *w /= total);
        Ok(Self(map))
    }

    /// Takes probabilities as given, without renormalizing.
    pub fn from_probabilities(probs: impl IntoIterator<Item = (ChainState, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (state, p) in probs {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::param(
                    "probability",
                    format!("bad probability {p} at {state}"),
                ));
            }
            *map.entry(state).or_insert(0.0) += p;
        }
        Ok(Self(map))
    }

    pub fn point_mass(state: ChainState) -> Self {
        Self(BTreeMap::from([(state, 1.0)]))
    }

    pub fn get(&self, state: ChainState) -> f64 {
        self.0.get(&state).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ChainState, f64)> + '_ {
        self.0.iter().map(|(&s, &p)| (s, p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Probability mass on states matching `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(ChainState) -> bool) -> f64 {
        self.iter().filter(|&(s, _)| pred(s)).map(|(_, p)| p).sum()
    }

    /// Marginal distribution of the queue length, indexed by `j`.
    pub fn queue_marginal(&self) -> Vec<f64> {
        let max_j = self.0.keys().map(|s| s.queue).max().unwrap_or(0) as usize;
        let mut out = vec![0.0; max_j + 1];
        for (s, p) in self.iter() {
            out[s.queue as usize] += p;
        }
        out
    }

    /// Total-variation distance `½ Σ |p − q|` over the union of supports.
    pub fn total_variation(&self, other: &Occupancy) -> f64 {
        let mut sum = 0.0;
        for (s, p) in self.iter() {
            sum += (p - other.get(s)).abs();
        }
        for (s, q) in other.iter() {
            if !self.0.contains_key(&s) {
                sum += q;
            }
        }
        0.5 * sum
    }
}

/// Total-variation distance between two distributions over `0..`, given as
/// dense vectors of possibly different length.
pub fn total_variation_dense(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|k| (at(p, k) - at(q, k)).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_normalize() {
        let o = Occupancy::from_weights([
            (ChainState::new(0, 0), 3.0),
            (ChainState::new(0, 1), 1.0),
            (ChainState::new(2, 0), 0.0),
        ])
        .unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.get(ChainState::new(0, 0)), 0.75);
        assert_eq!(o.queue_marginal(), vec![0.75, 0.25]);
    }

    #[test]
    fn rejects_negative_and_empty() {
        assert!(Occupancy::from_weights([(ChainState::ORIGIN, -1.0)]).is_err());
        assert!(Occupancy::from_weights([]).is_err());
        assert!(Occupancy::from_probabilities([(ChainState::ORIGIN, f64::NAN)]).is_err());
    }

    #[test]
    fn tv_distance() {
        let a = Occupancy::point_mass(ChainState::new(0, 0));
        let b = Occupancy::point_mass(ChainState::new(0, 1));
        assert_eq!(a.total_variation(&b), 1.0);
        assert_eq!(a.total_variation(&a), 0.0);
        assert_eq!(total_variation_dense(&[0.5, 0.5], &[1.0]), 0.5);
    }
}
