use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-10;

/// A probability vector over the observation alphabet: the output of every
/// predictor and every oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictiveDist(Vec<f64>);

impl PredictiveDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "distribution has negative or non-finite entries: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "distribution sums to {sum}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(alphabet: usize) -> Self {
        Self(vec![1.0 / alphabet as f64; alphabet])
    }

    /// Normalizes non-negative weights. Returns `None` when all weights vanish.
    pub(crate) fn from_weights(mut weights: Vec<f64>) -> Option<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return None;
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Some(Self(weights))
    }

    /// Builds a distribution from unnormalized log weights.
    pub(crate) fn from_log_weights(logw: &[f64]) -> Option<Self> {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        Self::from_weights(logw.iter().map(|v| (v - max).exp()).collect())
    }

    pub fn bernoulli(p_one: f64) -> Self {
        Self(vec![1.0 - p_one, p_one])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, symbol: usize) -> f64 {
        self.0[symbol]
    }

    /// Equal-weight mixture of distributions over a common alphabet.
    pub fn average(dists: &[PredictiveDist]) -> Option<Self> {
        let first = dists.first()?;
        let mut acc = vec![0.0; first.len()];
        for d in dists {
            for (a, p) in acc.iter_mut().zip(&d.0) {
                *a += p;
            }
        }
        let n = dists.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(Self(acc))
    }
}
