//! Exact model classes: stationary hidden Markov models and stationary renewal
//! processes, with their oracle next-symbol conditionals.

mod hmm;
mod renewal;
mod stationary;

pub use hmm::{HmmParams, ROW_TOLERANCE};
pub use renewal::RenewalLaw;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::dist::PredictiveDist;
use crate::error::Result;

/// Any model whose oracle predictor can be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hmm(HmmParams),
    Renewal(RenewalLaw),
}

impl Model {
    pub fn alphabet(&self) -> usize {
        match self {
            Model::Hmm(p) => p.l(),
            Model::Renewal(_) => 2,
        }
    }

    /// The HMM view; renewal laws use their countdown representation.
    pub fn as_hmm(&self) -> HmmParams {
        match self {
            Model::Hmm(p) => p.clone(),
            Model::Renewal(law) => law.to_hmm(),
        }
    }

    pub fn oracle(&self, x: &[usize]) -> Result<PredictiveDist> {
        match self {
            Model::Hmm(p) => p.oracle_predictive(x),
            Model::Renewal(law) => law.hazard_predictive(x),
        }
    }

    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        match self {
            Model::Hmm(p) => p.log_prob(x),
            Model::Renewal(law) => law.log_prob(x),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<usize> {
        match self {
            Model::Hmm(p) => p.sample_path(n, seed).0,
            Model::Renewal(law) => law.sample_path(n, seed),
        }
    }
}

/// A uniformly random point of the probability simplex.
pub fn random_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    draws.iter().map(|d| d / sum).collect()
}

/// HMM with uniformly random transition and emission rows.
pub fn random_hmm(k: usize, l: usize, seed: u64) -> HmmParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trans: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(&mut rng, k)).collect();
    let emit: Vec<Vec<f64>> = (0..k).map(|_| random_simplex(&mut rng, l)).collect();
    HmmParams::new(&trans, &emit).expect("simplex rows are stochastic")
}

/// Renewal law with a uniformly random interarrival law on `{1, ..., support}`.
pub fn random_renewal(support: usize, seed: u64) -> RenewalLaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RenewalLaw::new(&random_simplex(&mut rng, support)).expect("simplex is a law")
}
