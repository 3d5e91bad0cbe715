use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hmm::{renormalized, HmmParams, ROW_TOLERANCE};
use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};

/// A finitely supported interarrival law `mu` over `{1, ..., S}` together with
/// the stationary law of the initial wait.
///
/// Index `t - 1` of the stored vectors holds the value at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalLaw {
    mu: Vec<f64>,
    mean: f64,
    stat_wait: Vec<f64>,
    /// `tail[t] = sum_{s > t} mu(s)` for `t = 0..=S`.
    tail: Vec<f64>,
}

impl RenewalLaw {
    /// `mu[i]` is the probability of an interarrival time of `i + 1`. Trailing
    /// zeros are trimmed so that the support bound is the largest atom.
    pub fn new(mu: &[f64]) -> Result<Self> {
        if mu
            .iter()
            .any(|p| !(p.is_finite() && (0.0..=1.0).contains(p)))
        {
            return Err(Error::NonStochastic {
                matrix: "interarrival",
                row: 0,
                sum: mu.iter().sum(),
            });
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::NonStochastic {
                matrix: "interarrival",
                row: 0,
                sum,
            });
        }
        let support = mu.iter().rposition(|&p| p > 0.0).map_or(0, |i| i + 1);
        let mu: Vec<f64> = mu[..support]
            .iter()
            .map(|p| renormalized(*p, sum))
            .collect();
        let mut tail = vec![0.0; support + 1];
        for t in (0..support).rev() {
            tail[t] = tail[t + 1] + mu[t];
        }
        let mean: f64 = mu.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        // P(T0 = t) = sum_{s >= t} mu(s) / mean = tail[t - 1] / mean
        let stat_wait: Vec<f64> = (0..support).map(|i| tail[i] / mean).collect();
        Ok(Self {
            mu,
            mean,
            stat_wait,
            tail,
        })
    }

    /// The largest interarrival time with positive mass.
    pub fn support(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn mu_vec(&self) -> &[f64] {
        &self.mu
    }

    pub fn stat_wait_vec(&self) -> &[f64] {
        &self.stat_wait
    }

    /// `mu(t)` for `t >= 1`.
    pub fn mu(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.mu.get(t - 1).copied().unwrap_or(0.0)
        }
    }

    /// `sum_{s > t} mu(s)`.
    pub fn tail(&self, t: usize) -> f64 {
        self.tail.get(t).copied().unwrap_or(0.0)
    }

    /// Stationary probability that the first renewal happens at time `t >= 1`.
    pub fn stat_wait(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.stat_wait.get(t - 1).copied().unwrap_or(0.0)
        }
    }

    /// `P(T0 > t) = sum_{s > t} stat_wait(s)`.
    pub fn wait_tail(&self, t: usize) -> f64 {
        self.stat_wait.iter().skip(t).sum()
    }

    /// Hazard-rate oracle for the next symbol of a stationary renewal path.
    ///
    /// With `tau` the time since the most recent renewal this is
    /// `mu(tau + 1) / sum_{t > tau} mu(t)`. Before any renewal has been seen the
    /// conditional is the hazard of the stationary initial wait.
    pub fn hazard_predictive(&self, x: &[usize]) -> Result<PredictiveDist> {
        check_symbols(x, 2)?;
        let n = x.len();
        let p_one = match x.iter().rposition(|&s| s == 1) {
            Some(last) => {
                let tau = n - 1 - last;
                let denom = self.tail(tau);
                if denom <= 0.0 {
                    return Err(Error::HazardUndefined { tau });
                }
                self.mu(tau + 1) / denom
            }
            None => {
                let denom = self.wait_tail(n);
                if denom <= 0.0 {
                    return Err(Error::HazardUndefined { tau: n });
                }
                self.stat_wait(n + 1) / denom
            }
        };
        Ok(PredictiveDist::bernoulli(p_one.clamp(0.0, 1.0)))
    }

    /// `ln P(x)` from the renewal structure: the initial wait, the completed
    /// interarrival gaps, and the censored final gap.
    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        check_symbols(x, 2)?;
        let n = x.len();
        let ones: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(t, _)| t + 1)
            .collect();
        let p = match (ones.first(), ones.last()) {
            (Some(&first), Some(&last)) => {
                let mut p = self.stat_wait(first) * self.tail(n - last);
                for w in ones.windows(2) {
                    p *= self.mu(w[1] - w[0]);
                }
                p
            }
            _ => self.wait_tail(n),
        };
        Ok(p.ln())
    }

    /// Binary renewal path of length `n`; deterministic in `seed`.
    pub fn sample_path(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wait = WeightedIndex::new(&self.stat_wait).expect("positive wait law");
        let gaps = WeightedIndex::new(&self.mu).expect("positive interarrival law");
        let mut x = vec![0; n];
        let mut t = wait.sample(&mut rng) + 1;
        while t <= n {
            x[t - 1] = 1;
            t += gaps.sample(&mut rng) + 1;
        }
        x
    }

    /// The countdown representation: hidden state `i` (one-based) counts the
    /// steps until the next renewal. State 1 emits symbol 1 and jumps to `j`
    /// with probability `mu(j)`; state `i > 1` moves to `i - 1` and emits 0.
    pub fn to_hmm(&self) -> HmmParams {
        let s = self.support();
        let mut trans = vec![vec![0.0; s]; s];
        trans[0].copy_from_slice(&self.mu);
        for (i, row) in trans.iter_mut().enumerate().skip(1) {
            row[i - 1] = 1.0;
        }
        let emit: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                if i == 0 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0]
                }
            })
            .collect();
        HmmParams::with_stationary(&trans, &emit, self.stat_wait.clone())
            .expect("countdown chain is stationary under the wait law")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wait_law_sums_to_one() {
        let law = RenewalLaw::new(&[0.2, 0.0, 0.5, 0.3, 0.0]).unwrap();
        assert_eq!(law.support(), 4);
        let total: f64 = law.stat_wait_vec().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((law.mean() - (0.2 + 1.5 + 1.2)).abs() < 1e-12);
        assert!((law.stat_wait(1) - 1.0 / law.mean()).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(RenewalLaw::new(&[0.5, 0.4]).is_err());
        assert!(RenewalLaw::new(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn period_two_hazards() {
        let law = RenewalLaw::new(&[0.0, 1.0]).unwrap();
        assert_eq!(law.hazard_predictive(&[0, 1]).unwrap().get(1), 0.0);
        assert_eq!(law.hazard_predictive(&[1, 0]).unwrap().get(1), 1.0);
        // no renewal yet: the first renewal is at 1 or 2 with equal odds
        assert_eq!(law.hazard_predictive(&[]).unwrap().get(1), 0.5);
        assert_eq!(law.hazard_predictive(&[0]).unwrap().get(1), 1.0);
    }

    #[test]
    fn undefined_hazard_is_signalled() {
        let law = RenewalLaw::new(&[0.0, 1.0]).unwrap();
        assert_eq!(
            law.hazard_predictive(&[1, 0, 0]),
            Err(Error::HazardUndefined { tau: 2 })
        );
        assert_eq!(
            law.hazard_predictive(&[0, 0]),
            Err(Error::HazardUndefined { tau: 2 })
        );
    }

    #[test]
    fn truncated_geometric_hazard_is_constant() {
        let q: f64 = 0.3;
        let s = 12;
        let mut mu: Vec<f64> = (1..=s).map(|t| q * (1.0 - q).powi(t as i32 - 1)).collect();
        let rest: f64 = 1.0 - mu.iter().sum::<f64>();
        mu[s - 1] += rest;
        let law = RenewalLaw::new(&mu).unwrap();
        for tau in 0..s - 1 {
            let mut x = vec![0; tau];
            x.insert(0, 1);
            let h = law.hazard_predictive(&x).unwrap().get(1);
            assert!((h - q).abs() < 1e-12, "tau {tau}: {h}");
        }
    }

    #[test]
    fn sampling_degenerate_laws() {
        let every = RenewalLaw::new(&[1.0]).unwrap();
        assert!(every.sample_path(40, 1).iter().all(|&s| s == 1));
        let two = RenewalLaw::new(&[0.0, 1.0]).unwrap();
        let mut first_at_one = 0;
        for seed in 0..400 {
            let x = two.sample_path(9, seed);
            for w in x.windows(2) {
                assert_ne!(w[0], w[1]);
            }
            first_at_one += x[0];
        }
        assert!((150..250).contains(&first_at_one));
    }

    #[test]
    fn renewal_rate_matches_inverse_mean() {
        let law = RenewalLaw::new(&[1.0 / 3.0; 3]).unwrap();
        let x = law.sample_path(1_000_000, 99);
        let rate = x.iter().sum::<usize>() as f64 / x.len() as f64;
        assert!((rate - 0.5).abs() < 0.01);
    }

    #[test]
    fn countdown_hmm_shapes() {
        let one = RenewalLaw::new(&[1.0]).unwrap().to_hmm();
        assert_eq!(one.k(), 1);
        assert_eq!(one.emit_row(0), &[0.0, 1.0]);
        let two = RenewalLaw::new(&[0.0, 1.0]).unwrap().to_hmm();
        assert_eq!(two.trans_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let half = RenewalLaw::new(&[0.5, 0.5]).unwrap();
        let p = half.to_hmm().oracle_predictive(&[1, 0]).unwrap();
        assert!((p.get(1) - 1.0).abs() < 1e-12);
        assert_eq!(half.hazard_predictive(&[1, 0]).unwrap().get(1), 1.0);
    }
}
