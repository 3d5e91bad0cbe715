//! Maximum-likelihood over stationary renewal laws with support in `{1..S}`
//! and the normalized-maximum-likelihood (Shtarkov) assignment built on it.
//!
//! The likelihood of a binary path depends on the path only through the
//! position of the first renewal, the counts of completed gaps and the
//! length of the censored final stretch, so sups are cached on that key.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};
use crate::math::{log_sum_exp, LogSumExp};
use crate::models::random_simplex;

/// Default cap on the horizon of an exhaustive Shtarkov table.
pub const DEFAULT_NML_CAP: usize = 12;

const RESTARTS: usize = 10;
const MAX_ITERS: usize = 2000;
const TOL: f64 = 1e-10;

/// Sufficient statistic of a binary path for the stationary renewal
/// likelihood.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RenewalStat {
    /// No renewal among `m` steps.
    Empty { m: usize },
    /// First renewal at `first` (one-based), completed gap counts indexed by
    /// gap length minus one, and `censor` steps after the last renewal.
    Renewals {
        first: usize,
        gaps: Vec<usize>,
        censor: usize,
    },
}

impl RenewalStat {
    /// Returns `None` when no law supported on `{1..support}` can produce `y`.
    pub fn of(y: &[usize], support: usize) -> Option<Self> {
        let ones: Vec<usize> = y
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(i, _)| i + 1)
            .collect();
        let Some(&first) = ones.first() else {
            return (y.len() < support).then_some(RenewalStat::Empty { m: y.len() });
        };
        let mut gaps = vec![0; support];
        for w in ones.windows(2) {
            let g = w[1] - w[0];
            if g > support {
                return None;
            }
            gaps[g - 1] += 1;
        }
        let censor = y.len() - ones[ones.len() - 1];
        (first <= support && censor < support).then_some(RenewalStat::Renewals {
            first,
            gaps,
            censor,
        })
    }

    /// Log-likelihood of the statistic under `mu` (`mu[s - 1] = mu(s)`).
    pub fn log_likelihood(&self, mu: &[f64]) -> f64 {
        let mean: f64 = mu.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        match self {
            RenewalStat::Empty { m } => {
                let tail: f64 = mu
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (i + 1).saturating_sub(*m) as f64)
                    .sum();
                tail.ln() - mean.ln()
            }
            RenewalStat::Renewals {
                first,
                gaps,
                censor,
            } => {
                let head: f64 = mu[first - 1..].iter().sum();
                let tail: f64 = mu[*censor..].iter().sum();
                let mut ll = head.ln() - mean.ln() + tail.ln();
                for (g, &c) in gaps.iter().enumerate() {
                    if c > 0 {
                        ll += c as f64 * mu[g].ln();
                    }
                }
                ll
            }
        }
    }

    fn gradient(&self, mu: &[f64], out: &mut [f64]) {
        let mean: f64 = mu.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        for (i, o) in out.iter_mut().enumerate() {
            *o = -((i + 1) as f64) / mean;
        }
        match self {
            RenewalStat::Empty { m } => {
                let tail: f64 = mu
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (i + 1).saturating_sub(*m) as f64)
                    .sum();
                for (i, o) in out.iter_mut().enumerate() {
                    *o += (i + 1).saturating_sub(*m) as f64 / tail;
                }
            }
            RenewalStat::Renewals {
                first,
                gaps,
                censor,
            } => {
                let head: f64 = mu[first - 1..].iter().sum();
                let tail: f64 = mu[*censor..].iter().sum();
                for (i, o) in out.iter_mut().enumerate() {
                    if i + 1 >= *first {
                        *o += 1.0 / head;
                    }
                    if i >= *censor {
                        *o += 1.0 / tail;
                    }
                    if gaps[i] > 0 {
                        *o += gaps[i] as f64 / mu[i];
                    }
                }
            }
        }
    }
}

/// `sup_mu ln P_mu(stat)` over laws on `{1..support}` together with a
/// maximizer. Exponentiated-gradient ascent with backtracking from several
/// seeded starts, then pairwise mass-transfer refinement.
pub fn max_log_likelihood(stat: &RenewalStat, support: usize) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_5a1e);
    let mut best = (f64::NEG_INFINITY, vec![1.0 / support as f64; support]);
    let mut starts = vec![vec![1.0 / support as f64; support]];
    starts.extend((1..RESTARTS).map(|_| random_simplex(&mut rng, support)));
    for start in starts {
        let (ll, mu) = ascend(stat, start);
        if ll > best.0 {
            best = (ll, mu);
        }
    }
    let (ll, mu) = refine(stat, best.1);
    (ll.max(best.0), mu)
}

fn ascend(stat: &RenewalStat, mut mu: Vec<f64>) -> (f64, Vec<f64>) {
    let s = mu.len();
    let mut ll = stat.log_likelihood(&mu);
    if !ll.is_finite() {
        return (ll, mu);
    }
    let mut grad = vec![0.0; s];
    let mut step = 0.1;
    let mut trial = vec![0.0; s];
    for _ in 0..MAX_ITERS {
        stat.gradient(&mu, &mut grad);
        let mut improved = false;
        while step > 1e-14 {
            let gmax = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..s {
                trial[i] = mu[i] * (step * (grad[i] - gmax)).exp();
                z += trial[i];
            }
            trial.iter_mut().for_each(|v| *v /= z);
            let tl = stat.log_likelihood(&trial);
            if tl > ll {
                let gain = tl - ll;
                std::mem::swap(&mut mu, &mut trial);
                ll = tl;
                step *= 2.0;
                improved = gain > TOL;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (ll, mu)
}

fn refine(stat: &RenewalStat, mut mu: Vec<f64>) -> (f64, Vec<f64>) {
    let s = mu.len();
    // snap negligible coordinates to the boundary when that does not hurt
    let mut ll = stat.log_likelihood(&mu);
    for i in 0..s {
        if mu[i] > 0.0 && mu[i] < 1e-6 {
            let mut cand = mu.clone();
            cand[i] = 0.0;
            let z: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|v| *v /= z);
            let cl = stat.log_likelihood(&cand);
            if cl >= ll {
                mu = cand;
                ll = cl;
            }
        }
    }
    let mut delta: f64 = 1e-2;
    while delta >= 1e-9 {
        let mut moved = true;
        while moved {
            moved = false;
            for a in 0..s {
                for b in 0..s {
                    if a == b || mu[a] <= 0.0 {
                        continue;
                    }
                    let d = delta.min(mu[a]);
                    let mut cand = mu.clone();
                    cand[a] -= d;
                    cand[b] += d;
                    let cl = stat.log_likelihood(&cand);
                    if cl > ll + 1e-15 {
                        mu = cand;
                        ll = cl;
                        moved = true;
                    }
                }
            }
        }
        delta /= 10.0;
    }
    (ll, mu)
}

/// Memoizes sups per sufficient statistic.
#[derive(Debug, Default)]
pub struct SupCache {
    support: usize,
    values: HashMap<RenewalStat, f64>,
}

impl SupCache {
    pub fn new(support: usize) -> Self {
        Self {
            support,
            values: HashMap::new(),
        }
    }

    /// `ln sup_mu P_mu(y)`; `-inf` when no law in the class produces `y`.
    pub fn log_sup(&mut self, y: &[usize]) -> f64 {
        let Some(stat) = RenewalStat::of(y, self.support) else {
            return f64::NEG_INFINITY;
        };
        let support = self.support;
        *self
            .values
            .entry(stat)
            .or_insert_with_key(|st| max_log_likelihood(st, support).0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The Shtarkov assignment over `{0,1}^m` for renewal laws on `{1..S}`,
/// with all prefix marginals.
#[derive(Debug, Clone)]
pub struct ShtarkovTable {
    m: usize,
    support: usize,
    log_sum: f64,
    /// `by_len[t][index]`: `ln Q*` of a length-`t` prefix, first bit most
    /// significant.
    by_len: Vec<Vec<f64>>,
}

impl ShtarkovTable {
    pub fn new(m: usize, support: usize) -> Result<Self> {
        Self::with_cap(m, support, DEFAULT_NML_CAP + 1)
    }

    pub fn with_cap(m: usize, support: usize, cap: usize) -> Result<Self> {
        if m > cap {
            return Err(Error::CapExceeded {
                required: m as f64,
                cap: cap as f64,
            });
        }
        if support == 0 {
            return Err(Error::InvalidArgument(
                "support bound must be positive".into(),
            ));
        }
        let mut cache = SupCache::new(support);
        let mut y = vec![0usize; m];
        let mut top = Vec::with_capacity(1 << m);
        for code in 0..1usize << m {
            for (i, slot) in y.iter_mut().enumerate() {
                *slot = (code >> (m - 1 - i)) & 1;
            }
            top.push(cache.log_sup(&y));
        }
        let log_sum = log_sum_exp(&top);
        let mut by_len = vec![Vec::new(); m + 1];
        by_len[m] = top.iter().map(|v| v - log_sum).collect();
        for t in (0..m).rev() {
            let next = &by_len[t + 1];
            by_len[t] = (0..1usize << t)
                .map(|i| log_sum_exp(&[next[2 * i], next[2 * i + 1]]))
                .collect();
        }
        Ok(Self {
            m,
            support,
            log_sum,
            by_len,
        })
    }

    pub fn horizon(&self) -> usize {
        self.m
    }

    pub fn support(&self) -> usize {
        self.support
    }

    /// `ln sum_y sup_mu P_mu(y)`.
    pub fn log_shtarkov_sum(&self) -> f64 {
        self.log_sum
    }

    pub fn log_prob(&self, y: &[usize]) -> Result<f64> {
        check_symbols(y, 2)?;
        if y.len() > self.m {
            return Err(Error::InvalidArgument(format!(
                "prefix of length {} beyond horizon {}",
                y.len(),
                self.m
            )));
        }
        let idx = y.iter().fold(0usize, |acc, &b| acc * 2 + b);
        Ok(self.by_len[y.len()][idx])
    }

    /// `Q*(. | prefix)`; uniform when the prefix has no mass.
    pub fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
        if prefix.len() >= self.m {
            return Err(Error::InvalidArgument(format!(
                "conditional after {} symbols needs horizon above {}",
                prefix.len(),
                self.m
            )));
        }
        let mut y = prefix.to_vec();
        y.push(0);
        let zero = self.log_prob(&y)?;
        *y.last_mut().expect("nonempty") = 1;
        let one = self.log_prob(&y)?;
        Ok(PredictiveDist::from_log_weights(&[zero, one])
            .unwrap_or_else(|| PredictiveDist::uniform(2)))
    }
}

/// `ln sup_mu P_mu(y)` summed over all `y` of length `m`, by statistic.
pub fn renewal_log_shtarkov_sum(m: usize, support: usize) -> Result<f64> {
    let mut cache = SupCache::new(support);
    let mut acc = LogSumExp::default();
    let mut y = vec![0usize; m];
    for code in 0..1usize << m {
        for (i, slot) in y.iter_mut().enumerate() {
            *slot = (code >> (m - 1 - i)) & 1;
        }
        acc.push(cache.log_sup(&y));
    }
    Ok(acc.value())
}
