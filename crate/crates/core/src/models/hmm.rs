use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::stationary::stationary_law;
use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};

/// Row-sum tolerance accepted by [`HmmParams::new`]; rows are renormalized
/// exactly afterwards.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Parameters of a stationary hidden Markov model with `k` hidden states and
/// `l` observation symbols. Symbols and states are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    k: usize,
    l: usize,
    trans: Vec<f64>,
    emit: Vec<f64>,
    stat: Vec<f64>,
    non_unique_stationary: bool,
}

fn flatten_stochastic(rows: &[Vec<f64>], cols: usize, matrix: &'static str) -> Result<Vec<f64>> {
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape(format!(
                "{matrix} row {r} has {} entries, expected {cols}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        let in_range = row.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        if !in_range || (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::NonStochastic {
                matrix,
                row: r,
                sum,
            });
        }
        flat.extend(row.iter().map(|p| renormalized(*p, sum)));
    }
    Ok(flat)
}

/// Divides by the row sum unless the sum is one up to rounding, so that
/// rebuilding from stored rows reproduces them bit for bit.
pub(crate) fn renormalized(p: f64, sum: f64) -> f64 {
    if (sum - 1.0).abs() <= 1e-12 {
        p
    } else {
        p / sum
    }
}

impl HmmParams {
    /// Validates the matrices and computes the stationary state law.
    ///
    /// If the hidden chain has several closed classes the returned law is the
    /// uniform-restart limit and [`HmmParams::non_unique_stationary`] is set.
    pub fn new(trans: &[Vec<f64>], emit: &[Vec<f64>]) -> Result<Self> {
        let k = trans.len();
        if k == 0 {
            return Err(Error::Shape("transition matrix has no rows".into()));
        }
        if emit.len() != k {
            return Err(Error::Shape(format!(
                "emission matrix has {} rows, expected {k}",
                emit.len()
            )));
        }
        let l = emit[0].len();
        if l == 0 {
            return Err(Error::Shape("emission matrix has no columns".into()));
        }
        let trans = flatten_stochastic(trans, k, "transition")?;
        let emit = flatten_stochastic(emit, l, "emission")?;
        let stationary = stationary_law(&trans, k);
        Ok(Self {
            k,
            l,
            trans,
            emit,
            stat: stationary.law,
            non_unique_stationary: stationary.non_unique,
        })
    }

    /// Builds parameters with a known stationary law, checked against the
    /// transition matrix.
    pub(crate) fn with_stationary(
        trans: &[Vec<f64>],
        emit: &[Vec<f64>],
        stat: Vec<f64>,
    ) -> Result<Self> {
        let k = trans.len();
        let l = emit.first().map_or(0, Vec::len);
        let trans = flatten_stochastic(trans, k, "transition")?;
        let emit = flatten_stochastic(emit, l, "emission")?;
        if stat.len() != k {
            return Err(Error::Shape("stationary vector length".into()));
        }
        for j in 0..k {
            let v: f64 = (0..k).map(|i| stat[i] * trans[i * k + j]).sum();
            if (v - stat[j]).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "supplied law is not stationary at state {j}"
                )));
            }
        }
        Ok(Self {
            k,
            l,
            trans,
            emit,
            stat,
            non_unique_stationary: false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.trans[from * self.k + to]
    }

    pub fn emit(&self, state: usize, symbol: usize) -> f64 {
        self.emit[state * self.l + symbol]
    }

    pub fn trans_row(&self, from: usize) -> &[f64] {
        &self.trans[from * self.k..(from + 1) * self.k]
    }

    pub fn emit_row(&self, state: usize) -> &[f64] {
        &self.emit[state * self.l..(state + 1) * self.l]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stat
    }

    pub fn non_unique_stationary(&self) -> bool {
        self.non_unique_stationary
    }

    pub fn trans_rows(&self) -> Vec<Vec<f64>> {
        self.trans.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn emit_rows(&self) -> Vec<Vec<f64>> {
        self.emit.chunks(self.l).map(<[f64]>::to_vec).collect()
    }

    /// Propagates a state law one step through the transition matrix.
    pub(crate) fn advance(&self, belief: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.k];
        for (i, &b) in belief.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (n, &t) in next.iter_mut().zip(self.trans_row(i)) {
                *n += b * t;
            }
        }
        next
    }

    /// Law of the next observation given a law of the current hidden state.
    pub(crate) fn emission_mix(&self, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.l];
        for (z, &b) in belief.iter().enumerate() {
            for (o, &e) in out.iter_mut().zip(self.emit_row(z)) {
                *o += b * e;
            }
        }
        out
    }

    /// Normalized forward recursion. Returns the filtered law of the hidden
    /// state at the last position and `ln P(x)`, or `None` if `P(x) = 0`.
    fn filter(&self, x: &[usize]) -> Option<(Vec<f64>, f64)> {
        let mut belief = self.stat.clone();
        let mut loglik = 0.0;
        for (t, &sym) in x.iter().enumerate() {
            if t > 0 {
                belief = self.advance(&belief);
            }
            let mut norm = 0.0;
            for (z, b) in belief.iter_mut().enumerate() {
                *b *= self.emit(z, sym);
                norm += *b;
            }
            if norm <= 0.0 {
                return None;
            }
            belief.iter_mut().for_each(|b| *b /= norm);
            loglik += norm.ln();
        }
        Some((belief, loglik))
    }

    /// `ln P(x)`; `-inf` for sequences of probability zero.
    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        check_symbols(x, self.l)?;
        Ok(self.filter(x).map_or(f64::NEG_INFINITY, |(_, ll)| ll))
    }

    /// The conditional law of the next observation given `x` under the true
    /// model. For the empty sequence this is the one-step marginal.
    pub fn oracle_predictive(&self, x: &[usize]) -> Result<PredictiveDist> {
        check_symbols(x, self.l)?;
        let belief = if x.is_empty() {
            self.stat.clone()
        } else {
            let (filtered, _) = self.filter(x).ok_or(Error::ImpossibleSequence)?;
            self.advance(&filtered)
        };
        PredictiveDist::from_weights(self.emission_mix(&belief)).ok_or(Error::ImpossibleSequence)
    }

    /// Draws `(observations, states)` of length `n`; deterministic in `seed`.
    pub fn sample_path(&self, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = WeightedIndex::new(&self.stat).expect("stationary law has positive mass");
        let trans: Vec<_> = (0..self.k)
            .map(|i| WeightedIndex::new(self.trans_row(i)).expect("stochastic row"))
            .collect();
        let emit: Vec<_> = (0..self.k)
            .map(|i| WeightedIndex::new(self.emit_row(i)).expect("stochastic row"))
            .collect();
        let mut xs = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        let mut z = initial.sample(&mut rng);
        for t in 0..n {
            if t > 0 {
                z = trans[z].sample(&mut rng);
            }
            zs.push(z);
            xs.push(emit[z].sample(&mut rng));
        }
        (xs, zs)
    }

    /// `ln P(x, z)` under the stationary chain.
    pub fn joint_log_prob(&self, x: &[usize], z: &[usize]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: z.len(),
            });
        }
        check_symbols(x, self.l)?;
        check_symbols(z, self.k)?;
        let Some(&z1) = z.first() else {
            return Ok(0.0);
        };
        let mut lp = self.stat[z1].ln();
        for w in z.windows(2) {
            lp += self.trans(w[0], w[1]).ln();
        }
        for (&xt, &zt) in x.iter().zip(z) {
            lp += self.emit(zt, xt).ln();
        }
        Ok(lp)
    }
}
