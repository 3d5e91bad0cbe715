//! Exact small-instance information theory for stationary HMMs: full
//! probability tables, entropies, KL divergences, conditional mutual
//! informations, redundancy and prediction risk. All values are in nats.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignments::{joint_addone_logprob, Assignment};
use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};
use crate::math::LogSumExp;
use crate::models::HmmParams;
use crate::nml::renewal_log_shtarkov_sum;
use crate::predictor::Predictor;
use crate::seeding::derive_seed;

/// Default cap on `l^m * k` table entries.
pub const DEFAULT_LAW_CAP: f64 = 1e7;

/// Cap on sequences enumerated by a Shtarkov sum.
pub const SHTARKOV_CAP: f64 = 1e6;

/// Default Monte Carlo trial count.
pub const DEFAULT_TRIALS: usize = 100_000;

/// Probability table of `X^m`, optionally jointly with `Z_1`.
///
/// Sequences are indexed in base `l` with `x_1` most significant; with `Z_1`
/// the state is one more, most significant, digit.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    l: usize,
    m: usize,
    states: Option<usize>,
    log_table: Vec<f64>,
}

fn pow_checked(l: usize, m: usize, k: usize, cap: f64) -> Result<usize> {
    let required = (l as f64).powi(m as i32) * k as f64;
    if required > cap {
        return Err(Error::CapExceeded { required, cap });
    }
    Ok(l.pow(m as u32))
}

impl ExactLaw {
    pub fn new(params: &HmmParams, m: usize, with_z1: bool) -> Result<Self> {
        Self::with_cap(params, m, with_z1, DEFAULT_LAW_CAP)
    }

    /// Tabulates by a depth-first walk carrying unnormalized forward vectors.
    pub fn with_cap(params: &HmmParams, m: usize, with_z1: bool, cap: f64) -> Result<Self> {
        let (k, l) = (params.k(), params.l());
        let size = pow_checked(l, m, k, cap)?;
        let mut log_table = Vec::with_capacity(if with_z1 { size * k } else { size });
        let mut alpha_stack = vec![vec![0.0; k]; m + 1];
        let starts: Vec<Vec<f64>> = if with_z1 {
            (0..k)
                .map(|z| {
                    let mut v = vec![0.0; k];
                    v[z] = params.stationary()[z];
                    v
                })
                .collect()
        } else {
            vec![params.stationary().to_vec()]
        };
        for start in starts {
            // alpha_stack[t] holds P(x_1..t, Z_{t+1} = .) for the current prefix
            alpha_stack[0] = start;
            walk(params, &mut alpha_stack, 0, m, &mut log_table);
        }
        Ok(Self {
            l,
            m,
            states: with_z1.then_some(k),
            log_table,
        })
    }

    fn from_parts(l: usize, m: usize, states: Option<usize>, log_table: Vec<f64>) -> Self {
        Self {
            l,
            m,
            states,
            log_table,
        }
    }

    pub fn horizon(&self) -> usize {
        self.m
    }

    pub fn alphabet(&self) -> usize {
        self.l
    }

    pub fn has_z1(&self) -> bool {
        self.states.is_some()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_table
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_table.iter().map(|v| v.exp()).collect()
    }

    /// `ln P(x)` (only without `Z_1`).
    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        check_symbols(x, self.l)?;
        if x.len() != self.m || self.states.is_some() {
            return Err(Error::Shape(
                "lookup needs a full-length sequence and no state digit".into(),
            ));
        }
        Ok(self.log_table[x.iter().fold(0, |a, &s| a * self.l + s)])
    }

    /// Law of `X^m` alone.
    pub fn without_z1(&self) -> ExactLaw {
        match self.states {
            None => self.clone(),
            Some(k) => {
                let size = self.log_table.len() / k;
                let table = (0..size)
                    .map(|i| {
                        let mut acc = LogSumExp::default();
                        for z in 0..k {
                            acc.push(self.log_table[z * size + i]);
                        }
                        acc.value()
                    })
                    .collect();
                ExactLaw::from_parts(self.l, self.m, None, table)
            }
        }
    }

    /// Law of the window `X_{start+1..start+len}` (zero-based `start`),
    /// keeping `Z_1` when present.
    pub fn window(&self, start: usize, len: usize) -> Result<ExactLaw> {
        if start + len > self.m {
            return Err(Error::Shape(format!(
                "window {start}+{len} beyond horizon {}",
                self.m
            )));
        }
        let block = self.l.pow(self.m as u32);
        let tail = self.l.pow((self.m - start - len) as u32);
        let width = self.l.pow(len as u32);
        let groups = self.states.unwrap_or(1);
        let mut acc = vec![LogSumExp::default(); groups * width];
        for g in 0..groups {
            for i in 0..block {
                let w = (i / tail) % width;
                acc[g * width + w].push(self.log_table[g * block + i]);
            }
        }
        Ok(ExactLaw::from_parts(
            self.l,
            len,
            self.states,
            acc.into_iter().map(|a| a.value()).collect(),
        ))
    }

    /// Shannon entropy of the whole table.
    pub fn entropy(&self) -> f64 {
        entropy_of_logs(&self.log_table)
    }

    /// Law of `Z_1` alone.
    pub fn state_law(&self) -> Option<Vec<f64>> {
        let k = self.states?;
        let size = self.log_table.len() / k;
        Some(
            (0..k)
                .map(|z| {
                    self.log_table[z * size..(z + 1) * size]
                        .iter()
                        .map(|v| v.exp())
                        .sum()
                })
                .collect(),
        )
    }
}

fn walk(params: &HmmParams, alpha: &mut [Vec<f64>], depth: usize, m: usize, out: &mut Vec<f64>) {
    if depth == m {
        let total: f64 = alpha[depth].iter().sum();
        out.push(if total > 0.0 {
            total.ln()
        } else {
            f64::NEG_INFINITY
        });
        return;
    }
    let k = params.k();
    for x in 0..params.l() {
        let mut next = vec![0.0; k];
        for (z, &az) in alpha[depth].iter().enumerate() {
            let a = az * params.emit(z, x);
            if a == 0.0 {
                continue;
            }
            for (z2, slot) in next.iter_mut().enumerate() {
                *slot += a * params.trans(z, z2);
            }
        }
        alpha[depth + 1] = next;
        walk(params, alpha, depth + 1, m, out);
    }
}

fn entropy_of_logs(logs: &[f64]) -> f64 {
    logs.iter()
        .filter(|v| v.is_finite())
        .map(|&v| -v.exp() * v)
        .sum()
}

/// `sum p ln(p/q)` over a common index set, with `0 ln(0/q) = 0`; a positive
/// `p` against a zero `q` is a [`Error::SupportViolation`].
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::SupportViolation);
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// KL divergence between two log-domain tables.
pub fn kl_divergence_logs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a.is_finite() {
            if b == f64::NEG_INFINITY {
                return Err(Error::SupportViolation);
            }
            kl += a.exp() * (a - b);
        }
    }
    Ok(kl.max(0.0))
}

/// Shannon entropy of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Per-lag terms `I(X_{n+1}; X^{n-t} | X_{n-t+1..n})` for `t = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryTerm {
    pub per_lag: Vec<f64>,
    pub sum: f64,
}

/// The memory term of horizon `n`, from four window entropies per lag.
pub fn memory_term(params: &HmmParams, n: usize) -> Result<MemoryTerm> {
    memory_term_of(&ExactLaw::new(params, n + 1, false)?)
}

/// Memory term from a law of `X^{n+1}`.
pub fn memory_term_of(law: &ExactLaw) -> Result<MemoryTerm> {
    let law = law.without_z1();
    let n = law.horizon().saturating_sub(1);
    let h_all = law.entropy();
    let h_past = law.window(0, n)?.entropy();
    let per_lag = (1..=n)
        .map(|t| {
            if t == n {
                return Ok(0.0);
            }
            // I(A; B | C) = H(A, C) + H(B, C) - H(A, B, C) - H(C)
            let h_ac = law.window(n - t, t + 1)?.entropy();
            let h_c = law.window(n - t, t)?.entropy();
            Ok((h_ac + h_past - h_all - h_c).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let sum = per_lag.iter().sum();
    Ok(MemoryTerm { per_lag, sum })
}

/// `I(Z_1; X^m)`.
pub fn latent_info(params: &HmmParams, m: usize) -> Result<f64> {
    latent_info_of(&ExactLaw::new(params, m, true)?)
}

/// `I(Z_1; X^m)` from a joint table.
pub fn latent_info_of(joint: &ExactLaw) -> Result<f64> {
    let z = joint
        .state_law()
        .ok_or_else(|| Error::Shape("latent information needs the joint law with Z1".into()))?;
    let i = entropy(&z) + joint.without_z1().entropy() - joint.entropy();
    Ok(i.max(0.0))
}

/// `I(Z_1; X_{t+1} | X^t)` for `t = 0..m-1`, each from four entropies of
/// prefix windows of the joint table.
pub fn latent_increments(joint: &ExactLaw) -> Result<Vec<f64>> {
    let hz = entropy(
        &joint
            .state_law()
            .ok_or_else(|| Error::Shape("increments need the joint law with Z1".into()))?,
    );
    let plain = joint.without_z1();
    let m = joint.horizon();
    let mut h_zx = vec![hz];
    let mut h_x = vec![0.0];
    for t in 1..=m {
        h_zx.push(joint.window(0, t)?.entropy());
        h_x.push(plain.window(0, t)?.entropy());
    }
    Ok((0..m)
        .map(|t| h_zx[t] + h_x[t + 1] - h_zx[t + 1] - h_x[t])
        .collect())
}

/// Left and right sides of `I(Z_1; X_{n+1} | X^n) <= I(Z_1; X^{n+1}) / n`.
pub fn decay_terms(params: &HmmParams, n: usize) -> Result<(f64, f64)> {
    let joint = ExactLaw::new(params, n + 1, true)?;
    let inc = latent_increments(&joint)?;
    Ok((inc[n], latent_info_of(&joint)? / n as f64))
}

/// Expected redundancy with an optional confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            ci_low: value,
            ci_high: value,
            trials: 0,
        }
    }

    /// Mean with a normal 95% interval using the plug-in variance.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let half = 1.959_963_984_540_054 * (var / n).sqrt();
        Self {
            value: mean,
            ci_low: mean - half,
            ci_high: mean + half,
            trials: samples.len(),
        }
    }
}

/// Evaluation mode for expectations over paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
}

/// `KL(P_{X^m} || Q_{X^m})`, exactly or as a Monte Carlo mean of
/// `ln P(X^m) - ln Q(X^m)`.
pub fn expected_redundancy<A: Assignment + ?Sized>(
    params: &HmmParams,
    q: &A,
    m: usize,
    mode: Mode,
) -> Result<Estimate> {
    if q.alphabet() != params.l() {
        return Err(Error::Shape("assignment and model alphabets differ".into()));
    }
    match mode {
        Mode::Exact => {
            let law = ExactLaw::new(params, m, false)?;
            let qs = all_sequences(params.l(), m)
                .map(|x| q.joint_log_prob(&x))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Estimate::exact(kl_divergence_logs(law.log_probs(), &qs)?))
        }
        Mode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::InvalidArgument("trials must be positive".into()));
            }
            let samples = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let (x, _) = params.sample_path(m, derive_seed(seed, &[i as u64]));
                    let lq = q.joint_log_prob(&x)?;
                    if lq == f64::NEG_INFINITY {
                        return Err(Error::SupportViolation);
                    }
                    Ok(params.log_prob(&x)? - lq)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Estimate::from_samples(&samples))
        }
    }
}

/// All sequences of length `m` over `[l]` in index order.
pub fn all_sequences(l: usize, m: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = l.pow(m as u32);
    (0..total).map(move |mut code| {
        let mut x = vec![0; m];
        for slot in x.iter_mut().rev() {
            *slot = code % l;
            code /= l;
        }
        x
    })
}

/// `ln[pi(z_1) prod M(z_{t+1}|z_t) prod T(x_t|z_t)] - ln Q_joint(x, z)`.
pub fn pointwise_joint_redundancy(params: &HmmParams, x: &[usize], z: &[usize]) -> Result<f64> {
    let lp = params.joint_log_prob(x, z)?;
    let lq = joint_addone_logprob(x, z, params.k(), params.l())?;
    Ok(lp - lq)
}

/// `E_P KL(P_{X_{n+1}|X^n} || predictor(X^n))` by enumeration of `X^n`.
pub fn exact_prediction_risk(
    params: &HmmParams,
    predictor: &dyn Predictor,
    n: usize,
) -> Result<f64> {
    Ok(exact_risk_terms(params, predictor, n)?.0)
}

/// Risk together with the per-sequence `(P(x), KL)` pairs.
fn exact_risk_terms(
    params: &HmmParams,
    predictor: &dyn Predictor,
    n: usize,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let l = params.l();
    if predictor.alphabet() != l {
        return Err(Error::Shape("predictor and model alphabets differ".into()));
    }
    let next = ExactLaw::new(params, n + 1, false)?;
    let probs = next.log_probs();
    let mut risk = 0.0;
    let mut terms = Vec::new();
    for (i, x) in all_sequences(l, n).enumerate() {
        let row = &probs[i * l..(i + 1) * l];
        let mut acc = LogSumExp::default();
        row.iter().for_each(|&v| acc.push(v));
        let lpx = acc.value();
        if lpx == f64::NEG_INFINITY {
            continue;
        }
        let oracle: Vec<f64> = row.iter().map(|v| (v - lpx).exp()).collect();
        let pred = predictor.predict(&x)?;
        let kl = kl_divergence(&oracle, pred.probs())?;
        risk += lpx.exp() * kl;
        terms.push((lpx.exp(), kl));
    }
    Ok((risk, terms))
}

/// Model class for a Shtarkov sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum ShtarkovClass {
    Iid {
        l: usize,
    },
    /// First-order Markov chains with a free initial law: the first symbol is
    /// assigned probability one.
    Markov1 {
        l: usize,
    },
    Renewal {
        support: usize,
    },
}

/// `ln sum_{x^m} sup_P P(x^m)`.
pub fn shtarkov_sum(class: ShtarkovClass, m: usize) -> Result<f64> {
    let l = match class {
        ShtarkovClass::Iid { l } | ShtarkovClass::Markov1 { l } => l,
        ShtarkovClass::Renewal { .. } => 2,
    };
    let required = (l as f64).powi(m as i32);
    if required > SHTARKOV_CAP {
        return Err(Error::CapExceeded {
            required,
            cap: SHTARKOV_CAP,
        });
    }
    if l == 0 {
        return Err(Error::InvalidArgument("alphabet must be nonempty".into()));
    }
    let xlnx = |c: usize, total: usize| {
        if c == 0 {
            0.0
        } else {
            c as f64 * (c as f64 / total as f64).ln()
        }
    };
    match class {
        ShtarkovClass::Iid { l } => {
            let mut acc = LogSumExp::default();
            for x in all_sequences(l, m) {
                let mut counts = vec![0; l];
                x.iter().for_each(|&s| counts[s] += 1);
                acc.push(counts.iter().map(|&c| xlnx(c, m)).sum());
            }
            Ok(acc.value())
        }
        ShtarkovClass::Markov1 { l } => {
            let mut acc = LogSumExp::default();
            for x in all_sequences(l, m) {
                let mut counts = vec![0; l * l];
                for w in x.windows(2) {
                    counts[w[0] * l + w[1]] += 1;
                }
                let mut ll = 0.0;
                for row in counts.chunks(l) {
                    let total: usize = row.iter().sum();
                    ll += row.iter().map(|&c| xlnx(c, total)).sum::<f64>();
                }
                acc.push(ll);
            }
            Ok(acc.value())
        }
        ShtarkovClass::Renewal { support } => renewal_log_shtarkov_sum(m, support),
    }
}

/// Terms of the risk/redundancy chain at horizon `n` for an assignment `Q`:
/// `n * Risk(avg Q) = [KL_{n+1} - KL_1] + memory - n * gap`, where `gap >= 0`
/// is the convexity gap of averaging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskChain {
    /// `n * Risk` of the averaged predictor.
    pub n_risk: f64,
    /// `KL(P_{X^{n+1}} || Q_{X^{n+1}})`.
    pub kl_full: f64,
    /// `KL(P_{X_1} || Q_{X_1})`.
    pub kl_first: f64,
    /// Sum of the memory terms.
    pub memory: f64,
    /// `(1/n) sum_t E KL(P_{X_{n+1}|X^n} || Q(. | last t)) - Risk`, computed
    /// directly.
    pub convexity_gap: f64,
    /// Left minus right side of the identity; zero up to rounding.
    pub residual: f64,
}

impl RiskChain {
    /// Slack of the bound `n Risk <= KL_{n+1} + memory` (nonnegative when it holds).
    pub fn bound_slack(&self) -> f64 {
        self.kl_full + self.memory - self.n_risk
    }
}

/// Evaluates every term of the chain exactly.
pub fn risk_chain<A: Assignment + ?Sized>(
    params: &HmmParams,
    q: &A,
    n: usize,
) -> Result<RiskChain> {
    let l = params.l();
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let law = ExactLaw::new(params, n + 1, false)?;
    let probs = law.log_probs();
    let mut risk = 0.0;
    let mut mean_terms = 0.0;
    for (i, x) in all_sequences(l, n).enumerate() {
        let row = &probs[i * l..(i + 1) * l];
        let mut acc = LogSumExp::default();
        row.iter().for_each(|&v| acc.push(v));
        let lpx = acc.value();
        if lpx == f64::NEG_INFINITY {
            continue;
        }
        let oracle: Vec<f64> = row.iter().map(|v| (v - lpx).exp()).collect();
        let conds = q.suffix_conditionals(&x)?;
        let avg = PredictiveDist::average(&conds).expect("n >= 1");
        let px = lpx.exp();
        risk += px * kl_divergence(&oracle, avg.probs())?;
        for c in &conds {
            mean_terms += px * kl_divergence(&oracle, c.probs())? / n as f64;
        }
    }
    let qs = all_sequences(l, n + 1)
        .map(|x| q.joint_log_prob(&x))
        .collect::<Result<Vec<f64>>>()?;
    let kl_full = kl_divergence_logs(probs, &qs)?;
    let first = law.window(0, 1)?;
    let q1 = q.conditional(&[])?;
    let kl_first = kl_divergence(&first.probs(), q1.probs())?;
    let memory = memory_term_of(&law)?.sum;
    let n_f = n as f64;
    let convexity_gap = mean_terms - risk;
    let residual = n_f * risk - (kl_full - kl_first + memory - n_f * convexity_gap);
    Ok(RiskChain {
        n_risk: n_f * risk,
        kl_full,
        kl_first,
        memory,
        convexity_gap,
        residual,
    })
}

/// A uniformly random state path, for worst-case pointwise checks.
pub fn random_path(k: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignments::{addone_iid_conditional, MarkovAssignment};
    use crate::marginal::MarginalAssignment;
    use crate::models::random_hmm;
    use crate::predictor::{OptimalHmmPredictor, OraclePredictor};
    use crate::Model;

    fn cycle(k: usize) -> HmmParams {
        let trans: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| if j == (i + 1) % k { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let emit: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        HmmParams::new(&trans, &emit).unwrap()
    }

    #[test]
    fn exact_law_matches_forward_algorithm() {
        let p = random_hmm(2, 2, 9);
        let law = ExactLaw::new(&p, 5, false).unwrap();
        for x in all_sequences(2, 5) {
            assert!((law.log_prob(&x).unwrap() - p.log_prob(&x).unwrap()).abs() < 1e-12);
        }
        let joint = ExactLaw::new(&p, 5, true).unwrap();
        for (a, b) in joint.without_z1().log_probs().iter().zip(law.log_probs()) {
            assert!((a - b).abs() < 1e-10);
        }
        let z = joint.state_law().unwrap();
        assert!((z[0] - p.stationary()[0]).abs() < 1e-12);
    }

    #[test]
    fn one_step_law_is_emission_mix() {
        let p = random_hmm(3, 2, 4);
        let law = ExactLaw::new(&p, 1, false).unwrap().probs();
        for (j, &pj) in law.iter().enumerate() {
            let mix: f64 = (0..3).map(|z| p.stationary()[z] * p.emit(z, j)).sum();
            assert!((pj - mix).abs() < 1e-12);
        }
    }

    #[test]
    fn law_is_shift_invariant() {
        let p = random_hmm(3, 2, 17);
        let law = ExactLaw::new(&p, 6, false).unwrap();
        let head = law.window(0, 5).unwrap().probs();
        let tail = law.window(1, 5).unwrap().probs();
        for (a, b) in head.iter().zip(&tail) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let p = random_hmm(2, 2, 1);
        assert!(matches!(
            ExactLaw::with_cap(&p, 10, true, 1000.0),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.1438).abs() < 1e-4);
        let rev = kl_divergence(&[0.25, 0.75], &[0.5, 0.5]).unwrap();
        assert!((kl - rev).abs() > 1e-3);
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::SupportViolation)
        );
        assert_eq!(
            kl_divergence(&[0.0, 1.0], &[1.0, 0.0]),
            Err(Error::SupportViolation)
        );
        assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn iid_models_have_no_memory() {
        let p = HmmParams::new(&[vec![1.0]], &[vec![0.3, 0.7]]).unwrap();
        let mem = memory_term(&p, 5).unwrap();
        assert!(mem.per_lag.iter().all(|v| v.abs() < 1e-12));
        let same = HmmParams::new(
            &[vec![0.9, 0.1], vec![0.4, 0.6]],
            &[vec![0.2, 0.8], vec![0.2, 0.8]],
        )
        .unwrap();
        assert!(memory_term(&same, 5).unwrap().sum < 1e-12);
        assert!(latent_info(&same, 4).unwrap() < 1e-12);
    }

    #[test]
    fn memory_bounded_by_latent_information() {
        for seed in 0..10 {
            let p = random_hmm(2, 2, seed);
            let mem = memory_term(&p, 6).unwrap();
            let li = latent_info(&p, 7).unwrap();
            assert!(mem.sum <= li + 1e-9);
            assert!(li <= 2f64.ln() + 1e-9);
        }
    }

    #[test]
    fn cycle_reveals_its_state() {
        let li = latent_info(&cycle(3), 2).unwrap();
        assert!((li - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn latent_chain_rule() {
        let p = random_hmm(3, 2, 5);
        let joint = ExactLaw::new(&p, 6, true).unwrap();
        let inc = latent_increments(&joint).unwrap();
        let total = latent_info_of(&joint).unwrap();
        let first = latent_info_of(&joint.window(0, 1).unwrap()).unwrap();
        let sum: f64 = inc[1..].iter().sum();
        assert!((sum - (total - first)).abs() < 1e-9);
        let (lhs, rhs) = decay_terms(&p, 5).unwrap();
        assert!(lhs <= rhs + 1e-9);
    }

    struct Iid(usize);

    impl Assignment for Iid {
        fn alphabet(&self) -> usize {
            self.0
        }
        fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
            let mut counts = vec![0; self.0];
            prefix.iter().for_each(|&s| counts[s] += 1);
            Ok(addone_iid_conditional(&counts))
        }
    }

    #[test]
    fn redundancy_hand_sum() {
        // fair coin against add-one over two symbols: Q(00) = Q(11) = 1/3,
        // Q(01) = Q(10) = 1/6
        let p = HmmParams::new(&[vec![1.0]], &[vec![0.5, 0.5]]).unwrap();
        let r = expected_redundancy(&p, &Iid(2), 2, Mode::Exact).unwrap();
        let hand = 0.5 * (0.25f64 / (1.0 / 3.0)).ln() + 0.5 * (0.25f64 / (1.0 / 6.0)).ln();
        assert!((r.value - hand).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_redundancy_covers_exact() {
        let p = random_hmm(2, 2, 3);
        let q = MarkovAssignment::new(1, 2).unwrap();
        let exact = expected_redundancy(&p, &q, 6, Mode::Exact).unwrap().value;
        let mc = expected_redundancy(
            &p,
            &q,
            6,
            Mode::MonteCarlo {
                trials: 20_000,
                seed: 1,
            },
        )
        .unwrap();
        assert!(mc.ci_low - 1e-3 <= exact && exact <= mc.ci_high + 1e-3);
    }

    #[test]
    fn redundancy_against_itself_vanishes() {
        struct Exact(HmmParams);
        impl Assignment for Exact {
            fn alphabet(&self) -> usize {
                self.0.l()
            }
            fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
                self.0.oracle_predictive(prefix)
            }
        }
        let p = random_hmm(2, 3, 2);
        let r = expected_redundancy(&p, &Exact(p.clone()), 4, Mode::Exact).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn pointwise_redundancy_routes_agree() {
        let p = cycle(2);
        let x: Vec<usize> = (0..32).map(|t| t % 2).collect();
        let r = pointwise_joint_redundancy(&p, &x, &x).unwrap();
        let stats = crate::assignments::CountStats::from_paths(&x, &x, 2, 2).unwrap();
        let f = crate::assignments::f_of_counts(&stats).unwrap();
        assert!((r - (0.5f64.ln() - f)).abs() < 1e-10);
        let single = HmmParams::new(&[vec![1.0]], &[vec![1.0]]).unwrap();
        assert_eq!(
            pointwise_joint_redundancy(&single, &[0; 5], &[0; 5]).unwrap(),
            0.0
        );
    }

    #[test]
    fn oracle_has_zero_risk() {
        let p = random_hmm(2, 2, 8);
        let o = OraclePredictor::new(Model::Hmm(p.clone()));
        assert!(exact_prediction_risk(&p, &o, 5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn risk_bound_holds_for_marginal_assignment() {
        let p = random_hmm(2, 2, 12);
        let n = 5;
        let q = MarginalAssignment::new(2, 2);
        let risk = exact_prediction_risk(&p, &OptimalHmmPredictor::new(2, 2), n).unwrap();
        let red = expected_redundancy(&p, &q, n + 1, Mode::Exact)
            .unwrap()
            .value;
        let li = latent_info(&p, n + 1).unwrap();
        assert!(risk >= 0.0);
        assert!(risk <= red / n as f64 + li / n as f64 + 1e-9);
        let chain = risk_chain(&p, &q, n).unwrap();
        assert!((chain.n_risk - n as f64 * risk).abs() < 1e-10);
        assert!(chain.convexity_gap >= -1e-12);
        assert!(chain.residual.abs() < 1e-9);
        assert!(chain.bound_slack() >= -1e-9);
    }

    #[test]
    fn shtarkov_examples() {
        assert!((shtarkov_sum(ShtarkovClass::Iid { l: 2 }, 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(
            (shtarkov_sum(ShtarkovClass::Iid { l: 2 }, 2).unwrap() - 2.5f64.ln()).abs() < 1e-12
        );
        // Markov1 with m = 2: every pair is explained with probability one
        assert!(
            (shtarkov_sum(ShtarkovClass::Markov1 { l: 2 }, 2).unwrap() - 4f64.ln()).abs() < 1e-12
        );
        assert!(shtarkov_sum(ShtarkovClass::Iid { l: 2 }, 21).is_err());
    }
}
