//! Sequential probability assignments: add-one i.i.d., add-one order-`d`
//! Markov over observations, and the joint add-one assignment over
//! (observation, hidden state) paths together with its closed form in terms of
//! transition and emission counts.

use std::collections::HashMap;

use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};
use crate::math::{ln_factorial, log_rising};

/// A sequential probability assignment over sequences from `[alphabet]`.
pub trait Assignment: Send + Sync {
    fn alphabet(&self) -> usize;

    /// `Q(. | prefix)`.
    fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist>;

    /// `ln Q(x)`, equal to the sum of log conditionals.
    fn joint_log_prob(&self, x: &[usize]) -> Result<f64> {
        let mut lp = 0.0;
        for t in 0..x.len() {
            lp += self.conditional(&x[..t])?.get(x[t]).ln();
        }
        Ok(lp)
    }

    /// `Q(. | x_{n-t+1..n})` for `t = 1..=n`, in increasing `t`.
    fn suffix_conditionals(&self, x: &[usize]) -> Result<Vec<PredictiveDist>> {
        suffix_conditionals_naive(self, x)
    }
}

/// Suffix conditionals evaluated one at a time through [`Assignment::conditional`].
pub fn suffix_conditionals_naive<A: Assignment + ?Sized>(
    a: &A,
    x: &[usize],
) -> Result<Vec<PredictiveDist>> {
    let n = x.len();
    (1..=n).map(|t| a.conditional(&x[n - t..])).collect()
}

/// Add-one (Laplace) conditional from per-symbol counts: `(1 + c_x) / (l + t)`.
pub fn addone_iid_conditional(counts: &[u64]) -> PredictiveDist {
    let l = counts.len() as f64;
    let total: u64 = counts.iter().sum();
    let denom = l + total as f64;
    PredictiveDist::new(counts.iter().map(|&c| (1.0 + c as f64) / denom).collect())
        .unwrap_or_else(|_| PredictiveDist::uniform(counts.len()))
}

/// Conditional of the order-`d` add-one Markov assignment given a prefix.
///
/// The context is the last `min(d, |prefix|)` symbols. Contexts shorter than
/// `d` occur only once, during warm-up, so their conditional is uniform.
pub fn addone_markov_conditional(prefix: &[usize], order: usize, l: usize) -> PredictiveDist {
    let t = prefix.len();
    let mut counts = vec![0u64; l];
    if t >= order {
        let context = &prefix[t - order..];
        for i in order..t {
            if &prefix[i - order..i] == context {
                counts[prefix[i]] += 1;
            }
        }
    }
    addone_iid_conditional(&counts)
}

fn context_capacity(order: usize, l: usize) -> Option<u128> {
    (l as u128 + 1).checked_pow(order as u32)
}

/// The order-`d` add-one Markov assignment over `[l]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkovAssignment {
    order: usize,
    l: usize,
}

impl MarkovAssignment {
    pub fn new(order: usize, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidArgument("alphabet must be nonempty".into()));
        }
        if context_capacity(order, l).is_none_or(|c| c > u128::MAX / (l as u128 + 1)) {
            return Err(Error::InvalidArgument(format!(
                "order {order} is too large to pack contexts over an alphabet of {l}"
            )));
        }
        Ok(Self { order, l })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Fresh streaming coder for this assignment.
    pub fn coder(&self) -> MarkovCoder {
        MarkovCoder::new(self.order, self.l)
    }
}

impl Assignment for MarkovAssignment {
    fn alphabet(&self) -> usize {
        self.l
    }

    fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
        check_symbols(prefix, self.l)?;
        Ok(addone_markov_conditional(prefix, self.order, self.l))
    }

    fn joint_log_prob(&self, x: &[usize]) -> Result<f64> {
        check_symbols(x, self.l)?;
        let mut coder = self.coder();
        Ok(x.iter().map(|&s| coder.encode(s)).sum())
    }

    /// For every suffix at least `d` long the context is the same (the last `d`
    /// symbols of `x`), so extending the suffix by one symbol adds at most one
    /// window to a single count row.
    fn suffix_conditionals(&self, x: &[usize]) -> Result<Vec<PredictiveDist>> {
        check_symbols(x, self.l)?;
        let n = x.len();
        let d = self.order;
        let mut out = Vec::with_capacity(n);
        let mut counts = vec![0u64; self.l];
        let context = &x[n.saturating_sub(d)..];
        for t in 1..=n {
            if t > d {
                let j = n - t;
                if &x[j..j + d] == context {
                    counts[x[j + d]] += 1;
                }
            }
            out.push(addone_iid_conditional(&counts));
        }
        Ok(out)
    }
}

/// Streaming state of the order-`d` add-one Markov assignment. Contexts are
/// packed into integers (digits `symbol + 1` in base `l + 1`) and looked up in
/// a hash map, so memory grows with the number of distinct contexts visited.
#[derive(Debug, Clone)]
pub struct MarkovCoder {
    l: usize,
    modulus: u128,
    key: u128,
    counts: HashMap<u128, Vec<u64>>,
}

impl MarkovCoder {
    fn new(order: usize, l: usize) -> Self {
        Self {
            l,
            modulus: context_capacity(order, l).expect("checked by MarkovAssignment::new"),
            key: 0,
            counts: HashMap::new(),
        }
    }

    fn row(&self) -> Option<&Vec<u64>> {
        self.counts.get(&self.key)
    }

    /// `Q(. | symbols seen so far)`.
    pub fn conditional(&self) -> PredictiveDist {
        match self.row() {
            Some(row) => addone_iid_conditional(&row[..self.l]),
            None => PredictiveDist::uniform(self.l),
        }
    }

    /// Records `symbol` and returns its log conditional probability.
    pub fn encode(&mut self, symbol: usize) -> f64 {
        let l = self.l;
        let row = self
            .counts
            .entry(self.key)
            .or_insert_with(|| vec![0; l + 1]);
        let lp = ((1 + row[symbol]) as f64 / (l as u64 + row[l]) as f64).ln();
        row[symbol] += 1;
        row[l] += 1;
        self.key = (self.key * (l as u128 + 1) + symbol as u128 + 1) % self.modulus;
        lp
    }

    pub fn distinct_contexts(&self) -> usize {
        self.counts.len()
    }
}

/// Transition counts `M` (`k x k`) and emission counts `T` (`k x l`) of a joint
/// (observation, state) path: the sufficient statistic of the joint add-one
/// assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CountStats {
    k: usize,
    l: usize,
    trans: Vec<u64>,
    emit: Vec<u64>,
}

impl CountStats {
    pub fn zeros(k: usize, l: usize) -> Self {
        Self {
            k,
            l,
            trans: vec![0; k * k],
            emit: vec![0; k * l],
        }
    }

    pub fn from_matrices(trans: Vec<Vec<u64>>, emit: Vec<Vec<u64>>) -> Result<Self> {
        let k = trans.len();
        let l = emit.first().map_or(0, Vec::len);
        if emit.len() != k
            || trans.iter().any(|r| r.len() != k)
            || emit.iter().any(|r| r.len() != l)
        {
            return Err(Error::Shape(
                "count matrices must be k x k and k x l".into(),
            ));
        }
        Ok(Self {
            k,
            l,
            trans: trans.concat(),
            emit: emit.concat(),
        })
    }

    pub fn from_paths(x: &[usize], z: &[usize], k: usize, l: usize) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: z.len(),
            });
        }
        check_symbols(x, l)?;
        check_symbols(z, k)?;
        let mut stats = Self::zeros(k, l);
        for (&xt, &zt) in x.iter().zip(z) {
            stats.emit[zt * l + xt] += 1;
        }
        for w in z.windows(2) {
            stats.trans[w[0] * k + w[1]] += 1;
        }
        Ok(stats)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn trans(&self, from: usize, to: usize) -> u64 {
        self.trans[from * self.k + to]
    }

    pub fn emit(&self, state: usize, symbol: usize) -> u64 {
        self.emit[state * self.l + symbol]
    }

    pub(crate) fn trans_mut(&mut self, from: usize, to: usize) -> &mut u64 {
        &mut self.trans[from * self.k + to]
    }

    pub(crate) fn emit_mut(&mut self, state: usize, symbol: usize) -> &mut u64 {
        &mut self.emit[state * self.l + symbol]
    }

    pub(crate) fn cells(&self) -> impl Iterator<Item = u64> + '_ {
        self.trans.iter().chain(&self.emit).copied()
    }

    pub(crate) fn from_cells(k: usize, l: usize, cells: &[u64]) -> Self {
        Self {
            k,
            l,
            trans: cells[..k * k].to_vec(),
            emit: cells[k * k..k * k + k * l].to_vec(),
        }
    }

    pub fn trans_row_sum(&self, state: usize) -> u64 {
        self.trans[state * self.k..(state + 1) * self.k]
            .iter()
            .sum()
    }

    pub fn emit_row_sum(&self, state: usize) -> u64 {
        self.emit[state * self.l..(state + 1) * self.l].iter().sum()
    }

    /// Path length `K = sum T`.
    pub fn total_len(&self) -> u64 {
        self.emit.iter().sum()
    }

    pub fn total_transitions(&self) -> u64 {
        self.trans.iter().sum()
    }

    /// `sum T = 1 + sum M`.
    pub fn is_consistent(&self) -> bool {
        self.total_len() == self.total_transitions() + 1
    }

    /// The unique state whose emission row sum exceeds its transition row sum
    /// by exactly one (the final state of any realizing path), if the row sums
    /// agree everywhere else.
    pub fn terminal_state(&self) -> Option<usize> {
        let mut terminal = None;
        for i in 0..self.k {
            let (m, t) = (self.trans_row_sum(i), self.emit_row_sum(i));
            if m == t {
                continue;
            }
            if t != m + 1 || terminal.is_some() {
                return None;
            }
            terminal = Some(i);
        }
        terminal
    }
}

fn check_joint_inputs(x: &[usize], z: &[usize], k: usize, l: usize) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: z.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "joint paths must be nonempty".into(),
        ));
    }
    check_symbols(x, l)?;
    check_symbols(z, k)
}

/// `ln Q(z)` of the add-one Markov assignment over hidden paths with a uniform
/// initial state.
pub fn addone_chain_logprob(z: &[usize], k: usize) -> Result<f64> {
    check_symbols(z, k)?;
    let mut counts = vec![0u64; k * k];
    let mut rows = vec![0u64; k];
    let mut lp = -(k as f64).ln();
    for w in z.windows(2) {
        let (a, b) = (w[0], w[1]);
        lp += ((1 + counts[a * k + b]) as f64 / (k as u64 + rows[a]) as f64).ln();
        counts[a * k + b] += 1;
        rows[a] += 1;
    }
    Ok(lp)
}

/// `ln Q(x, z)` of the joint add-one assignment, evaluated as the sequential
/// product of add-one transition and emission estimates.
pub fn joint_addone_logprob(x: &[usize], z: &[usize], k: usize, l: usize) -> Result<f64> {
    check_joint_inputs(x, z, k, l)?;
    let mut emit = vec![0u64; k * l];
    let mut emit_rows = vec![0u64; k];
    let mut lp = addone_chain_logprob(z, k)?;
    for (&xt, &zt) in x.iter().zip(z) {
        lp += ((1 + emit[zt * l + xt]) as f64 / (l as u64 + emit_rows[zt]) as f64).ln();
        emit[zt * l + xt] += 1;
        emit_rows[zt] += 1;
    }
    Ok(lp)
}

/// Closed form of the joint add-one assignment from its count statistic:
///
/// ```text
/// ln F(M, T) = -ln k + sum_z [ sum_z' ln M_{zz'}! - ln k^(M_z rising)
///                            + sum_x  ln T_{zx}!  - ln l^(T_z rising) ]
/// ```
pub fn f_of_counts(stats: &CountStats) -> Result<f64> {
    if !stats.is_consistent() {
        return Err(Error::InconsistentCounts {
            emissions: stats.total_len(),
            transitions: stats.total_transitions(),
        });
    }
    let (k, l) = (stats.k, stats.l);
    let mut lp = -(k as f64).ln();
    for z in 0..k {
        for zp in 0..k {
            lp += ln_factorial(stats.trans(z, zp));
        }
        lp -= log_rising(k as f64, stats.trans_row_sum(z));
        for x in 0..l {
            lp += ln_factorial(stats.emit(z, x));
        }
        lp -= log_rising(l as f64, stats.emit_row_sum(z));
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::log_sum_exp;
    use proptest::prelude::*;

    fn decode(code: usize, base: usize, len: usize) -> Vec<usize> {
        let mut c = code;
        (0..len)
            .map(|_| {
                let d = c % base;
                c /= base;
                d
            })
            .collect()
    }

    #[test]
    fn iid_examples() {
        assert_eq!(addone_iid_conditional(&[0, 0]).probs(), &[0.5, 0.5]);
        let p = addone_iid_conditional(&[1, 0]);
        assert!((p.get(0) - 2.0 / 3.0).abs() < 1e-15);
        let p = addone_iid_conditional(&[5, 0, 0]);
        assert_eq!(p.probs(), &[0.75, 0.125, 0.125]);
    }

    #[test]
    fn markov_conditional_examples() {
        // the (1,1,2,1) example with context 1: successors {1, 2}
        let p = addone_markov_conditional(&[0, 0, 1, 0], 1, 2);
        assert_eq!(p.probs(), &[0.5, 0.5]);
        // unseen context
        let p = addone_markov_conditional(&[0, 0, 0, 1], 1, 3);
        assert_eq!(p.probs(), &[1.0 / 3.0; 3]);
        // order zero is the i.i.d. rule
        let x = [2, 0, 2, 2, 1];
        assert_eq!(
            addone_markov_conditional(&x, 0, 3),
            addone_iid_conditional(&[1, 1, 3])
        );
        // warm-up contexts are uniform
        assert_eq!(
            addone_markov_conditional(&[1, 1], 3, 2),
            PredictiveDist::uniform(2)
        );
    }

    #[test]
    fn markov_joint_chained_addone() {
        let a = MarkovAssignment::new(0, 2).unwrap();
        let lp = a.joint_log_prob(&[0, 0]).unwrap();
        assert!((lp - (0.5f64 * 2.0 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn markov_streaming_matches_conditionals() {
        for order in 0..4 {
            let a = MarkovAssignment::new(order, 3).unwrap();
            let x = [0, 2, 2, 1, 0, 2, 2, 1, 1, 0, 2, 2, 0];
            let streamed = a.joint_log_prob(&x).unwrap();
            let naive: f64 = (0..x.len())
                .map(|t| a.conditional(&x[..t]).unwrap().get(x[t]).ln())
                .sum();
            assert!((streamed - naive).abs() < 1e-12, "order {order}");
            let mut coder = a.coder();
            for (t, &s) in x.iter().enumerate() {
                assert_eq!(coder.conditional(), a.conditional(&x[..t]).unwrap());
                coder.encode(s);
            }
        }
    }

    #[test]
    fn markov_fast_suffix_route_matches_naive() {
        for order in 0..5 {
            let a = MarkovAssignment::new(order, 2).unwrap();
            let x = [0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 1, 0, 1];
            assert_eq!(
                a.suffix_conditionals(&x).unwrap(),
                suffix_conditionals_naive(&a, &x).unwrap()
            );
        }
    }

    #[test]
    fn markov_assignment_is_a_measure() {
        for order in 0..3 {
            let a = MarkovAssignment::new(order, 2).unwrap();
            for n in 1..=10 {
                let lps: Vec<f64> = (0..1usize << n)
                    .map(|c| a.joint_log_prob(&decode(c, 2, n)).unwrap())
                    .collect();
                assert!(log_sum_exp(&lps).abs() < 1e-8 / 2.0, "order {order} n {n}");
            }
        }
    }

    #[test]
    fn markov_rejects_unpackable_order() {
        assert!(MarkovAssignment::new(200, 2).is_err());
        assert!(MarkovAssignment::new(40, 3).is_ok());
    }

    #[test]
    fn joint_base_cases() {
        let lp = joint_addone_logprob(&[1], &[2], 3, 4).unwrap();
        assert!((lp - (1.0f64 / 12.0).ln()).abs() < 1e-15);
        for len in 1..6 {
            let x = vec![0; len];
            assert_eq!(joint_addone_logprob(&x, &x, 1, 1).unwrap(), 0.0);
        }
        assert!(joint_addone_logprob(&[0, 1], &[0], 2, 2).is_err());
    }

    #[test]
    fn joint_two_step_example() {
        // x = (1, 2), z = (1, 2) one-based: (1/k) * M(2|1) * T(1|1) * T(2|2)
        let lp = joint_addone_logprob(&[0, 1], &[0, 1], 2, 2).unwrap();
        assert!((lp - (1.0f64 / 16.0).ln()).abs() < 1e-15);
        let stats = CountStats::from_paths(&[0, 1], &[0, 1], 2, 2).unwrap();
        assert!((f_of_counts(&stats).unwrap() - lp).abs() < 1e-15);
    }

    #[test]
    fn f_concentrated_counts_closed_form() {
        // all transitions 0 -> 0 (n of them) and all emissions (0, 0) (n + 1)
        let (k, l, n) = (3usize, 2usize, 7u64);
        let mut stats = CountStats::zeros(k, l);
        *stats.trans_mut(0, 0) = n;
        *stats.emit_mut(0, 0) = n + 1;
        let expected = -(k as f64).ln() + ln_factorial(n) - log_rising(k as f64, n)
            + ln_factorial(n + 1)
            - log_rising(l as f64, n + 1);
        assert!((f_of_counts(&stats).unwrap() - expected).abs() < 1e-12);
        let z = vec![0; n as usize + 1];
        assert!((joint_addone_logprob(&z, &z, k, l).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn f_rejects_inconsistent_totals() {
        let mut stats = CountStats::zeros(2, 2);
        *stats.emit_mut(0, 0) = 2;
        assert!(matches!(
            f_of_counts(&stats),
            Err(Error::InconsistentCounts { .. })
        ));
    }

    #[test]
    fn terminal_state_detection() {
        let stats = CountStats::from_paths(&[0, 1, 1], &[1, 0, 0], 2, 2).unwrap();
        assert_eq!(stats.terminal_state(), Some(0));
        let mut bad = stats.clone();
        *bad.emit_mut(1, 1) += 2;
        *bad.trans_mut(0, 0) += 2;
        assert_eq!(bad.terminal_state(), None);
    }

    #[test]
    fn joint_assignment_is_a_measure() {
        let (k, l) = (2usize, 2usize);
        for len in 1..=6 {
            let mut lps = Vec::new();
            for xc in 0..l.pow(len as u32) {
                for zc in 0..k.pow(len as u32) {
                    let x = decode(xc, l, len);
                    let z = decode(zc, k, len);
                    lps.push(joint_addone_logprob(&x, &z, k, l).unwrap());
                }
            }
            assert!(log_sum_exp(&lps).abs() < 1e-9, "K = {len}");
        }
    }

    #[test]
    fn exchangeable_within_count_statistic() {
        // every pair of state paths of length 8 with equal counts scores equally
        let (k, l, len) = (2usize, 2usize, 8usize);
        let x = [0, 1, 1, 0, 1, 0, 0, 1];
        let mut by_stats: HashMap<CountStats, f64> = HashMap::new();
        let mut pairs = 0;
        for zc in 0..k.pow(len as u32) {
            let z = decode(zc, k, len);
            let stats = CountStats::from_paths(&x, &z, k, l).unwrap();
            let lp = joint_addone_logprob(&x, &z, k, l).unwrap();
            if let Some(prev) = by_stats.insert(stats, lp) {
                assert!((prev - lp).abs() < 1e-12);
                pairs += 1;
            }
        }
        assert!(pairs > 0);
    }

    proptest! {
        #[test]
        fn sequential_and_closed_form_agree(
            k in 1usize..=4,
            l in 1usize..=4,
            raw in proptest::collection::vec((0usize..16, 0usize..16), 1..50),
        ) {
            let x: Vec<usize> = raw.iter().map(|(a, _)| a % l).collect();
            let z: Vec<usize> = raw.iter().map(|(_, b)| b % k).collect();
            let seq = joint_addone_logprob(&x, &z, k, l).unwrap();
            let stats = CountStats::from_paths(&x, &z, k, l).unwrap();
            prop_assert!(stats.is_consistent());
            prop_assert_eq!(stats.terminal_state(), if stats.trans_row_sum(z[z.len()-1]) + 1 == stats.emit_row_sum(z[z.len()-1]) { Some(z[z.len()-1]) } else { None });
            let closed = f_of_counts(&stats).unwrap();
            prop_assert!((seq - closed).abs() < 1e-9);
        }

        #[test]
        fn markov_conditionals_normalized(
            order in 0usize..4,
            l in 1usize..5,
            raw in proptest::collection::vec(0usize..16, 0..40),
        ) {
            let x: Vec<usize> = raw.iter().map(|a| a % l).collect();
            let p = addone_markov_conditional(&x, order, l);
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
