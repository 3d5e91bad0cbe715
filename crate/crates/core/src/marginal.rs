//! Exact marginalization of the joint add-one assignment over hidden paths.
//!
//! `Q(x) = sum_z Q(x, z) = sum_{(M, T)} F(M, T) * A(M, T; x)` where `A` counts
//! the hidden paths inducing transition counts `M` and emission counts `T` on
//! `x`. Paths are aggregated by a dynamic program whose state is the running
//! count statistic plus one boundary hidden state, so `z` is never enumerated.
//! Path counts are exact integers; `F` is applied in log space at the end.
//!
//! Count statistics are packed into a single integer: the boundary state is the
//! lowest digit (base `k + 1`, digit `k` meaning "none"), followed by one digit
//! per count cell in base `K + 1`. The encoding is injective for counts `<= K`.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::assignments::{joint_addone_logprob, Assignment, CountStats};
use crate::dist::PredictiveDist;
use crate::error::{check_symbols, Error, Result};
use crate::math::{
    ln_biguint, ln_factorial_table, ln_gamma, log_rising_table, log_sum_exp, LogSumExp,
};

/// Default cap on the number of memo entries of one dynamic program.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Cap on hidden paths enumerated by the brute-force oracle.
pub const BRUTE_FORCE_CAP: u64 = 10_000_000;

/// Multiplicative hasher with a fixed seed: fast on integer keys and, unlike
/// the randomized default, gives a reproducible iteration order and hence
/// reproducible floating-point sums.
#[derive(Default)]
struct KeyHasher(u64);

const MIX: u64 = 0x9e37_79b9_7f4a_7c15;

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        let h = self.0 ^ (self.0 >> 29);
        h.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ (h >> 32)
    }
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(buf));
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(MIX);
    }
    fn write_u128(&mut self, v: u128) {
        self.write_u64(v as u64);
        self.write_u64((v >> 64) as u64);
    }
}

type KeyMap<K, V> = HashMap<K, V, BuildHasherDefault<KeyHasher>>;

trait Packed: Clone + Eq + Hash + Send + Sync {
    fn from_big(v: &BigUint) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub_small(&self, v: u64) -> Self;
    fn rem_small(&self, m: u64) -> u64;
    /// Splits off the state digit and returns `(state, cell digits)`.
    fn unpack(&self, state_radix: u64, base: u64, cells: &mut [u64]) -> u64;
}

impl Packed for u128 {
    fn from_big(v: &BigUint) -> Self {
        v.to_u128().expect("layout checked to fit in 128 bits")
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_small(&self, v: u64) -> Self {
        self - v as u128
    }
    fn rem_small(&self, m: u64) -> u64 {
        (self % m as u128) as u64
    }
    fn unpack(&self, state_radix: u64, base: u64, cells: &mut [u64]) -> u64 {
        let state = (self % state_radix as u128) as u64;
        let mut rest = self / state_radix as u128;
        if base <= u32::MAX as u64 && rest <= u64::MAX as u128 {
            let mut small = rest as u64;
            for c in cells.iter_mut() {
                *c = small % base;
                small /= base;
            }
            return state;
        }
        for c in cells.iter_mut() {
            *c = (rest % base as u128) as u64;
            rest /= base as u128;
        }
        state
    }
}

impl Packed for BigUint {
    fn from_big(v: &BigUint) -> Self {
        v.clone()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub_small(&self, v: u64) -> Self {
        self - v
    }
    fn rem_small(&self, m: u64) -> u64 {
        (self % m).to_u64().expect("remainder below modulus")
    }
    fn unpack(&self, state_radix: u64, base: u64, cells: &mut [u64]) -> u64 {
        let state = (self % state_radix).to_u64().expect("digit");
        let mut rest = self / state_radix;
        for c in cells.iter_mut() {
            *c = (&rest % base).to_u64().expect("digit");
            rest /= base;
        }
        state
    }
}

/// Exact path counts.
trait Tally: Clone + Send + Sync {
    fn unit() -> Self;
    fn accumulate(&mut self, other: &Self);
    fn ln(&self) -> f64;
    fn to_big(&self) -> BigUint;
}

impl Tally for u128 {
    fn unit() -> Self {
        1
    }
    fn accumulate(&mut self, other: &Self) {
        *self += other;
    }
    fn ln(&self) -> f64 {
        (*self as f64).ln()
    }
    fn to_big(&self) -> BigUint {
        BigUint::from(*self)
    }
}

impl Tally for BigUint {
    fn unit() -> Self {
        BigUint::one()
    }
    fn accumulate(&mut self, other: &Self) {
        *self += other;
    }
    fn ln(&self) -> f64 {
        ln_biguint(self)
    }
    fn to_big(&self) -> BigUint {
        self.clone()
    }
}

/// 256-bit path count for paths too numerous for 128 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct U256 {
    hi: u128,
    lo: u128,
}

impl Tally for U256 {
    fn unit() -> Self {
        U256 { hi: 0, lo: 1 }
    }
    fn accumulate(&mut self, other: &Self) {
        let (lo, carry) = self.lo.overflowing_add(other.lo);
        self.lo = lo;
        self.hi += other.hi + carry as u128;
    }
    fn ln(&self) -> f64 {
        if self.hi == 0 {
            (self.lo as f64).ln()
        } else {
            (self.hi as f64 + self.lo as f64 * 2f64.powi(-128)).ln()
                + 128.0 * std::f64::consts::LN_2
        }
    }
    fn to_big(&self) -> BigUint {
        (BigUint::from(self.hi) << 128u32) + self.lo
    }
}

/// Geometry of the packed count encoding for sequences of length `<= max_len`.
#[derive(Debug, Clone)]
struct Layout {
    k: usize,
    l: usize,
    base: u64,
}

impl Layout {
    fn new(k: usize, l: usize, max_len: usize) -> Self {
        Self {
            k,
            l,
            base: max_len as u64 + 1,
        }
    }

    fn cells(&self) -> usize {
        self.k * self.k + self.k * self.l
    }

    fn trans_cell(&self, from: usize, to: usize) -> usize {
        from * self.k + to
    }

    fn emit_cell(&self, state: usize, symbol: usize) -> usize {
        self.k * self.k + state * self.l + symbol
    }

    fn state_radix(&self) -> u64 {
        self.k as u64 + 1
    }

    /// Largest encodable value plus one.
    fn capacity(&self) -> BigUint {
        BigUint::from(self.state_radix()) * BigUint::from(self.base).pow(self.cells() as u32)
    }

    fn fits_u128(&self) -> bool {
        self.capacity() <= BigUint::from(u128::MAX)
    }

    fn cell_weight(&self, cell: usize) -> BigUint {
        BigUint::from(self.state_radix()) * BigUint::from(self.base).pow(cell as u32)
    }

    fn encode_big(&self, cells: &[u64], state: Option<usize>) -> BigUint {
        let mut acc = BigUint::zero();
        for &c in cells.iter().rev() {
            acc = acc * self.base + c;
        }
        acc * self.state_radix() + state.unwrap_or(self.k) as u64
    }
}

/// Canonical packed encoding of a count statistic together with an optional
/// boundary state. The path length is implied by the emission counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CountKey {
    Packed(u128),
    Big(BigUint),
}

impl CountKey {
    /// Encodes `stats`, whose entries must not exceed `max_len`.
    pub fn encode(stats: &CountStats, state: Option<usize>, max_len: usize) -> Result<Self> {
        let layout = Layout::new(stats.k(), stats.l(), max_len);
        let cells: Vec<u64> = stats.cells().collect();
        if cells.iter().any(|&c| c > max_len as u64) {
            return Err(Error::InvalidArgument(format!(
                "count exceeds the encoding bound {max_len}"
            )));
        }
        if state.is_some_and(|s| s >= stats.k()) {
            return Err(Error::InvalidArgument("boundary state out of range".into()));
        }
        let big = layout.encode_big(&cells, state);
        Ok(if layout.fits_u128() {
            CountKey::Packed(big.to_u128().expect("layout fits"))
        } else {
            CountKey::Big(big)
        })
    }

    pub fn decode(&self, k: usize, l: usize, max_len: usize) -> (CountStats, Option<usize>) {
        let layout = Layout::new(k, l, max_len);
        let mut cells = vec![0u64; layout.cells()];
        let state = match self {
            CountKey::Packed(v) => v.unpack(layout.state_radix(), layout.base, &mut cells),
            CountKey::Big(v) => v.unpack(layout.state_radix(), layout.base, &mut cells),
        };
        let state = (state as usize != k).then_some(state as usize);
        (CountStats::from_cells(k, l, &cells), state)
    }
}

/// Upper bound on the number of (boundary state, count statistic) pairs
/// reachable on a sequence with the given symbol histogram. Each symbol's
/// occurrences are split among `k` states; the emission rows and the boundary
/// state fix the transition row sums, and each transition row is then split
/// among `k` successors. The product of row splits is largest for balanced
/// rows (log-concavity), which gives the last factor.
pub fn layer_size_estimate(histogram: &[usize], k: usize) -> f64 {
    let len: usize = histogram.iter().sum();
    let ln_choose = |n: f64, r: f64| ln_gamma(n + 1.0) - ln_gamma(r + 1.0) - ln_gamma(n - r + 1.0);
    let km1 = (k - 1) as f64;
    let mut ln_est = (k as f64).ln();
    for &h in histogram {
        ln_est += ln_choose(h as f64 + km1, km1);
    }
    if len > 1 {
        let row = (len - 1) as f64 / k as f64;
        ln_est += k as f64 * ln_choose(row + km1, km1);
    }
    ln_est.exp()
}

fn histogram(x: &[usize], l: usize) -> Vec<usize> {
    let mut h = vec![0; l];
    for &s in x {
        h[s] += 1;
    }
    h
}

fn check_budget(x: &[usize], k: usize, l: usize, budget: u64) -> Result<()> {
    let estimate = layer_size_estimate(&histogram(x, l), k);
    if estimate > budget as f64 {
        return Err(Error::BudgetExceeded {
            estimate,
            budget,
            largest_feasible: None,
        });
    }
    Ok(())
}

/// Log-space lookup tables for `ln F(M, T)`.
#[derive(Debug)]
struct FTables {
    ln_fact: Vec<f64>,
    rise_k: Vec<f64>,
    rise_l: Vec<f64>,
}

impl FTables {
    fn new(k: usize, l: usize, max_len: usize) -> Self {
        Self {
            ln_fact: ln_factorial_table(max_len),
            rise_k: log_rising_table(k, max_len),
            rise_l: log_rising_table(l, max_len),
        }
    }

    fn ln_f(&self, k: usize, l: usize, cells: &[u64]) -> f64 {
        let mut lp = -(k as f64).ln();
        let (trans, emit) = cells.split_at(k * k);
        for z in 0..k {
            let mut row = 0;
            for &c in &trans[z * k..(z + 1) * k] {
                lp += self.ln_fact[c as usize];
                row += c as usize;
            }
            lp -= self.rise_k[row];
            let mut row = 0;
            for &c in &emit[z * l..(z + 1) * l] {
                lp += self.ln_fact[c as usize];
                row += c as usize;
            }
            lp -= self.rise_l[row];
        }
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// Symbols are appended; the boundary state is the last hidden state.
    Append,
    /// Symbols are prepended; the boundary state is the first hidden state.
    Prepend,
}

/// One layer of the path-count dynamic program.
#[derive(Clone)]
struct Layer<P, C> {
    entries: KeyMap<P, C>,
    len: usize,
}

/// Dynamic program over (boundary state, running counts) with exact path
/// counts.
struct CountDp<P, C> {
    layout: Layout,
    direction: Direction,
    tables: Arc<FTables>,
    /// `step[(boundary * k + new_state) * l + symbol]`: key increment for a
    /// transition between the boundary and the new state plus one emission.
    step: Vec<P>,
    start: Vec<P>,
    budget: u64,
    _tally: std::marker::PhantomData<C>,
}

impl<P: Packed, C: Tally> CountDp<P, C> {
    fn new(layout: Layout, direction: Direction, tables: Arc<FTables>, budget: u64) -> Self {
        let (k, l) = (layout.k, layout.l);
        let mut step = Vec::with_capacity(k * k * l);
        for b in 0..k {
            for i in 0..k {
                let tcell = match direction {
                    Direction::Append => layout.trans_cell(b, i),
                    Direction::Prepend => layout.trans_cell(i, b),
                };
                for x in 0..l {
                    let w = layout.cell_weight(tcell)
                        + layout.cell_weight(layout.emit_cell(i, x))
                        + BigUint::from(i as u64);
                    step.push(P::from_big(&w));
                }
            }
        }
        let start = (0..k)
            .flat_map(|i| (0..l).map(move |x| (i, x)))
            .map(|(i, x)| P::from_big(&(layout.cell_weight(layout.emit_cell(i, x)) + i as u64)))
            .collect();
        Self {
            layout,
            direction,
            tables,
            step,
            start,
            budget,
            _tally: std::marker::PhantomData,
        }
    }

    fn first(&self, symbol: usize) -> Layer<P, C> {
        let l = self.layout.l;
        let entries = (0..self.layout.k)
            .map(|i| (self.start[i * l + symbol].clone(), C::unit()))
            .collect();
        Layer { entries, len: 1 }
    }

    fn extend(&self, layer: &Layer<P, C>, symbol: usize) -> Result<Layer<P, C>> {
        let (k, l) = (self.layout.k, self.layout.l);
        let radix = self.layout.state_radix();
        let mut next: KeyMap<P, C> =
            KeyMap::with_capacity_and_hasher(layer.entries.len() * 2, Default::default());
        for (key, count) in &layer.entries {
            let b = key.rem_small(radix) as usize;
            let cleared = key.sub_small(b as u64);
            for i in 0..k {
                let nk = cleared.add(&self.step[(b * k + i) * l + symbol]);
                next.entry(nk)
                    .and_modify(|c| c.accumulate(count))
                    .or_insert_with(|| count.clone());
            }
        }
        if next.len() as u64 > self.budget {
            return Err(Error::BudgetExceeded {
                estimate: next.len() as f64,
                budget: self.budget,
                largest_feasible: None,
            });
        }
        Ok(Layer {
            entries: next,
            len: layer.len + 1,
        })
    }

    fn log_marginal(&self, layer: &Layer<P, C>) -> f64 {
        let (k, l) = (self.layout.k, self.layout.l);
        let mut cells = vec![0u64; self.layout.cells()];
        let mut acc = LogSumExp::default();
        for (key, count) in &layer.entries {
            key.unpack(self.layout.state_radix(), self.layout.base, &mut cells);
            acc.push(count.ln() + self.tables.ln_f(k, l, &cells));
        }
        acc.value()
    }

    /// `ln Q` of every one-symbol extension of the layer's sequence, without
    /// materializing the extended layers.
    fn child_log_marginals(&self, layer: &Layer<P, C>) -> Vec<f64> {
        let (k, l) = (self.layout.k, self.layout.l);
        let mut cells = vec![0u64; self.layout.cells()];
        let mut acc: Vec<LogSumExp> = (0..l).map(|_| LogSumExp::default()).collect();
        let mut emit_rows = vec![0u64; k];
        let mut trans_rows = vec![0u64; k];
        for (key, count) in &layer.entries {
            let b = key.unpack(self.layout.state_radix(), self.layout.base, &mut cells) as usize;
            let base = count.ln() + self.tables.ln_f(k, l, &cells);
            for z in 0..k {
                trans_rows[z] = cells[z * k..(z + 1) * k].iter().sum();
                emit_rows[z] = cells[k * k + z * l..k * k + (z + 1) * l].iter().sum();
            }
            for i in 0..k {
                let (from, tcell) = match self.direction {
                    Direction::Append => (b, self.layout.trans_cell(b, i)),
                    Direction::Prepend => (i, self.layout.trans_cell(i, b)),
                };
                let trans_step =
                    ((cells[tcell] + 1) as f64 / (k as u64 + trans_rows[from]) as f64).ln();
                let denom = ((l as u64 + emit_rows[i]) as f64).ln();
                for (x, slot) in acc.iter_mut().enumerate() {
                    let e = cells[self.layout.emit_cell(i, x)] + 1;
                    slot.push(base + trans_step + (e as f64).ln() - denom);
                }
            }
        }
        acc.into_iter().map(|a| a.value()).collect()
    }

    fn counts(&self, layer: &Layer<P, C>) -> Vec<(CountStats, usize, BigUint)> {
        let (k, l) = (self.layout.k, self.layout.l);
        let mut cells = vec![0u64; self.layout.cells()];
        layer
            .entries
            .iter()
            .map(|(key, count)| {
                let b = key.unpack(self.layout.state_radix(), self.layout.base, &mut cells);
                (
                    CountStats::from_cells(k, l, &cells),
                    b as usize,
                    count.to_big(),
                )
            })
            .collect()
    }

    /// `ln Q` of every prefix (or suffix, when prepending) of `x`, shortest first.
    fn sweep(&self, x: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len());
        let order: Box<dyn Iterator<Item = &usize>> = match self.direction {
            Direction::Append => Box::new(x.iter()),
            Direction::Prepend => Box::new(x.iter().rev()),
        };
        let mut layer: Option<Layer<P, C>> = None;
        for &s in order {
            let next = match &layer {
                None => self.first(s),
                Some(prev) => self.extend(prev, s)?,
            };
            out.push(self.log_marginal(&next));
            layer = Some(next);
        }
        Ok(out)
    }
}

/// Runtime choice between 128-bit and arbitrary-precision arithmetic.
enum Engine {
    Small(CountDp<u128, u128>),
    Wide(CountDp<u128, U256>),
    Big(CountDp<BigUint, BigUint>),
}

impl Engine {
    fn new(k: usize, l: usize, max_len: usize, direction: Direction, budget: u64) -> Self {
        let layout = Layout::new(k, l, max_len);
        let tables = Arc::new(FTables::new(k, l, max_len));
        // the total path count k^K bounds every tally
        let bits = (max_len as f64) * (k as f64).log2();
        match (layout.fits_u128(), bits) {
            (true, b) if b < 127.0 => {
                Engine::Small(CountDp::new(layout, direction, tables, budget))
            }
            (true, b) if b < 255.0 => Engine::Wide(CountDp::new(layout, direction, tables, budget)),
            _ => Engine::Big(CountDp::new(layout, direction, tables, budget)),
        }
    }

    fn sweep(&self, x: &[usize]) -> Result<Vec<f64>> {
        match self {
            Engine::Small(dp) => dp.sweep(x),
            Engine::Wide(dp) => dp.sweep(x),
            Engine::Big(dp) => dp.sweep(x),
        }
    }
}

/// `ln Q(x)` of the marginal of the joint add-one assignment.
pub fn marginal_assignment_logprob(x: &[usize], k: usize, l: usize) -> Result<f64> {
    MarginalAssignment::new(k, l).log_prob(x)
}

/// Verification oracle: log-sum-exp of the joint assignment over all `k^K`
/// hidden paths.
pub fn brute_marginal_logprob(x: &[usize], k: usize, l: usize) -> Result<f64> {
    check_symbols(x, l)?;
    let len = x.len();
    if len == 0 {
        return Ok(0.0);
    }
    let paths = (k as f64).powi(len as i32);
    if paths > BRUTE_FORCE_CAP as f64 {
        return Err(Error::CapExceeded {
            required: paths,
            cap: BRUTE_FORCE_CAP as f64,
        });
    }
    let mut z = vec![0usize; len];
    let mut acc = LogSumExp::default();
    loop {
        acc.push(joint_addone_logprob(x, &z, k, l)?);
        let mut i = 0;
        while i < len {
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
            i += 1;
        }
        if i == len {
            break;
        }
    }
    Ok(acc.value())
}

/// Number of hidden paths `z` inducing exactly the counts `stats` on `x`,
/// computed top-down by peeling off the last position: the final state is the
/// unique state whose emission row exceeds its transition row by one, and the
/// count is the sum over its possible predecessors.
pub fn count_trajectories(stats: &CountStats, x: &[usize]) -> Result<BigUint> {
    count_trajectories_with_budget(stats, x, DEFAULT_BUDGET)
}

pub fn count_trajectories_with_budget(
    stats: &CountStats,
    x: &[usize],
    budget: u64,
) -> Result<BigUint> {
    check_symbols(x, stats.l())?;
    let len = x.len();
    if len == 0 || !stats.is_consistent() || stats.total_len() != len as u64 {
        return Ok(BigUint::zero());
    }
    let estimate: f64 = stats.cells().map(|c| (c + 1) as f64).product();
    if estimate > budget as f64 {
        return Err(Error::BudgetExceeded {
            estimate,
            budget,
            largest_feasible: None,
        });
    }
    let mut memo = HashMap::new();
    Ok(count_rec(&mut stats.clone(), x, len, &mut memo))
}

fn count_rec(
    stats: &mut CountStats,
    x: &[usize],
    len: usize,
    memo: &mut HashMap<CountKey, BigUint>,
) -> BigUint {
    if len == 1 {
        let hit = (0..stats.k()).any(|z| stats.emit(z, x[0]) == 1);
        return if hit && stats.total_transitions() == 0 {
            BigUint::one()
        } else {
            BigUint::zero()
        };
    }
    let Some(last) = stats.terminal_state() else {
        return BigUint::zero();
    };
    let symbol = x[len - 1];
    if stats.emit(last, symbol) == 0 {
        return BigUint::zero();
    }
    let key = CountKey::encode(stats, Some(last), x.len()).expect("counts bounded by length");
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    let mut total = BigUint::zero();
    *stats.emit_mut(last, symbol) -= 1;
    for prev in 0..stats.k() {
        if stats.trans(prev, last) == 0 {
            continue;
        }
        *stats.trans_mut(prev, last) -= 1;
        total += count_rec(stats, x, len - 1, memo);
        *stats.trans_mut(prev, last) += 1;
    }
    *stats.emit_mut(last, symbol) += 1;
    memo.insert(key, total.clone());
    total
}

/// Every count statistic of a length-`len` path over `k` states and `l`
/// symbols with the right totals (not necessarily realizable).
pub fn all_count_stats(len: usize, k: usize, l: usize) -> Vec<CountStats> {
    fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
        if parts == 1 {
            return vec![vec![total]];
        }
        let mut out = Vec::new();
        for first in 0..=total {
            for mut rest in compositions(total - first, parts - 1) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }
    let trans = compositions(len as u64 - 1, k * k);
    let emit = compositions(len as u64, k * l);
    let mut out = Vec::with_capacity(trans.len() * emit.len());
    for m in &trans {
        for t in &emit {
            let mut cells = m.clone();
            cells.extend_from_slice(t);
            out.push(CountStats::from_cells(k, l, &cells));
        }
    }
    out
}

/// `ln Q(x)` by the literal route: enumerate every count statistic, count its
/// trajectories top-down, and sum `F * A`. Only for small inputs.
pub fn marginal_by_enumeration(x: &[usize], k: usize, l: usize) -> Result<f64> {
    check_symbols(x, l)?;
    let mut terms = Vec::new();
    for stats in all_count_stats(x.len(), k, l) {
        let a = count_trajectories(&stats, x)?;
        if !a.is_zero() {
            terms.push(ln_biguint(&a) + crate::assignments::f_of_counts(&stats)?);
        }
    }
    Ok(log_sum_exp(&terms))
}

/// Per-statistic path counts from the forward dynamic program, keyed by the
/// final hidden state.
pub fn path_counts(x: &[usize], k: usize, l: usize) -> Result<Vec<(CountStats, usize, BigUint)>> {
    check_symbols(x, l)?;
    let Some((&first, rest)) = x.split_first() else {
        return Ok(Vec::new());
    };
    let dp: CountDp<BigUint, BigUint> = CountDp::new(
        Layout::new(k, l, x.len()),
        Direction::Append,
        Arc::new(FTables::new(k, l, x.len())),
        DEFAULT_BUDGET,
    );
    let mut layer = dp.first(first);
    for &s in rest {
        layer = dp.extend(&layer, s)?;
    }
    Ok(dp.counts(&layer))
}

/// The marginal `Q(x)` of the joint add-one assignment as a sequential
/// probability assignment over `[l]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginalAssignment {
    k: usize,
    l: usize,
    budget: u64,
}

impl MarginalAssignment {
    pub fn new(k: usize, l: usize) -> Self {
        Self::with_budget(k, l, DEFAULT_BUDGET)
    }

    pub fn with_budget(k: usize, l: usize, budget: u64) -> Self {
        assert!(k >= 1 && l >= 1, "state and symbol counts must be positive");
        Self { k, l, budget }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn engine(&self, max_len: usize, direction: Direction) -> Engine {
        Engine::new(self.k, self.l, max_len, direction, self.budget)
    }

    /// `ln Q(x)`.
    pub fn log_prob(&self, x: &[usize]) -> Result<f64> {
        Ok(self.prefix_log_probs(x)?.last().copied().unwrap_or(0.0))
    }

    /// `ln Q(x_1..t)` for `t = 1..=n` from a single forward pass.
    pub fn prefix_log_probs(&self, x: &[usize]) -> Result<Vec<f64>> {
        check_symbols(x, self.l)?;
        check_budget(x, self.k, self.l, self.budget)?;
        self.engine(x.len(), Direction::Append).sweep(x)
    }

    /// `ln Q(x_{n-t+1..n})` for `t = 1..=n` from a single backward pass.
    pub fn suffix_log_probs(&self, x: &[usize]) -> Result<Vec<f64>> {
        check_symbols(x, self.l)?;
        check_budget(x, self.k, self.l, self.budget)?;
        self.engine(x.len(), Direction::Prepend).sweep(x)
    }

    /// Longest suffix of `x` whose suffix conditionals fit in the budget.
    pub fn largest_feasible_suffix(&self, x: &[usize]) -> usize {
        let mut hist = vec![0usize; self.l];
        hist[0] += 1; // room for the appended symbol
        let mut best = 0;
        for (t, &s) in x.iter().rev().enumerate() {
            hist[s] += 1;
            if layer_size_estimate(&hist, self.k) > self.budget as f64 {
                break;
            }
            best = t + 1;
        }
        best
    }
}

impl Assignment for MarginalAssignment {
    fn alphabet(&self) -> usize {
        self.l
    }

    fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
        check_symbols(prefix, self.l)?;
        if prefix.is_empty() {
            return Ok(PredictiveDist::uniform(self.l));
        }
        let mut extended = prefix.to_vec();
        extended.push(0);
        check_budget(&extended, self.k, self.l, self.budget)?;
        let n = prefix.len();
        let engine = self.engine(n + 1, Direction::Append);
        // one shared pass over the prefix, then one step per candidate symbol
        let logw = match &engine {
            Engine::Small(dp) => extend_each(dp, prefix)?,
            Engine::Wide(dp) => extend_each(dp, prefix)?,
            Engine::Big(dp) => extend_each(dp, prefix)?,
        };
        PredictiveDist::from_log_weights(&logw).ok_or(Error::ImpossibleSequence)
    }

    fn joint_log_prob(&self, x: &[usize]) -> Result<f64> {
        self.log_prob(x)
    }

    /// Reads `x` right to left so that all suffixes share one pass; one more
    /// pass per candidate symbol `j` over `x` followed by `j` gives the
    /// numerators.
    fn suffix_conditionals(&self, x: &[usize]) -> Result<Vec<PredictiveDist>> {
        check_symbols(x, self.l)?;
        let n = x.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut extended = x.to_vec();
        extended.push(0);
        if check_budget(&extended, self.k, self.l, self.budget).is_err() {
            return Err(Error::BudgetExceeded {
                estimate: layer_size_estimate(&histogram(&extended, self.l), self.k),
                budget: self.budget,
                largest_feasible: Some(self.largest_feasible_suffix(x)),
            });
        }
        let engine = self.engine(n + 1, Direction::Prepend);
        let mut numerators = Vec::with_capacity(self.l);
        for j in 0..self.l {
            extended[n] = j;
            numerators.push(engine.sweep(&extended)?);
        }
        // numerators[j][t] = ln Q(x_{n-t+1..n} j) for the suffix of length t
        (1..=n)
            .map(|t| {
                let logw: Vec<f64> = (0..self.l).map(|j| numerators[j][t]).collect();
                PredictiveDist::from_log_weights(&logw).ok_or(Error::ImpossibleSequence)
            })
            .collect()
    }
}

fn extend_each<P: Packed, C: Tally>(dp: &CountDp<P, C>, prefix: &[usize]) -> Result<Vec<f64>> {
    let mut layer = dp.first(prefix[0]);
    for &s in &prefix[1..] {
        layer = dp.extend(&layer, s)?;
    }
    Ok(dp.child_log_marginals(&layer))
}

/// `Q(. | prefix)` of the marginal assignment.
pub fn marginal_conditional(prefix: &[usize], k: usize, l: usize) -> Result<PredictiveDist> {
    MarginalAssignment::new(k, l).conditional(prefix)
}

/// `ln Q(s)` for every sequence `s` of length `0..=max_len`, computed by a
/// depth-first walk that extends one dynamic-program layer per trie edge.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    k: usize,
    l: usize,
    max_len: usize,
    /// `by_len[t][index(s)]`, first symbol most significant.
    by_len: Vec<Vec<f64>>,
}

impl MarginalTable {
    pub fn build(k: usize, l: usize, max_len: usize, budget: u64, cap: f64) -> Result<Self> {
        let entries: f64 = (0..=max_len).map(|t| (l as f64).powi(t as i32)).sum();
        if entries > cap {
            return Err(Error::CapExceeded {
                required: entries,
                cap,
            });
        }
        let worst = vec![max_len.div_ceil(l); l];
        let estimate = layer_size_estimate(&worst, k);
        if estimate > budget as f64 {
            return Err(Error::BudgetExceeded {
                estimate,
                budget,
                largest_feasible: None,
            });
        }
        let mut by_len: Vec<Vec<f64>> = (0..=max_len)
            .map(|t| vec![f64::NAN; l.pow(t as u32)])
            .collect();
        by_len[0][0] = 0.0;
        match Engine::new(k, l, max_len.max(1), Direction::Append, budget) {
            Engine::Small(dp) => fill_table(&dp, l, max_len, &mut by_len)?,
            Engine::Wide(dp) => fill_table(&dp, l, max_len, &mut by_len)?,
            Engine::Big(dp) => fill_table(&dp, l, max_len, &mut by_len)?,
        }
        Ok(Self {
            k,
            l,
            max_len,
            by_len,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn index(&self, s: &[usize]) -> usize {
        s.iter().fold(0, |acc, &x| acc * self.l + x)
    }

    pub fn log_prob(&self, s: &[usize]) -> Result<f64> {
        check_symbols(s, self.l)?;
        if s.len() > self.max_len {
            return Err(Error::InvalidArgument(format!(
                "sequence of length {} beyond table length {}",
                s.len(),
                self.max_len
            )));
        }
        Ok(self.by_len[s.len()][self.index(s)])
    }
}

fn fill_table<P: Packed, C: Tally>(
    dp: &CountDp<P, C>,
    l: usize,
    max_len: usize,
    by_len: &mut [Vec<f64>],
) -> Result<()> {
    fn walk<P: Packed, C: Tally>(
        dp: &CountDp<P, C>,
        layer: &Layer<P, C>,
        index: usize,
        l: usize,
        max_len: usize,
        by_len: &mut [Vec<f64>],
    ) -> Result<()> {
        by_len[layer.len][index] = dp.log_marginal(layer);
        if layer.len + 1 == max_len {
            for (j, v) in dp.child_log_marginals(layer).into_iter().enumerate() {
                by_len[max_len][index * l + j] = v;
            }
        } else if layer.len < max_len {
            for j in 0..l {
                let child = dp.extend(layer, j)?;
                walk(dp, &child, index * l + j, l, max_len, by_len)?;
            }
        }
        Ok(())
    }
    if max_len == 0 {
        return Ok(());
    }
    for j in 0..l {
        walk(dp, &dp.first(j), j, l, max_len, by_len)?;
    }
    Ok(())
}

impl Assignment for MarginalTable {
    fn alphabet(&self) -> usize {
        self.l
    }

    fn conditional(&self, prefix: &[usize]) -> Result<PredictiveDist> {
        let base = self.log_prob(prefix)?;
        if base == f64::NEG_INFINITY {
            return Err(Error::ImpossibleSequence);
        }
        let mut s = prefix.to_vec();
        s.push(0);
        let mut logw = Vec::with_capacity(self.l);
        for j in 0..self.l {
            *s.last_mut().expect("nonempty") = j;
            logw.push(self.log_prob(&s)? - base);
        }
        PredictiveDist::from_log_weights(&logw).ok_or(Error::ImpossibleSequence)
    }

    fn joint_log_prob(&self, x: &[usize]) -> Result<f64> {
        self.log_prob(x)
    }
}
