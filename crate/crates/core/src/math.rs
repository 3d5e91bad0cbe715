//! Log-domain numerics shared by the assignments and the exact-enumeration code.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `ln(a (a+1) ... (a+m-1))`, the log of the rising factorial.
pub fn log_rising(a: f64, m: u64) -> f64 {
    if m == 0 {
        0.0
    } else {
        libm::lgamma(a + m as f64) - libm::lgamma(a)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator that rescales when a larger term arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Natural log of an arbitrary-size non-negative integer.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits < 1000 {
        if let Some(v) = n.to_f64() {
            return v.ln();
        }
    }
    // keep the top 64 bits and account for the shift separately
    let shift = bits - 64;
    let top = (n >> shift).to_u64().unwrap_or(u64::MAX) as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Table of `ln m!` for `m <= max`, summed exactly in increasing order.
pub(crate) fn ln_factorial_table(max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max + 1);
    table.push(0.0);
    for m in 1..=max {
        table.push(ln_factorial(m as u64));
    }
    table
}

/// Table of `log_rising(a, m)` for `m <= max`.
pub(crate) fn log_rising_table(a: usize, max: usize) -> Vec<f64> {
    (0..=max).map(|m| log_rising(a as f64, m as u64)).collect()
}
