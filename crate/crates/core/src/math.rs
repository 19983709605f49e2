//! Small numeric helpers shared across modules.

use std::sync::OnceLock;

const TABLE_LEN: usize = 4096;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_LEN);
        t.push(0.0);
        for i in 1..TABLE_LEN {
            let prev = t[i - 1];
            t.push(prev + (i as f64).ln());
        }
        t
    })
}

/// ln(n!)
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < TABLE_LEN {
        ln_fact_table()[n as usize]
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// ln(n!!) for even n, the only case that occurs for doubled edge counts.
pub fn ln_double_factorial_even(n: u64) -> f64 {
    debug_assert!(n % 2 == 0);
    let m = n / 2;
    m as f64 * std::f64::consts::LN_2 + ln_factorial(m)
}

/// ln C(n, k); C(n, k) = 0 for k > n gives -inf.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if k < 64 && n as usize >= TABLE_LEN {
        // avoids cancellation between huge ln-gamma values
        return (0..k).map(|i| ((n - i) as f64).ln()).sum::<f64>() - ln_factorial(k);
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln C(n, k) with signed arguments: C(n, k) for k < 0 is taken as 1 when
/// k = -1 and n = -1 (empty middle-value sets), otherwise 0.
pub fn ln_binomial_signed(n: i64, k: i64) -> f64 {
    if k < 0 {
        return if k == -1 { 0.0 } else { f64::NEG_INFINITY };
    }
    if n < k {
        return f64::NEG_INFINITY;
    }
    ln_binomial(n as u64, k as u64)
}

/// ln(2 cosh h), stable for large |h|.
pub fn ln_2cosh(h: f64) -> f64 {
    let a = h.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// ln(1 + 2 cosh h), stable for large |h|.
pub fn ln_1p2cosh(h: f64) -> f64 {
    let a = h.abs();
    let e = (-a).exp();
    a + (e + e * e).ln_1p()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
