//! Small information-theoretic helpers shared across modules.

/// Probabilities at or below this are treated as exact zeros in logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Natural log with the zero floor applied.
#[inline]
pub fn ln_or_neg_inf(p: f64) -> f64 {
    if p > LOG_FLOOR {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Shannon entropy in bits of a pmf.
pub fn entropy_bits(pmf: impl IntoIterator<Item = f64>) -> f64 {
    pmf.into_iter()
        .filter(|&p| p > LOG_FLOOR)
        .map(|p| -p * p.log2())
        .sum()
}

/// Binary entropy function in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_bits([p, 1.0 - p])
}
