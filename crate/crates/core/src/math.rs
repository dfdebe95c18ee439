//! Scalar float helpers.
//!
//! The crate is `no_std`, so transcendental functions route through `libm`.
//! Everything here is deterministic: the same inputs produce the same bits
//! on every run and every thread count.

/// Floor applied inside logarithms of probabilities, so that `0 * log 0`
/// contributes exactly zero and near-zero masses stay finite.
pub const LN_FLOOR: f64 = 1e-12;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn pow(base: f64, exponent: f64) -> f64 {
    libm::pow(base, exponent)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

/// `log(max(x, LN_FLOOR))`.
#[inline]
pub fn ln_floored(x: f64) -> f64 {
    ln(if x > LN_FLOOR { x } else { LN_FLOOR })
}

/// Logistic function, stable for arguments of any magnitude.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `log(sum(exp(v)))` with the max-subtraction trick.
///
/// Panics on an empty slice.
pub fn logsumexp(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "logsumexp of empty slice");
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        if x > hi {
            hi = x;
        }
    }
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in v {
        sum += exp(x - hi);
    }
    hi + ln(sum)
}

#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
