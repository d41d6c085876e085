//! Precision limiting for bids and scores: values are kept to an 8-bit
//! significand and an 8-bit exponent, rounding at random between the two
//! nearest representable neighbours so the result is unbiased.

use rand::Rng;

use crate::error::{invalid, Result};

const SIGNIFICAND_BITS: i32 = 8;
/// Binary exponent range, in the `x = m * 2^e, 0.5 <= |m| < 1` convention.
pub const MIN_EXPONENT: i32 = -128;
pub const MAX_EXPONENT: i32 = 127;

/// Largest representable magnitude: 255 * 2^(127 - 8).
pub fn max_representable() -> f64 {
    255.0 * 2f64.powi(MAX_EXPONENT - SIGNIFICAND_BITS)
}

/// Splits a finite, non-zero, normal `x` into `(m, e)` with `x = m * 2^e`
/// and `0.5 <= |m| < 1`.
pub(crate) fn frexp(x: f64) -> (f64, i32) {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        // Subnormal: scale into the normal range first.
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let exp = biased - 1022;
    let mantissa = f64::from_bits((bits & !(0x7ff << 52)) | (1022u64 << 52));
    (mantissa, exp)
}

/// True when `x` is zero or `s * 2^(e - 8)` with integer `128 <= |s| <= 255`
/// and `e` within the exponent range.
pub fn is_representable(x: f64) -> bool {
    if x == 0.0 {
        return true;
    }
    if !x.is_finite() {
        return false;
    }
    let (m, e) = frexp(x);
    let scaled = m * 2f64.powi(SIGNIFICAND_BITS);
    (MIN_EXPONENT..=MAX_EXPONENT).contains(&e) && scaled.fract() == 0.0
}

pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<f64> {
    if !x.is_finite() {
        return Err(invalid(format!("cannot round non-finite value {x}")));
    }
    if x == 0.0 {
        return Ok(x);
    }
    let (m, e) = frexp(x);
    if e > MAX_EXPONENT {
        return Ok(max_representable().copysign(x));
    }
    if e < MIN_EXPONENT {
        return Ok(0.0f64.copysign(x));
    }
    let scaled = m * 2f64.powi(SIGNIFICAND_BITS);
    let lower = scaled.floor();
    let frac = scaled - lower;
    let chosen = if frac > 0.0 && rng.random::<f64>() < frac { lower + 1.0 } else { lower };
    let rounded = chosen * 2f64.powi(e - SIGNIFICAND_BITS);
    Ok(rounded.clamp(-max_representable(), max_representable()))
}
