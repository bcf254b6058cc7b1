//! Scalar encode/decode between FPx codes and `f32`.
//!
//! Code layout is `S | E | M` from the most significant bit down. Normal
//! codes decode to `(-1)^S * 1.M * 2^(E - bias)`; a zero exponent field is
//! subnormal, `(-1)^S * 0.M * 2^(1 - bias)`. Every code of every supported
//! format is exactly representable in `f32`.

use crate::error::{FpxError, Result};
use crate::format::FpxFormat;

/// Exact `2^e` for exponents within the normal `f32` range.
#[inline]
pub(crate) fn pow2(e: i32) -> f32 {
    debug_assert!((-126..=127).contains(&e));
    f32::from_bits(((e + 127) as u32) << 23)
}

#[inline]
fn fields(code: u32, format: FpxFormat) -> (u32, u32, u32) {
    let m = format.man_bits();
    let e = format.exp_bits();
    let sign = code >> (e + m);
    let exp = (code >> m) & ((1 << e) - 1);
    let man = code & ((1 << m) - 1);
    (sign, exp, man)
}

pub fn decode_scalar(code: u32, format: FpxFormat) -> Result<f32> {
    if code >= format.code_count() {
        return Err(FpxError::InvalidCode { code, format });
    }
    Ok(decode_unchecked(code, format))
}

/// Decode without the range check; `code` must be below `format.code_count()`.
#[inline]
pub(crate) fn decode_unchecked(code: u32, format: FpxFormat) -> f32 {
    let (sign, exp, man) = fields(code, format);
    let m = format.man_bits() as i32;
    let magnitude = if exp == 0 {
        man as f32 * pow2(format.min_exponent() - m)
    } else {
        ((1u32 << m) + man) as f32 * pow2(exp as i32 - format.bias() - m)
    };
    if sign == 1 {
        -magnitude
    } else {
        magnitude
    }
}

/// Distance between adjacent codes around magnitude `|value|`.
///
/// For values past the largest binade this returns that binade's spacing.
pub fn code_spacing(value: f32, format: FpxFormat) -> f32 {
    let m = format.man_bits() as i32;
    let a = value.abs();
    let e = if a == 0.0 { i32::MIN } else { binade(a) };
    let max_exp = (1i32 << format.exp_bits()) - 1 - format.bias();
    let e = e.clamp(format.min_exponent(), max_exp);
    pow2(e - m)
}

/// `floor(log2(a))` for a positive finite `a`.
fn binade(a: f32) -> i32 {
    let bits = a.to_bits();
    let biased = (bits >> 23) as i32;
    if biased == 0 {
        // f32 subnormal
        let mant = bits & 0x007F_FFFF;
        -127 + (31 - mant.leading_zeros() as i32) - 22
    } else {
        biased - 127
    }
}

/// Round `value` to the nearest code, ties to even mantissa, saturating at
/// the largest magnitude. Negative zero keeps its sign.
pub fn encode_scalar(value: f32, format: FpxFormat) -> Result<u32> {
    if !value.is_finite() {
        return Err(FpxError::InvalidValue(value));
    }
    let sign = if value.is_sign_negative() { format.sign_bit() } else { 0 };
    let a = value.abs();
    if a >= format.max_value() {
        return Ok(sign | format.max_code());
    }
    if a == 0.0 {
        return Ok(sign);
    }
    let m = format.man_bits() as i32;
    let e = binade(a).max(format.min_exponent());
    // Exact: scaling by a power of two.
    let q = a / pow2(e - m);
    let floor = q.floor();
    let below = if e == format.min_exponent() && floor < (1u32 << m) as f32 {
        floor as u32
    } else {
        // Normal binade.
        ((e + format.bias()) as u32) * (1 << m) + floor as u32 - (1 << m)
    };
    // Magnitudes are consecutive integers, so `below + 1` is the next code
    // up even across a binade boundary. Ties go to the even code.
    let frac = q - floor;
    let magnitude = if frac > 0.5 || (frac == 0.5 && below & 1 == 1) { below + 1 } else { below };
    Ok(sign | magnitude.min(format.max_code()))
}

/// Half-precision pattern of the bias-deferred cast: sign copied, the FPx
/// exponent field placed unchanged in the half exponent, the mantissa
/// left-aligned in the half mantissa, everything else zero.
///
/// Multiplying the result by `2^(15 - bias)` yields the exact FPx value.
pub fn new_cast_bits(code: u32, format: FpxFormat) -> Result<u16> {
    if code >= format.code_count() {
        return Err(FpxError::InvalidCode { code, format });
    }
    let (sign, exp, man) = fields(code, format);
    Ok(((sign << 15) | (exp << 10) | (man << (10 - format.man_bits()))) as u16)
}
