//! Half-precision helpers over raw 16-bit patterns.
//!
//! Every operation widens to `f32` (exact), computes there, and rounds back
//! once with round-to-nearest-even. Subnormals and signed zero are kept.

use half::f16;

pub const ONE: u16 = 0x3C00;
pub const MAX_FINITE: f32 = 65504.0;

#[inline]
pub fn to_f32(bits: u16) -> f32 {
    f16::from_bits(bits).to_f32()
}

#[inline]
pub fn from_f32(value: f32) -> u16 {
    f16::from_f32(value).to_bits()
}

/// Half-precision multiply. The product of two halves is exact in `f32`, so
/// this is correctly rounded.
#[inline]
pub fn mul(a: u16, b: u16) -> u16 {
    from_f32(to_f32(a) * to_f32(b))
}

#[inline]
pub fn is_finite(bits: u16) -> bool {
    bits & 0x7C00 != 0x7C00
}
