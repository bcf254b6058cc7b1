//! Minifloat format descriptors.

use std::fmt;
use std::str::FromStr;

use crate::error::{FpxError, Result};

/// A sign + `E` exponent bits + `M` mantissa bits minifloat with no
/// infinity or NaN encodings. The all-ones exponent is an ordinary binade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpxFormat {
    exp_bits: u8,
    man_bits: u8,
}

impl FpxFormat {
    /// The FP6 preset.
    pub const E3M2: FpxFormat = FpxFormat { exp_bits: 3, man_bits: 2 };
    pub const E2M3: FpxFormat = FpxFormat { exp_bits: 2, man_bits: 3 };
    /// FP5.
    pub const E2M2: FpxFormat = FpxFormat { exp_bits: 2, man_bits: 2 };
    /// FP3.
    pub const E1M1: FpxFormat = FpxFormat { exp_bits: 1, man_bits: 1 };
    pub const E4M3: FpxFormat = FpxFormat { exp_bits: 4, man_bits: 3 };

    pub fn new(exp_bits: u8, man_bits: u8) -> Result<Self> {
        if !(1..=5).contains(&exp_bits) {
            return Err(FpxError::InvalidFormat(format!("exponent bits {exp_bits} not in 1..=5")));
        }
        if man_bits > 6 {
            return Err(FpxError::InvalidFormat(format!("mantissa bits {man_bits} not in 0..=6")));
        }
        let total = 1 + exp_bits + man_bits;
        if !(3..=8).contains(&total) {
            return Err(FpxFormat::bad_total(total));
        }
        Ok(FpxFormat { exp_bits, man_bits })
    }

    fn bad_total(total: u8) -> FpxError {
        FpxError::InvalidFormat(format!("total width {total} not in 3..=8"))
    }

    pub fn exp_bits(self) -> u32 {
        self.exp_bits as u32
    }

    pub fn man_bits(self) -> u32 {
        self.man_bits as u32
    }

    pub fn total_bits(self) -> u32 {
        1 + self.exp_bits() + self.man_bits()
    }

    pub fn bias(self) -> i32 {
        (1 << (self.exp_bits() - 1)) - 1
    }

    /// Number of distinct codes, `2^total_bits`.
    pub fn code_count(self) -> u32 {
        1 << self.total_bits()
    }

    pub fn sign_bit(self) -> u32 {
        1 << (self.total_bits() - 1)
    }

    /// Largest positive code: all exponent and mantissa bits set.
    pub fn max_code(self) -> u32 {
        self.sign_bit() - 1
    }

    /// Largest representable magnitude.
    pub fn max_value(self) -> f32 {
        let max_exp = (1i32 << self.exp_bits()) - 1 - self.bias();
        let frac = 2.0 - (-(self.man_bits() as i32) as f32).exp2();
        frac * (max_exp as f32).exp2()
    }

    /// Unbiased exponent of the smallest normal binade (`1 - bias`).
    pub fn min_exponent(self) -> i32 {
        1 - self.bias()
    }

    /// Whether every code of the format is exactly representable as a finite
    /// half, which the half-precision de-quantization paths require.
    pub fn fits_half(self) -> bool {
        self.max_value() <= crate::fp16::MAX_FINITE
    }

    /// The exponent `15 - bias` of the constant that restores magnitudes
    /// after the bias-deferred cast.
    pub fn half_rebias_exponent(self) -> i32 {
        15 - self.bias()
    }
}

impl fmt::Display for FpxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}m{}", self.exp_bits, self.man_bits)
    }
}

impl FromStr for FpxFormat {
    type Err = FpxError;

    /// Accepts `eXmY` (case-insensitive) or the aliases `fp6`, `fp5`, `fp3`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "fp6" => return Ok(FpxFormat::E3M2),
            "fp5" => return Ok(FpxFormat::E2M2),
            "fp3" => return Ok(FpxFormat::E1M1),
            _ => {}
        }
        let bad = || FpxError::InvalidFormat(format!("cannot parse {s:?}; expected e.g. e3m2"));
        let rest = lower.strip_prefix('e').ok_or_else(bad)?;
        let (e, m) = rest.split_once('m').ok_or_else(bad)?;
        let e: u8 = e.parse().map_err(|_| bad())?;
        let m: u8 = m.parse().map_err(|_| bad())?;
        FpxFormat::new(e, m)
    }
}
