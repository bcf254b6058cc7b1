//! Word-parallel weight stitching and FP6 -> FP16 de-quantization.
//!
//! Registers are modeled as `u32`. Each step stitches four E3M2 codes from
//! a 2-bit-segment word and a 4-bit-segment word into the top six bits of
//! the four byte lanes, then turns all four into half-precision patterns
//! with one set of mask/shift/or operations. The result is the
//! bias-deferred cast (exponent field copied unchanged); the per-row scales
//! carry the `2^(15 - bias)` correction.

use crate::codec::new_cast_bits;
use crate::error::{FpxError, Result};
use crate::format::FpxFormat;
use crate::fp16;
use crate::prepack::{segment_location, SplitScheme, CODES_PER_SLICE, WARP_SIZE};

/// High 2-bit segment of each byte lane.
pub const FRAG1_MASK: u32 = 0xc0c0_c0c0;
/// High nibble of each byte lane.
pub const FRAG2_MASK: u32 = 0xf0f0_f0f0;
pub const SIGN_MASK: u32 = 0x8080_8080;
/// Exponent and mantissa bits after the right shift by two.
pub const BODY_MASK: u32 = 0x1f1f_1f1f;
/// Byte lanes 3 and 1, already in half-precision top-byte position.
pub const ODD_LANES_MASK: u32 = 0x9f00_9f00;
/// Byte lanes 2 and 0, moved up by eight bits afterwards.
pub const EVEN_LANES_MASK: u32 = 0x009f_009f;

/// Pair registers one thread produces per slice.
pub const PAIRS_PER_SLICE: usize = CODES_PER_SLICE / 2;
/// Scales one thread needs per slice (two rows per chunk).
pub const SCALES_PER_SLICE: usize = 8;

/// Four 6-bit codes at bits `[7:2]` of each byte lane.
#[inline]
pub fn stitch_step(frag1: u32, frag2: u32) -> u32 {
    let hi = frag1 & FRAG1_MASK;
    let lo = (frag2 & FRAG2_MASK) >> 2;
    hi | lo
}

/// Four-way cast of stitched E3M2 codes to half patterns.
///
/// Returns `(r1, r2)`: `r1` holds byte lanes 1 (low half) and 3 (high
/// half), `r2` holds lanes 0 and 2.
#[inline]
pub fn dequant4(stitched: u32) -> (u32, u32) {
    let sign = stitched & SIGN_MASK;
    let body = (stitched >> 2) & BODY_MASK;
    let v = sign | body;
    (v & ODD_LANES_MASK, (v & EVEN_LANES_MASK) << 8)
}

/// Multiply both halves of a pair register by one half-precision scale.
#[inline]
pub fn scale_pair(pair: u32, scale: u16) -> u32 {
    let lo = fp16::mul(pair as u16, scale);
    let hi = fp16::mul((pair >> 16) as u16, scale);
    ((hi as u32) << 16) | lo as u32
}

/// Scale each pair register by its effective row scale.
pub fn apply_scales(pairs: &[u32], scales: &[u16]) -> Result<Vec<u32>> {
    if pairs.len() != scales.len() {
        return Err(FpxError::DimensionMismatch(format!(
            "{} pair registers but {} scales",
            pairs.len(),
            scales.len()
        )));
    }
    Ok(pairs.iter().zip(scales).map(|(&p, &s)| scale_pair(p, s)).collect())
}

/// One thread's registers for one slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadSlice {
    /// Slice-local words per segment (for E3M2: 2 words of 2-bit segments,
    /// then 4 words of 4-bit segments).
    pub segments: Vec<Vec<u32>>,
    /// Effective scales for the rows of pair registers `2j` and `2j + 1`
    /// of chunk `j / 2`, ordered as the loop reads them.
    pub scales: [u16; SCALES_PER_SLICE],
}

/// The 32 thread states for one 64x16 slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpSliceState {
    pub threads: Vec<ThreadSlice>,
}

/// De-quantize one thread's slice with the stitching loop: eight steps of
/// four codes, advancing the 2-bit word every fourth step and the 4-bit word
/// every second step, shifting the current word left in between.
pub fn dequant_thread_slice(frag1: [u32; 2], frag2: [u32; 4], scales: &[u16; SCALES_PER_SLICE]) -> [u32; PAIRS_PER_SLICE] {
    let mut frag1 = frag1;
    let mut frag2 = frag2;
    let (mut p1, mut p2) = (0usize, 0usize);
    let mut out = [0u32; PAIRS_PER_SLICE];
    for i in 0..8 {
        let stitched = stitch_step(frag1[p1], frag2[p2]);
        if i % 4 == 3 {
            p1 += 1;
        } else {
            frag1[p1] <<= 2;
        }
        if i % 2 == 1 {
            p2 += 1;
        } else {
            frag2[p2] <<= 4;
        }
        let (r1, r2) = dequant4(stitched);
        out[i * 2] = scale_pair(r1, scales[i / 2 * 2]);
        out[i * 2 + 1] = scale_pair(r2, scales[i / 2 * 2 + 1]);
    }
    out
}

/// Scalar path for any format: rebuild each code from its segments, apply
/// the bias-deferred cast and the effective scale.
pub fn dequant_thread_slice_scalar(
    format: FpxFormat,
    split: &SplitScheme,
    state: &ThreadSlice,
) -> Result<[u32; PAIRS_PER_SLICE]> {
    let mut halves = [0u16; CODES_PER_SLICE];
    for (pos, half) in halves.iter_mut().enumerate() {
        let mut code = 0u32;
        for (seg, &w) in split.widths().iter().enumerate() {
            let (word, bit) = segment_location(pos, w as u32);
            let words = &state.segments[seg];
            let seg_bits = (words[word] >> bit) & ((1 << w) - 1);
            code |= seg_bits << split.shift(seg);
        }
        let scale = state.scales[pos / 4 / 2 * 2 + (pos / 2) % 2];
        *half = fp16::mul(new_cast_bits(code, format)?, scale);
    }
    let mut out = [0u32; PAIRS_PER_SLICE];
    for (j, o) in out.iter_mut().enumerate() {
        *o = ((halves[2 * j + 1] as u32) << 16) | halves[2 * j] as u32;
    }
    Ok(out)
}

/// De-quantize a whole warp slice. Uses the word-parallel kernel for E3M2
/// with the 2+4 split and the scalar path otherwise.
pub fn dequant_slice(
    state: &WarpSliceState,
    format: FpxFormat,
    split: &SplitScheme,
) -> Result<Vec<[u32; PAIRS_PER_SLICE]>> {
    if state.threads.len() != WARP_SIZE {
        return Err(FpxError::DimensionMismatch(format!(
            "warp slice needs {WARP_SIZE} threads, got {}",
            state.threads.len()
        )));
    }
    for t in &state.threads {
        let ok = t.segments.len() == split.segments()
            && t.segments.iter().zip(split.widths()).all(|(s, &w)| s.len() == w as usize);
        if !ok {
            return Err(FpxError::DimensionMismatch("thread slice words do not match split".into()));
        }
    }
    if split.is_word_parallel(format) {
        Ok(state
            .threads
            .iter()
            .map(|t| {
                let f1 = [t.segments[0][0], t.segments[0][1]];
                let f2 = [t.segments[1][0], t.segments[1][1], t.segments[1][2], t.segments[1][3]];
                dequant_thread_slice(f1, f2, &t.scales)
            })
            .collect())
    } else {
        state.threads.iter().map(|t| dequant_thread_slice_scalar(format, split, t)).collect()
    }
}

/// Split a pair register into `(lane 0, lane 1)` half patterns.
#[inline]
pub fn pair_halves(pair: u32) -> (u16, u16) {
    (pair as u16, (pair >> 16) as u16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_scalar;
    use crate::quantize::effective_scale;

    #[test]
    fn kernel_constants() {
        assert_eq!(
            [FRAG1_MASK, FRAG2_MASK, SIGN_MASK, BODY_MASK, ODD_LANES_MASK, EVEN_LANES_MASK],
            [0xc0c0c0c0, 0xf0f0f0f0, 0x80808080, 0x1f1f1f1f, 0x9f009f00, 0x009f009f]
        );
    }

    #[test]
    fn stitch_examples() {
        assert_eq!(stitch_step(0xc0c0c0c0, 0xf0f0f0f0), 0xfcfcfcfc);
        assert_eq!(stitch_step(0, 0), 0);
        assert_eq!(stitch_step(0x40404040, 0xC0C0C0C0), 0x70707070);
        // Bits outside the masks are ignored.
        assert_eq!(stitch_step(0x3f3f3f3f, 0x0f0f0f0f), 0);
    }

    #[test]
    fn dequant4_examples() {
        // One lane at a time; lane 1 -> low half of r1.
        assert_eq!(dequant4(0x0000_3000), (0x0000_0C00, 0));
        assert_eq!(dequant4(0x0000_B000), (0x0000_8C00, 0));
        assert_eq!(dequant4(0x3000_0000), (0x0C00_0000, 0));
        assert_eq!(dequant4(0x0000_0030), (0, 0x0000_0C00));
        assert_eq!(dequant4(0x0030_0000), (0, 0x0C00_0000));
        assert_eq!(dequant4(0), (0, 0));
    }

    #[test]
    fn dequant4_lanes_are_independent() {
        for code in 0u32..64 {
            let lane_byte = code << 2;
            let expect = new_cast_bits(code, FpxFormat::E3M2).unwrap() as u32;
            for lane in 0..4 {
                let (r1, r2) = dequant4(lane_byte << (8 * lane));
                let got = match lane {
                    0 => r2 & 0xffff,
                    1 => r1 & 0xffff,
                    2 => r2 >> 16,
                    _ => r1 >> 16,
                };
                assert_eq!(got, expect, "code {code} lane {lane}");
                // Nothing leaks into the other three halves.
                let others = (r1 as u64 | (r2 as u64) << 32) & !(0xffffu64 << [32, 0, 48, 16][lane]);
                assert_eq!(others, 0);
            }
        }
    }

    #[test]
    fn apply_scale_examples() {
        let k = fp16::from_f32(4096.0);
        assert_eq!(scale_pair(0x0C00, k) & 0xffff, 0x3C00);
        assert_eq!(scale_pair(0x8C00, k) & 0xffff, 0xBC00);
        assert_eq!(apply_scales(&[0x8C00_0C00], &[k]).unwrap(), vec![0xBC00_3C00]);
        assert!(apply_scales(&[0, 0], &[k]).is_err());
        // Subnormal code 1 with unit row scale: the oracle value 0.0625.
        let eff = effective_scale(fp16::ONE, FpxFormat::E3M2).unwrap();
        let h = new_cast_bits(1, FpxFormat::E3M2).unwrap();
        assert_eq!(h, 0x0100);
        assert_eq!(fp16::mul(h, eff), fp16::from_f32(decode_scalar(1, FpxFormat::E3M2).unwrap()));
    }

    #[test]
    fn thread_slice_constant_codes() {
        // Code 0b001100 = 1.0 everywhere; unit row scales.
        let eff = effective_scale(fp16::ONE, FpxFormat::E3M2).unwrap();
        let out = dequant_thread_slice([0; 2], [0xCCCC_CCCC; 4], &[eff; 8]);
        assert!(out.iter().all(|&p| p == 0x3C00_3C00));
        // Code 0b011100 = 16.0.
        let out = dequant_thread_slice([0x5555_5555; 2], [0xCCCC_CCCC; 4], &[eff; 8]);
        assert!(out.iter().all(|&p| p == 0x4C00_4C00));
        let out = dequant_thread_slice([0; 2], [0; 4], &[eff; 8]);
        assert!(out.iter().all(|&p| p == 0));
    }

    #[test]
    fn scalar_path_agrees_with_word_parallel() {
        let split = SplitScheme::default_for(FpxFormat::E3M2);
        let mut seed = 0x1234_5678u32;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 17;
            seed ^= seed << 5;
            seed
        };
        for _ in 0..200 {
            let f1 = [next(), next()];
            let f2 = [next(), next(), next(), next()];
            let scales: [u16; 8] = std::array::from_fn(|_| 0x3000 + (next() % 0x2000) as u16);
            let state = ThreadSlice { segments: vec![f1.to_vec(), f2.to_vec()], scales };
            assert_eq!(
                dequant_thread_slice(f1, f2, &scales),
                dequant_thread_slice_scalar(FpxFormat::E3M2, &split, &state).unwrap()
            );
        }
    }
}
