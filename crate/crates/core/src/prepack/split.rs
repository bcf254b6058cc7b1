//! Segment split and bit reordering of a thread's 128 codes.
//!
//! Each code is cut into power-of-two-wide segments, high bits first. The
//! segments of one width go into their own 32-bit words at the positions the
//! runtime's mask-and-shift sequence reads them from:
//!
//! * the runtime handles four codes per step, one per byte lane;
//! * step `i` of a slice reads group `i % (8 / w)` of word `i / (8 / w)`,
//!   where group `g` occupies bits `[7 - w*g, 8 - w*(g+1)]` of every byte
//!   lane (the runtime shifts the word left by `w` between groups);
//! * the four codes of a step, in consumption order, sit in byte lanes
//!   `[1, 3, 0, 2]`. The de-quantizer emits lanes 1 and 3 as the first half
//!   pair and lanes 0 and 2 as the second, so reading lanes from the most
//!   significant down gives consumption order 2, 4, 1, 3.

use crate::error::{FpxError, Result};
use crate::format::FpxFormat;
use crate::prepack::layout::{CODES_PER_SLICE, CODES_PER_THREAD};

/// Byte lane holding the `slot`-th code of a four-code step.
pub const BYTE_LANE_OF_SLOT: [u32; 4] = [1, 3, 0, 2];

/// Segment widths, high bits first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitScheme {
    widths: Vec<u8>,
}

impl SplitScheme {
    pub fn new(widths: Vec<u8>, format: FpxFormat) -> Result<Self> {
        let err = |reason| FpxError::InvalidSplit { widths: widths.clone(), format, reason };
        if widths.is_empty() {
            return Err(err("no segments"));
        }
        if widths.iter().any(|w| ![1, 2, 4].contains(w)) {
            return Err(err("segment widths must be 1, 2 or 4"));
        }
        if widths.iter().map(|&w| w as u32).sum::<u32>() != format.total_bits() {
            return Err(err("widths must sum to the format width"));
        }
        Ok(SplitScheme { widths })
    }

    /// Preset split per code width: 6 bits as 2+4, 5 as 4+1, 3 as 2+1;
    /// other widths greedily, widest first.
    pub fn default_for(format: FpxFormat) -> SplitScheme {
        let widths = match format.total_bits() {
            6 => vec![2, 4],
            n => {
                let mut left = n as u8;
                let mut v = Vec::new();
                for w in [4u8, 2, 1] {
                    while left >= w {
                        v.push(w);
                        left -= w;
                    }
                }
                v
            }
        };
        SplitScheme { widths }
    }

    pub fn widths(&self) -> &[u8] {
        &self.widths
    }

    pub fn segments(&self) -> usize {
        self.widths.len()
    }

    /// Right shift that brings segment `seg` to the bottom of the code.
    pub fn shift(&self, seg: usize) -> u32 {
        self.widths[seg + 1..].iter().map(|&w| w as u32).sum()
    }

    /// Words per thread per tile for segment `seg`.
    pub fn words_per_thread(&self, seg: usize) -> usize {
        CODES_PER_THREAD * self.widths[seg] as usize / 32
    }

    /// Whether the word-parallel stitch/de-quantize kernel applies: only
    /// E3M2 with the 2+4 split.
    pub fn is_word_parallel(&self, format: FpxFormat) -> bool {
        format == FpxFormat::E3M2 && self.widths == [2, 4]
    }
}

/// Word index and bit offset (of the segment's least significant bit) for
/// the `pos`-th code of a thread in a segment of width `width`.
#[inline]
pub fn segment_location(pos: usize, width: u32) -> (usize, u32) {
    let slice = pos / CODES_PER_SLICE;
    let within = pos % CODES_PER_SLICE;
    let step = within / 4;
    let lane = BYTE_LANE_OF_SLOT[within % 4];
    let groups = (8 / width) as usize;
    let word = slice * width as usize + step / groups;
    let group = (step % groups) as u32;
    (word, lane * 8 + 8 - width * (group + 1))
}

/// Split a thread's 128 codes into per-segment word sequences.
pub fn split_and_reorder(codes: &[u8], split: &SplitScheme) -> Result<Vec<Vec<u32>>> {
    if codes.len() != CODES_PER_THREAD {
        return Err(FpxError::DimensionMismatch(format!(
            "split needs {CODES_PER_THREAD} codes, got {}",
            codes.len()
        )));
    }
    let mut out = Vec::with_capacity(split.segments());
    for (seg, &w) in split.widths().iter().enumerate() {
        let w = w as u32;
        let mask = (1u32 << w) - 1;
        let shift = split.shift(seg);
        let mut words = vec![0u32; split.words_per_thread(seg)];
        for (pos, &code) in codes.iter().enumerate() {
            let (word, bit) = segment_location(pos, w);
            words[word] |= ((code as u32 >> shift) & mask) << bit;
        }
        out.push(words);
    }
    Ok(out)
}

/// Inverse of [`split_and_reorder`].
pub fn merge_segments(words: &[Vec<u32>], split: &SplitScheme) -> Result<[u8; CODES_PER_THREAD]> {
    if words.len() != split.segments() {
        return Err(FpxError::DimensionMismatch(format!(
            "{} segment word lists for a {}-segment split",
            words.len(),
            split.segments()
        )));
    }
    let mut codes = [0u8; CODES_PER_THREAD];
    for (seg, (&w, seg_words)) in split.widths().iter().zip(words).enumerate() {
        if seg_words.len() != split.words_per_thread(seg) {
            return Err(FpxError::DimensionMismatch(format!(
                "segment {seg}: {} words, expected {}",
                seg_words.len(),
                split.words_per_thread(seg)
            )));
        }
        let w = w as u32;
        let shift = split.shift(seg);
        for (pos, code) in codes.iter_mut().enumerate() {
            let (word, bit) = segment_location(pos, w);
            *code |= (((seg_words[word] >> bit) & ((1 << w) - 1)) << shift) as u8;
        }
    }
    Ok(codes)
}
