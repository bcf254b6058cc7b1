//! Ahead-of-time pre-packing of quantized weights.
//!
//! For every 64x64 tile (row-major tile order) and every segment of the
//! split: gather each thread's 128 codes in consumption order, cut them into
//! segment words, and interleave the 32 threads' words in jagged order.
//! Each tile contributes `512 * w` bytes to the stream of a `w`-bit segment.

mod assemble;
mod layout;
mod split;

pub use assemble::{assemble_warp, disassemble_warp, le_bytes_to_words, words_to_le_bytes};
pub use layout::{
    fragment_coords, gather_per_thread, pair_row, position_coords, CHUNKS, CODES_PER_SLICE,
    CODES_PER_THREAD, LANES, PAIRS, SLICES, WARP_SIZE,
};
pub use split::{merge_segments, segment_location, split_and_reorder, SplitScheme, BYTE_LANE_OF_SLOT};

use rayon::prelude::*;

use crate::error::{FpxError, Result};
use crate::format::FpxFormat;
use crate::quantize::{QuantizedMatrix, TILE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedWeights {
    format: FpxFormat,
    split: SplitScheme,
    rows: usize,
    cols: usize,
    orig_rows: usize,
    orig_cols: usize,
    scales: Vec<u16>,
    /// One word stream per segment, tiles back to back.
    streams: Vec<Vec<u32>>,
}

impl PackedWeights {
    /// Assemble from parts, checking the size law and dimension invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        format: FpxFormat,
        split: SplitScheme,
        rows: usize,
        cols: usize,
        orig_rows: usize,
        orig_cols: usize,
        scales: Vec<u16>,
        streams: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if split.widths().iter().map(|&w| w as u32).sum::<u32>() != format.total_bits() {
            return Err(FpxError::InvalidSplit {
                widths: split.widths().to_vec(),
                format,
                reason: "widths must sum to the format width",
            });
        }
        if rows == 0 || cols == 0 || !rows.is_multiple_of(TILE) || !cols.is_multiple_of(TILE) {
            return Err(FpxError::NotPadded { rows, cols });
        }
        if orig_rows == 0 || orig_cols == 0 || orig_rows > rows || orig_cols > cols {
            return Err(FpxError::DimensionMismatch(format!(
                "original dims {orig_rows}x{orig_cols} do not fit padded {rows}x{cols}"
            )));
        }
        if scales.len() != rows {
            return Err(FpxError::DimensionMismatch(format!("{} scales for {rows} rows", scales.len())));
        }
        if streams.len() != split.segments() {
            return Err(FpxError::DimensionMismatch(format!(
                "{} streams for {} segments",
                streams.len(),
                split.segments()
            )));
        }
        for (seg, s) in streams.iter().enumerate() {
            let want = stream_words(rows, cols, split.widths()[seg]);
            if s.len() != want {
                return Err(FpxError::DimensionMismatch(format!(
                    "segment {seg} stream has {} words, expected {want}",
                    s.len()
                )));
            }
        }
        Ok(PackedWeights { format, split, rows, cols, orig_rows, orig_cols, scales, streams })
    }

    pub fn format(&self) -> FpxFormat {
        self.format
    }

    pub fn split(&self) -> &SplitScheme {
        &self.split
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn orig_rows(&self) -> usize {
        self.orig_rows
    }

    pub fn orig_cols(&self) -> usize {
        self.orig_cols
    }

    pub fn scales(&self) -> &[u16] {
        &self.scales
    }

    pub fn streams(&self) -> &[Vec<u32>] {
        &self.streams
    }

    /// `(tile rows, tile cols)`.
    pub fn tile_grid(&self) -> (usize, usize) {
        (self.rows / TILE, self.cols / TILE)
    }

    pub fn tile_count(&self) -> usize {
        let (m, k) = self.tile_grid();
        m * k
    }

    /// Words one tile occupies in the stream of segment `seg`.
    pub fn tile_words(&self, seg: usize) -> usize {
        WARP_SIZE * self.split.words_per_thread(seg)
    }

    /// The jagged sub-stream of tile `(tile_row, tile_col)` for segment `seg`.
    pub fn tile_stream(&self, seg: usize, tile_row: usize, tile_col: usize) -> &[u32] {
        let n = self.tile_words(seg);
        let idx = tile_row * self.tile_grid().1 + tile_col;
        &self.streams[seg][idx * n..(idx + 1) * n]
    }

    /// Byte offset of a tile inside segment `seg`'s stream.
    pub fn tile_byte_offset(&self, seg: usize, tile_row: usize, tile_col: usize) -> usize {
        (tile_row * self.tile_grid().1 + tile_col) * self.tile_words(seg) * 4
    }

    /// The words `thread` owns in a tile's segment stream, in its own order.
    pub fn thread_words(&self, seg: usize, tile_row: usize, tile_col: usize, thread: usize) -> Vec<u32> {
        self.tile_stream(seg, tile_row, tile_col).iter().skip(thread).step_by(WARP_SIZE).copied().collect()
    }

    /// Little-endian bytes of a segment stream.
    pub fn stream_bytes(&self, seg: usize) -> Vec<u8> {
        words_to_le_bytes(&self.streams[seg])
    }

    /// Total bytes across all segment streams.
    pub fn stream_byte_len(&self) -> usize {
        self.streams.iter().map(|s| s.len() * 4).sum()
    }
}

fn stream_words(rows: usize, cols: usize, width: u8) -> usize {
    rows * cols * width as usize / 32
}

/// Pre-pack with the format's preset split.
pub fn pack(q: &QuantizedMatrix) -> Result<PackedWeights> {
    pack_with_split(q, SplitScheme::default_for(q.format()))
}

pub fn pack_with_split(q: &QuantizedMatrix, split: SplitScheme) -> Result<PackedWeights> {
    if !q.rows().is_multiple_of(TILE) || !q.cols().is_multiple_of(TILE) {
        return Err(FpxError::NotPadded { rows: q.rows(), cols: q.cols() });
    }
    let split = SplitScheme::new(split.widths().to_vec(), q.format())?;
    let (tiles_m, tiles_k) = (q.rows() / TILE, q.cols() / TILE);

    // Per tile: one assembled stream per segment.
    let per_tile: Vec<Vec<Vec<u32>>> = (0..tiles_m * tiles_k)
        .into_par_iter()
        .map(|idx| {
            let gathered = gather_per_thread(q, idx / tiles_k, idx % tiles_k)?;
            let mut per_seg: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(WARP_SIZE); split.segments()];
            for codes in &gathered {
                for (seg, words) in split_and_reorder(codes, &split)?.into_iter().enumerate() {
                    per_seg[seg].push(words);
                }
            }
            per_seg.iter().map(|threads| assemble_warp(threads)).collect()
        })
        .collect::<Result<_>>()?;

    let mut streams: Vec<Vec<u32>> = split
        .widths()
        .iter()
        .map(|&w| Vec::with_capacity(stream_words(q.rows(), q.cols(), w)))
        .collect();
    for tile in per_tile {
        for (seg, words) in tile.into_iter().enumerate() {
            streams[seg].extend_from_slice(&words);
        }
    }
    PackedWeights::from_parts(
        q.format(),
        split,
        q.rows(),
        q.cols(),
        q.orig_rows(),
        q.orig_cols(),
        q.scales().to_vec(),
        streams,
    )
}

/// Recover the quantized matrix from its packed form.
pub fn unpack(p: &PackedWeights) -> Result<QuantizedMatrix> {
    let (tiles_m, tiles_k) = p.tile_grid();
    let mut codes = vec![0u8; p.rows() * p.cols()];
    let cols = p.cols();
    codes.par_chunks_mut(TILE * cols).enumerate().try_for_each(|(tr, band)| -> Result<()> {
        for tc in 0..tiles_k {
            let per_seg: Vec<Vec<Vec<u32>>> = (0..p.split().segments())
                .map(|seg| disassemble_warp(p.tile_stream(seg, tr, tc)))
                .collect::<Result<_>>()?;
            for t in 0..WARP_SIZE {
                let words: Vec<Vec<u32>> = per_seg.iter().map(|s| s[t].clone()).collect();
                let thread_codes = merge_segments(&words, p.split())?;
                for (pos, &c) in thread_codes.iter().enumerate() {
                    let (r, col) = position_coords(t, pos);
                    band[r * cols + tc * TILE + col] = c;
                }
            }
        }
        Ok(())
    })?;
    debug_assert_eq!(tiles_m * TILE, p.rows());
    QuantizedMatrix::from_parts(
        p.format(),
        p.rows(),
        p.cols(),
        p.orig_rows(),
        p.orig_cols(),
        codes,
        p.scales().to_vec(),
    )
}
