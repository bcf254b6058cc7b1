//! Tensor-core fragment layout of a 64x64 weight tile.
//!
//! A tile is split along k into four 64x16 slices, each slice along m into
//! four 16x16 chunks. Inside a chunk every thread of the warp holds four
//! pairs, one in each 8x8 quadrant, visited (row, col) quadrant order
//! (0,0), (1,0), (0,1), (1,1). Within a quadrant thread `t` holds row
//! `t / 4`, columns `2 * (t % 4)` and `2 * (t % 4) + 1`.

use crate::error::{FpxError, Result};
use crate::quantize::{QuantizedMatrix, TILE};

pub const WARP_SIZE: usize = 32;
pub const SLICES: usize = 4;
pub const CHUNKS: usize = 4;
pub const PAIRS: usize = 4;
pub const LANES: usize = 2;
/// Codes each thread receives per tile.
pub const CODES_PER_THREAD: usize = SLICES * CHUNKS * PAIRS * LANES;
/// Codes each thread consumes per slice.
pub const CODES_PER_SLICE: usize = CHUNKS * PAIRS * LANES;

/// Fragment position to `(row, col)` inside the tile.
pub fn fragment_coords(
    slice: usize,
    chunk: usize,
    thread: usize,
    pair: usize,
    lane: usize,
) -> Result<(usize, usize)> {
    if slice >= SLICES || chunk >= CHUNKS || thread >= WARP_SIZE || pair >= PAIRS || lane >= LANES {
        return Err(FpxError::IndexOutOfRange(format!(
            "fragment index (slice {slice}, chunk {chunk}, thread {thread}, pair {pair}, lane {lane})"
        )));
    }
    Ok(coords_unchecked(slice, chunk, thread, pair, lane))
}

#[inline]
pub(crate) fn coords_unchecked(
    slice: usize,
    chunk: usize,
    thread: usize,
    pair: usize,
    lane: usize,
) -> (usize, usize) {
    let row = chunk * 16 + (pair & 1) * 8 + thread / 4;
    let col = slice * 16 + (pair >> 1) * 8 + 2 * (thread % 4) + lane;
    (row, col)
}

/// Tile coordinates of the `pos`-th code in `thread`'s consumption order
/// (slice-major, then chunk, pair, lane).
#[inline]
pub fn position_coords(thread: usize, pos: usize) -> (usize, usize) {
    let slice = pos / CODES_PER_SLICE;
    let chunk = (pos / (PAIRS * LANES)) % CHUNKS;
    let pair = (pos / LANES) % PAIRS;
    let lane = pos % LANES;
    coords_unchecked(slice, chunk, thread, pair, lane)
}

/// Row within the tile of the `j`-th output pair (of 16) a thread produces
/// in a slice. Rows do not depend on the slice.
#[inline]
pub fn pair_row(thread: usize, j: usize) -> usize {
    position_coords(thread, 2 * j).0
}

/// Per-thread gathering: for each of the 32 threads, the 128 codes of tile
/// `(tile_row, tile_col)` in the order the tensor cores consume them.
pub fn gather_per_thread(
    q: &QuantizedMatrix,
    tile_row: usize,
    tile_col: usize,
) -> Result<Vec<[u8; CODES_PER_THREAD]>> {
    let (tiles_m, tiles_k) = (q.rows() / TILE, q.cols() / TILE);
    if tile_row >= tiles_m || tile_col >= tiles_k {
        return Err(FpxError::IndexOutOfRange(format!(
            "tile ({tile_row}, {tile_col}) outside {tiles_m}x{tiles_k} grid"
        )));
    }
    let (r0, c0) = (tile_row * TILE, tile_col * TILE);
    Ok((0..WARP_SIZE)
        .map(|t| {
            let mut seq = [0u8; CODES_PER_THREAD];
            for (pos, dst) in seq.iter_mut().enumerate() {
                let (r, c) = position_coords(t, pos);
                *dst = q.code(r0 + r, c0 + c);
            }
            seq
        })
        .collect())
}
