//! Warp-level tiled GEMM simulator over pre-packed weights.
//!
//! `C = A x B` with `A` the packed `M x K` weights and `B` a `K x N` half
//! activation matrix. For every 64-row band of `A`, tiles are visited in
//! ascending k; each tile is copied into a modeled shared-memory buffer,
//! then consumed slice by slice: the warp loads its slice words (recording
//! the bank access pattern), de-quantizes them in registers and feeds each
//! 16x16 chunk to the emulated mma against 8-column panels of `B`.
//!
//! Every output element is accumulated in fp32 over ascending k, so the
//! scalar reference path with the same order matches bit for bit.

mod bank;
mod mma;
mod pipeline;

pub use bank::{bank_of, step_conflicts, BankAccessTrace, LoadLayout, BANKS};
pub use mma::{mma_emulate, AFrag, BFrag, CFrag};
pub use pipeline::{pipeline_schedule, Engine, PipelineEvent, PipelineTrace};

use rayon::prelude::*;

use crate::error::{FpxError, Result};
use crate::fp16;
use crate::matrix::{Layout, MatrixData, ScalarMatrix};
use crate::prepack::{pair_row, position_coords, PackedWeights, SLICES, WARP_SIZE};
use crate::quantize::{dequantize_reference, effective_scale, QuantizedMatrix, TILE};
use crate::simt::{dequant_slice, pair_halves, ThreadSlice, WarpSliceState, SCALES_PER_SLICE};

/// Columns of `B` per mma (the n of m16n8k16).
pub const PANEL: usize = 8;

/// A packed-weight GEMM problem.
#[derive(Debug, Clone, Copy)]
pub struct GemmProblem<'a> {
    pub weights: &'a PackedWeights,
    pub activations: &'a ScalarMatrix,
}

/// Activations as fp32 panels: `panels[p][k][j]`, zero-padded to `k_pad`
/// rows and whole panels.
struct Panels {
    data: Vec<[f32; PANEL]>,
    k_pad: usize,
}

impl Panels {
    fn new(b: &ScalarMatrix, k_pad: usize) -> Panels {
        let n_panels = b.cols().div_ceil(PANEL);
        let mut data = vec![[0.0f32; PANEL]; n_panels * k_pad];
        for p in 0..n_panels {
            for k in 0..b.rows() {
                for j in 0..PANEL {
                    let col = p * PANEL + j;
                    if col < b.cols() {
                        data[p * k_pad + k][j] = fp16::to_f32(b.get_f16(k, col));
                    }
                }
            }
        }
        Panels { data, k_pad }
    }

    fn count(&self) -> usize {
        self.data.len() / self.k_pad
    }

    #[inline]
    fn row(&self, panel: usize, k: usize) -> &[f32; PANEL] {
        &self.data[panel * self.k_pad + k]
    }
}

fn check_activations(k_orig: usize, k_pad: usize, b: &ScalarMatrix) -> Result<()> {
    if b.rows() != k_orig && b.rows() != k_pad {
        return Err(FpxError::DimensionMismatch(format!(
            "weights have K = {k_orig} (padded {k_pad}) but activations have {} rows",
            b.rows()
        )));
    }
    Ok(())
}

fn output_matrix(rows: usize, n: usize, bands: Vec<Vec<f32>>, n_pad: usize) -> ScalarMatrix {
    let mut data = Vec::with_capacity(rows * n);
    'outer: for band in bands {
        for r in 0..TILE {
            if data.len() == rows * n {
                break 'outer;
            }
            data.extend_from_slice(&band[r * n_pad..r * n_pad + n]);
        }
    }
    ScalarMatrix::from_f32(rows, n, Layout::RowMajor, data).expect("non-empty output")
}

/// Effective (bias-folded) scale per padded row.
fn effective_scales(p: &PackedWeights) -> Result<Vec<u16>> {
    p.scales()
        .iter()
        .enumerate()
        .map(|(row, &s)| {
            effective_scale(s, p.format()).map_err(|reason| FpxError::ScaleOverflow {
                row,
                scale: fp16::to_f32(s),
                reason,
            })
        })
        .collect()
}

/// Shared-memory image of one tile: the segment sub-streams back to back,
/// placed at `base` bytes (double buffered by tile parity).
struct SharedTile<'a> {
    words: Vec<u32>,
    seg_base: Vec<usize>,
    base: u32,
    p: &'a PackedWeights,
}

impl<'a> SharedTile<'a> {
    fn tile_bytes(p: &PackedWeights) -> usize {
        (0..p.split().segments()).map(|s| p.tile_words(s) * 4).sum()
    }

    /// Model of the asynchronous global-to-shared copy.
    fn copy(p: &'a PackedWeights, tile_row: usize, tile_col: usize, buffer: usize) -> Self {
        let mut words = Vec::with_capacity(Self::tile_bytes(p) / 4);
        let mut seg_base = Vec::new();
        for seg in 0..p.split().segments() {
            seg_base.push(words.len());
            words.extend_from_slice(p.tile_stream(seg, tile_row, tile_col));
        }
        let base = (buffer * Self::tile_bytes(p)) as u32;
        SharedTile { words, seg_base, base, p }
    }

    /// Byte addresses of each warp-wide load step for `slice`.
    fn slice_addresses(&self, slice: usize, layout: LoadLayout) -> Vec<(usize, usize, [u32; WARP_SIZE])> {
        let mut out = Vec::new();
        for (seg, &w) in self.p.split().widths().iter().enumerate() {
            let w = w as usize;
            let per_thread = self.p.split().words_per_thread(seg);
            for m in 0..w {
                let j = slice * w + m;
                let addrs = std::array::from_fn(|t| {
                    self.base + ((self.seg_base[seg] + layout.word_offset(t, j, per_thread)) * 4) as u32
                });
                out.push((seg, m, addrs));
            }
        }
        out
    }

    /// Load a slice into registers through the modeled addresses.
    fn load_slice(
        &self,
        slice: usize,
        eff_scales: &[u16],
        band_row0: usize,
        trace: Option<&mut BankAccessTrace>,
    ) -> WarpSliceState {
        let widths = self.p.split().widths();
        let mut threads: Vec<ThreadSlice> = (0..WARP_SIZE)
            .map(|t| ThreadSlice {
                segments: widths.iter().map(|&w| vec![0u32; w as usize]).collect(),
                scales: thread_scale_rows(t).map(|r| eff_scales[band_row0 + r]),
            })
            .collect();
        let steps = self.slice_addresses(slice, LoadLayout::Jagged);
        for (seg, m, addrs) in &steps {
            for (t, &a) in addrs.iter().enumerate() {
                threads[t].segments[*seg][*m] = self.words[((a - self.base) / 4) as usize];
            }
        }
        if let Some(trace) = trace {
            for (_, _, addrs) in steps {
                trace.push(addrs);
            }
        }
        WarpSliceState { threads }
    }
}

/// Packed-path GEMM; returns `orig_rows x N` fp32, row-major.
pub fn gemm_packed(problem: GemmProblem<'_>) -> Result<ScalarMatrix> {
    gemm_packed_impl(problem, false).map(|(c, _)| c)
}

/// Like [`gemm_packed`], also returning every shared-memory load step.
pub fn gemm_packed_traced(problem: GemmProblem<'_>) -> Result<(ScalarMatrix, BankAccessTrace)> {
    gemm_packed_impl(problem, true)
}

fn gemm_packed_impl(problem: GemmProblem<'_>, record: bool) -> Result<(ScalarMatrix, BankAccessTrace)> {
    let p = problem.weights;
    let b = problem.activations;
    check_activations(p.orig_cols(), p.cols(), b)?;
    let eff = effective_scales(p)?;
    let panels = Panels::new(b, p.cols());
    let n_pad = panels.count() * PANEL;
    let (tiles_m, tiles_k) = p.tile_grid();
    let format = p.format();
    let split = p.split();

    let bands: Vec<(Vec<f32>, BankAccessTrace)> = (0..tiles_m)
        .into_par_iter()
        .map(|tm| -> Result<_> {
            let mut c = vec![0.0f32; TILE * n_pad];
            let mut trace = BankAccessTrace::default();
            for tk in 0..tiles_k {
                let smem = SharedTile::copy(p, tm, tk, tk % 2);
                for s in 0..SLICES {
                    let state = smem.load_slice(s, &eff, tm * TILE, record.then_some(&mut trace));
                    let regs = dequant_slice(&state, format, split)?;
                    // Scatter pair registers into the 64x16 A slice.
                    let mut a_slice = [[0u16; 16]; TILE];
                    for (t, thread_regs) in regs.iter().enumerate() {
                        for (j, &reg) in thread_regs.iter().enumerate() {
                            let (lo, hi) = pair_halves(reg);
                            let (r, col) = position_coords(t, s * 32 + 2 * j);
                            let col = col - s * 16;
                            a_slice[r][col] = lo;
                            a_slice[r][col + 1] = hi;
                        }
                    }
                    let k0 = tk * TILE + s * 16;
                    for chunk in 0..4 {
                        let a: AFrag = std::array::from_fn(|i| a_slice[chunk * 16 + i]);
                        for panel in 0..panels.count() {
                            let bf: [[f32; PANEL]; 16] = std::array::from_fn(|k| *panels.row(panel, k0 + k));
                            let mut cf: CFrag = std::array::from_fn(|i| {
                                let r = chunk * 16 + i;
                                c[r * n_pad + panel * PANEL..r * n_pad + panel * PANEL + PANEL].try_into().unwrap()
                            });
                            mma::mma_accumulate_f32b(&a, &bf, &mut cf);
                            for (i, row) in cf.iter().enumerate() {
                                let r = chunk * 16 + i;
                                c[r * n_pad + panel * PANEL..r * n_pad + panel * PANEL + PANEL].copy_from_slice(row);
                            }
                        }
                    }
                }
            }
            Ok((c, trace))
        })
        .collect::<Result<_>>()?;

    let mut trace = BankAccessTrace::default();
    let mut out = Vec::with_capacity(bands.len());
    for (c, t) in bands {
        out.push(c);
        trace.extend(t);
    }
    Ok((output_matrix(p.orig_rows(), b.cols(), out, n_pad), trace))
}

/// Scalar reference: de-quantize every weight with the scalar oracle, then
/// accumulate each output in fp32 over ascending k.
pub fn gemm_reference(q: &QuantizedMatrix, b: &ScalarMatrix) -> Result<ScalarMatrix> {
    check_activations(q.orig_cols(), q.cols(), b)?;
    let a = match dequantize_reference(q).into_data() {
        MatrixData::F16(v) => v,
        MatrixData::F32(_) => unreachable!("reference de-quantization yields halves"),
    };
    let k_pad = q.cols();
    let n = b.cols();
    // Column-major fp32 copy of B, zero-padded along k.
    let mut bcols = vec![0.0f32; n * k_pad];
    for j in 0..n {
        for k in 0..b.rows() {
            bcols[j * k_pad + k] = fp16::to_f32(b.get_f16(k, j));
        }
    }
    let data: Vec<f32> = (0..q.orig_rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let arow: Vec<f32> = a[r * k_pad..(r + 1) * k_pad].iter().map(|&h| fp16::to_f32(h)).collect();
            let bcols = &bcols;
            (0..n).map(move |j| {
                let col = &bcols[j * k_pad..(j + 1) * k_pad];
                let mut acc = 0.0f32;
                for k in 0..k_pad {
                    acc += arow[k] * col[k];
                }
                acc
            })
        })
        .collect();
    ScalarMatrix::from_f32(q.orig_rows(), n, Layout::RowMajor, data)
}

/// Conflict counts for every slice load of every tile, replaying the
/// loader's address stream under `layout`.
pub fn bank_conflict_report_with(p: &PackedWeights, layout: LoadLayout) -> BankAccessTrace {
    let (tiles_m, tiles_k) = p.tile_grid();
    let mut trace = BankAccessTrace::default();
    for tm in 0..tiles_m {
        for tk in 0..tiles_k {
            let smem = SharedTile::copy(p, tm, tk, tk % 2);
            for s in 0..SLICES {
                for (_, _, addrs) in smem.slice_addresses(s, layout) {
                    trace.push(addrs);
                }
            }
        }
    }
    trace
}

/// Conflict counts per load step for the packed (jagged) layout.
pub fn bank_conflict_report(p: &PackedWeights) -> Vec<u32> {
    bank_conflict_report_with(p, LoadLayout::Jagged).conflicts()
}

/// Tile rows whose scales `thread` reads in each slice, in the order the
/// de-quantization loop indexes them (two rows per chunk).
pub fn thread_scale_rows(thread: usize) -> [usize; SCALES_PER_SLICE] {
    std::array::from_fn(|j| pair_row(thread, (j / 2) * 4 + j % 2))
}
