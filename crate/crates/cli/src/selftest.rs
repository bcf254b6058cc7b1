//! Built-in checks, runnable on any machine without input files.

use anyhow::{ensure, Result};
use fpx_core::gemm::{bank_conflict_report, bank_conflict_report_with, thread_scale_rows, LoadLayout};
use fpx_core::prepack::{position_coords, SLICES, WARP_SIZE};
use fpx_core::quantize::effective_scale;
use fpx_core::simt::{dequant_slice, ThreadSlice, WarpSliceState};
use fpx_core::{dequantize_reference, fp16, pack, unpack, FpxFormat, MatrixData, QuantizedMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<()> {
    let cases = dequant_equivalence()?;
    println!("dequant equivalence  ok  ({cases} code/scale cases, e3m2)");
    let n = round_trips()?;
    println!("pack round trip      ok  ({n} random matrices)");
    let (steps, control) = bank_conflicts()?;
    println!("bank conflicts       ok  ({steps} jagged load steps conflict-free; thread-major control {control})");
    Ok(())
}

/// Word-parallel slice de-quantization against the scalar reference, every
/// e3m2 code under several scales.
fn dequant_equivalence() -> Result<usize> {
    let fmt = FpxFormat::E3M2;
    let mut cases = 0;
    for s in [1.0f32, 0.5, 3.0, 6.103_515_6e-5] {
        let scale = fp16::from_f32(s);
        let codes: Vec<u8> = (0..64 * 64).map(|i| ((i / 64 + i % 64) % 64) as u8).collect();
        let q = QuantizedMatrix::from_parts(fmt, 64, 64, 64, 64, codes, vec![scale; 64])?;
        let p = pack(&q)?;
        let want = match dequantize_reference(&q).into_data() {
            MatrixData::F16(v) => v,
            MatrixData::F32(_) => unreachable!("reference output is half precision"),
        };
        let eff = effective_scale(scale, fmt).map_err(anyhow::Error::msg)?;
        for slice in 0..SLICES {
            let threads = (0..WARP_SIZE)
                .map(|t| ThreadSlice {
                    segments: p
                        .split()
                        .widths()
                        .iter()
                        .enumerate()
                        .map(|(seg, &w)| {
                            let w = w as usize;
                            p.thread_words(seg, 0, 0, t)[slice * w..(slice + 1) * w].to_vec()
                        })
                        .collect(),
                    scales: thread_scale_rows(t).map(|_| eff),
                })
                .collect();
            let out = dequant_slice(&WarpSliceState { threads }, fmt, p.split())?;
            for (t, regs) in out.iter().enumerate() {
                for (j, reg) in regs.iter().enumerate() {
                    for lane in 0..2 {
                        let (r, c) = position_coords(t, slice * 32 + 2 * j + lane);
                        let got = (reg >> (16 * lane)) as u16;
                        ensure!(
                            got == want[r * 64 + c],
                            "code {:#08b} scale {s}: {got:#06x} != {:#06x}",
                            q.code(r, c),
                            want[r * 64 + c]
                        );
                    }
                }
            }
        }
        cases += 64;
    }
    Ok(cases)
}

fn round_trips() -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    let formats = [FpxFormat::E3M2, FpxFormat::E2M3, FpxFormat::E2M2, FpxFormat::E1M1, FpxFormat::E4M3];
    let n = 20;
    for i in 0..n {
        let fmt = formats[i % formats.len()];
        let (rows, cols) = (64 * rng.gen_range(1..=4), 64 * rng.gen_range(1..=4));
        let codes = (0..rows * cols).map(|_| rng.gen_range(0..fmt.code_count()) as u8).collect();
        let q = QuantizedMatrix::from_parts(fmt, rows, cols, rows, cols, codes, vec![fp16::ONE; rows])?;
        ensure!(unpack(&pack(&q)?)? == q, "round trip {i} ({fmt} {rows}x{cols}) differs");
    }
    Ok(n)
}

fn bank_conflicts() -> Result<(usize, u64)> {
    let (rows, cols) = (512, 512);
    let codes = (0..rows * cols).map(|i| (i % 64) as u8).collect();
    let q = QuantizedMatrix::from_parts(FpxFormat::E3M2, rows, cols, rows, cols, codes, vec![fp16::ONE; rows])?;
    let p = pack(&q)?;
    let report = bank_conflict_report(&p);
    let bad = report.iter().filter(|&&c| c > 0).count();
    ensure!(bad == 0, "{bad} load steps have bank conflicts");
    let control = bank_conflict_report_with(&p, LoadLayout::ThreadMajor).total_conflicts();
    ensure!(control > 0, "thread-major control shows no conflicts");
    Ok((report.len(), control))
}
