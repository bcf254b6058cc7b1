use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fpx_core::gemm::{gemm_packed, gemm_reference, pipeline_schedule, GemmProblem};
use fpx_core::io::{read_matrix, read_pack_path, read_raw, write_matrix_path, write_pack_path};
use fpx_core::prepack::{pack_with_split, SLICES, WARP_SIZE};
use fpx_core::{dequantize_reference, quantize_matrix, unpack, FpxError, FpxFormat, MatrixData, ScalarMatrix, SplitScheme};

mod selftest;

#[derive(Parser)]
#[command(name = "fpx", version, about = "FPx weight quantization, pre-packing and GEMM simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dtype {
    Fp16,
    Fp32,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a matrix row-wise and pre-pack it.
    Pack {
        #[arg(long)]
        input: PathBuf,
        /// e3m2, e2m3, e2m2, e1m1, e4m3, ... (aliases fp6, fp5, fp3)
        #[arg(long)]
        format: FpxFormat,
        #[arg(long)]
        output: PathBuf,
        /// Segment widths, high bits first, e.g. "2,4".
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<u8>>,
        /// Treat the input as a headerless row-major blob of ROWS,COLS.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        raw: Option<Vec<usize>>,
        /// Element type of a raw blob.
        #[arg(long, value_enum, default_value = "fp32")]
        raw_dtype: Dtype,
    },
    /// De-quantize a packed file back to a matrix (padding removed).
    Unpack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "fp16")]
        dtype: Dtype,
    },
    /// Print the header, scales and per-thread words of one tile.
    Inspect {
        #[arg(long)]
        input: PathBuf,
        /// Tile coordinates ROW,COL.
        #[arg(long, value_delimiter = ',', num_args = 1, default_value = "0,0")]
        tile: Vec<usize>,
        /// Only show this thread.
        #[arg(long)]
        thread: Option<usize>,
    },
    /// Packed-path GEMM: weights (M x K) times activations (K x N).
    Gemm {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also run the scalar reference and fail on any differing bit.
        #[arg(long)]
        check: bool,
    },
    /// Print the software-pipeline schedule.
    Trace {
        #[arg(long)]
        tiles: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Run the built-in equivalence, round-trip and bank-conflict checks.
    Selftest,
    /// Time the packed path against the scalar reference (CPU only).
    Bench {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        activations: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<FpxError>() {
                Some(fe) => eprintln!("error[{}]: {e:#}", fe.code()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::FAILURE
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("FPX_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().with_context(|| format!("FPX_THREADS={v:?} is not a thread count"))?;
    ensure!(n > 0, "FPX_THREADS must be at least 1");
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_matrix(path: &PathBuf) -> Result<ScalarMatrix> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_matrix(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Pack { input, format, output, split, raw, raw_dtype } => {
            let m = match raw {
                Some(dims) => {
                    ensure!(dims.len() == 2, "--raw expects ROWS,COLS");
                    let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
                    read_raw(&bytes, dims[0], dims[1], matches!(raw_dtype, Dtype::Fp16))?
                }
                None => load_matrix(&input)?,
            };
            let split = match split {
                Some(w) => SplitScheme::new(w, format)?,
                None => SplitScheme::default_for(format),
            };
            let q = quantize_matrix(&m, format)?;
            let p = pack_with_split(&q, split)?;
            write_pack_path(&output, &p)?;
            println!(
                "packed {}x{} as {} (padded {}x{}, {} tiles) -> {}",
                p.orig_rows(),
                p.orig_cols(),
                p.format(),
                p.rows(),
                p.cols(),
                p.tile_count(),
                output.display()
            );
        }
        Command::Unpack { input, output, dtype } => {
            let p = read_pack_path(&input)?;
            let q = unpack(&p)?;
            let m = dequantize_reference(&q).trim(q.orig_rows(), q.orig_cols())?;
            let m = match dtype {
                Dtype::Fp16 => m,
                Dtype::Fp32 => m.to_f32(),
            };
            write_matrix_path(&output, &m)?;
            println!("unpacked {}x{} -> {}", m.rows(), m.cols(), output.display());
        }
        Command::Inspect { input, tile, thread } => inspect(&input, &tile, thread)?,
        Command::Gemm { weights, activations, output, check } => {
            let p = read_pack_path(&weights)?;
            let b = load_matrix(&activations)?;
            let c = gemm_packed(GemmProblem { weights: &p, activations: &b })?;
            write_matrix_path(&output, &c)?;
            println!("gemm {}x{} -> {}", c.rows(), c.cols(), output.display());
            if check {
                let want = gemm_reference(&unpack(&p)?, &b)?;
                let diff = differing(&c, &want);
                if diff > 0 {
                    bail!("check failed: {diff} of {} output elements differ from the reference", c.rows() * c.cols());
                }
                println!("check: packed path matches the reference bit for bit");
            }
        }
        Command::Trace { tiles, csv } => {
            let t = pipeline_schedule(tiles, SLICES)?;
            print!("{}", if csv { t.to_csv() } else { t.to_text() });
        }
        Command::Selftest => selftest::run()?,
        Command::Bench { weights, activations, iters } => {
            ensure!(iters > 0, "--iters must be positive");
            let p = read_pack_path(&weights)?;
            let b = load_matrix(&activations)?;
            let q = unpack(&p)?;
            let time = |f: &dyn Fn() -> Result<ScalarMatrix>| -> Result<f64> {
                let start = Instant::now();
                for _ in 0..iters {
                    f()?;
                }
                Ok(start.elapsed().as_secs_f64() * 1e3 / iters as f64)
            };
            let packed = time(&|| Ok(gemm_packed(GemmProblem { weights: &p, activations: &b })?))?;
            let reference = time(&|| Ok(gemm_reference(&q, &b)?))?;
            println!("problem   {}x{}x{} ({}), {iters} iterations", p.orig_rows(), p.orig_cols(), b.cols(), p.format());
            println!("packed    {packed:.3} ms/iter");
            println!("reference {reference:.3} ms/iter");
            println!("ratio     {:.2}x (CPU simulation, not a GPU timing)", reference / packed);
        }
    }
    Ok(())
}

fn differing(a: &ScalarMatrix, b: &ScalarMatrix) -> usize {
    match (a.data(), b.data()) {
        (MatrixData::F32(x), MatrixData::F32(y)) if x.len() == y.len() => {
            x.iter().zip(y).filter(|(p, q)| p.to_bits() != q.to_bits()).count()
        }
        _ => a.rows() * a.cols(),
    }
}

fn inspect(input: &PathBuf, tile: &[usize], thread: Option<usize>) -> Result<()> {
    let p = read_pack_path(input)?;
    ensure!(tile.len() == 2, "--tile expects ROW,COL");
    let (tr, tc) = (tile[0], tile[1]);
    let (gm, gk) = p.tile_grid();
    ensure!(tr < gm && tc < gk, "tile ({tr},{tc}) outside the {gm}x{gk} grid");
    if let Some(t) = thread {
        ensure!(t < WARP_SIZE, "thread {t} out of range 0..{WARP_SIZE}");
    }
    let widths: Vec<String> = p.split().widths().iter().map(u8::to_string).collect();
    println!("format  {}", p.format());
    println!("split   {}", widths.join("+"));
    println!("dims    {}x{} (padded {}x{})", p.orig_rows(), p.orig_cols(), p.rows(), p.cols());
    println!("tiles   {gm}x{gk}");
    for (seg, w) in p.split().widths().iter().enumerate() {
        println!("stream  {seg}: {w}-bit, {} bytes", p.stream_bytes(seg).len());
    }
    println!("tile ({tr},{tc}) scales:");
    for r in 0..64 {
        let s = p.scales()[tr * 64 + r];
        println!("  row {:4}  {s:#06x}  {}", tr * 64 + r, fpx_core::fp16::to_f32(s));
    }
    println!("tile ({tr},{tc}) words per thread:");
    let threads: Vec<usize> = thread.map_or_else(|| (0..WARP_SIZE).collect(), |t| vec![t]);
    for t in threads {
        for seg in 0..p.split().segments() {
            let words: Vec<String> = p.thread_words(seg, tr, tc, t).iter().map(|w| format!("{w:08x}")).collect();
            println!("  t{t:02} s{seg}  {}", words.join(" "));
        }
    }
    Ok(())
}
