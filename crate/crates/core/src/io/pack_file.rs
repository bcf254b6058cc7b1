//! `FPXPACK1` container:
//!
//! ```text
//! magic "FPXPACK1" | u16 version = 1 | u8 exp_bits | u8 man_bits
//! u8 segment count | u8 width per segment (high bits first)
//! u32 orig_rows | u32 orig_cols | u32 padded_rows | u32 padded_cols
//! u32 tile_m = 64 | u32 tile_k = 64 | u8 scale granularity (0 = per row)
//! padded_rows x fp16 scales
//! per segment: u64 byte length | jagged word stream
//! ```

use std::path::Path;

use super::Reader;
use crate::error::{FpxError, Result};
use crate::format::FpxFormat;
use crate::prepack::{le_bytes_to_words, words_to_le_bytes, PackedWeights, SplitScheme};
use crate::quantize::TILE;

pub const PACK_MAGIC: &[u8; 8] = b"FPXPACK1";
pub const PACK_VERSION: u16 = 1;

/// Header bytes before the scales.
pub fn pack_header_len(segments: usize) -> usize {
    8 + 2 + 2 + 1 + segments + 16 + 8 + 1
}

pub fn write_pack(p: &PackedWeights) -> Vec<u8> {
    let segs = p.split().segments();
    let mut out = Vec::with_capacity(pack_header_len(segs) + p.rows() * 2 + segs * 8 + p.stream_byte_len());
    out.extend_from_slice(PACK_MAGIC);
    out.extend_from_slice(&PACK_VERSION.to_le_bytes());
    out.push(p.format().exp_bits() as u8);
    out.push(p.format().man_bits() as u8);
    out.push(segs as u8);
    out.extend_from_slice(p.split().widths());
    for d in [p.orig_rows(), p.orig_cols(), p.rows(), p.cols(), TILE, TILE] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(0);
    for s in p.scales() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for seg in 0..segs {
        let bytes = words_to_le_bytes(&p.streams()[seg]);
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn read_pack(bytes: &[u8]) -> Result<PackedWeights> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != PACK_MAGIC {
        return Err(FpxError::corrupt(0, "bad magic, expected FPXPACK1"));
    }
    let at = r.pos();
    let version = r.u16("version")?;
    if version != PACK_VERSION {
        return Err(FpxError::corrupt(at, format!("unsupported version {version}")));
    }
    let at = r.pos();
    let exp = r.u8("exp_bits")?;
    let man = r.u8("man_bits")?;
    let format = FpxFormat::new(exp, man).map_err(|e| FpxError::corrupt(at, e.to_string()))?;
    let at = r.pos();
    let segs = r.u8("segment count")? as usize;
    let widths = r.take(segs, "segment widths")?.to_vec();
    let split = SplitScheme::new(widths, format).map_err(|e| FpxError::corrupt(at, e.to_string()))?;

    let dims_at = r.pos();
    let orig_rows = r.u32("orig_rows")? as usize;
    let orig_cols = r.u32("orig_cols")? as usize;
    let rows = r.u32("padded_rows")? as usize;
    let cols = r.u32("padded_cols")? as usize;
    if rows == 0 || cols == 0 || !rows.is_multiple_of(TILE) || !cols.is_multiple_of(TILE) {
        return Err(FpxError::corrupt(dims_at + 8, format!("padded dims {rows}x{cols} not multiples of 64")));
    }
    if orig_rows == 0 || orig_cols == 0 || orig_rows > rows || orig_cols > cols {
        return Err(FpxError::corrupt(dims_at, format!("original dims {orig_rows}x{orig_cols} inconsistent")));
    }
    let at = r.pos();
    let (tile_m, tile_k) = (r.u32("tile_m")?, r.u32("tile_k")?);
    if tile_m as usize != TILE || tile_k as usize != TILE {
        return Err(FpxError::corrupt(at, format!("unsupported tile {tile_m}x{tile_k}")));
    }
    let at = r.pos();
    let granularity = r.u8("scale granularity")?;
    if granularity != 0 {
        return Err(FpxError::corrupt(at, format!("unsupported scale granularity {granularity}")));
    }
    let scale_bytes = r.take(rows * 2, "scales")?;
    let scales: Vec<u16> = scale_bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();

    let mut streams = Vec::with_capacity(segs);
    for (seg, &w) in split.widths().iter().enumerate() {
        let at = r.pos();
        let len = r.u64("stream length")?;
        let want = (rows * cols * w as usize / 8) as u64;
        if len != want {
            return Err(FpxError::corrupt(at, format!("segment {seg} stream is {len} bytes, expected {want}")));
        }
        let body = r.take(len as usize, "segment stream")?;
        streams.push(le_bytes_to_words(body).expect("stream length is a multiple of 4"));
    }
    r.finish()?;
    PackedWeights::from_parts(format, split, rows, cols, orig_rows, orig_cols, scales, streams)
}

pub fn read_pack_path(path: impl AsRef<Path>) -> Result<PackedWeights> {
    read_pack(&std::fs::read(path)?)
}

pub fn write_pack_path(path: impl AsRef<Path>, p: &PackedWeights) -> Result<()> {
    Ok(std::fs::write(path, write_pack(p))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp16;
    use crate::prepack::pack;
    use crate::quantize::QuantizedMatrix;

    fn sample() -> PackedWeights {
        let codes = (0..64 * 128).map(|i| (i * 37 % 64) as u8).collect();
        let scales = (0..64).map(|i| fp16::from_f32(0.5 + i as f32 / 64.0)).collect();
        let q = QuantizedMatrix::from_parts(FpxFormat::E3M2, 64, 128, 50, 100, codes, scales).unwrap();
        pack(&q).unwrap()
    }

    #[test]
    fn header_layout() {
        let p = sample();
        let bytes = write_pack(&p);
        let hdr = pack_header_len(2);
        assert_eq!(hdr, 40);
        let want: Vec<u8> = [
            &b"FPXPACK1"[..],
            &[1, 0],
            &[3, 2],
            &[2, 2, 4],
            &50u32.to_le_bytes(),
            &100u32.to_le_bytes(),
            &64u32.to_le_bytes(),
            &128u32.to_le_bytes(),
            &64u32.to_le_bytes(),
            &64u32.to_le_bytes(),
            &[0],
        ]
        .concat();
        assert_eq!(&bytes[..hdr], &want[..]);
        assert_eq!(bytes.len(), hdr + 128 + 8 + 2048 + 8 + 4096);
        // First stream length prefix.
        assert_eq!(&bytes[hdr + 128..hdr + 136], &2048u64.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let bytes = write_pack(&p);
        let back = read_pack(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(write_pack(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = write_pack(&sample());
        let hdr = pack_header_len(2);

        let err = read_pack(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(err.code(), "corrupt-file");
        assert_eq!(err.offset(), Some((hdr + 128 + 8 + 2048 + 8) as u64));

        let mut bad = bytes.clone();
        bad[8] = 2;
        assert_eq!(read_pack(&bad).unwrap_err().offset(), Some(8));

        let mut bad = bytes.clone();
        bad[14] = 3; // widths 3+4 do not sum to 6
        assert_eq!(read_pack(&bad).unwrap_err().offset(), Some(12));

        let mut bad = bytes.clone();
        bad[hdr + 128] = 1; // stream length no longer matches the size law
        assert_eq!(read_pack(&bad).unwrap_err().offset(), Some((hdr + 128) as u64));

        let mut bad = bytes.clone();
        bad[25] = 1; // padded rows grow past the scale table
        assert!(read_pack(&bad).is_err());

        let mut bad = bytes;
        bad.extend_from_slice(&[0, 0]);
        assert!(read_pack(&bad).is_err());
    }
}
