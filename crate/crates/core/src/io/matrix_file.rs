//! `FPXMAT1\0` | u32 dtype (0 fp32, 1 fp16) | u32 rows | u32 cols |
//! u8 layout (0 row-major, 1 col-major) | 3 zero bytes | elements.

use std::path::Path;

use super::Reader;
use crate::error::{FpxError, Result};
use crate::matrix::{Layout, MatrixData, ScalarMatrix};

pub const MATRIX_MAGIC: &[u8; 8] = b"FPXMAT1\0";
pub const MATRIX_HEADER_LEN: usize = 24;

pub fn write_matrix(m: &ScalarMatrix) -> Vec<u8> {
    let elem = match m.data() {
        MatrixData::F32(_) => 4,
        MatrixData::F16(_) => 2,
    };
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + m.rows() * m.cols() * elem);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(if elem == 4 { 0u32 } else { 1u32 }).to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.push(match m.layout() {
        Layout::RowMajor => 0,
        Layout::ColMajor => 1,
    });
    out.extend_from_slice(&[0; 3]);
    match m.data() {
        MatrixData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        MatrixData::F16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn read_matrix(bytes: &[u8]) -> Result<ScalarMatrix> {
    let mut r = Reader::new(bytes);
    if r.take(8, "magic")? != MATRIX_MAGIC {
        return Err(FpxError::corrupt(0, "bad magic, expected FPXMAT1"));
    }
    let at = r.pos();
    let dtype = r.u32("dtype")?;
    if dtype > 1 {
        return Err(FpxError::corrupt(at, format!("unknown dtype {dtype}")));
    }
    let at = r.pos();
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(FpxError::corrupt(at, format!("empty matrix {rows}x{cols}")));
    }
    let at = r.pos();
    let layout = match r.u8("layout")? {
        0 => Layout::RowMajor,
        1 => Layout::ColMajor,
        x => return Err(FpxError::corrupt(at, format!("unknown layout {x}"))),
    };
    let at = r.pos();
    if r.take(3, "padding")? != [0; 3] {
        return Err(FpxError::corrupt(at, "non-zero header padding"));
    }
    let n = rows.checked_mul(cols).ok_or_else(|| FpxError::corrupt(12, "dimensions overflow"))?;
    let data = if dtype == 0 {
        let raw = r.take(n * 4, "fp32 payload")?;
        MatrixData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    } else {
        let raw = r.take(n * 2, "fp16 payload")?;
        MatrixData::F16(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    };
    r.finish()?;
    ScalarMatrix::new(rows, cols, layout, data)
}

/// Headerless row-major blob of fp32 (`half = false`) or fp16 elements.
pub fn read_raw(bytes: &[u8], rows: usize, cols: usize, half: bool) -> Result<ScalarMatrix> {
    let elem = if half { 2 } else { 4 };
    let want = rows * cols * elem;
    if bytes.len() != want {
        return Err(FpxError::corrupt(
            bytes.len().min(want),
            format!("raw {rows}x{cols} blob needs {want} bytes, file has {}", bytes.len()),
        ));
    }
    let data = if half {
        MatrixData::F16(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    } else {
        MatrixData::F32(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    };
    ScalarMatrix::new(rows, cols, Layout::RowMajor, data)
}

pub fn read_matrix_path(path: impl AsRef<Path>) -> Result<ScalarMatrix> {
    read_matrix(&std::fs::read(path)?)
}

pub fn write_matrix_path(path: impl AsRef<Path>, m: &ScalarMatrix) -> Result<()> {
    Ok(std::fs::write(path, write_matrix(m))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_bytes() {
        let m = ScalarMatrix::from_f16_bits(1, 2, Layout::ColMajor, vec![0x3C00, 0xC000]).unwrap();
        let bytes = write_matrix(&m);
        let want: Vec<u8> = [
            &b"FPXMAT1\0"[..],
            &[1, 0, 0, 0],
            &[1, 0, 0, 0],
            &[2, 0, 0, 0],
            &[1, 0, 0, 0],
            &[0x00, 0x3C, 0x00, 0xC0],
        ]
        .concat();
        assert_eq!(bytes, want);
        assert_eq!(read_matrix(&bytes).unwrap(), m);
    }

    #[test]
    fn fp32_round_trip() {
        let m = ScalarMatrix::from_f32(2, 3, Layout::RowMajor, vec![1.5, -0.0, 3.25, f32::MIN_POSITIVE, 7.0, -8.0]).unwrap();
        let bytes = write_matrix(&m);
        assert_eq!(bytes.len(), MATRIX_HEADER_LEN + 24);
        assert_eq!(write_matrix(&read_matrix(&bytes).unwrap()), bytes);
    }

    #[test]
    fn corrupt_files() {
        let m = ScalarMatrix::from_f32(2, 2, Layout::RowMajor, vec![1.0; 4]).unwrap();
        let bytes = write_matrix(&m);

        let err = read_matrix(&bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(err.code(), "corrupt-file");
        assert_eq!(err.offset(), Some(24));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(read_matrix(&bad).unwrap_err().offset(), Some(0));

        let mut bad = bytes.clone();
        bad[8] = 7;
        assert_eq!(read_matrix(&bad).unwrap_err().offset(), Some(8));

        let mut bad = bytes.clone();
        bad[20] = 2;
        assert_eq!(read_matrix(&bad).unwrap_err().offset(), Some(20));

        let mut bad = bytes.clone();
        bad.push(0);
        assert_eq!(read_matrix(&bad).unwrap_err().offset(), Some(40));

        assert_eq!(read_matrix(&bytes[..5]).unwrap_err().offset(), Some(0));
    }

    #[test]
    fn raw_import() {
        let bytes: Vec<u8> = [1.0f32, 2.0].iter().flat_map(|x| x.to_le_bytes()).collect();
        let m = read_raw(&bytes, 1, 2, false).unwrap();
        assert_eq!(m.get_f32(0, 1), 2.0);
        assert!(read_raw(&bytes, 2, 2, false).is_err());
        let m = read_raw(&bytes, 2, 2, true).unwrap();
        assert_eq!(m.rows(), 2);
    }
}
