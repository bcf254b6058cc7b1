//! Row-wise FPx quantization and the scalar de-quantization oracle.

use rayon::prelude::*;

use crate::codec::{decode_unchecked, encode_scalar, pow2};
use crate::error::{FpxError, Result};
use crate::format::FpxFormat;
use crate::fp16;
use crate::matrix::{Layout, ScalarMatrix};

/// Tile edge; quantized dimensions are padded to a multiple of this.
pub const TILE: usize = 64;

pub fn pad_to_tile(n: usize) -> usize {
    n.div_ceil(TILE) * TILE
}

/// A row-major grid of FPx codes with one half-precision scale per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMatrix {
    format: FpxFormat,
    rows: usize,
    cols: usize,
    orig_rows: usize,
    orig_cols: usize,
    codes: Vec<u8>,
    scales: Vec<u16>,
}

impl QuantizedMatrix {
    /// Build from parts. Dimensions must already be padded.
    pub fn from_parts(
        format: FpxFormat,
        rows: usize,
        cols: usize,
        orig_rows: usize,
        orig_cols: usize,
        codes: Vec<u8>,
        scales: Vec<u16>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || !rows.is_multiple_of(TILE) || !cols.is_multiple_of(TILE) {
            return Err(FpxError::NotPadded { rows, cols });
        }
        if orig_rows == 0 || orig_cols == 0 || orig_rows > rows || orig_cols > cols {
            return Err(FpxError::DimensionMismatch(format!(
                "original dims {orig_rows}x{orig_cols} do not fit padded {rows}x{cols}"
            )));
        }
        if codes.len() != rows * cols {
            return Err(FpxError::DimensionMismatch(format!(
                "{} codes for {rows}x{cols}",
                codes.len()
            )));
        }
        if scales.len() != rows {
            return Err(FpxError::DimensionMismatch(format!("{} scales for {rows} rows", scales.len())));
        }
        if let Some(&c) = codes.iter().find(|&&c| c as u32 >= format.code_count()) {
            return Err(FpxError::InvalidCode { code: c as u32, format });
        }
        for (row, &s) in scales.iter().enumerate() {
            effective_scale(s, format).map_err(|reason| FpxError::ScaleOverflow {
                row,
                scale: fp16::to_f32(s),
                reason,
            })?;
        }
        Ok(QuantizedMatrix { format, rows, cols, orig_rows, orig_cols, codes, scales })
    }

    pub fn format(&self) -> FpxFormat {
        self.format
    }

    /// Padded row count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Padded column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn orig_rows(&self) -> usize {
        self.orig_rows
    }

    pub fn orig_cols(&self) -> usize {
        self.orig_cols
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn scales(&self) -> &[u16] {
        &self.scales
    }

    #[inline]
    pub fn code(&self, r: usize, c: usize) -> u8 {
        self.codes[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.codes[r * self.cols..(r + 1) * self.cols]
    }
}

/// The per-row scale with the bias-deferred cast constant folded in:
/// `fp16(scale * 2^(15 - bias))`, computed in fp32 and rounded once.
pub fn effective_scale(scale: u16, format: FpxFormat) -> Result<u16, &'static str> {
    if !fp16::is_finite(scale) {
        return Err("scale is not finite");
    }
    let folded = fp16::to_f32(scale) * pow2(format.half_rebias_exponent());
    let bits = fp16::from_f32(folded);
    if !fp16::is_finite(bits) {
        return Err("scale times 2^(15-bias) overflows half precision");
    }
    Ok(bits)
}

/// Quantize with one scale per row: `scale = fp16(absmax / max_value)`,
/// `code = encode(x / scale)`. Rows and columns are zero-padded to
/// multiples of 64. An all-zero row gets scale 1.0.
pub fn quantize_matrix(m: &ScalarMatrix, format: FpxFormat) -> Result<QuantizedMatrix> {
    if !format.fits_half() {
        return Err(FpxError::HalfRangeExceeded { format });
    }
    let (orig_rows, orig_cols) = (m.rows(), m.cols());
    let rows = pad_to_tile(orig_rows);
    let cols = pad_to_tile(orig_cols);
    let m = m.to_layout(Layout::RowMajor);
    let values = m.to_f32_row_major();
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(FpxError::InvalidValue(bad));
    }

    let quantized_rows: Vec<(u16, Vec<u8>)> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let src: &[f32] =
                if r < orig_rows { &values[r * orig_cols..(r + 1) * orig_cols] } else { &[] };
            quantize_row(src, cols, r, format)
        })
        .collect::<Result<_>>()?;

    let mut codes = Vec::with_capacity(rows * cols);
    let mut scales = Vec::with_capacity(rows);
    for (s, row) in quantized_rows {
        scales.push(s);
        codes.extend_from_slice(&row);
    }
    Ok(QuantizedMatrix { format, rows, cols, orig_rows, orig_cols, codes, scales })
}

fn quantize_row(src: &[f32], cols: usize, row: usize, format: FpxFormat) -> Result<(u16, Vec<u8>)> {
    let absmax = src.iter().fold(0.0f32, |acc, v| acc.max(v.abs()));
    let scale = if absmax == 0.0 { fp16::ONE } else { fp16::from_f32(absmax / format.max_value()) };
    let scale_f = fp16::to_f32(scale);
    if !fp16::is_finite(scale) {
        return Err(FpxError::ScaleOverflow { row, scale: scale_f, reason: "scale is not finite" });
    }
    if scale_f == 0.0 {
        return Err(FpxError::ScaleOverflow {
            row,
            scale: absmax / format.max_value(),
            reason: "scale underflows half precision",
        });
    }
    effective_scale(scale, format).map_err(|reason| FpxError::ScaleOverflow { row, scale: scale_f, reason })?;

    let mut codes = vec![0u8; cols];
    for (dst, &v) in codes.iter_mut().zip(src) {
        *dst = encode_scalar(v / scale_f, format)? as u8;
    }
    Ok((scale, codes))
}

/// Scalar de-quantization: each element is `fp16(decode(code)) * scale`
/// with a single round-to-nearest-even. Returns the padded matrix as
/// row-major fp16 patterns.
pub fn dequantize_reference(q: &QuantizedMatrix) -> ScalarMatrix {
    let format = q.format();
    let lut: Vec<u16> =
        (0..format.code_count()).map(|c| fp16::from_f32(decode_unchecked(c, format))).collect();
    let lut = &lut;
    let data: Vec<u16> = (0..q.rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let s = q.scales()[r];
            q.row(r).iter().map(move |&c| fp16::mul(lut[c as usize], s)).collect::<Vec<_>>()
        })
        .collect();
    ScalarMatrix::from_f16_bits(q.rows(), q.cols(), Layout::RowMajor, data)
        .expect("padded dims are non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_scalar;
    use crate::matrix::MatrixData;

    fn row(values: Vec<f32>) -> ScalarMatrix {
        ScalarMatrix::from_f32(1, values.len(), Layout::RowMajor, values).unwrap()
    }

    #[test]
    fn saturating_row_has_unit_scale() {
        let q = quantize_matrix(&row(vec![28.0; 64]), FpxFormat::E3M2).unwrap();
        assert_eq!(q.scales()[0], fp16::ONE);
        assert!(q.row(0).iter().all(|&c| c == 0b011111));
        // Padding rows are all zero with unit scale.
        assert_eq!((q.rows(), q.cols()), (64, 64));
        assert!(q.row(1).iter().all(|&c| c == 0));
        assert_eq!(q.scales()[63], fp16::ONE);
    }

    #[test]
    fn zero_row() {
        let q = quantize_matrix(&row(vec![0.0; 64]), FpxFormat::E3M2).unwrap();
        assert_eq!(q.scales()[0], fp16::ONE);
        assert!(q.codes().iter().all(|&c| c == 0));
    }

    #[test]
    fn unit_absmax_row() {
        let mut v = vec![0.0f32; 64];
        v[0] = -1.0;
        v[1] = 1.0;
        v[2] = 0.5;
        for (i, x) in v.iter_mut().enumerate().skip(3) {
            *x = ((i as f32) * 0.37).sin() * 0.9;
        }
        let q = quantize_matrix(&row(v.clone()), FpxFormat::E3M2).unwrap();
        let s = fp16::to_f32(q.scales()[0]);
        assert_eq!(q.scales()[0], fp16::from_f32(1.0 / 28.0));
        for (k, &x) in v.iter().enumerate() {
            let d = decode_scalar(q.code(0, k) as u32, FpxFormat::E3M2).unwrap();
            let xs = x / s;
            let bound = crate::codec::code_spacing(xs, FpxFormat::E3M2) / 2.0;
            assert!((xs - d).abs() <= bound, "k={k}");
        }
        // Row absmax is reproduced within one code step.
        let max = q.row(0).iter().map(|&c| decode_scalar(c as u32, FpxFormat::E3M2).unwrap().abs()).fold(0.0, f32::max);
        assert!((max * s - 1.0).abs() <= s * crate::codec::code_spacing(max, FpxFormat::E3M2));
    }

    #[test]
    fn scale_limits() {
        // absmax 28 * 16 needs scale 16, and 16 * 4096 overflows half.
        let err = quantize_matrix(&row(vec![448.0; 64]), FpxFormat::E3M2).unwrap_err();
        assert_eq!(err.code(), "scale-overflow");
        assert!(quantize_matrix(&row(vec![440.0; 64]), FpxFormat::E3M2).is_ok());
        let err = quantize_matrix(&row(vec![1e-12; 64]), FpxFormat::E3M2).unwrap_err();
        assert_eq!(err.code(), "scale-overflow");
        let err = quantize_matrix(&row(vec![f32::NAN; 64]), FpxFormat::E3M2).unwrap_err();
        assert_eq!(err.code(), "invalid-value");
        let e5 = FpxFormat::new(5, 2).unwrap();
        assert_eq!(quantize_matrix(&row(vec![1.0; 64]), e5).unwrap_err().code(), "half-range-exceeded");
    }

    #[test]
    fn pads_to_tiles() {
        let m = ScalarMatrix::from_f32(3, 70, Layout::ColMajor, vec![0.25; 210]).unwrap();
        let q = quantize_matrix(&m, FpxFormat::E2M3).unwrap();
        assert_eq!((q.rows(), q.cols(), q.orig_rows(), q.orig_cols()), (64, 128, 3, 70));
        assert!(q.row(0)[70..].iter().all(|&c| c == 0));
    }

    #[test]
    fn reference_dequant_examples() {
        let f = FpxFormat::E3M2;
        let mk = |code: u8, scale: u16| {
            let mut codes = vec![0u8; 64 * 64];
            codes[0] = code;
            let mut scales = vec![fp16::ONE; 64];
            scales[0] = scale;
            let q = QuantizedMatrix::from_parts(f, 64, 64, 64, 64, codes, scales).unwrap();
            match dequantize_reference(&q).into_data() {
                MatrixData::F16(v) => v[0],
                _ => unreachable!(),
            }
        };
        assert_eq!(mk(0b001100, fp16::ONE), 0x3C00);
        assert_eq!(mk(0b000001, fp16::from_f32(2.0)), 0x3000);
        assert_eq!(mk(0b100000, fp16::from_f32(3.0)), 0x8000);
        assert_eq!(mk(0b000000, fp16::from_f32(3.0)), 0x0000);
    }

    #[test]
    fn from_parts_validation() {
        let f = FpxFormat::E3M2;
        assert_eq!(
            QuantizedMatrix::from_parts(f, 64, 60, 64, 60, vec![0; 64 * 60], vec![fp16::ONE; 64])
                .unwrap_err()
                .code(),
            "not-padded"
        );
        assert!(QuantizedMatrix::from_parts(f, 64, 64, 64, 64, vec![64; 4096], vec![fp16::ONE; 64]).is_err());
        assert!(QuantizedMatrix::from_parts(f, 64, 64, 64, 64, vec![0; 4096], vec![0x7C00; 64]).is_err());
    }
}
