//! Dense scalar matrices (fp32 values or fp16 bit patterns).

use crate::error::{FpxError, Result};
use crate::fp16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    RowMajor,
    ColMajor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    F32(Vec<f32>),
    /// IEEE half-precision bit patterns.
    F16(Vec<u16>),
}

impl MatrixData {
    pub fn len(&self) -> usize {
        match self {
            MatrixData::F32(v) => v.len(),
            MatrixData::F16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMatrix {
    rows: usize,
    cols: usize,
    layout: Layout,
    data: MatrixData,
}

impl ScalarMatrix {
    pub fn new(rows: usize, cols: usize, layout: Layout, data: MatrixData) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FpxError::DimensionMismatch(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(FpxError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(ScalarMatrix { rows, cols, layout, data })
    }

    pub fn from_f32(rows: usize, cols: usize, layout: Layout, data: Vec<f32>) -> Result<Self> {
        Self::new(rows, cols, layout, MatrixData::F32(data))
    }

    pub fn from_f16_bits(rows: usize, cols: usize, layout: Layout, data: Vec<u16>) -> Result<Self> {
        Self::new(rows, cols, layout, MatrixData::F16(data))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &MatrixData {
        &self.data
    }

    pub fn into_data(self) -> MatrixData {
        self.data
    }

    #[inline]
    fn index(&self, r: usize, c: usize) -> usize {
        match self.layout {
            Layout::RowMajor => r * self.cols + c,
            Layout::ColMajor => c * self.rows + r,
        }
    }

    /// Element widened to `f32` (exact for both dtypes).
    pub fn get_f32(&self, r: usize, c: usize) -> f32 {
        let i = self.index(r, c);
        match &self.data {
            MatrixData::F32(v) => v[i],
            MatrixData::F16(v) => fp16::to_f32(v[i]),
        }
    }

    /// Element as a half pattern; fp32 data is rounded to nearest even.
    pub fn get_f16(&self, r: usize, c: usize) -> u16 {
        let i = self.index(r, c);
        match &self.data {
            MatrixData::F32(v) => fp16::from_f32(v[i]),
            MatrixData::F16(v) => v[i],
        }
    }

    /// Copy into the requested layout, keeping the dtype.
    pub fn to_layout(&self, layout: Layout) -> ScalarMatrix {
        if layout == self.layout {
            return self.clone();
        }
        let order: Vec<usize> = match layout {
            Layout::RowMajor => (0..self.rows)
                .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
                .map(|(r, c)| self.index(r, c))
                .collect(),
            Layout::ColMajor => (0..self.cols)
                .flat_map(|c| (0..self.rows).map(move |r| (r, c)))
                .map(|(r, c)| self.index(r, c))
                .collect(),
        };
        let data = match &self.data {
            MatrixData::F32(v) => MatrixData::F32(order.iter().map(|&i| v[i]).collect()),
            MatrixData::F16(v) => MatrixData::F16(order.iter().map(|&i| v[i]).collect()),
        };
        ScalarMatrix { rows: self.rows, cols: self.cols, layout, data }
    }

    /// Row-major `f32` copy of all elements.
    pub fn to_f32_row_major(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.get_f32(r, c));
            }
        }
        out
    }

    /// Same layout, elements widened to fp32.
    pub fn to_f32(&self) -> ScalarMatrix {
        let data = match &self.data {
            MatrixData::F32(v) => v.clone(),
            MatrixData::F16(v) => v.iter().map(|&b| fp16::to_f32(b)).collect(),
        };
        ScalarMatrix { rows: self.rows, cols: self.cols, layout: self.layout, data: MatrixData::F32(data) }
    }

    /// Same layout, elements rounded to fp16.
    pub fn to_f16(&self) -> ScalarMatrix {
        let data = match &self.data {
            MatrixData::F32(v) => v.iter().map(|&x| fp16::from_f32(x)).collect(),
            MatrixData::F16(v) => v.clone(),
        };
        ScalarMatrix { rows: self.rows, cols: self.cols, layout: self.layout, data: MatrixData::F16(data) }
    }

    /// Top-left `rows x cols` sub-matrix.
    pub fn trim(&self, rows: usize, cols: usize) -> Result<ScalarMatrix> {
        if rows > self.rows || cols > self.cols {
            return Err(FpxError::DimensionMismatch(format!(
                "cannot trim {}x{} to {rows}x{cols}",
                self.rows, self.cols
            )));
        }
        let pick = |i: usize| -> (usize, usize) {
            match self.layout {
                Layout::RowMajor => (i / cols, i % cols),
                Layout::ColMajor => (i % rows, i / rows),
            }
        };
        let n = rows * cols;
        let data = match &self.data {
            MatrixData::F32(v) => MatrixData::F32(
                (0..n).map(&pick).map(|(r, c)| v[self.index(r, c)]).collect(),
            ),
            MatrixData::F16(v) => MatrixData::F16(
                (0..n).map(pick).map(|(r, c)| v[self.index(r, c)]).collect(),
            ),
        };
        ScalarMatrix::new(rows, cols, self.layout, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_conversion_preserves_elements() {
        let m = ScalarMatrix::from_f32(2, 3, Layout::RowMajor, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let c = m.to_layout(Layout::ColMajor);
        assert_eq!(c.data(), &MatrixData::F32(vec![1., 4., 2., 5., 3., 6.]));
        assert_eq!(c.get_f32(1, 2), 6.0);
        assert_eq!(c.to_layout(Layout::RowMajor), m);
    }

    #[test]
    fn trim_and_dims() {
        let m = ScalarMatrix::from_f16_bits(2, 2, Layout::ColMajor, vec![1, 2, 3, 4]).unwrap();
        let t = m.trim(1, 2).unwrap();
        assert_eq!(t.data(), &MatrixData::F16(vec![1, 3]));
        assert!(m.trim(3, 1).is_err());
        assert!(ScalarMatrix::from_f32(2, 2, Layout::RowMajor, vec![0.0; 3]).is_err());
        assert!(ScalarMatrix::from_f32(0, 2, Layout::RowMajor, vec![]).is_err());
    }
}
