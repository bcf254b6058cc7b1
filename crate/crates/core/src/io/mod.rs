//! Binary containers: `FPXMAT1\0` matrices and `FPXPACK1` packed weights.
//! All multi-byte fields are little-endian.

mod matrix_file;
mod pack_file;

pub use matrix_file::{read_matrix, read_matrix_path, read_raw, write_matrix, write_matrix_path, MATRIX_HEADER_LEN, MATRIX_MAGIC};
pub use pack_file::{pack_header_len, read_pack, read_pack_path, write_pack, write_pack_path, PACK_MAGIC, PACK_VERSION};

use crate::error::{FpxError, Result};

/// Bounds-checked little-endian cursor that reports byte offsets.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if n > left {
            return Err(FpxError::corrupt(
                self.pos,
                format!("truncated {what}: need {n} bytes, {left} remain"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(FpxError::corrupt(
                self.pos,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}
