//! FPx weight path: minifloat quantization, ahead-of-time bit-level
//! pre-packing for tensor-core fragments, word-parallel de-quantization,
//! and a warp-level GEMM simulator checked bit-for-bit against a scalar
//! reference.

pub mod codec;
pub mod error;
pub mod format;
pub mod fp16;
pub mod gemm;
pub mod io;
pub mod matrix;
pub mod prepack;
pub mod quantize;
pub mod simt;

pub use codec::{decode_scalar, encode_scalar, new_cast_bits};
pub use error::{FpxError, Result};
pub use format::FpxFormat;
pub use matrix::{Layout, MatrixData, ScalarMatrix};
pub use prepack::{pack, unpack, PackedWeights, SplitScheme};
pub use quantize::{dequantize_reference, quantize_matrix, QuantizedMatrix};
