//! Warp-level assembly in jagged order: word `j` of thread `i` lands at
//! stream position `j * 32 + i`, so a warp-wide load of word `j` touches 32
//! consecutive words.

use crate::error::{FpxError, Result};
use crate::prepack::layout::WARP_SIZE;

pub fn assemble_warp(per_thread: &[Vec<u32>]) -> Result<Vec<u32>> {
    if per_thread.len() != WARP_SIZE {
        return Err(FpxError::DimensionMismatch(format!(
            "warp assembly needs {WARP_SIZE} threads, got {}",
            per_thread.len()
        )));
    }
    let n = per_thread[0].len();
    if let Some((thread, words)) = per_thread.iter().enumerate().find(|(_, w)| w.len() != n) {
        return Err(FpxError::RaggedWarp { thread, got: words.len(), expected: n });
    }
    let mut out = vec![0u32; n * WARP_SIZE];
    for (i, words) in per_thread.iter().enumerate() {
        for (j, &w) in words.iter().enumerate() {
            out[j * WARP_SIZE + i] = w;
        }
    }
    Ok(out)
}

/// Inverse of [`assemble_warp`].
pub fn disassemble_warp(stream: &[u32]) -> Result<Vec<Vec<u32>>> {
    if !stream.len().is_multiple_of(WARP_SIZE) {
        return Err(FpxError::DimensionMismatch(format!(
            "stream of {} words is not a whole number of warp rows",
            stream.len()
        )));
    }
    let n = stream.len() / WARP_SIZE;
    Ok((0..WARP_SIZE).map(|i| (0..n).map(|j| stream[j * WARP_SIZE + i]).collect()).collect())
}

/// Little-endian serialization of a word stream.
pub fn words_to_le_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn le_bytes_to_words(bytes: &[u8]) -> Option<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jagged_order() {
        let input: Vec<Vec<u32>> = (0..32).map(|i| vec![i, 100 + i]).collect();
        let out = assemble_warp(&input).unwrap();
        let want: Vec<u32> = (0..32).chain(100..132).collect();
        assert_eq!(out, want);
        assert_eq!(words_to_le_bytes(&out).len() % 128, 0);
    }

    #[test]
    fn empty_and_ragged() {
        let empty = vec![Vec::new(); 32];
        assert!(assemble_warp(&empty).unwrap().is_empty());
        let mut ragged = vec![vec![0u32; 3]; 32];
        ragged[5].pop();
        assert_eq!(assemble_warp(&ragged).unwrap_err(), FpxError::RaggedWarp { thread: 5, got: 2, expected: 3 });
        assert!(assemble_warp(&vec![vec![0u32; 3]; 31]).is_err());
    }

    proptest! {
        #[test]
        fn disassemble_inverts(n in 0usize..20, seed in any::<u32>()) {
            let input: Vec<Vec<u32>> = (0..32u32)
                .map(|i| (0..n as u32).map(|j| seed.wrapping_mul(2654435761).wrapping_add(i * 977 + j)).collect())
                .collect();
            let stream = assemble_warp(&input).unwrap();
            prop_assert_eq!(disassemble_warp(&stream).unwrap(), input);
            let bytes = words_to_le_bytes(&stream);
            prop_assert_eq!(le_bytes_to_words(&bytes).unwrap(), stream);
        }
    }
}
