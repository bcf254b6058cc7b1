//! m16n8k16 tensor-core numerics: fp16 inputs, fp32 products and sums,
//! accumulated in ascending k onto the existing accumulator.

use crate::fp16;

pub type AFrag = [[u16; 16]; 16];
pub type BFrag = [[u16; 8]; 16];
pub type CFrag = [[f32; 8]; 16];

pub fn mma_emulate(a: &AFrag, b: &BFrag, c: &CFrag) -> CFrag {
    let mut out = *c;
    mma_accumulate(a, b, &mut out);
    out
}

#[inline]
pub(crate) fn mma_accumulate(a: &AFrag, b: &BFrag, c: &mut CFrag) {
    let bf: [[f32; 8]; 16] = std::array::from_fn(|k| std::array::from_fn(|j| fp16::to_f32(b[k][j])));
    mma_accumulate_f32b(a, &bf, c);
}

/// Same as [`mma_accumulate`] with `B` already widened to fp32.
#[inline]
pub(crate) fn mma_accumulate_f32b(a: &AFrag, bf: &[[f32; 8]; 16], c: &mut CFrag) {
    for (i, row) in a.iter().enumerate() {
        let af: [f32; 16] = std::array::from_fn(|k| fp16::to_f32(row[k]));
        for j in 0..8 {
            let mut acc = c[i][j];
            for k in 0..16 {
                acc += af[k] * bf[k][j];
            }
            c[i][j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_widens_b() {
        let mut a = [[0u16; 16]; 16];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = fp16::ONE;
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b: BFrag = std::array::from_fn(|_| std::array::from_fn(|_| fp16::from_f32(rng.gen_range(-4.0..4.0))));
        let c = mma_emulate(&a, &b, &[[0.0; 8]; 16]);
        for i in 0..16 {
            for j in 0..8 {
                assert_eq!(c[i][j], fp16::to_f32(b[i][j]));
            }
        }
    }

    #[test]
    fn zeros() {
        let c = mma_emulate(&[[0; 16]; 16], &[[0; 8]; 16], &[[0.0; 8]; 16]);
        assert!(c.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_naive_triple_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: AFrag = std::array::from_fn(|_| std::array::from_fn(|_| fp16::from_f32(rng.gen_range(-2.0..2.0))));
            let b: BFrag = std::array::from_fn(|_| std::array::from_fn(|_| fp16::from_f32(rng.gen_range(-2.0..2.0))));
            let c: CFrag = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
            let got = mma_emulate(&a, &b, &c);
            for i in 0..16 {
                for j in 0..8 {
                    let mut acc = c[i][j];
                    for k in 0..16 {
                        acc += fp16::to_f32(a[i][k]) * fp16::to_f32(b[k][j]);
                    }
                    assert_eq!(got[i][j].to_bits(), acc.to_bits());
                }
            }
        }
    }
}
