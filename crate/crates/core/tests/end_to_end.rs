use fpx_core::gemm::{gemm_packed, gemm_reference, GemmProblem};
use fpx_core::io::{read_matrix, read_pack, write_matrix, write_pack};
use fpx_core::prepack::pack_with_split;
use fpx_core::{pack, quantize_matrix, unpack, FpxFormat, Layout, MatrixData, ScalarMatrix, SplitScheme};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn formats() -> impl Strategy<Value = FpxFormat> {
    prop_oneof![
        Just(FpxFormat::E3M2),
        Just(FpxFormat::E2M3),
        Just(FpxFormat::E2M2),
        Just(FpxFormat::E1M1),
        Just(FpxFormat::E4M3),
    ]
}

fn bits(m: &ScalarMatrix) -> Vec<u32> {
    match m.data() {
        MatrixData::F32(v) => v.iter().map(|x| x.to_bits()).collect(),
        MatrixData::F16(v) => v.iter().map(|&x| x as u32).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Quantize, pack, serialize, parse, multiply: both paths agree and the
    // file round trip is lossless.
    #[test]
    fn pipeline_commutes(
        fmt in formats(),
        rows in 1usize..150,
        cols in 1usize..150,
        n in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut next = move || rng.gen_range(-1.0f32..1.0);
        let w = ScalarMatrix::from_f32(rows, cols, Layout::RowMajor, (0..rows * cols).map(|_| next()).collect()).unwrap();
        let b = ScalarMatrix::from_f32(cols, n, Layout::ColMajor, (0..cols * n).map(|_| next() * 4.0).collect()).unwrap();

        let q = quantize_matrix(&w, fmt).unwrap();
        let p = pack(&q).unwrap();
        let file = write_pack(&p);
        let p2 = read_pack(&file).unwrap();
        prop_assert_eq!(&p2, &p);
        prop_assert_eq!(unpack(&p2).unwrap(), q.clone());

        let b2 = read_matrix(&write_matrix(&b)).unwrap();
        prop_assert_eq!(&b2, &b);
        let got = gemm_packed(GemmProblem { weights: &p2, activations: &b2 }).unwrap();
        let want = gemm_reference(&q, &b).unwrap();
        prop_assert_eq!(bits(&got), bits(&want));
    }
}

#[test]
fn alternative_splits_agree() {
    let vals: Vec<f32> = (0..128 * 64).map(|i| ((i * 7919 % 997) as f32 - 498.0) / 97.0).collect();
    let w = ScalarMatrix::from_f32(128, 64, Layout::RowMajor, vals).unwrap();
    let b = ScalarMatrix::from_f32(64, 8, Layout::ColMajor, (0..512).map(|i| (i % 13) as f32 - 6.0).collect()).unwrap();
    let q = quantize_matrix(&w, FpxFormat::E3M2).unwrap();
    let want = bits(&gemm_reference(&q, &b).unwrap());
    for widths in [vec![2, 4], vec![4, 2], vec![2, 2, 2], vec![1, 1, 4], vec![2, 1, 1, 2]] {
        let p = pack_with_split(&q, SplitScheme::new(widths.clone(), q.format()).unwrap()).unwrap();
        assert_eq!(unpack(&p).unwrap(), q, "{widths:?}");
        let got = gemm_packed(GemmProblem { weights: &p, activations: &b }).unwrap();
        assert_eq!(bits(&got), want, "{widths:?}");
    }
}
