mod common;

use common::*;
use haystack_core::kernel::{kernel_block, KernelConfig, QueryKernel, Transform};
use haystack_core::linalg::Cholesky;
use haystack_core::objectives::{GraphCutMi, ObjectiveSpec, KernelOptions};
use haystack_core::{greedy_select, GreedyOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn query_kernel_matches_double_loop() {
    let mut r = rng(11);
    let g = unit_rows(&mut r, 5, 8);
    let q = unit_rows(&mut r, 3, 8);
    for (cfg, map) in [(KernelConfig::raw(), raw as fn(f64) -> f64), (KernelConfig::shifted(), shifted)] {
        let k = QueryKernel::<f64>::build(&g, &q, cfg).unwrap();
        let oracle = sims(&g, &q, map);
        for (i, row) in oracle.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!((k.get(i, j) - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn jittered_block_has_nonnegative_spectrum() {
    let mut r = rng(12);
    let g = unit_rows(&mut r, 6, 4);
    let idx: Vec<usize> = (0..6).collect();
    let block = kernel_block::<f64>(&g, &idx, &idx, KernelConfig::raw()).unwrap();
    Cholesky::factor(&block).unwrap();
    let dense = DMatrix::from_fn(6, 6, |a, b| block[(a, b)]);
    let smallest = dense.symmetric_eigenvalues().min();
    assert!(smallest >= 0.0, "smallest eigenvalue {smallest}");
}

#[test]
fn shifted_block_is_positive_definite_too() {
    let mut r = rng(13);
    let g = unit_rows(&mut r, 30, 5);
    let idx: Vec<usize> = (0..30).collect();
    let block = kernel_block::<f64>(&g, &idx, &idx, KernelConfig::shifted()).unwrap();
    assert!(Cholesky::factor(&block).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_blocks_are_symmetric_and_factor(seed in any::<u64>(), n in 1usize..=50, d in 2usize..40) {
        let g = unit_rows(&mut rng(seed), n, d);
        let idx: Vec<usize> = (0..n).collect();
        let block = kernel_block::<f64>(&g, &idx, &idx, KernelConfig::raw()).unwrap();
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(block[(a, b)].to_bits(), block[(b, a)].to_bits());
            }
        }
        prop_assert!(Cholesky::factor(&block).is_ok());
    }

    #[test]
    fn shift_preserves_order(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        prop_assume!(a != b);
        let (sa, sb) = (Transform::Shifted.apply(a), Transform::Shifted.apply(b));
        prop_assert_eq!(a < b, sa < sb);
    }

    #[test]
    fn gcmi_selection_ignores_the_transform(seed in any::<u64>(), n in 2usize..60, k in 1usize..10) {
        let mut r = rng(seed);
        let g = unit_rows(&mut r, n, 6);
        let q = unit_rows(&mut r, 1, 6);
        let pick = |t: Transform| {
            let opts = KernelOptions { transform: Some(t), ..Default::default() };
            let f = ObjectiveSpec::gcmi().build::<f64>(&g, &q, &opts).unwrap();
            greedy_select(&f, k, GreedyOptions::naive()).unwrap().selected
        };
        prop_assert_eq!(pick(Transform::Raw), pick(Transform::Shifted));
    }
}

#[test]
fn graph_cut_contributions_are_scaled_row_sums() {
    let mut r = rng(14);
    let g = unit_rows(&mut r, 9, 5);
    let q = unit_rows(&mut r, 3, 5);
    let k = QueryKernel::<f64>::build(&g, &q, KernelConfig::shifted()).unwrap();
    let f = GraphCutMi::new(&k, 0.5).unwrap();
    let oracle = sims(&g, &q, shifted);
    for (got, row) in f.contributions().iter().zip(&oracle) {
        assert!((got - row.iter().sum::<f64>()).abs() < 1e-9);
    }
}
