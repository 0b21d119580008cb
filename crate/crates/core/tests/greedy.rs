mod common;

use common::*;
use haystack_core::objectives::{KernelOptions, ObjectiveSpec, SetFunction};
use haystack_core::{greedy_select, GreedyOptions, Strategy};
use proptest::prelude::*;
use rand::Rng;

const BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;

#[test]
fn graph_cut_greedy_is_top_k_by_row_sum() {
    let mut r = rng(31);
    for _ in 0..20 {
        let n = r.random_range(5..150);
        let k = r.random_range(1..=n);
        let g = unit_rows(&mut r, n, 8);
        let q_n = r.random_range(1..=5);
        let q = unit_rows(&mut r, q_n, 8);
        let f = ObjectiveSpec::gcmi().build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let picked = greedy_select(&f, k, GreedyOptions::default()).unwrap().selected;
        let oracle = sims(&g, &q, shifted);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| oracle[b].iter().sum::<f64>().total_cmp(&oracle[a].iter().sum::<f64>()));
        let mut got = picked.clone();
        got.sort_unstable();
        let mut want = order[..k].to_vec();
        want.sort_unstable();
        assert_eq!(got, want);
    }
}

#[test]
fn facility_greedy_reaches_the_bound() {
    let mut r = rng(32);
    for _ in 0..30 {
        let g = clustered_rows(&mut r, 10, 5, 3);
        let q = clustered_rows(&mut r, 2, 5, 1);
        let f = ObjectiveSpec::flvmi().build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let greedy = greedy_select(&f, 3, GreedyOptions::naive()).unwrap().final_value;
        let opt = subsets(10, 3).iter().map(|s| f.evaluate(s).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert!(greedy >= BOUND * opt - 1e-9, "greedy {greedy}, opt {opt}");
    }
}

fn specs() -> [ObjectiveSpec; 4] {
    [
        ObjectiveSpec::gcmi(),
        ObjectiveSpec::flvmi(),
        ObjectiveSpec::logdet(),
        ObjectiveSpec::mixture([0.7, 0.2, 0.1]),
    ]
}

#[test]
fn lazy_and_naive_agree_exactly() {
    let mut r = rng(33);
    for _ in 0..100 {
        let n = r.random_range(2..=200);
        let k = r.random_range(1..=n.min(25));
        let g = clustered_rows(&mut r, n, 8, 4);
        let q_n = r.random_range(1..=3);
        let q = clustered_rows(&mut r, q_n, 8, 1);
        for spec in specs() {
            let f = spec.build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
            let naive = greedy_select(&f, k, GreedyOptions::naive()).unwrap();
            let lazy = greedy_select(&f, k, GreedyOptions::lazy()).unwrap();
            assert_eq!(naive.selected, lazy.selected, "{spec:?} n={n} k={k}");
        }
    }
}

#[test]
fn lazy_request_on_logdet_runs_naive() {
    let mut r = rng(34);
    let g = unit_rows(&mut r, 30, 6);
    let q = unit_rows(&mut r, 1, 6);
    let f = ObjectiveSpec::logdet().build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
    assert_eq!(greedy_select(&f, 5, GreedyOptions::lazy()).unwrap().strategy, Strategy::Naive);
}

#[test]
fn serial_and_parallel_evaluation_agree() {
    let mut r = rng(35);
    let g = clustered_rows(&mut r, 300, 8, 5);
    let q = clustered_rows(&mut r, 2, 8, 1);
    for spec in specs() {
        let f = spec.build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let a = greedy_select(&f, 20, GreedyOptions::naive()).unwrap();
        let b = greedy_select(&f, 20, GreedyOptions::naive().serial()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaling_all_weights_keeps_the_sequence(seed in any::<u64>(), n in 2usize..60, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let g = clustered_rows(&mut r, n, 6, 3);
        let q = clustered_rows(&mut r, 2, 6, 1);
        let spec = ObjectiveSpec::mixture([0.7, 0.2, 0.1]);
        let k = n.min(8);
        let opts = KernelOptions::default();
        let base = spec.build_with_raw_weights::<f64>([0.7, 0.2, 0.1], &g, &q, &opts).unwrap();
        let scaled = spec.build_with_raw_weights::<f64>([0.7 * c, 0.2 * c, 0.1 * c], &g, &q, &opts).unwrap();
        let a = greedy_select(&base, k, GreedyOptions::naive()).unwrap();
        let b = greedy_select(&scaled, k, GreedyOptions::naive()).unwrap();
        prop_assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn repeated_runs_serialize_identically(seed in any::<u64>(), which in 0usize..4) {
        let mut r = rng(seed);
        let g = clustered_rows(&mut r, 40, 6, 3);
        let q = clustered_rows(&mut r, 2, 6, 1);
        let f = specs()[which].build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let a = greedy_select(&f, 10, GreedyOptions::default()).unwrap();
        let b = greedy_select(&f, 10, GreedyOptions::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn greedy_bound_on_enumerable_instances(seed in any::<u64>(), n in 2usize..=12, k in 1usize..=4) {
        let k = k.min(n);
        let mut r = rng(seed);
        let g = clustered_rows(&mut r, n, 5, 3);
        let q = clustered_rows(&mut r, 2, 5, 1);
        // GCMI and FLVMI are the monotone submodular configurations
        for spec in [ObjectiveSpec::gcmi(), ObjectiveSpec::flvmi(), ObjectiveSpec::mixture([0.5, 0.5, 0.0])] {
            let f = spec.build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
            let greedy = greedy_select(&f, k, GreedyOptions::naive()).unwrap().final_value;
            let opt = subsets(n, k).iter().map(|s| f.evaluate(s).unwrap()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(greedy >= BOUND * opt - 1e-9);
        }
    }
}
