//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Sub-checks whose failure is understood are listed in `KNOWN_FAILURES`;
//! their criteria still print FAIL, but only unexplained failures make the
//! process exit non-zero.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use haystack_core::bench::{run_sweep, BenchReport, Selector, SweepGrid, SynthConfig, TrialOptions, WorldSpec};
use haystack_core::objectives::{KernelOptions, LogDetMode, ObjectiveSpec, ObjectiveState, SetFunction};
use haystack_core::store::EmbeddingMatrix;
use haystack_core::{greedy_select, GreedyOptions, QueryMode};
use rand::seq::SliceRandom;
use rand::Rng;

const BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;
const MASTER_SEED: u64 = 7;

/// Sub-checks expected to fail, keyed by criterion and check key.
const KNOWN_FAILURES: &[(&str, &str, &str)] = &[
    (
        "greedy_bound",
        "logdet",
        "LogDetMI is not submodular, so greedy carries no (1-1/e) guarantee for it",
    ),
    (
        "submodularity_monotonicity",
        "logdet/diminishing-returns",
        "LogDetMI is a Gaussian mutual information: monotone but not submodular",
    ),
    (
        "submodularity_monotonicity",
        "mixture/diminishing-returns",
        "the mixture inherits the LogDetMI violations through its positive weight",
    ),
];

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
    checks: Vec<(bool, &'static str, String)>,
}

impl Verdict {
    fn new(name: &'static str) -> Self {
        Verdict { name, pass: true, detail: String::new(), checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.keyed(ok, "", what);
    }

    fn keyed(&mut self, ok: bool, key: &'static str, what: String) {
        self.pass &= ok;
        self.checks.push((ok, key, what));
    }

    /// Reason for each failing check, or `None` if any failure is unexplained.
    fn explained(&self) -> Option<Vec<&'static str>> {
        self.checks
            .iter()
            .filter(|(ok, _, _)| !ok)
            .map(|(_, key, _)| {
                KNOWN_FAILURES.iter().find(|(c, k, _)| *c == self.name && k == key).map(|(_, _, why)| *why)
            })
            .collect()
    }

    fn budget(&mut self, elapsed: Duration, limit: Duration) {
        self.check(elapsed < limit, format!("runtime {:.2}s < {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
}

fn gcmi_exactness() -> Verdict {
    let mut v = Verdict::new("gcmi_exactness");
    let start = Instant::now();
    let mut r = rng(1001);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = r.random_range(2..=200);
        let q_n = r.random_range(1..=5);
        let k = r.random_range(1..=n);
        let g = unit_rows(&mut r, n, 32);
        let q = unit_rows(&mut r, q_n, 32);
        let f = ObjectiveSpec::gcmi().build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let mut got = greedy_select(&f, k, GreedyOptions::default()).unwrap().selected;
        let oracle = sims(&g, &q, shifted);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| oracle[b].iter().sum::<f64>().total_cmp(&oracle[a].iter().sum::<f64>()));
        let mut want = order[..k].to_vec();
        got.sort_unstable();
        want.sort_unstable();
        mismatches += (got != want) as usize;
    }
    v.check(mismatches == 0, format!("{mismatches}/100 instances differ from top-k by row sum"));
    v.budget(start.elapsed(), Duration::from_secs(5));
    v
}

fn greedy_bound() -> Verdict {
    let mut v = Verdict::new("greedy_bound");
    let start = Instant::now();
    let specs = [
        ("flvmi", ObjectiveSpec::flvmi()),
        ("logdet", ObjectiveSpec::logdet()),
        ("mixture", ObjectiveSpec::mixture([0.7, 0.2, 0.1])),
    ];
    for (name, spec) in specs {
        let mut r = rng(1002);
        let mut worst = f64::INFINITY;
        let mut violations = 0;
        for _ in 0..100 {
            let n = r.random_range(2..=12);
            let k = r.random_range(1..=4usize).min(n);
            let g = clustered_rows(&mut r, n, 6, 3);
            let q = clustered_rows(&mut r, 2, 6, 1);
            let f = spec.build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
            let greedy = greedy_select(&f, k, GreedyOptions::default()).unwrap().final_value;
            let opt = subsets(n, k).iter().map(|s| f.evaluate(s).unwrap()).fold(f64::NEG_INFINITY, f64::max);
            if opt > 0.0 {
                worst = worst.min(greedy / opt);
            }
            violations += (greedy < BOUND * opt - 1e-9) as usize;
        }
        v.keyed(violations == 0, name, format!("{name}: {violations}/100 below (1-1/e)·OPT, worst ratio {worst:.4}"));
    }
    v.budget(start.elapsed(), Duration::from_secs(60));
    v
}

fn gain_of<F: SetFunction<f64>>(f: &F, set: &[usize], i: usize) -> f64 {
    ObjectiveState::with_selection(f, set).unwrap().marginal_gain(i).unwrap()
}

fn submodularity_monotonicity() -> Verdict {
    let mut v = Verdict::new("submodularity_monotonicity");
    let specs = [
        ("gcmi", ObjectiveSpec::gcmi(), ["gcmi/diminishing-returns", "gcmi/monotone"]),
        ("flvmi", ObjectiveSpec::flvmi(), ["flvmi/diminishing-returns", "flvmi/monotone"]),
        ("logdet", ObjectiveSpec::logdet(), ["logdet/diminishing-returns", "logdet/monotone"]),
        ("mixture", ObjectiveSpec::mixture([0.7, 0.2, 0.1]), ["mixture/diminishing-returns", "mixture/monotone"]),
    ];
    for (name, spec, keys) in specs {
        let mut r = rng(1003);
        let (mut dr, mut mono) = (0, 0);
        for _ in 0..200 {
            let n = r.random_range(2..=15);
            let q_n = r.random_range(1..=3);
            let g = clustered_rows(&mut r, n, 5, 3);
            let q = clustered_rows(&mut r, q_n, 5, 2);
            let f = spec.build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
            let mut items: Vec<usize> = (0..n).collect();
            items.shuffle(&mut r);
            let b_len = r.random_range(0..n);
            let a_len = r.random_range(0..=b_len);
            let i = items[n - 1];
            let (a, b) = (&items[..a_len], &items[..b_len]);
            let (ga, gb) = (gain_of(&f, a, i), gain_of(&f, b, i));
            dr += (ga < gb - 1e-8) as usize;
            mono += (ga < -1e-8) as usize;
        }
        v.keyed(dr == 0, keys[0], format!("{name}: {dr}/200 diminishing-returns violations"));
        v.keyed(mono == 0, keys[1], format!("{name}: {mono}/200 monotonicity violations"));
    }
    v
}

fn incremental_vs_recompute() -> Verdict {
    let mut v = Verdict::new("logdet_incremental_vs_recompute");
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for seed in 0..20 {
        let mut r = rng(2000 + seed);
        let g = unit_rows(&mut r, 50, 64);
        let q = unit_rows(&mut r, 2, 64);
        let inc = ObjectiveSpec::logdet().build::<f64>(&g, &q, &KernelOptions::default()).unwrap();
        let opts = KernelOptions { logdet_mode: LogDetMode::FromScratch, ..Default::default() };
        let scratch = ObjectiveSpec::logdet().build::<f64>(&g, &q, &opts).unwrap();
        let mut state = ObjectiveState::new(&inc);
        for _ in 0..20 {
            let base = scratch.evaluate(state.selected()).unwrap();
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for i in (0..50).filter(|&i| !state.contains(i)) {
                let gain = state.marginal_gain(i).unwrap();
                let mut set = state.selected().to_vec();
                set.push(i);
                let reference = scratch.evaluate(&set).unwrap() - base;
                worst = worst.max((gain - reference).abs() / gain.abs().max(reference.abs()));
                compared += 1;
                if gain > best.1 {
                    best = (i, gain);
                }
            }
            state.accept(best.0).unwrap();
        }
    }
    v.check(worst <= 1e-6, format!("worst relative gap {worst:.2e} over {compared} gains"));
    v
}

fn synth_grid(sizes: Vec<usize>, fractions: Vec<f64>, objectives: Vec<Selector>, trials: usize) -> SweepGrid {
    SweepGrid {
        haystack_sizes: sizes,
        fractions,
        objectives,
        query_modes: vec![QueryMode::Anchor],
        ref_counts: vec![1],
        augmented_counts: vec![0],
        trials_per_cell: trials,
        master_seed: MASTER_SEED,
        world: WorldSpec::Synthetic(SynthConfig::new(20, 64, 0.3, MASTER_SEED)),
        options: TrialOptions::default(),
    }
}

fn harness_sanity() -> Verdict {
    let mut v = Verdict::new("harness_sanity");
    let report = run_sweep(&synth_grid(vec![100], vec![0.1], vec![Selector::RANDOM], 10_000), None, false).unwrap();
    let cell = &report.cells[0];
    let (lo, hi) = binomial_ci99(0.1, cell.trials);
    v.check(
        lo <= cell.success_fraction && cell.success_fraction <= hi,
        format!("random at 0.1: {:.4} in [{lo:.4}, {hi:.4}] over {} trials", cell.success_fraction, cell.trials),
    );
    let full = synth_grid(vec![100], vec![1.0], vec![ObjectiveSpec::gcmi().into(), Selector::RANDOM], 200);
    for cell in run_sweep(&full, None, false).unwrap().cells {
        v.check(
            cell.success_fraction == 1.0,
            format!("{} at fraction 1.0: {}", cell.objective.label(), cell.success_fraction),
        );
    }
    v
}

fn fraction_and_size_trends() -> (Verdict, Verdict) {
    let sizes = vec![100, 500, 1000];
    let fractions = vec![0.01, 0.05, 0.1, 0.2, 0.5];
    let grid = synth_grid(sizes.clone(), fractions.clone(), vec![ObjectiveSpec::gcmi().into()], 500);
    let report = run_sweep(&grid, None, false).unwrap();
    let sf = |n: usize, f: f64| {
        report.cells.iter().find(|c| c.haystack_size == n && c.subset_fraction == f).unwrap().success_fraction
    };
    let mut by_fraction = Verdict::new("fraction_trend");
    for &n in &sizes {
        let curve: Vec<f64> = fractions.iter().map(|&f| sf(n, f)).collect();
        let ok = curve.windows(2).all(|w| w[0] <= w[1]);
        by_fraction.check(ok, format!("n={n}: {}", fmt_curve(&curve)));
    }
    let mut by_size = Verdict::new("haystack_size_trend");
    let at = sizes.iter().map(|&n| sf(n, 0.1)).collect::<Vec<_>>();
    for (w, pair) in at.windows(2).zip(sizes.windows(2)) {
        by_size.check(
            w[1] <= w[0] + 0.01,
            format!("fraction 0.1: sf(n={}) = {:.3} vs sf(n={}) = {:.3} (+0.01 slack)", pair[1], w[1], pair[0], w[0]),
        );
    }
    (by_fraction, by_size)
}

fn fmt_curve(c: &[f64]) -> String {
    c.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ≤ ")
}

fn query_set_trends() -> Verdict {
    let mut v = Verdict::new("query_mode_and_reference_trends");
    let mut grid = synth_grid(vec![1000], vec![0.1], vec![ObjectiveSpec::gcmi().into()], 500);
    grid.query_modes = vec![QueryMode::Anchor, QueryMode::Target];
    grid.ref_counts = vec![1, 2, 5];
    let report = run_sweep(&grid, None, false).unwrap();
    let sf = |mode: QueryMode, refs: usize| {
        report.cells.iter().find(|c| c.query_mode == mode && c.ref_count == refs).unwrap().success_fraction
    };
    for refs in [1, 2, 5] {
        let (a, t) = (sf(QueryMode::Anchor, refs), sf(QueryMode::Target, refs));
        v.check(a + 0.01 >= t, format!("refs={refs}: anchor {a:.3} ≥ target {t:.3}"));
    }
    for mode in [QueryMode::Anchor, QueryMode::Target] {
        let (r1, r2, r5) = (sf(mode, 1), sf(mode, 2), sf(mode, 5));
        v.check(
            r5 + 0.01 >= r2 && r2 + 0.01 >= r1,
            format!("{mode:?}: refs 5 {r5:.3} ≥ 2 {r2:.3} ≥ 1 {r1:.3}"),
        );
    }
    v
}

fn determinism() -> Verdict {
    let mut v = Verdict::new("determinism");
    let objectives = vec![
        ObjectiveSpec::gcmi().into(),
        ObjectiveSpec::flvmi().into(),
        ObjectiveSpec::logdet().into(),
        ObjectiveSpec::mixture([0.7, 0.2, 0.1]).into(),
        Selector::RANDOM,
    ];
    let mut grid = synth_grid(vec![60, 150], vec![0.05, 0.2], objectives, 20);
    grid.ref_counts = vec![1, 2];
    grid.augmented_counts = vec![0, 2];
    let run = |threads| run_sweep(&grid, Some(threads), false).unwrap().to_json();
    let reference = run(1);
    v.check(reference == run(1), "two runs on 1 thread are byte-identical".into());
    for t in [4, 8] {
        v.check(reference == run(t), format!("{t} threads match 1 thread"));
    }
    let parsed = BenchReport::from_json(&reference).unwrap();
    v.detail = format!("{} cells, {} bytes", parsed.cells.len(), reference.len());
    v
}

fn timed_selection(spec: ObjectiveSpec, g: &EmbeddingMatrix, q: &EmbeddingMatrix, k: usize) -> (Duration, usize) {
    let start = Instant::now();
    let f = spec.build::<f64>(g, q, &KernelOptions::default()).unwrap();
    let picked = greedy_select(&f, k, GreedyOptions::default()).unwrap().selected.len();
    (start.elapsed(), picked)
}

fn performance() -> Verdict {
    let mut v = Verdict::new("performance");
    let mut r = rng(3001);
    let g = clustered_rows(&mut r, 10_000, 512, 20);
    let q = clustered_rows(&mut r, 1, 512, 1);
    let (t, picked) = timed_selection(ObjectiveSpec::gcmi(), &g, &q, 1000);
    v.check(picked == 1000 && t < Duration::from_secs(2), format!("gcmi n=10000 d=512 k=1000: {:.3}s < 2s", t.as_secs_f64()));
    let g = clustered_rows(&mut r, 2000, 512, 20);
    let q = clustered_rows(&mut r, 1, 512, 1);
    let (t, picked) = timed_selection(ObjectiveSpec::flvmi(), &g, &q, 200);
    v.check(picked == 200 && t < Duration::from_secs(60), format!("flvmi n=2000 d=512 k=200: {:.3}s < 60s", t.as_secs_f64()));
    v.detail = format!("{} worker threads", rayon::current_num_threads());
    v
}

fn main() -> ExitCode {
    let criteria: Vec<fn() -> Vec<Verdict>> = vec![
        || vec![gcmi_exactness()],
        || vec![greedy_bound()],
        || vec![submodularity_monotonicity()],
        || vec![incremental_vs_recompute()],
        || vec![harness_sanity()],
        || {
            let (a, b) = fraction_and_size_trends();
            vec![a, b]
        },
        || vec![query_set_trends()],
        || vec![determinism()],
        || vec![performance()],
    ];
    let mut unexpected = 0;
    let mut failed = 0;
    let mut total = 0;
    for criterion in criteria {
        let start = Instant::now();
        let verdicts = criterion();
        let elapsed = start.elapsed();
        for v in verdicts {
            total += 1;
            let status = if v.pass { "PASS" } else { "FAIL" };
            let detail = if v.detail.is_empty() { String::new() } else { format!(" ({})", v.detail) };
            println!("{status} {}{detail} [{:.1}s]", v.name, elapsed.as_secs_f64());
            for (ok, _, what) in &v.checks {
                println!("    {} {what}", if *ok { "ok  " } else { "FAIL" });
            }
            if !v.pass {
                failed += 1;
                match v.explained() {
                    Some(reasons) => reasons.iter().for_each(|why| println!("    known failure: {why}")),
                    None => unexpected += 1,
                }
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed ({unexpected} unexpected) of {total}", total - failed);
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
