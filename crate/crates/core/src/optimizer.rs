//! Greedy maximization under a cardinality constraint.
//!
//! Both strategies pick, at every step, the candidate with the largest
//! marginal gain, breaking ties by the lowest index. The lazy strategy keeps
//! stale gains in a max-heap as upper bounds and only re-evaluates the top;
//! for submodular objectives this yields exactly the naive sequence. For
//! objectives that do not report submodularity the lazy request falls back
//! to naive evaluation, since stale gains are not upper bounds there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::{ObjectiveError, ObjectiveState, SetFunction};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Naive,
    #[default]
    Lazy,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "lazy" => Ok(Strategy::Lazy),
            other => Err(format!("unknown strategy {other:?} (expected naive or lazy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyOptions {
    pub strategy: Strategy,
    /// Evaluate candidate gains on the current rayon pool.
    pub parallel: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { strategy: Strategy::Lazy, parallel: true }
    }
}

impl GreedyOptions {
    pub fn naive() -> Self {
        GreedyOptions { strategy: Strategy::Naive, ..Default::default() }
    }

    pub fn lazy() -> Self {
        GreedyOptions { strategy: Strategy::Lazy, ..Default::default() }
    }

    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("greedy step {step}: {source}")]
    Objective {
        step: usize,
        #[source]
        source: ObjectiveError,
    },
    #[error("ground set is empty")]
    EmptyGroundSet,
    #[error("subset fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<T> {
    /// Indices in the order they were selected.
    pub selected: Vec<usize>,
    /// Marginal gain of each selected item at the time it was picked.
    pub gains: Vec<T>,
    pub final_value: T,
    /// Number of marginal-gain computations.
    pub evaluations: u64,
    /// Set when `k` exceeded the ground set size.
    pub truncated: bool,
    /// Strategy actually used.
    pub strategy: Strategy,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    gain: f64,
    index: usize,
    step: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    // larger gain first, then lower index
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| other.index.cmp(&self.index))
    }
}

/// `k = max(1, round(fraction·n))`, rounding half away from zero.
pub fn subset_fraction_to_k(n: usize, fraction: f64) -> Result<usize, SelectError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SelectError::BadFraction(fraction));
    }
    Ok(((fraction * n as f64).round() as usize).max(1))
}

/// Greedily selects `k` items (or all of them when `k > n`).
pub fn greedy_select<T, F>(f: &F, k: usize, options: GreedyOptions) -> Result<SelectionResult<T>, SelectError>
where
    T: Scalar,
    F: SetFunction<T>,
{
    let start = Instant::now();
    let n = f.ground_size();
    if n == 0 {
        return Err(SelectError::EmptyGroundSet);
    }
    let truncated = k > n;
    let k = k.min(n);
    let strategy = if options.strategy == Strategy::Lazy && f.is_submodular() {
        Strategy::Lazy
    } else {
        Strategy::Naive
    };
    let mut state = ObjectiveState::new(f);
    let mut gains = Vec::with_capacity(k);
    let evaluations = match strategy {
        Strategy::Naive => run_naive(&mut state, k, options.parallel, &mut gains)?,
        Strategy::Lazy => run_lazy(&mut state, k, options.parallel, &mut gains)?,
    };
    Ok(SelectionResult {
        selected: state.selected().to_vec(),
        gains,
        final_value: state.value(),
        evaluations,
        truncated,
        strategy,
        elapsed: start.elapsed(),
    })
}

fn step_err(step: usize) -> impl Fn(ObjectiveError) -> SelectError {
    move |source| SelectError::Objective { step, source }
}

/// Gains of all unselected candidates, in index order.
fn evaluate_all<T: Scalar, F: SetFunction<T>>(
    state: &ObjectiveState<'_, T, F>,
    parallel: bool,
) -> Result<Vec<(usize, T)>, ObjectiveError> {
    let n = state.function().ground_size();
    if parallel {
        (0..n)
            .into_par_iter()
            .with_min_len(64)
            .filter(|&i| !state.contains(i))
            .map(|i| state.marginal_gain(i).map(|g| (i, g)))
            .collect()
    } else {
        (0..n).filter(|&i| !state.contains(i)).map(|i| state.marginal_gain(i).map(|g| (i, g))).collect()
    }
}

fn run_naive<T: Scalar, F: SetFunction<T>>(
    state: &mut ObjectiveState<'_, T, F>,
    k: usize,
    parallel: bool,
    gains: &mut Vec<T>,
) -> Result<u64, SelectError> {
    let mut evaluations = 0u64;
    for step in 0..k {
        let candidates = evaluate_all(state, parallel).map_err(step_err(step))?;
        evaluations += candidates.len() as u64;
        let mut best: Option<(usize, T)> = None;
        for (i, g) in candidates {
            match best {
                Some((_, b)) if g.partial_cmp(&b) != Some(Ordering::Greater) => {}
                _ => best = Some((i, g)),
            }
        }
        let (i, g) = best.expect("k ≤ n leaves a candidate");
        state.accept_with_gain(i, g).map_err(step_err(step))?;
        gains.push(g);
    }
    Ok(evaluations)
}

fn run_lazy<T: Scalar, F: SetFunction<T>>(
    state: &mut ObjectiveState<'_, T, F>,
    k: usize,
    parallel: bool,
    gains: &mut Vec<T>,
) -> Result<u64, SelectError> {
    if k == 0 {
        return Ok(0);
    }
    let initial = evaluate_all(state, parallel).map_err(step_err(0))?;
    let mut evaluations = initial.len() as u64;
    let mut heap: BinaryHeap<Bound> =
        initial.into_iter().map(|(index, g)| Bound { gain: g.as_f64(), index, step: 0 }).collect();
    for step in 0..k {
        loop {
            let top = heap.pop().expect("k ≤ n leaves a candidate");
            if top.step == step {
                let g = T::of(top.gain);
                state.accept_with_gain(top.index, g).map_err(step_err(step))?;
                gains.push(g);
                break;
            }
            let g = state.marginal_gain(top.index).map_err(step_err(step))?;
            evaluations += 1;
            heap.push(Bound { gain: g.as_f64(), index: top.index, step });
        }
    }
    Ok(evaluations)
}
