//! Trials and configuration sweeps.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objectives::{KernelOptions, ObjectiveSpec};
use crate::optimizer::{greedy_select, subset_fraction_to_k, GreedyOptions, SelectionResult, Strategy};
use crate::query::{build_query_set, render_query, ParsedQuery, QueryMode, QuerySet};
use crate::store::{load_embeddings, manifest_path_for, EmbeddingMatrix, ReferenceStore};

use super::report::{round_sig, BenchReport, CellReport, REPORT_FORMAT_VERSION};
use super::seeds::{derive, trial_seed};
use super::world::{Haystack, PoolWorld, SynthConfig, SyntheticWorld};
use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomKind {
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSelector {
    pub kind: RandomKind,
}

/// What picks the subset in a trial: a submodular objective under greedy,
/// or the uniform-random baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    UniformRandom(RandomSelector),
    Submodular(ObjectiveSpec),
}

impl Selector {
    pub const RANDOM: Selector = Selector::UniformRandom(RandomSelector { kind: RandomKind::Random });

    pub fn label(&self) -> String {
        match self {
            Selector::UniformRandom(_) => "random".into(),
            Selector::Submodular(spec) => match spec.weights {
                Some([a, b, c]) => format!("{}({a}:{b}:{c})", spec.kind.name()),
                None => spec.kind.name().into(),
            },
        }
    }
}

impl From<ObjectiveSpec> for Selector {
    fn from(spec: ObjectiveSpec) -> Self {
        Selector::Submodular(spec)
    }
}

/// Where haystacks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldSpec {
    Synthetic(SynthConfig),
    Files {
        pool: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pool_manifest: Option<PathBuf>,
        references: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        references_manifest: Option<PathBuf>,
        /// Augmented reference rows, grouped by class like the references.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        augmented: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        augmented_manifest: Option<PathBuf>,
    },
}

pub enum World {
    Synthetic(SyntheticWorld),
    Pool(PoolWorld),
}

impl World {
    pub fn from_spec(spec: &WorldSpec) -> Result<Self, BenchError> {
        match spec {
            WorldSpec::Synthetic(cfg) => Ok(World::Synthetic(SyntheticWorld::new(*cfg)?)),
            WorldSpec::Files { pool, pool_manifest, references, references_manifest, augmented, augmented_manifest } => {
                let load = |p: &PathBuf, m: &Option<PathBuf>| {
                    load_embeddings(p, &m.clone().unwrap_or_else(|| manifest_path_for(p)))
                };
                let pool = load(pool, pool_manifest)?;
                let refs = ReferenceStore::new(load(references, references_manifest)?.normalize_rows()?)?;
                let aug = match augmented {
                    Some(p) => Some(ReferenceStore::new(load(p, augmented_manifest)?.normalize_rows()?)?),
                    None => None,
                };
                Ok(World::Pool(PoolWorld::new(pool, refs, aug)?))
            }
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            World::Synthetic(w) => w.classes().to_vec(),
            World::Pool(w) => w.classes(),
        }
    }

    pub fn references(&self) -> &ReferenceStore {
        match self {
            World::Synthetic(w) => w.references(),
            World::Pool(w) => w.references(),
        }
    }

    fn haystack(&self, rng: &mut ChaCha8Rng, cfg: &TrialConfig) -> Result<Haystack, BenchError> {
        match self {
            World::Synthetic(w) => {
                w.haystack(rng, cfg.haystack_size, &cfg.needle_class, &cfg.target_class, &cfg.distractor_classes)
            }
            World::Pool(w) => w.haystack(rng, cfg.haystack_size, &cfg.needle_class, &cfg.distractor_classes),
        }
    }

    fn augmented_views(&self, rng: &mut ChaCha8Rng, class: &str, count: usize) -> Result<Option<EmbeddingMatrix>, BenchError> {
        match self {
            World::Synthetic(w) => w.augmented_views(rng, class, count),
            World::Pool(w) => w.augmented_views(class, count),
        }
    }
}

/// Settings shared by every trial of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialOptions {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub kernel: KernelOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub haystack_size: usize,
    /// Anchor class; the needle is its only member in the haystack.
    pub needle_class: String,
    pub target_class: String,
    pub distractor_classes: Vec<String>,
    pub subset_fraction: f64,
    pub objective: Selector,
    pub query_mode: QueryMode,
    pub ref_count: usize,
    pub augmented_count: usize,
    pub seed: u64,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.haystack_size < 2 {
            return Err(BenchError::Config(format!("haystack_size must be at least 2, got {}", self.haystack_size)));
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(BenchError::Config(format!("subset_fraction must lie in (0, 1], got {}", self.subset_fraction)));
        }
        if self.ref_count == 0 {
            return Err(BenchError::Config("ref_count must be positive".into()));
        }
        Ok(())
    }

    /// Trial `trial` of `cell`: classes are drawn from the trial seed, which
    /// depends only on the master seed, the haystack size and `trial`.
    pub fn for_cell(cell: &Cell, world: &World, master_seed: u64, trial: u64) -> Result<Self, BenchError> {
        let seed = trial_seed(master_seed, cell.haystack_size as u64, trial);
        let classes = world.classes();
        if classes.len() < 2 {
            return Err(BenchError::Config("world needs at least two classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, 1));
        let anchor = rng.random_range(0..classes.len());
        let mut target = rng.random_range(0..classes.len() - 1);
        if target >= anchor {
            target += 1;
        }
        let distractor_classes = classes.iter().enumerate().filter(|(c, _)| *c != anchor).map(|(_, n)| n.clone()).collect();
        Ok(TrialConfig {
            haystack_size: cell.haystack_size,
            needle_class: classes[anchor].clone(),
            target_class: classes[target].clone(),
            distractor_classes,
            subset_fraction: cell.subset_fraction,
            objective: cell.selector,
            query_mode: cell.query_mode,
            ref_count: cell.ref_count,
            augmented_count: cell.augmented_count,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub needle_in_subset: bool,
    pub selection: SelectionResult<f64>,
    pub mixture_scales: Option<[f64; 3]>,
}

/// Selects `k` items of `ground` for `queries`. This is the only code path
/// between a haystack and its subset, and it never sees the needle.
pub fn select_subset(
    ground: &EmbeddingMatrix,
    queries: &QuerySet,
    selector: &Selector,
    k: usize,
    options: &TrialOptions,
    seed: u64,
) -> Result<(SelectionResult<f64>, Option<[f64; 3]>), BenchError> {
    match selector {
        Selector::UniformRandom(_) => {
            let start = Instant::now();
            let n = ground.n();
            let take = k.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let selected: Vec<usize> = sample(&mut rng, n, take).into_vec();
            Ok((
                SelectionResult {
                    gains: vec![0.0; selected.len()],
                    selected,
                    final_value: 0.0,
                    evaluations: 0,
                    truncated: k > n,
                    strategy: Strategy::Naive,
                    elapsed: start.elapsed(),
                },
                None,
            ))
        }
        Selector::Submodular(spec) => {
            let objective = spec.build::<f64>(ground, queries.embeddings(), &options.kernel)?;
            let greedy = GreedyOptions { strategy: options.strategy, parallel: false };
            let result = greedy_select(&objective, k, greedy)?;
            Ok((result, objective.mixture_scales()))
        }
    }
}

pub fn run_trial(cfg: &TrialConfig, world: &World, options: &TrialOptions) -> Result<TrialOutcome, BenchError> {
    let tag = |e: BenchError| BenchError::Trial { seed: cfg.seed, source: Box::new(e) };
    cfg.validate().map_err(tag)?;
    let inner = || -> Result<TrialOutcome, BenchError> {
        let mut haystack_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 2));
        let Haystack { matrix, needle } = world.haystack(&mut haystack_rng, cfg)?;
        let query = ParsedQuery {
            raw: render_query(&cfg.needle_class, &cfg.target_class),
            anchor: cfg.needle_class.clone(),
            target: cfg.target_class.clone(),
        };
        let mut aug_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 3));
        let augmented = world.augmented_views(&mut aug_rng, query.class_for(cfg.query_mode), cfg.augmented_count)?;
        let queries = build_query_set(&query, cfg.query_mode, world.references(), cfg.ref_count, augmented.as_ref())?;
        let k = subset_fraction_to_k(matrix.n(), cfg.subset_fraction)?;
        let (selection, mixture_scales) =
            select_subset(&matrix, &queries, &cfg.objective, k, options, derive(cfg.seed, 4))?;
        Ok(TrialOutcome { needle_in_subset: selection.selected.contains(&needle), selection, mixture_scales })
    };
    inner().map_err(tag)
}

fn default_trials() -> usize {
    500
}

fn default_modes() -> Vec<QueryMode> {
    vec![QueryMode::Anchor]
}

fn default_refs() -> Vec<usize> {
    vec![1]
}

fn default_aug() -> Vec<usize> {
    vec![0]
}

/// A sweep: the cartesian product of the list-valued fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub haystack_sizes: Vec<usize>,
    pub fractions: Vec<f64>,
    pub objectives: Vec<Selector>,
    #[serde(default = "default_modes")]
    pub query_modes: Vec<QueryMode>,
    #[serde(default = "default_refs")]
    pub ref_counts: Vec<usize>,
    #[serde(default = "default_aug")]
    pub augmented_counts: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials_per_cell: usize,
    pub master_seed: u64,
    pub world: WorldSpec,
    #[serde(default)]
    pub options: TrialOptions,
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub haystack_size: usize,
    pub subset_fraction: f64,
    pub selector: Selector,
    pub query_mode: QueryMode,
    pub ref_count: usize,
    pub augmented_count: usize,
}

impl SweepGrid {
    /// Synthetic 20-class world; the three sizes and five fractions trace
    /// success-vs-fraction curves for GCMI, FLVMI and the random baseline.
    pub fn default_grid() -> Self {
        SweepGrid {
            haystack_sizes: vec![100, 500, 1000],
            fractions: vec![0.01, 0.05, 0.1, 0.2, 0.5],
            objectives: vec![ObjectiveSpec::gcmi().into(), ObjectiveSpec::flvmi().into(), Selector::RANDOM],
            query_modes: default_modes(),
            ref_counts: default_refs(),
            augmented_counts: default_aug(),
            trials_per_cell: 200,
            master_seed: 7,
            world: WorldSpec::Synthetic(SynthConfig::new(20, 64, 0.3, 7)),
            options: TrialOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let empty = [
            ("haystack_sizes", self.haystack_sizes.is_empty()),
            ("fractions", self.fractions.is_empty()),
            ("objectives", self.objectives.is_empty()),
            ("query_modes", self.query_modes.is_empty()),
            ("ref_counts", self.ref_counts.is_empty()),
            ("augmented_counts", self.augmented_counts.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(BenchError::Config(format!("grid field {name} is empty")));
        }
        if self.trials_per_cell == 0 {
            return Err(BenchError::Config("trials_per_cell must be positive".into()));
        }
        for s in &self.objectives {
            if let Selector::Submodular(spec) = s {
                spec.validate()?;
            }
        }
        Ok(())
    }

    /// Cells in grid order: sizes, fractions, objectives, modes, reference
    /// counts, augmentation counts (last varies fastest).
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &haystack_size in &self.haystack_sizes {
            for &subset_fraction in &self.fractions {
                for &selector in &self.objectives {
                    for &query_mode in &self.query_modes {
                        for &ref_count in &self.ref_counts {
                            for &augmented_count in &self.augmented_counts {
                                out.push(Cell {
                                    haystack_size,
                                    subset_fraction,
                                    selector,
                                    query_mode,
                                    ref_count,
                                    augmented_count,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

type TrialResult = Result<TrialOutcome, BenchError>;

fn run_one(grid: &SweepGrid, world: &World, cell: &Cell, trial: usize) -> TrialResult {
    let cfg = TrialConfig::for_cell(cell, world, grid.master_seed, trial as u64)?;
    run_trial(&cfg, world, &grid.options)
}

fn summarize(cell: &Cell, results: &[TrialResult], include_timings: bool) -> CellReport {
    let mut trials = 0usize;
    let mut successes = 0usize;
    let mut errors = 0usize;
    let mut first_error = None;
    let mut value_sum = 0.0;
    let mut eval_sum = 0.0;
    let mut ms_sum = 0.0;
    let mut scale_sum = [0.0; 3];
    let mut scale_count = 0usize;
    for r in results {
        match r {
            Ok(o) => {
                trials += 1;
                successes += o.needle_in_subset as usize;
                value_sum += o.selection.final_value;
                eval_sum += o.selection.evaluations as f64;
                ms_sum += o.selection.elapsed.as_secs_f64() * 1e3;
                if let Some(s) = o.mixture_scales {
                    for c in 0..3 {
                        scale_sum[c] += s[c];
                    }
                    scale_count += 1;
                }
            }
            Err(e) => {
                errors += 1;
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let mean = |s: f64| if trials > 0 { round_sig(s / trials as f64) } else { 0.0 };
    CellReport {
        haystack_size: cell.haystack_size,
        subset_fraction: cell.subset_fraction,
        k: subset_fraction_to_k(cell.haystack_size, cell.subset_fraction).unwrap_or(0),
        objective: cell.selector,
        query_mode: cell.query_mode,
        ref_count: cell.ref_count,
        augmented_count: cell.augmented_count,
        trials,
        successes,
        errors,
        first_error,
        success_fraction: if trials > 0 { successes as f64 / trials as f64 } else { 0.0 },
        mean_final_value: mean(value_sum),
        mean_evaluations: mean(eval_sum),
        mean_mixture_scales: (scale_count > 0).then(|| scale_sum.map(|s| round_sig(s / scale_count as f64))),
        mean_selection_ms: include_timings.then(|| mean(ms_sum)),
    }
}

/// Runs every trial of one cell on the current rayon pool.
pub fn run_cell(grid: &SweepGrid, world: &World, cell: &Cell, include_timings: bool) -> CellReport {
    let results: Vec<TrialResult> =
        (0..grid.trials_per_cell).into_par_iter().map(|t| run_one(grid, world, cell, t)).collect();
    summarize(cell, &results, include_timings)
}

pub fn assemble_report(master_seed: u64, cells: Vec<CellReport>) -> BenchReport {
    BenchReport { format_version: REPORT_FORMAT_VERSION, master_seed, cells }
}

/// Runs the whole grid. `threads = None` uses rayon's default pool size.
pub fn run_sweep(grid: &SweepGrid, threads: Option<usize>, include_timings: bool) -> Result<BenchReport, BenchError> {
    grid.validate()?;
    let world = World::from_spec(&grid.world)?;
    let cells = grid.cells();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..grid.trials_per_cell).map(move |t| (c, t))).collect();
    let results: Vec<TrialResult> =
        pool.install(|| jobs.par_iter().map(|&(c, t)| run_one(grid, &world, &cells[c], t)).collect());
    let reports = cells
        .iter()
        .zip(results.chunks(grid.trials_per_cell))
        .map(|(cell, chunk)| summarize(cell, chunk, include_timings))
        .collect();
    Ok(assemble_report(grid.master_seed, reports))
}
