//! Haystack sources: a synthetic clustered sphere and file-backed pools.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::store::{normalize_label, EmbeddingMatrix, ManifestEntry, ReferenceStore};

use super::seeds::derive;
use super::BenchError;

fn default_spread() -> f64 {
    0.3
}
fn default_items() -> usize {
    50
}
fn default_refs() -> usize {
    5
}
fn default_salience() -> f64 {
    0.5
}
fn default_aug_spread() -> f64 {
    0.1
}

/// Parameters of the clustered-sphere world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub class_count: usize,
    pub dimension: usize,
    /// Standard deviation σ of the per-coordinate Gaussian noise added to a
    /// class centroid.
    #[serde(default = "default_spread")]
    pub spread: f64,
    pub seed: u64,
    /// Pool items per class written by [`gen_synthetic`].
    #[serde(default = "default_items")]
    pub items_per_class: usize,
    /// Held-out reference draws per class.
    #[serde(default = "default_refs")]
    pub refs_per_class: usize,
    /// Weight of the target-class centroid inside a needle embedding.
    #[serde(default = "default_salience")]
    pub target_salience: f64,
    /// Noise σ of simulated augmented views around a reference embedding.
    #[serde(default = "default_aug_spread")]
    pub augment_spread: f64,
}

impl SynthConfig {
    pub fn new(class_count: usize, dimension: usize, spread: f64, seed: u64) -> Self {
        SynthConfig {
            class_count,
            dimension,
            spread,
            seed,
            items_per_class: default_items(),
            refs_per_class: default_refs(),
            target_salience: default_salience(),
            augment_spread: default_aug_spread(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.class_count < 2 {
            return bad(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad(format!("spread must be positive, got {}", self.spread));
        }
        if self.refs_per_class == 0 {
            return bad("refs_per_class must be positive".into());
        }
        if !(self.target_salience >= 0.0 && self.augment_spread >= 0.0) {
            return bad("target_salience and augment_spread must be non-negative".into());
        }
        Ok(())
    }
}

pub fn class_name(c: usize) -> String {
    format!("class{c:02}")
}

fn gaussian_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `normalize(center + spread·g)` as f32, `g ~ N(0, I)`.
fn perturbed(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f32> {
    let v: Vec<f64> = center.iter().map(|&c| c + spread * rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm = if norm > 0.0 { norm } else { 1.0 };
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

/// Builds a matrix from rows that are already unit-norm in f64.
fn unit_matrix(d: usize, rows: Vec<Vec<f32>>, meta: Vec<ManifestEntry>) -> Result<EmbeddingMatrix, BenchError> {
    let data = rows.into_iter().flatten().collect();
    Ok(EmbeddingMatrix::new(d, data, meta)?.normalize_rows()?)
}

/// One haystack instance: rows plus the needle position. Only `matrix`
/// reaches the selector.
#[derive(Debug, Clone)]
pub struct Haystack {
    pub matrix: EmbeddingMatrix,
    pub needle: usize,
}

/// Class-clustered embeddings on the unit sphere.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: SynthConfig,
    centroids: Vec<Vec<f64>>,
    classes: Vec<String>,
    references: ReferenceStore,
}

impl SyntheticWorld {
    pub fn new(config: SynthConfig) -> Result<Self, BenchError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, 0));
        let d = config.dimension;
        let centroids: Vec<Vec<f64>> = (0..config.class_count).map(|_| gaussian_unit(&mut rng, d)).collect();
        let classes: Vec<String> = (0..config.class_count).map(class_name).collect();
        let mut rows = Vec::new();
        let mut meta = Vec::new();
        for (c, centroid) in centroids.iter().enumerate() {
            for r in 0..config.refs_per_class {
                rows.push(perturbed(&mut rng, centroid, config.spread));
                meta.push(ManifestEntry::new(format!("{}/ref{r}", classes[c]), Some(classes[c].clone())));
            }
        }
        let references = ReferenceStore::new(unit_matrix(d, rows, meta)?)?;
        Ok(SyntheticWorld { config, centroids, classes, references })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn centroid(&self, class: usize) -> &[f64] {
        &self.centroids[class]
    }

    pub fn references(&self) -> &ReferenceStore {
        &self.references
    }

    /// A fresh member of `class`.
    pub fn draw(&self, rng: &mut ChaCha8Rng, class: usize) -> Vec<f32> {
        perturbed(rng, &self.centroids[class], self.config.spread)
    }

    /// The haystack pool written to disk: `items_per_class` draws per class.
    pub fn pool(&self) -> Result<EmbeddingMatrix, BenchError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.config.seed, 1));
        let mut rows = Vec::new();
        let mut meta = Vec::new();
        for (c, name) in self.classes.iter().enumerate() {
            for i in 0..self.config.items_per_class {
                rows.push(self.draw(&mut rng, c));
                meta.push(ManifestEntry::new(format!("{name}/item{i:04}"), Some(name.clone())));
            }
        }
        unit_matrix(self.config.dimension, rows, meta)
    }

    fn class_index(&self, name: &str) -> Result<usize, BenchError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| BenchError::Config(format!("unknown synthetic class {name:?}")))
    }

    /// Needle = `normalize(c_anchor + salience·c_target + σ·g)` at a uniform
    /// position; the other `n − 1` items are members of uniformly drawn
    /// distractor classes.
    pub fn haystack(
        &self,
        rng: &mut ChaCha8Rng,
        n: usize,
        needle_class: &str,
        target_class: &str,
        distractor_classes: &[String],
    ) -> Result<Haystack, BenchError> {
        if distractor_classes.is_empty() {
            return Err(BenchError::Config("no distractor classes".into()));
        }
        let anchor = self.class_index(needle_class)?;
        let target = self.class_index(target_class)?;
        let distractors: Vec<usize> =
            distractor_classes.iter().map(|c| self.class_index(c)).collect::<Result<_, _>>()?;
        let needle_pos = rng.random_range(0..n);
        let mut rows = Vec::with_capacity(n);
        let mut meta = Vec::with_capacity(n);
        for pos in 0..n {
            if pos == needle_pos {
                let center: Vec<f64> = self.centroids[anchor]
                    .iter()
                    .zip(&self.centroids[target])
                    .map(|(a, t)| a + self.config.target_salience * t)
                    .collect();
                rows.push(perturbed(rng, &center, self.config.spread));
                meta.push(ManifestEntry::new(format!("h{pos}"), Some(self.classes[anchor].clone())));
            } else {
                let c = distractors[rng.random_range(0..distractors.len())];
                rows.push(self.draw(rng, c));
                meta.push(ManifestEntry::new(format!("h{pos}"), Some(self.classes[c].clone())));
            }
        }
        Ok(Haystack { matrix: unit_matrix(self.config.dimension, rows, meta)?, needle: needle_pos })
    }

    /// `count` simulated augmented views of the first reference of `class`.
    pub fn augmented_views(&self, rng: &mut ChaCha8Rng, class: &str, count: usize) -> Result<Option<EmbeddingMatrix>, BenchError> {
        if count == 0 {
            return Ok(None);
        }
        let first = self.references.lookup_references(class, 1)?[0];
        let base: Vec<f64> = self.references.matrix().row(first).iter().map(|&x| x as f64).collect();
        let rows = (0..count).map(|_| perturbed(rng, &base, self.config.augment_spread)).collect();
        let meta = (0..count)
            .map(|i| ManifestEntry {
                id: format!("{class}/aug{i}"),
                class: Some(class.to_string()),
                augmentation: Some(["crop", "flip", "color", "blur"][i % 4].to_string()),
            })
            .collect();
        Ok(Some(unit_matrix(self.config.dimension, rows, meta)?))
    }
}

/// Generates a synthetic haystack pool and its reference store.
pub fn gen_synthetic(config: SynthConfig) -> Result<(EmbeddingMatrix, ReferenceStore), BenchError> {
    let world = SyntheticWorld::new(config)?;
    let pool = world.pool()?;
    Ok((pool, world.references))
}

/// Haystacks drawn without replacement from user-supplied embeddings.
#[derive(Debug, Clone)]
pub struct PoolWorld {
    pool: EmbeddingMatrix,
    references: ReferenceStore,
    augmented: Option<ReferenceStore>,
    by_class: std::collections::BTreeMap<String, Vec<usize>>,
}

impl PoolWorld {
    pub fn new(pool: EmbeddingMatrix, references: ReferenceStore, augmented: Option<ReferenceStore>) -> Result<Self, BenchError> {
        let pool = pool.normalize_rows()?;
        let mut by_class: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
        for i in 0..pool.n() {
            let class = pool.class(i).ok_or_else(|| {
                BenchError::Config(format!("pool row {i} (id {:?}) has no class label", pool.id(i)))
            })?;
            by_class.entry(normalize_label(class)).or_default().push(i);
        }
        if pool.d() != references.matrix().d() {
            return Err(BenchError::Config(format!(
                "pool has d = {}, references d = {}",
                pool.d(),
                references.matrix().d()
            )));
        }
        Ok(PoolWorld { pool, references, augmented, by_class })
    }

    pub fn references(&self) -> &ReferenceStore {
        &self.references
    }

    /// Classes that can serve as anchors: present in the pool and the references.
    pub fn classes(&self) -> Vec<String> {
        self.by_class.keys().filter(|c| self.references.contains(c)).cloned().collect()
    }

    pub fn haystack(
        &self,
        rng: &mut ChaCha8Rng,
        n: usize,
        needle_class: &str,
        distractor_classes: &[String],
    ) -> Result<Haystack, BenchError> {
        let needles = self
            .by_class
            .get(needle_class)
            .ok_or_else(|| BenchError::Config(format!("no pool items of class {needle_class:?}")))?;
        let candidates: Vec<usize> = distractor_classes
            .iter()
            .filter_map(|c| self.by_class.get(c))
            .flatten()
            .copied()
            .collect();
        if candidates.len() < n - 1 {
            return Err(BenchError::Config(format!(
                "haystack of {n} needs {} distractors but the pool has {}",
                n - 1,
                candidates.len()
            )));
        }
        let needle_row = needles[rng.random_range(0..needles.len())];
        let mut picks: Vec<usize> = sample(rng, candidates.len(), n - 1).into_iter().map(|k| candidates[k]).collect();
        let needle_pos = rng.random_range(0..n);
        picks.insert(needle_pos, needle_row);
        Ok(Haystack { matrix: self.pool.select_rows(&picks)?, needle: needle_pos })
    }

    pub fn augmented_views(&self, class: &str, count: usize) -> Result<Option<EmbeddingMatrix>, BenchError> {
        if count == 0 {
            return Ok(None);
        }
        let store = self
            .augmented
            .as_ref()
            .ok_or_else(|| BenchError::Config("augmented rows requested but no augmentation file given".into()))?;
        let rows = store.lookup_references(class, count)?;
        if rows.len() < count {
            return Err(BenchError::Config(format!(
                "class {class:?} has {} augmented rows, {count} requested",
                rows.len()
            )));
        }
        Ok(Some(store.matrix().select_rows(rows)?))
    }
}
