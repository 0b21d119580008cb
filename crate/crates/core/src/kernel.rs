//! Cosine-similarity kernels between ground items and query embeddings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{dot, Scalar};
use crate::store::EmbeddingMatrix;

/// Default number of ground items up to which the full ground×ground kernel
/// is materialized (20 000² float32 ≈ 1.6 GB).
pub const DEFAULT_DENSE_CAP: usize = 20_000;

pub const DEFAULT_JITTER: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("{which} rows are not unit-normalized")]
    NotNormalized { which: &'static str },
    #[error("index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("jitter must be finite and non-negative, got {0}")]
    BadJitter(f64),
}

/// How a raw cosine `c ∈ [-1, 1]` is mapped before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    /// `c` unchanged.
    Raw,
    /// `(1 + c) / 2 ∈ [0, 1]`
    Shifted,
}

impl Transform {
    #[inline]
    pub fn apply<T: Scalar>(self, c: T) -> T {
        match self {
            Transform::Raw => c,
            Transform::Shifted => (T::one() + c) * T::of(0.5),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Transform::Raw),
            "shifted" => Ok(Transform::Shifted),
            other => Err(format!("unknown transform {other:?} (expected raw or shifted)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub transform: Transform,
    /// Added to the diagonal of square blocks before factorization.
    pub jitter: f64,
}

impl KernelConfig {
    pub fn new(transform: Transform, jitter: f64) -> Result<Self, KernelError> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(KernelError::BadJitter(jitter));
        }
        Ok(KernelConfig { transform, jitter })
    }

    pub fn raw() -> Self {
        KernelConfig { transform: Transform::Raw, jitter: DEFAULT_JITTER }
    }

    pub fn shifted() -> Self {
        KernelConfig { transform: Transform::Shifted, jitter: DEFAULT_JITTER }
    }

    #[inline]
    pub fn similarity<T: Scalar>(&self, u: &[f32], v: &[f32]) -> T {
        self.transform.apply(clamp_unit(dot::<T>(u, v)))
    }
}

#[inline]
fn clamp_unit<T: Scalar>(c: T) -> T {
    c.max(-T::one()).min(T::one())
}

/// Cosine of two unit vectors: their dot product clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(u: &[f32], v: &[f32]) -> Result<T, KernelError> {
    if u.len() != v.len() {
        return Err(KernelError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    Ok(clamp_unit(dot::<T>(u, v)))
}

fn check_pair(ground: &EmbeddingMatrix, other: &EmbeddingMatrix) -> Result<(), KernelError> {
    if !ground.is_normalized() {
        return Err(KernelError::NotNormalized { which: "ground" });
    }
    if !other.is_normalized() {
        return Err(KernelError::NotNormalized { which: "query" });
    }
    if ground.d() != other.d() {
        return Err(KernelError::DimensionMismatch { left: ground.d(), right: other.d() });
    }
    Ok(())
}

/// `n × q` similarities between every ground item and every query row.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryKernel<T> {
    sims: Matrix<T>,
    config: KernelConfig,
}

impl<T: Scalar> QueryKernel<T> {
    pub fn build(ground: &EmbeddingMatrix, queries: &EmbeddingMatrix, config: KernelConfig) -> Result<Self, KernelError> {
        check_pair(ground, queries)?;
        let q = queries.n();
        let mut data = vec![T::zero(); ground.n() * q];
        data.par_chunks_mut(q).enumerate().for_each(|(i, out)| {
            let g = ground.row(i);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = config.similarity(g, queries.row(j));
            }
        });
        Ok(QueryKernel { sims: Matrix::from_vec(ground.n(), q, data), config })
    }

    /// Wraps a precomputed similarity matrix (ground rows × query columns).
    pub fn from_matrix(sims: Matrix<T>, config: KernelConfig) -> Self {
        QueryKernel { sims, config }
    }

    pub fn n(&self) -> usize {
        self.sims.rows()
    }

    pub fn q(&self) -> usize {
        self.sims.cols()
    }

    pub fn config(&self) -> KernelConfig {
        self.config
    }

    #[inline]
    pub fn get(&self, item: usize, query: usize) -> T {
        self.sims[(item, query)]
    }

    #[inline]
    pub fn row(&self, item: usize) -> &[T] {
        self.sims.row(item)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.sims
    }

    /// Σ_j s(item, j)
    pub fn row_sum(&self, item: usize) -> T {
        self.row(item).iter().copied().sum()
    }

    /// max_j s(item, j)
    pub fn row_max(&self, item: usize) -> T {
        self.row(item).iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Similarity block between two index lists of the same matrix. When `rows`
/// and `cols` are the same list the block is computed once per unordered
/// pair (exactly symmetric) and `jitter` is added to its diagonal.
pub fn kernel_block<T: Scalar>(
    ground: &EmbeddingMatrix,
    rows: &[usize],
    cols: &[usize],
    config: KernelConfig,
) -> Result<Matrix<T>, KernelError> {
    let n = ground.n();
    if let Some(&index) = rows.iter().chain(cols).find(|&&i| i >= n) {
        return Err(KernelError::IndexOutOfRange { index, n });
    }
    let mut out = Matrix::zeros(rows.len(), cols.len());
    if rows == cols {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in rows.iter().enumerate().skip(a) {
                let s: T = config.similarity(ground.row(i), ground.row(j));
                out[(a, b)] = s;
                out[(b, a)] = s;
            }
        }
        out.add_diagonal(T::of(config.jitter));
    } else {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = config.similarity(ground.row(i), ground.row(j));
            }
        }
    }
    Ok(out)
}

/// Similarity block between rows of two different matrices (no jitter).
pub fn cross_block<T: Scalar>(
    left: &EmbeddingMatrix,
    rows: &[usize],
    right: &EmbeddingMatrix,
    cols: &[usize],
    config: KernelConfig,
) -> Result<Matrix<T>, KernelError> {
    if left.d() != right.d() {
        return Err(KernelError::DimensionMismatch { left: left.d(), right: right.d() });
    }
    for (&index, n) in rows.iter().map(|i| (i, left.n())).chain(cols.iter().map(|i| (i, right.n()))) {
        if index >= n {
            return Err(KernelError::IndexOutOfRange { index, n });
        }
    }
    let mut out = Matrix::zeros(rows.len(), cols.len());
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            out[(a, b)] = config.similarity(left.row(i), right.row(j));
        }
    }
    Ok(out)
}

/// Ground×ground similarities, either fully materialized or computed per
/// column on demand.
#[derive(Debug, Clone)]
pub enum GroundKernel<'a, T> {
    Dense(Matrix<T>),
    OnDemand { ground: &'a EmbeddingMatrix, config: KernelConfig },
}

impl<'a, T: Scalar> GroundKernel<'a, T> {
    /// Materializes the kernel when `n ≤ dense_cap`.
    pub fn build(ground: &'a EmbeddingMatrix, config: KernelConfig, dense_cap: usize) -> Result<Self, KernelError> {
        if !ground.is_normalized() {
            return Err(KernelError::NotNormalized { which: "ground" });
        }
        let n = ground.n();
        if n > dense_cap {
            return Ok(GroundKernel::OnDemand { ground, config });
        }
        let mut data = vec![T::zero(); n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            let g = ground.row(i);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = config.similarity(g, ground.row(j));
            }
        });
        // Enforce exact symmetry regardless of summation order.
        for i in 0..n {
            for j in (i + 1)..n {
                data[j * n + i] = data[i * n + j];
            }
        }
        Ok(GroundKernel::Dense(Matrix::from_vec(n, n, data)))
    }

    pub fn n(&self) -> usize {
        match self {
            GroundKernel::Dense(m) => m.rows(),
            GroundKernel::OnDemand { ground, .. } => ground.n(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, GroundKernel::Dense(_))
    }

    #[inline]
    pub fn get(&self, v: usize, i: usize) -> T {
        match self {
            GroundKernel::Dense(m) => m[(v, i)],
            GroundKernel::OnDemand { ground, config } => config.similarity(ground.row(v), ground.row(i)),
        }
    }

    /// Calls `f(v, s_vi)` for every ground item `v`.
    #[inline]
    pub fn for_each_in_column(&self, i: usize, mut f: impl FnMut(usize, T)) {
        match self {
            GroundKernel::Dense(m) => {
                // symmetric, so the row is the column
                for (v, &s) in m.row(i).iter().enumerate() {
                    f(v, s);
                }
            }
            GroundKernel::OnDemand { ground, config } => {
                let col = ground.row(i);
                for (v, row) in ground.rows().enumerate() {
                    f(v, config.similarity(row, col));
                }
            }
        }
    }

    /// Smallest entry, or `None` for an on-demand kernel (not scanned).
    pub fn min_entry(&self) -> Option<(usize, usize, T)> {
        match self {
            GroundKernel::Dense(m) => {
                let n = m.cols();
                m.as_slice()
                    .iter()
                    .enumerate()
                    .fold(None, |best: Option<(usize, usize, T)>, (k, &s)| match best {
                        Some((_, _, b)) if b <= s => best,
                        _ => Some((k / n, k % n, s)),
                    })
            }
            GroundKernel::OnDemand { .. } => None,
        }
    }
}
