//! Log-determinant mutual information,
//!
//! ```text
//! f(A; Q) = log det S_A − log det(S_A − η² S_AQ S_Q⁻¹ S_QA)
//! ```
//!
//! with `jitter·I` added to the square blocks `S_A` and `S_Q`. The second
//! matrix is written `M_A` below. With `η = 1` this is the Gaussian mutual
//! information between `A` and `Q`, which is monotone but not submodular in
//! general.
//!
//! The incremental path keeps, for every ground item `i`, the columns of
//! `L_A⁻¹ s_{A,i}` and `L_M⁻¹ m_{A,i}` plus the two Schur residuals
//! `r_i = S_ii − ‖L_A⁻¹ s_{A,i}‖²` and `t_i = M_ii − ‖L_M⁻¹ m_{A,i}‖²`.
//! Then `gain(i) = ln r_i − ln t_i`, and accepting `j` extends both factors by
//! one row in `O(n·(d + q + |A|))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{cross_block, kernel_block, KernelConfig, KernelError};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::store::EmbeddingMatrix;

use super::{check_index, ObjectiveError, SetFunction};

/// How gains are computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogDetMode {
    #[default]
    Incremental,
    /// `evaluate(A ∪ {i}) − evaluate(A)`; slow, used as a reference.
    FromScratch,
}

pub struct LogDetMi<'a, T> {
    ground: &'a EmbeddingMatrix,
    queries: &'a EmbeddingMatrix,
    config: KernelConfig,
    eta_sq: T,
    jitter: T,
    query_factor: Cholesky<T>,
    /// Row `i` holds `w_i = L_Q⁻¹ s_{Q,i}`, so `s_{i,Q} S_Q⁻¹ s_{Q,k} = w_i·w_k`.
    whitened: Matrix<T>,
    mode: LogDetMode,
}

#[derive(Debug, Clone)]
pub struct LogDetCache<T> {
    /// One column per accepted item: entry `i` is the new row of `L_A⁻¹ s_{A,i}`.
    s_cols: Vec<Vec<T>>,
    m_cols: Vec<Vec<T>>,
    s_resid: Vec<T>,
    m_resid: Vec<T>,
}

impl<'a, T: Scalar> LogDetMi<'a, T> {
    pub fn new(
        ground: &'a EmbeddingMatrix,
        queries: &'a EmbeddingMatrix,
        config: KernelConfig,
        eta: f64,
    ) -> Result<Self, ObjectiveError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("eta must be positive, got {eta}")));
        }
        if !ground.is_normalized() {
            return Err(KernelError::NotNormalized { which: "ground" }.into());
        }
        if !queries.is_normalized() {
            return Err(KernelError::NotNormalized { which: "query" }.into());
        }
        if ground.d() != queries.d() {
            return Err(KernelError::DimensionMismatch { left: ground.d(), right: queries.d() }.into());
        }
        let q_idx: Vec<usize> = (0..queries.n()).collect();
        let s_q = kernel_block::<T>(queries, &q_idx, &q_idx, config)?;
        let query_factor = Cholesky::factor(&s_q).map_err(|e| ObjectiveError::not_pd("S_Q", queries.n(), e))?;

        let q = queries.n();
        let mut whitened = vec![T::zero(); ground.n() * q];
        whitened.par_chunks_mut(q).enumerate().for_each(|(i, w)| {
            let g = ground.row(i);
            for (j, slot) in w.iter_mut().enumerate() {
                *slot = config.similarity(g, queries.row(j));
            }
            query_factor.forward_substitute(w);
        });

        Ok(LogDetMi {
            ground,
            queries,
            config,
            eta_sq: T::of(eta * eta),
            jitter: T::of(config.jitter),
            query_factor,
            whitened: Matrix::from_vec(ground.n(), q, whitened),
            mode: LogDetMode::Incremental,
        })
    }

    pub fn with_mode(mut self, mode: LogDetMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> LogDetMode {
        self.mode
    }

    pub fn config(&self) -> KernelConfig {
        self.config
    }

    #[inline]
    fn whitened_dot(&self, a: usize, b: usize) -> T {
        self.whitened.row(a).iter().zip(self.whitened.row(b)).map(|(&x, &y)| x * y).sum()
    }

    /// Diagonal of `S + jitter·I` and of `M` for item `i`.
    #[inline]
    fn diagonals(&self, i: usize) -> (T, T) {
        let s: T = self.config.similarity(self.ground.row(i), self.ground.row(i));
        let s = s + self.jitter;
        (s, s - self.eta_sq * self.whitened_dot(i, i))
    }

    /// The two square blocks `S_A + jitter·I` and `M_A`, built directly.
    pub fn blocks(&self, set: &[usize]) -> Result<(Matrix<T>, Matrix<T>), ObjectiveError> {
        let s_a = kernel_block::<T>(self.ground, set, set, self.config)?;
        let q_idx: Vec<usize> = (0..self.queries.n()).collect();
        let s_qa = cross_block::<T>(self.queries, &q_idx, self.ground, set, self.config)?;
        // X = L_Q⁻¹ S_QA, so S_AQ S_Q⁻¹ S_QA = Xᵀ X
        let mut x = s_qa.transpose();
        for r in 0..x.rows() {
            let mut col: Vec<T> = x.row(r).to_vec();
            self.query_factor.forward_substitute(&mut col);
            for (c, v) in col.into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        let correction = x.matmul(&x.transpose());
        let mut m_a = s_a.clone();
        for a in 0..set.len() {
            for b in 0..set.len() {
                m_a[(a, b)] -= self.eta_sq * correction[(a, b)];
            }
        }
        Ok((s_a, m_a))
    }

    fn log_dets(&self, set: &[usize]) -> Result<(T, T), ObjectiveError> {
        let (s_a, m_a) = self.blocks(set)?;
        let ls = Cholesky::factor(&s_a).map_err(|e| ObjectiveError::not_pd("S_A", set.len(), e))?;
        let lm = Cholesky::factor(&m_a).map_err(|e| ObjectiveError::not_pd("S_A|Q", set.len(), e))?;
        Ok((ls.log_det(), lm.log_det()))
    }
}

impl<'a, T: Scalar> SetFunction<T> for LogDetMi<'a, T> {
    type Cache = LogDetCache<T>;

    fn ground_size(&self) -> usize {
        self.ground.n()
    }

    fn is_submodular(&self) -> bool {
        false
    }

    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError> {
        let n = self.ground_size();
        for &i in set {
            check_index(i, n)?;
        }
        if set.is_empty() {
            return Ok(T::zero());
        }
        let (ls, lm) = self.log_dets(set)?;
        Ok(ls - lm)
    }

    fn init_cache(&self) -> LogDetCache<T> {
        let (s_resid, m_resid) = (0..self.ground_size()).map(|i| self.diagonals(i)).unzip();
        LogDetCache { s_cols: Vec::new(), m_cols: Vec::new(), s_resid, m_resid }
    }

    fn gain(&self, cache: &LogDetCache<T>, selected: &[usize], candidate: usize) -> Result<T, ObjectiveError> {
        check_index(candidate, self.ground_size())?;
        if self.mode == LogDetMode::FromScratch {
            let mut extended = selected.to_vec();
            extended.push(candidate);
            return Ok(self.evaluate(&extended)? - self.evaluate(selected)?);
        }
        let size = selected.len() + 1;
        let r = cache.s_resid[candidate];
        if r.is_nan() || r <= T::zero() {
            return Err(ObjectiveError::NotPositiveDefinite {
                block: "S_A",
                size,
                index: selected.len(),
                pivot: r.as_f64(),
                condition_estimate: condition_estimate(&cache.s_resid, r),
            });
        }
        let t = cache.m_resid[candidate];
        if t.is_nan() || t <= T::zero() {
            return Err(ObjectiveError::NotPositiveDefinite {
                block: "S_A|Q",
                size,
                index: selected.len(),
                pivot: t.as_f64(),
                condition_estimate: condition_estimate(&cache.m_resid, t),
            });
        }
        Ok(r.ln() - t.ln())
    }

    fn commit(&self, cache: &mut LogDetCache<T>, selected: &[usize], item: usize) -> Result<(), ObjectiveError> {
        check_index(item, self.ground_size())?;
        // Validates both pivots.
        let mode = self.mode;
        if mode == LogDetMode::Incremental {
            self.gain(cache, selected, item)?;
        }
        let ps = cache.s_resid[item].max(T::zero()).sqrt();
        let pm = cache.m_resid[item].max(T::zero()).sqrt();
        let n = self.ground_size();
        let jitter = self.jitter;
        let eta_sq = self.eta_sq;
        let item_row = self.ground.row(item);
        let prev_s: Vec<T> = cache.s_cols.iter().map(|c| c[item]).collect();
        let prev_m: Vec<T> = cache.m_cols.iter().map(|c| c[item]).collect();

        let mut new_s = vec![T::zero(); n];
        let mut new_m = vec![T::zero(); n];
        {
            let s_cols = &cache.s_cols;
            let m_cols = &cache.m_cols;
            new_s
                .par_iter_mut()
                .zip(new_m.par_iter_mut())
                .enumerate()
                .for_each(|(i, (es, em))| {
                    let mut s: T = self.config.similarity(item_row, self.ground.row(i));
                    if i == item {
                        s += jitter;
                    }
                    let m = s - eta_sq * self.whitened_dot(item, i);
                    let mut acc_s = s;
                    for (col, &p) in s_cols.iter().zip(&prev_s) {
                        acc_s -= p * col[i];
                    }
                    let mut acc_m = m;
                    for (col, &p) in m_cols.iter().zip(&prev_m) {
                        acc_m -= p * col[i];
                    }
                    *es = if ps > T::zero() { acc_s / ps } else { T::zero() };
                    *em = if pm > T::zero() { acc_m / pm } else { T::zero() };
                });
        }
        for i in 0..n {
            cache.s_resid[i] -= new_s[i] * new_s[i];
            cache.m_resid[i] -= new_m[i] * new_m[i];
        }
        cache.s_resid[item] = T::zero();
        cache.m_resid[item] = T::zero();
        cache.s_cols.push(new_s);
        cache.m_cols.push(new_m);
        Ok(())
    }
}

fn condition_estimate<T: Scalar>(resid: &[T], pivot: T) -> f64 {
    let max = resid.iter().fold(0.0f64, |m, r| m.max(r.as_f64()));
    max / pivot.as_f64().abs().max(f64::MIN_POSITIVE)
}
