//! Instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use haystack_core::store::{EmbeddingMatrix, ManifestEntry};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const JITTER: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` Gaussian directions in `d` dimensions, unit-normalized.
pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect())
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap().normalize_rows().unwrap()
}

/// Rows drawn around a few shared directions, so similarities are spread
/// out rather than concentrated near zero.
pub fn clustered_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, centers: usize) -> EmbeddingMatrix {
    let centers: Vec<Vec<f64>> =
        (0..centers).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            c.iter().map(|x| (x + 0.6 * rng.sample::<f64, _>(StandardNormal)) as f32).collect()
        })
        .collect();
    EmbeddingMatrix::from_rows(&rows).unwrap().normalize_rows().unwrap()
}

pub fn with_ids(m: EmbeddingMatrix, prefix: &str, class: Option<&str>) -> EmbeddingMatrix {
    let meta = (0..m.n()).map(|i| ManifestEntry::new(format!("{prefix}{i}"), class.map(str::to_string))).collect();
    EmbeddingMatrix::new(m.d(), m.data().to_vec(), meta).unwrap()
}

pub fn cos(u: &[f32], v: &[f32]) -> f64 {
    let mut s = 0.0;
    for (a, b) in u.iter().zip(v) {
        s += *a as f64 * *b as f64;
    }
    s.clamp(-1.0, 1.0)
}

pub fn shifted(c: f64) -> f64 {
    (1.0 + c) / 2.0
}

/// n×m similarity table under `map`.
pub fn sims(a: &EmbeddingMatrix, b: &EmbeddingMatrix, map: fn(f64) -> f64) -> Vec<Vec<f64>> {
    (0..a.n()).map(|i| (0..b.n()).map(|j| map(cos(a.row(i), b.row(j)))).collect()).collect()
}

pub fn raw(c: f64) -> f64 {
    c
}

pub fn gcmi_value(qsims: &[Vec<f64>], set: &[usize], lambda: f64) -> f64 {
    let mut total = 0.0;
    for &i in set {
        for s in &qsims[i] {
            total += s;
        }
    }
    2.0 * lambda * total
}

/// `Σ_v min(max_{j∈A} s_vj, η·max_q s_vq)` by direct triple loop.
pub fn flvmi_value(gsims: &[Vec<f64>], qsims: &[Vec<f64>], set: &[usize], eta: f64) -> f64 {
    let mut total = 0.0;
    for v in 0..gsims.len() {
        let mut best_set = 0.0f64;
        for &j in set {
            if gsims[v][j] > best_set {
                best_set = gsims[v][j];
            }
        }
        let mut best_query = f64::NEG_INFINITY;
        for s in &qsims[v] {
            best_query = best_query.max(*s);
        }
        total += best_set.min(eta * best_query);
    }
    total
}

/// `log det(S_A + jI) − log det(S_A + jI − η² S_AQ (S_Q + jI)⁻¹ S_QA)` with
/// nalgebra's LU determinant and inverse.
pub fn logdet_value(ground: &EmbeddingMatrix, queries: &EmbeddingMatrix, set: &[usize], eta: f64, map: fn(f64) -> f64) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let a = set.len();
    let q = queries.n();
    let s_a = DMatrix::from_fn(a, a, |r, c| map(cos(ground.row(set[r]), ground.row(set[c]))) + if r == c { JITTER } else { 0.0 });
    let s_q = DMatrix::from_fn(q, q, |r, c| map(cos(queries.row(r), queries.row(c))) + if r == c { JITTER } else { 0.0 });
    let s_aq = DMatrix::from_fn(a, q, |r, c| map(cos(ground.row(set[r]), queries.row(c))));
    let inv = s_q.try_inverse().expect("query block invertible");
    let cond = &s_a - (&s_aq * inv * s_aq.transpose()) * (eta * eta);
    s_a.determinant().ln() - cond.determinant().ln()
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() <= tol
}

/// Two-sided 99% normal-approximation interval for a binomial proportion.
pub fn binomial_ci99(p: f64, trials: usize) -> (f64, f64) {
    let half = 2.5758293035489004 * (p * (1.0 - p) / trials as f64).sqrt();
    (p - half, p + half)
}
