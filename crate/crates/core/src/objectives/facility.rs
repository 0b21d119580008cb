use crate::kernel::{GroundKernel, QueryKernel};
use crate::scalar::Scalar;

use super::{check_index, ObjectiveError, SetFunction};

/// Facility-location variant mutual information,
/// `f(A; Q) = Σ_{v∈V} min(max_{j∈A} s_vj, η·max_{j∈Q} s_vj)`, with the max
/// over the empty set taken as 0.
///
/// The cache holds `m_v = max_{j∈A} s_vj` for every ground item.
pub struct FacilityLocationVmi<'a, T> {
    ground: GroundKernel<'a, T>,
    ceilings: Vec<T>,
}

impl<'a, T: Scalar> FacilityLocationVmi<'a, T> {
    pub fn new(ground: GroundKernel<'a, T>, query_kernel: &QueryKernel<T>, eta: f64) -> Result<Self, ObjectiveError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("eta must be positive, got {eta}")));
        }
        let n = ground.n();
        if query_kernel.n() != n {
            return Err(ObjectiveError::InvalidSpec(format!(
                "query kernel has {} rows, ground kernel {n}",
                query_kernel.n()
            )));
        }
        for v in 0..n {
            for (j, &s) in query_kernel.row(v).iter().enumerate() {
                if s < T::zero() {
                    return Err(ObjectiveError::NegativeSimilarity { left: v, right: j, value: s.as_f64() });
                }
            }
        }
        if let Some((v, i, s)) = ground.min_entry() {
            if s < T::zero() {
                return Err(ObjectiveError::NegativeSimilarity { left: v, right: i, value: s.as_f64() });
            }
        }
        let eta = T::of(eta);
        let ceilings = (0..n).map(|v| eta * query_kernel.row_max(v)).collect();
        Ok(FacilityLocationVmi { ground, ceilings })
    }

    /// `c_v = η·max_{j∈Q} s_vj`
    pub fn ceilings(&self) -> &[T] {
        &self.ceilings
    }

    pub fn ground_kernel(&self) -> &GroundKernel<'a, T> {
        &self.ground
    }
}

impl<'a, T: Scalar> SetFunction<T> for FacilityLocationVmi<'a, T> {
    type Cache = Vec<T>;

    fn ground_size(&self) -> usize {
        self.ceilings.len()
    }

    fn is_submodular(&self) -> bool {
        true
    }

    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError> {
        let n = self.ground_size();
        for &j in set {
            check_index(j, n)?;
        }
        let mut total = T::zero();
        for v in 0..n {
            let mut best = T::zero();
            for &j in set {
                let s = self.ground.get(v, j);
                if s < T::zero() {
                    return Err(ObjectiveError::NegativeSimilarity { left: v, right: j, value: s.as_f64() });
                }
                best = best.max(s);
            }
            total += best.min(self.ceilings[v]);
        }
        Ok(total)
    }

    fn init_cache(&self) -> Vec<T> {
        vec![T::zero(); self.ground_size()]
    }

    fn gain(&self, current_max: &Vec<T>, _: &[usize], candidate: usize) -> Result<T, ObjectiveError> {
        check_index(candidate, self.ground_size())?;
        let mut total = T::zero();
        let mut negative = None;
        self.ground.for_each_in_column(candidate, |v, s| {
            if s < T::zero() {
                negative.get_or_insert((v, s));
            }
            let m = current_max[v];
            let c = self.ceilings[v];
            total += m.max(s).min(c) - m.min(c);
        });
        if let Some((v, s)) = negative {
            return Err(ObjectiveError::NegativeSimilarity { left: v, right: candidate, value: s.as_f64() });
        }
        Ok(total)
    }

    fn commit(&self, current_max: &mut Vec<T>, _: &[usize], item: usize) -> Result<(), ObjectiveError> {
        check_index(item, self.ground_size())?;
        self.ground.for_each_in_column(item, |v, s| {
            if s > current_max[v] {
                current_max[v] = s;
            }
        });
        Ok(())
    }
}
