use crate::kernel::QueryKernel;
use crate::scalar::Scalar;

use super::{check_index, ObjectiveError, SetFunction};

/// Graph-cut mutual information, `f(A; Q) = 2λ Σ_{i∈A} Σ_{j∈Q} s_ij`.
///
/// Modular in `A`: every item contributes a fixed `2λ·σ_i`, where `σ_i` is
/// its query-similarity row sum.
#[derive(Debug, Clone)]
pub struct GraphCutMi<T> {
    contributions: Vec<T>,
}

impl<T: Scalar> GraphCutMi<T> {
    pub fn new(query_kernel: &QueryKernel<T>, lambda: f64) -> Result<Self, ObjectiveError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("lambda must be positive, got {lambda}")));
        }
        let scale = T::of(2.0 * lambda);
        let contributions = (0..query_kernel.n()).map(|i| scale * query_kernel.row_sum(i)).collect();
        Ok(GraphCutMi { contributions })
    }

    /// `2λ·σ_i` for every ground item.
    pub fn contributions(&self) -> &[T] {
        &self.contributions
    }
}

impl<T: Scalar> SetFunction<T> for GraphCutMi<T> {
    type Cache = ();

    fn ground_size(&self) -> usize {
        self.contributions.len()
    }

    fn is_submodular(&self) -> bool {
        true
    }

    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError> {
        let n = self.ground_size();
        let mut total = T::zero();
        for &i in set {
            check_index(i, n)?;
            total += self.contributions[i];
        }
        Ok(total)
    }

    fn init_cache(&self) {}

    #[inline]
    fn gain(&self, _: &(), _: &[usize], candidate: usize) -> Result<T, ObjectiveError> {
        check_index(candidate, self.ground_size())?;
        Ok(self.contributions[candidate])
    }

    fn commit(&self, _: &mut (), _: &[usize], _: usize) -> Result<(), ObjectiveError> {
        Ok(())
    }
}
