use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{FacilityLocationVmi, GraphCutMi, LogDetCache, LogDetMi, ObjectiveError, SetFunction};

/// How component magnitudes are brought onto a common scale before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureScaling {
    /// Divide each component by the range (max − min) of its singleton values
    /// `f({i})` over the ground set.
    #[default]
    SingletonRange,
    /// Use raw component values.
    None,
}

/// Weighted sum of the three MI objectives:
/// `w₁·GCMI/z₁ + w₂·FLVMI/z₂ + w₃·LogDetMI/z₃`.
///
/// Components with zero weight are not built.
pub struct Mixture<'a, T> {
    graph_cut: Option<GraphCutMi<T>>,
    facility: Option<FacilityLocationVmi<'a, T>>,
    logdet: Option<LogDetMi<'a, T>>,
    weights: [f64; 3],
    scales: [f64; 3],
    coefficients: [T; 3],
    n: usize,
}

#[derive(Clone)]
pub struct MixtureCache<T> {
    facility: Option<Vec<T>>,
    logdet: Option<LogDetCache<T>>,
}

impl<'a, T: Scalar> Mixture<'a, T> {
    /// Weights must be finite and non-negative with at least one positive;
    /// they are used as given (the caller decides whether they sum to one).
    pub fn new(
        graph_cut: Option<GraphCutMi<T>>,
        facility: Option<FacilityLocationVmi<'a, T>>,
        logdet: Option<LogDetMi<'a, T>>,
        weights: [f64; 3],
        scaling: MixtureScaling,
    ) -> Result<Self, ObjectiveError> {
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().all(|w| *w == 0.0) {
            return Err(ObjectiveError::InvalidSpec(format!("bad mixture weights {weights:?}")));
        }
        let present = [graph_cut.is_some(), facility.is_some(), logdet.is_some()];
        for (c, (&w, &p)) in weights.iter().zip(&present).enumerate() {
            if w > 0.0 && !p {
                return Err(ObjectiveError::InvalidSpec(format!("component {c} has weight {w} but was not built")));
            }
        }
        let sizes = [
            graph_cut.as_ref().map(|f| f.ground_size()),
            facility.as_ref().map(|f| f.ground_size()),
            logdet.as_ref().map(|f| f.ground_size()),
        ];
        let mut known = sizes.iter().flatten();
        let n = *known.next().expect("at least one component");
        if known.any(|&m| m != n) {
            return Err(ObjectiveError::InvalidSpec(format!("component ground sizes differ: {sizes:?}")));
        }

        let mut scales = [1.0; 3];
        if scaling == MixtureScaling::SingletonRange {
            if let Some(f) = &graph_cut {
                scales[0] = singleton_range(f)?;
            }
            if let Some(f) = &facility {
                scales[1] = singleton_range(f)?;
            }
            if let Some(f) = &logdet {
                scales[2] = singleton_range(f)?;
            }
        }
        let coefficients = [0, 1, 2].map(|c| T::of(weights[c] / scales[c]));
        Ok(Mixture { graph_cut, facility, logdet, weights, scales, coefficients, n })
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    /// Normalization constants `z_c` (1.0 when scaling is off).
    pub fn scales(&self) -> [f64; 3] {
        self.scales
    }

    pub fn graph_cut(&self) -> Option<&GraphCutMi<T>> {
        self.graph_cut.as_ref()
    }

    pub fn facility(&self) -> Option<&FacilityLocationVmi<'a, T>> {
        self.facility.as_ref()
    }

    pub fn logdet(&self) -> Option<&LogDetMi<'a, T>> {
        self.logdet.as_ref()
    }
}

/// Range of `f({i})` over the ground set, falling back to the largest
/// magnitude and then to 1 when the range vanishes.
fn singleton_range<T: Scalar, F: SetFunction<T>>(f: &F) -> Result<f64, ObjectiveError> {
    let cache = f.init_cache();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..f.ground_size() {
        let g = f.gain(&cache, &[], i)?.as_f64();
        lo = lo.min(g);
        hi = hi.max(g);
    }
    let range = hi - lo;
    let magnitude = hi.abs().max(lo.abs());
    Ok(if range > 1e-12 * magnitude && range > 0.0 {
        range
    } else if magnitude > 0.0 {
        magnitude
    } else {
        1.0
    })
}

impl<'a, T: Scalar> SetFunction<T> for Mixture<'a, T> {
    type Cache = MixtureCache<T>;

    fn ground_size(&self) -> usize {
        self.n
    }

    fn is_submodular(&self) -> bool {
        self.weights[2] == 0.0
    }

    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError> {
        let mut total = T::zero();
        if let Some(f) = &self.graph_cut {
            total += self.coefficients[0] * f.evaluate(set)?;
        }
        if let Some(f) = &self.facility {
            total += self.coefficients[1] * f.evaluate(set)?;
        }
        if let Some(f) = &self.logdet {
            total += self.coefficients[2] * f.evaluate(set)?;
        }
        Ok(total)
    }

    fn init_cache(&self) -> MixtureCache<T> {
        MixtureCache {
            facility: self.facility.as_ref().map(|f| f.init_cache()),
            logdet: self.logdet.as_ref().map(|f| f.init_cache()),
        }
    }

    fn gain(&self, cache: &MixtureCache<T>, selected: &[usize], candidate: usize) -> Result<T, ObjectiveError> {
        let mut total = T::zero();
        if let Some(f) = &self.graph_cut {
            total += self.coefficients[0] * f.gain(&(), selected, candidate)?;
        }
        if let (Some(f), Some(c)) = (&self.facility, &cache.facility) {
            total += self.coefficients[1] * f.gain(c, selected, candidate)?;
        }
        if let (Some(f), Some(c)) = (&self.logdet, &cache.logdet) {
            total += self.coefficients[2] * f.gain(c, selected, candidate)?;
        }
        Ok(total)
    }

    fn commit(&self, cache: &mut MixtureCache<T>, selected: &[usize], item: usize) -> Result<(), ObjectiveError> {
        if let (Some(f), Some(c)) = (&self.facility, cache.facility.as_mut()) {
            f.commit(c, selected, item)?;
        }
        if let (Some(f), Some(c)) = (&self.logdet, cache.logdet.as_mut()) {
            f.commit(c, selected, item)?;
        }
        Ok(())
    }
}
