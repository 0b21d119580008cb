//! Query-aware submodular mutual-information objectives.
//!
//! Every objective implements [`SetFunction`]: a from-scratch `evaluate` and
//! an incremental `gain`/`commit` pair driven through an [`ObjectiveState`].
//! The greedy optimizer only ever talks to the incremental side; tests use
//! `evaluate` to check that the two agree.

mod facility;
mod graph_cut;
mod logdet;
mod mixture;
mod spec;

pub use facility::FacilityLocationVmi;
pub use graph_cut::GraphCutMi;
pub use logdet::{LogDetCache, LogDetMi, LogDetMode};
pub use mixture::{Mixture, MixtureCache, MixtureScaling};
pub use spec::{normalize_weights, KernelOptions, ObjectiveKind, ObjectiveSpec, WEIGHT_TOLERANCE};

use thiserror::Error;

use crate::kernel::KernelError;
use crate::linalg::NotPositiveDefinite;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("candidate {index} out of range for ground set of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("candidate {index} is already selected")]
    AlreadySelected { index: usize },
    #[error(
        "negative similarity {value} between items {left} and {right}; \
         facility location needs non-negative similarities, use the shifted transform"
    )]
    NegativeSimilarity { left: usize, right: usize, value: f64 },
    #[error(
        "{block} block of size {size} is not positive definite after jitter \
         (pivot {pivot:e} at {index}, condition estimate {condition_estimate:e})"
    )]
    NotPositiveDefinite { block: &'static str, size: usize, index: usize, pivot: f64, condition_estimate: f64 },
    #[error("invalid objective: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl ObjectiveError {
    pub(crate) fn not_pd(block: &'static str, size: usize, e: NotPositiveDefinite) -> Self {
        ObjectiveError::NotPositiveDefinite {
            block,
            size,
            index: e.index,
            pivot: e.pivot,
            condition_estimate: e.condition_estimate,
        }
    }
}

/// A set function over the ground set `{0, .., n-1}` with an incremental
/// evaluation cache.
pub trait SetFunction<T: Scalar>: Sync {
    type Cache: Clone + Send + Sync;

    fn ground_size(&self) -> usize;

    /// Whether diminishing returns holds on every instance. Lazy greedy is
    /// only exact for functions that report `true`.
    fn is_submodular(&self) -> bool;

    /// `f(set)` computed from scratch.
    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError>;

    /// Cache for the empty selection.
    fn init_cache(&self) -> Self::Cache;

    /// `f(A ∪ {candidate}) − f(A)` where `A = selected` is the set the cache
    /// was built for.
    fn gain(&self, cache: &Self::Cache, selected: &[usize], candidate: usize) -> Result<T, ObjectiveError>;

    /// Updates the cache for `selected ∪ {item}`; `selected` excludes `item`.
    fn commit(&self, cache: &mut Self::Cache, selected: &[usize], item: usize) -> Result<(), ObjectiveError>;
}

/// The running selection of one objective together with its caches.
pub struct ObjectiveState<'f, T: Scalar, F: SetFunction<T>> {
    function: &'f F,
    selected: Vec<usize>,
    member: Vec<bool>,
    value: T,
    cache: F::Cache,
}

impl<'f, T: Scalar, F: SetFunction<T>> Clone for ObjectiveState<'f, T, F> {
    fn clone(&self) -> Self {
        ObjectiveState {
            function: self.function,
            selected: self.selected.clone(),
            member: self.member.clone(),
            value: self.value,
            cache: self.cache.clone(),
        }
    }
}

impl<'f, T: Scalar, F: SetFunction<T>> ObjectiveState<'f, T, F> {
    pub fn new(function: &'f F) -> Self {
        ObjectiveState {
            function,
            selected: Vec::new(),
            member: vec![false; function.ground_size()],
            value: T::zero(),
            cache: function.init_cache(),
        }
    }

    /// Builds the state by accepting `items` in order.
    pub fn with_selection(function: &'f F, items: &[usize]) -> Result<Self, ObjectiveError> {
        let mut state = Self::new(function);
        for &i in items {
            state.accept(i)?;
        }
        Ok(state)
    }

    pub fn function(&self) -> &'f F {
        self.function
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member.get(i).copied().unwrap_or(false)
    }

    /// Cached objective value (the running sum of accepted gains).
    pub fn value(&self) -> T {
        self.value
    }

    fn check_candidate(&self, i: usize) -> Result<(), ObjectiveError> {
        let n = self.member.len();
        if i >= n {
            return Err(ObjectiveError::IndexOutOfRange { index: i, n });
        }
        if self.member[i] {
            return Err(ObjectiveError::AlreadySelected { index: i });
        }
        Ok(())
    }

    pub fn marginal_gain(&self, i: usize) -> Result<T, ObjectiveError> {
        self.check_candidate(i)?;
        self.function.gain(&self.cache, &self.selected, i)
    }

    /// Adds `i` to the selection and returns its marginal gain.
    pub fn accept(&mut self, i: usize) -> Result<T, ObjectiveError> {
        let gain = self.marginal_gain(i)?;
        self.accept_with_gain(i, gain)?;
        Ok(gain)
    }

    /// Adds `i` whose gain the caller has just computed against this state.
    pub(crate) fn accept_with_gain(&mut self, i: usize, gain: T) -> Result<(), ObjectiveError> {
        self.check_candidate(i)?;
        self.function.commit(&mut self.cache, &self.selected, i)?;
        self.selected.push(i);
        self.member[i] = true;
        self.value += gain;
        Ok(())
    }

    /// From-scratch value of the current selection.
    pub fn recompute(&self) -> Result<T, ObjectiveError> {
        self.function.evaluate(&self.selected)
    }
}

/// Runtime-selected objective.
pub enum Objective<'a, T: Scalar> {
    GraphCut(GraphCutMi<T>),
    FacilityLocation(FacilityLocationVmi<'a, T>),
    LogDet(LogDetMi<'a, T>),
    Mixture(Mixture<'a, T>),
}

#[derive(Clone)]
pub enum ObjectiveCache<T> {
    GraphCut,
    FacilityLocation(Vec<T>),
    LogDet(LogDetCache<T>),
    Mixture(MixtureCache<T>),
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            Objective::GraphCut(_) => ObjectiveKind::Gcmi,
            Objective::FacilityLocation(_) => ObjectiveKind::Flvmi,
            Objective::LogDet(_) => ObjectiveKind::LogDetMi,
            Objective::Mixture(_) => ObjectiveKind::Mixture,
        }
    }

    /// Per-component scale constants, for mixtures.
    pub fn mixture_scales(&self) -> Option<[f64; 3]> {
        match self {
            Objective::Mixture(m) => Some(m.scales()),
            _ => None,
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $f:ident => $body:expr) => {
        match $self {
            Objective::GraphCut($f) => $body,
            Objective::FacilityLocation($f) => $body,
            Objective::LogDet($f) => $body,
            Objective::Mixture($f) => $body,
        }
    };
}

impl<'a, T: Scalar> SetFunction<T> for Objective<'a, T> {
    type Cache = ObjectiveCache<T>;

    fn ground_size(&self) -> usize {
        dispatch!(self, f => f.ground_size())
    }

    fn is_submodular(&self) -> bool {
        dispatch!(self, f => f.is_submodular())
    }

    fn evaluate(&self, set: &[usize]) -> Result<T, ObjectiveError> {
        dispatch!(self, f => f.evaluate(set))
    }

    fn init_cache(&self) -> Self::Cache {
        match self {
            Objective::GraphCut(_) => ObjectiveCache::GraphCut,
            Objective::FacilityLocation(f) => ObjectiveCache::FacilityLocation(f.init_cache()),
            Objective::LogDet(f) => ObjectiveCache::LogDet(f.init_cache()),
            Objective::Mixture(f) => ObjectiveCache::Mixture(f.init_cache()),
        }
    }

    fn gain(&self, cache: &Self::Cache, selected: &[usize], candidate: usize) -> Result<T, ObjectiveError> {
        match (self, cache) {
            (Objective::GraphCut(f), ObjectiveCache::GraphCut) => f.gain(&(), selected, candidate),
            (Objective::FacilityLocation(f), ObjectiveCache::FacilityLocation(c)) => f.gain(c, selected, candidate),
            (Objective::LogDet(f), ObjectiveCache::LogDet(c)) => f.gain(c, selected, candidate),
            (Objective::Mixture(f), ObjectiveCache::Mixture(c)) => f.gain(c, selected, candidate),
            _ => unreachable!("cache built for a different objective"),
        }
    }

    fn commit(&self, cache: &mut Self::Cache, selected: &[usize], item: usize) -> Result<(), ObjectiveError> {
        match (self, cache) {
            (Objective::GraphCut(f), ObjectiveCache::GraphCut) => f.commit(&mut (), selected, item),
            (Objective::FacilityLocation(f), ObjectiveCache::FacilityLocation(c)) => f.commit(c, selected, item),
            (Objective::LogDet(f), ObjectiveCache::LogDet(c)) => f.commit(c, selected, item),
            (Objective::Mixture(f), ObjectiveCache::Mixture(c)) => f.commit(c, selected, item),
            _ => unreachable!("cache built for a different objective"),
        }
    }
}

pub(crate) fn check_index(index: usize, n: usize) -> Result<(), ObjectiveError> {
    if index >= n {
        Err(ObjectiveError::IndexOutOfRange { index, n })
    } else {
        Ok(())
    }
}
