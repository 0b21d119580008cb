use serde::{Deserialize, Serialize};

use crate::kernel::{GroundKernel, KernelConfig, QueryKernel, Transform, DEFAULT_DENSE_CAP, DEFAULT_JITTER};
use crate::scalar::Scalar;
use crate::store::EmbeddingMatrix;

use super::{
    FacilityLocationVmi, GraphCutMi, LogDetMi, LogDetMode, Mixture, MixtureScaling, Objective, ObjectiveError,
};

/// Mixture weights must sum to one within this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Gcmi,
    Flvmi,
    #[serde(rename = "logdet")]
    LogDetMi,
    Mixture,
}

impl ObjectiveKind {
    /// Similarity transform each objective uses unless overridden.
    pub fn default_transform(self) -> Transform {
        match self {
            ObjectiveKind::LogDetMi => Transform::Raw,
            _ => Transform::Shifted,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Gcmi => "gcmi",
            ObjectiveKind::Flvmi => "flvmi",
            ObjectiveKind::LogDetMi => "logdet",
            ObjectiveKind::Mixture => "mixture",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcmi" => Ok(ObjectiveKind::Gcmi),
            "flvmi" => Ok(ObjectiveKind::Flvmi),
            "logdet" | "logdetmi" => Ok(ObjectiveKind::LogDetMi),
            "mixture" => Ok(ObjectiveKind::Mixture),
            other => Err(format!("unknown objective {other:?} (expected gcmi, flvmi, logdet or mixture)")),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn is_default_scaling(s: &MixtureScaling) -> bool {
    *s == MixtureScaling::default()
}

/// Which objective to maximize and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// GCMI trade-off λ.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Query-side weight η (FLVMI and LogDetMI).
    #[serde(default = "one")]
    pub eta: f64,
    /// GCMI, FLVMI, LogDetMI weights; mixture only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "is_default_scaling")]
    pub scaling: MixtureScaling,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind) -> Self {
        ObjectiveSpec { kind, lambda: 1.0, eta: 1.0, weights: None, scaling: MixtureScaling::default() }
    }

    pub fn gcmi() -> Self {
        Self::new(ObjectiveKind::Gcmi)
    }

    pub fn flvmi() -> Self {
        Self::new(ObjectiveKind::Flvmi)
    }

    pub fn logdet() -> Self {
        Self::new(ObjectiveKind::LogDetMi)
    }

    pub fn mixture(weights: [f64; 3]) -> Self {
        ObjectiveSpec { weights: Some(weights), ..Self::new(ObjectiveKind::Mixture) }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_scaling(mut self, scaling: MixtureScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("eta must be positive, got {}", self.eta)));
        }
        match (self.kind, self.weights) {
            (ObjectiveKind::Mixture, None) => {
                Err(ObjectiveError::InvalidSpec("mixture objective needs three weights".into()))
            }
            (ObjectiveKind::Mixture, Some(w)) => {
                if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(ObjectiveError::InvalidSpec(format!("mixture weights must be non-negative: {w:?}")));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(ObjectiveError::InvalidSpec(format!("mixture weights sum to {sum}, not 1")));
                }
                Ok(())
            }
            (_, Some(_)) => Err(ObjectiveError::InvalidSpec("weights are only valid for the mixture objective".into())),
            (_, None) => Ok(()),
        }
    }

    /// Builds the objective over `ground` for the query rows `queries`. Both
    /// matrices must be normalized.
    pub fn build<'a, T: Scalar>(
        &self,
        ground: &'a EmbeddingMatrix,
        queries: &'a EmbeddingMatrix,
        options: &KernelOptions,
    ) -> Result<Objective<'a, T>, ObjectiveError> {
        self.validate()?;
        build_objective(self, None, ground, queries, options)
    }

    /// Like [`build`](Self::build) but takes mixture weights as given,
    /// without requiring them to sum to one.
    pub fn build_with_raw_weights<'a, T: Scalar>(
        &self,
        weights: [f64; 3],
        ground: &'a EmbeddingMatrix,
        queries: &'a EmbeddingMatrix,
        options: &KernelOptions,
    ) -> Result<Objective<'a, T>, ObjectiveError> {
        build_objective(self, Some(weights), ground, queries, options)
    }
}

fn build_objective<'a, T: Scalar>(
    spec: &ObjectiveSpec,
    raw_weights: Option<[f64; 3]>,
    ground: &'a EmbeddingMatrix,
    queries: &'a EmbeddingMatrix,
    options: &KernelOptions,
) -> Result<Objective<'a, T>, ObjectiveError> {
    let cfg = |kind: ObjectiveKind| options.kernel_config(kind);
    let graph_cut = || -> Result<GraphCutMi<T>, ObjectiveError> {
        let qk = QueryKernel::build(ground, queries, cfg(ObjectiveKind::Gcmi))?;
        GraphCutMi::new(&qk, spec.lambda)
    };
    let facility = || -> Result<FacilityLocationVmi<'a, T>, ObjectiveError> {
        let c = cfg(ObjectiveKind::Flvmi);
        let qk = QueryKernel::build(ground, queries, c)?;
        let gk = GroundKernel::build(ground, c, options.dense_cap)?;
        FacilityLocationVmi::new(gk, &qk, spec.eta)
    };
    let logdet = || -> Result<LogDetMi<'a, T>, ObjectiveError> {
        Ok(LogDetMi::new(ground, queries, cfg(ObjectiveKind::LogDetMi), spec.eta)?.with_mode(options.logdet_mode))
    };
    Ok(match spec.kind {
        ObjectiveKind::Gcmi => Objective::GraphCut(graph_cut()?),
        ObjectiveKind::Flvmi => Objective::FacilityLocation(facility()?),
        ObjectiveKind::LogDetMi => Objective::LogDet(logdet()?),
        ObjectiveKind::Mixture => {
            let w = raw_weights
                .or(spec.weights)
                .ok_or_else(|| ObjectiveError::InvalidSpec("mixture objective needs three weights".into()))?;
            Objective::Mixture(Mixture::new(
                if w[0] > 0.0 { Some(graph_cut()?) } else { None },
                if w[1] > 0.0 { Some(facility()?) } else { None },
                if w[2] > 0.0 { Some(logdet()?) } else { None },
                w,
                spec.scaling,
            )?)
        }
    })
}

/// Rescales non-negative weights to sum to one.
pub fn normalize_weights(weights: [f64; 3]) -> Result<[f64; 3], ObjectiveError> {
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(ObjectiveError::InvalidSpec(format!("mixture weights must be non-negative: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(ObjectiveError::InvalidSpec("mixture weights are all zero".into()));
    }
    Ok(weights.map(|w| w / sum))
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

/// Kernel-side settings shared by all objectives of one selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Overrides every objective's preferred transform when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Largest ground set for which the ground×ground kernel is materialized.
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default)]
    pub logdet_mode: LogDetMode,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            transform: None,
            jitter: DEFAULT_JITTER,
            dense_cap: DEFAULT_DENSE_CAP,
            logdet_mode: LogDetMode::Incremental,
        }
    }
}

impl KernelOptions {
    pub fn kernel_config(&self, kind: ObjectiveKind) -> KernelConfig {
        KernelConfig { transform: self.transform.unwrap_or(kind.default_transform()), jitter: self.jitter }
    }
}
