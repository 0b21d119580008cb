//! Query-aware submodular subset selection for embedding haystacks.
//!
//! The pipeline: load (or synthesize) a haystack of unit-normalized
//! embeddings, build a query set from per-class reference embeddings, score
//! candidates with a mutual-information objective (GCMI, FLVMI, LogDetMI or
//! a convex mixture), and greedily select a subset. The [`bench`] module
//! measures how often a planted needle survives that pre-filter.
//!
//! Similarity and objective math is generic over [`Scalar`] (`f32`/`f64`);
//! the aliases below fix the common choices.

pub mod bench;
pub mod kernel;
pub mod linalg;
pub mod objectives;
pub mod optimizer;
pub mod query;
pub mod scalar;
pub mod store;

pub use kernel::{cosine, kernel_block, GroundKernel, KernelConfig, KernelError, QueryKernel, Transform};
pub use objectives::{
    Objective, ObjectiveError, ObjectiveKind, ObjectiveSpec, ObjectiveState, KernelOptions, SetFunction,
};
pub use optimizer::{greedy_select, subset_fraction_to_k, GreedyOptions, SelectError, SelectionResult, Strategy};
pub use query::{build_query_set, parse_query, ParsedQuery, QueryError, QueryMode, QuerySet};
pub use scalar::Scalar;
pub use store::{load_embeddings, write_embeddings, EmbeddingMatrix, ManifestEntry, ReferenceStore, StoreError};

pub type QueryKernel32 = QueryKernel<f32>;
pub type QueryKernel64 = QueryKernel<f64>;
pub type Objective32<'a> = Objective<'a, f32>;
pub type Objective64<'a> = Objective<'a, f64>;
pub type SelectionResult32 = SelectionResult<f32>;
pub type SelectionResult64 = SelectionResult<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
