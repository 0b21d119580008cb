//! Needle-in-haystack benchmark harness: synthetic or file-backed haystacks,
//! seeded trials, sweeps over selection configurations and reproducible
//! success-fraction reports.

mod report;
pub mod seeds;
mod sweep;
mod world;

pub use report::{round_sig, success_fraction, BenchReport, CellReport, REPORT_FORMAT_VERSION};
pub use sweep::{
    assemble_report, run_cell, run_sweep, run_trial, select_subset, Cell, RandomKind, RandomSelector, Selector,
    SweepGrid, TrialConfig, TrialOptions, TrialOutcome, World, WorldSpec,
};
pub use world::{class_name, gen_synthetic, Haystack, PoolWorld, SynthConfig, SyntheticWorld};

use thiserror::Error;

use crate::objectives::ObjectiveError;
use crate::optimizer::SelectError;
use crate::query::QueryError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(String),
    #[error("success fraction of an empty outcome list")]
    EmptyOutcomes,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("trial with seed {seed}: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<BenchError>,
    },
}
