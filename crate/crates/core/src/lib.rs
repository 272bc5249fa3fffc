//! Simulation laboratory for decentralized SGD (D-SGD).
//!
//! The crate is organized bottom-up:
//!
//! - [`topology`]: gossip matrices for the standard communication graphs, a
//!   cyclic Jacobi eigensolver, spectral gaps and mixing-contraction checks.
//! - [`models`]: loss families with exact gradients, synthetic data
//!   distributions, and the regularity constants (Hölder, self-bounding).
//! - [`engine`]: the adapt-while-communicate D-SGD recursion, full runs,
//!   coupled runs on neighboring datasets, and consensus-distance control.
//! - [`analysis`]: estimators for on-average stability, generalization gap
//!   and Gaussianity of weight differences, and evaluators for the explicit
//!   stability and generalization bounds.
//!
//! Everything is deterministic given a seed. Replicate fan-out uses rayon but
//! reductions happen in replicate order, so results do not depend on the
//! number of worker threads.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
mod error;
pub mod models;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};

pub use analysis::{
    BoundInputs, GaussianityReport, GenGapReport, StabilityEstimate, StabilityPlan,
};
pub use engine::{
    CoupledTrace, LrSchedule, Perturbation, PerturbationMode, RunTrace, TrainConfig, WorkerMatrix,
};
pub use models::{LossFamily, LossModel, Sample, Shards, SyntheticTask};
pub use topology::{GossipMatrix, SpectrumReport, TopologyKind};
