//! Loss families, synthetic data distributions and regularity constants.

mod dataset;
mod loss;
mod regularity;
mod task;

use serde::{Deserialize, Serialize};

pub use dataset::read_dataset_csv;
pub use loss::{LossFamily, LossModel, SOFTPLUS_SHARPNESS};
pub use regularity::{
    c_alpha_constant, estimate_holder_constant, estimate_holder_constant_on, max_gradient_at_zero,
    self_bounding_check, self_bounding_sides, HolderEstimate, SelfBoundingReport,
    DEFAULT_HOLDER_RADIUS,
};
pub use task::{
    population_risk, population_risk_mc, sample_dataset, shard_iid, RiskEstimate, Shards,
    SyntheticTask, DEFAULT_MC_SAMPLES,
};

/// One labelled example `z = (x, y)`. Classification labels are `0` or `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Sample { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
