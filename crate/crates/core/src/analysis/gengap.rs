use serde::Serialize;

use super::mean_and_se;
use crate::engine::RunTrace;
use crate::models::{
    population_risk, population_risk_mc, LossFamily, LossModel, Shards, SyntheticTask,
};
use crate::{seed, Error, Result};

/// `F(w̄) − F_S(w̄)` per logged iterate, averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenGapReport {
    pub iters: Vec<usize>,
    pub mean: Vec<f64>,
    /// Zero when there is a single replicate.
    pub std_error: Vec<f64>,
    /// Final-iterate gap of each replicate.
    pub final_gaps: Vec<f64>,
}

impl GenGapReport {
    pub fn final_mean(&self) -> f64 {
        *self
            .mean
            .last()
            .expect("reports always include the initialization")
    }

    pub fn final_std_error(&self) -> f64 {
        *self
            .std_error
            .last()
            .expect("reports always include the initialization")
    }
}

/// Population risk, closed form when the family has one and otherwise
/// Monte-Carlo with `mc_samples` draws from a fixed stream.
pub fn population_risk_value(task: &SyntheticTask, w: &[f64], mc_samples: usize) -> Result<f64> {
    match task.family {
        LossFamily::LinearRegression => Ok(population_risk(task, w)?.value),
        _ => Ok(
            population_risk_mc(task, w, mc_samples, seed::derive_seed(0, "population", 0))?.value,
        ),
    }
}

/// `F_S(w)`: the mean loss over every training sample.
pub fn empirical_risk(model: &LossModel, shards: &Shards, w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for z in shards.all_samples() {
        total += model.loss_value(w, z)?;
        count += 1;
    }
    Ok(total / count as f64)
}

/// The generalization gap of the consensus model; `traces[r]` must have been
/// trained on `datasets[r]`.
pub fn generalization_gap(
    traces: &[&RunTrace],
    datasets: &[&Shards],
    task: &SyntheticTask,
    model: &LossModel,
    mc_samples: usize,
) -> Result<GenGapReport> {
    if traces.is_empty() {
        return Err(Error::InsufficientData {
            what: "traces",
            needed: 1,
            actual: 0,
        });
    }
    if traces.len() != datasets.len() {
        return Err(Error::DimensionMismatch {
            context: "traces vs datasets",
            expected: traces.len(),
            actual: datasets.len(),
        });
    }
    let iters = traces[0].iterations();
    if traces.iter().any(|t| t.iterations() != iters) {
        return Err(Error::invalid("traces must share their logged iterations"));
    }
    let gaps: Vec<Vec<f64>> = traces
        .iter()
        .zip(datasets)
        .map(|(trace, shards)| {
            trace
                .snapshots
                .iter()
                .map(|s| {
                    Ok(population_risk_value(task, &s.consensus, mc_samples)?
                        - empirical_risk(model, shards, &s.consensus)?)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (mean, std_error) = (0..iters.len())
        .map(|s| {
            let column: Vec<f64> = gaps.iter().map(|g| g[s]).collect();
            mean_and_se(&column)
        })
        .unzip();
    Ok(GenGapReport {
        iters,
        mean,
        std_error,
        final_gaps: gaps.iter().map(|g| *g.last().expect("nonempty")).collect(),
    })
}
