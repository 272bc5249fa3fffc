use serde::Serialize;

use super::gengap::generalization_gap;
use super::stability::{estimate_stability, StabilityPlan, StabilityRun};
use super::GenGapReport;
use crate::engine::{ConsensusControl, TrainConfig, DEFAULT_MAX_ROUNDS};
use crate::models::{LossModel, SyntheticTask};
use crate::topology::{build_gossip_matrix, eigenvalues_symmetric, GossipMatrix, TopologyKind};
use crate::{Error, Result};

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t_gamma: usize,
    pub stability: f64,
    pub std_error: f64,
    /// Mean extra gossip rounds per base run.
    pub control_rounds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub gamma_sq: f64,
    pub points: Vec<SweepPoint>,
    /// Rank correlation between `t_Γ` and final stability.
    pub spearman: Option<f64>,
}

/// Final-iterate stability under consensus control from each `t_Γ` on.
///
/// Every point reuses the plan's seeds, so the points differ only in `t_Γ`.
pub fn consensus_control_sweep(
    p: &GossipMatrix,
    task: &SyntheticTask,
    model: &LossModel,
    config: &TrainConfig,
    plan: &StabilityPlan,
    gamma_sq: f64,
    t_gammas: &[usize],
) -> Result<SweepReport> {
    if plan.replicates < 5 {
        return Err(Error::invalid(format!(
            "the sweep needs at least 5 replicates, got {}",
            plan.replicates
        )));
    }
    if t_gammas.is_empty() || t_gammas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid(
            "t_gamma values must be nonempty and ascending",
        ));
    }
    let mut points = Vec::with_capacity(t_gammas.len());
    for &t_gamma in t_gammas {
        let plan = StabilityPlan {
            control: Some(ConsensusControl {
                gamma_sq,
                t_gamma,
                max_rounds: plan.control.map_or(DEFAULT_MAX_ROUNDS, |c| c.max_rounds),
            }),
            ..*plan
        };
        let run = estimate_stability(p, task, model, config, &plan)?;
        let rounds: usize = run.replicates.iter().map(|r| r.base.control_rounds).sum();
        points.push(SweepPoint {
            t_gamma,
            stability: run.estimate.final_mean(),
            std_error: run.estimate.final_std_error(),
            control_rounds: rounds as f64 / run.replicates.len() as f64,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.t_gamma as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.stability).collect();
    Ok(SweepReport {
        gamma_sq,
        spearman: spearman(&x, &y),
        points,
    })
}

/// One topology's runs in a comparison.
#[derive(Debug, Clone)]
pub struct TopologyRun {
    pub kind: TopologyKind,
    pub matrix: GossipMatrix,
    pub lambda: f64,
    pub stability: StabilityRun,
    pub gen_gap: GenGapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub kind: String,
    pub m: usize,
    pub lambda: f64,
    pub stability: f64,
    pub stability_se: f64,
    pub gen_gap: f64,
    pub gen_gap_se: f64,
}

impl TopologyRun {
    pub fn row(&self) -> ComparisonRow {
        ComparisonRow {
            kind: self.kind.name().to_string(),
            m: self.matrix.m(),
            lambda: self.lambda,
            stability: self.stability.estimate.final_mean(),
            stability_se: self.stability.estimate.final_std_error(),
            gen_gap: self.gen_gap.final_mean(),
            gen_gap_se: self.gen_gap.final_std_error(),
        }
    }
}

/// Stability and generalization gap per topology. Every topology sees the
/// same data, perturbations and index streams.
pub fn topology_comparison(
    kinds: &[TopologyKind],
    m: usize,
    task: &SyntheticTask,
    model: &LossModel,
    config: &TrainConfig,
    plan: &StabilityPlan,
    mc_samples: usize,
) -> Result<Vec<TopologyRun>> {
    if kinds.is_empty() {
        return Err(Error::invalid("at least one topology is required"));
    }
    let matrices = kinds
        .iter()
        .map(|kind| build_gossip_matrix(kind, m))
        .collect::<Result<Vec<_>>>()?;
    kinds
        .iter()
        .zip(matrices)
        .map(|(kind, matrix)| {
            let lambda = eigenvalues_symmetric(&matrix)?.lambda;
            let stability = estimate_stability(&matrix, task, model, config, plan)?;
            let gen_gap = generalization_gap(
                &stability.base_traces(),
                &stability.shards(),
                task,
                model,
                mc_samples,
            )?;
            Ok(TopologyRun {
                kind: kind.clone(),
                matrix,
                lambda,
                stability,
                gen_gap,
            })
        })
        .collect()
}

/// True when `values` is non-decreasing.
pub fn is_ordered(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] <= w[1])
}
