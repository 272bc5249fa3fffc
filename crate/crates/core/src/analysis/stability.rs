use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean_and_se;
use crate::engine::run_with;
use crate::engine::{
    ConsensusControl, CoupledTrace, Perturbation, PerturbationMode, RunTrace, TrainConfig,
    WorkerMatrix,
};
use crate::models::{sample_dataset, shard_iid, LossModel, Shards, SyntheticTask};
use crate::topology::GossipMatrix;
use crate::{seed, Error, Result};

/// How the neighboring dataset is formed from `S` at a sampled index `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityMode {
    /// Replace sample `i` on every worker.
    #[default]
    Synchronized,
    /// Replace sample `i` on one uniformly drawn worker.
    SingleWorker,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityPlan {
    pub replicates: usize,
    /// Perturbations per replicate.
    pub pairs: usize,
    pub mode: StabilityMode,
    /// Samples per worker `n`.
    pub samples_per_worker: usize,
    pub seed: u64,
    /// Consensus control applied to both coupled runs.
    pub control: Option<ConsensusControl>,
    /// Keep every [`CoupledTrace`] instead of only the final differences.
    pub keep_coupled: bool,
}

impl StabilityPlan {
    pub fn new(replicates: usize, pairs: usize, samples_per_worker: usize, seed: u64) -> Self {
        StabilityPlan {
            replicates,
            pairs,
            mode: StabilityMode::Synchronized,
            samples_per_worker,
            seed,
            control: None,
            keep_coupled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid(format!(
                "at least 2 replicates are required, got {}",
                self.replicates
            )));
        }
        if self.pairs == 0 {
            return Err(Error::invalid("pairs must be at least 1"));
        }
        if self.samples_per_worker == 0 {
            return Err(Error::invalid("samples per worker must be at least 1"));
        }
        Ok(())
    }

    pub fn data_seed(&self, replicate: usize) -> u64 {
        seed::derive_seed(self.seed, "data", replicate as u64)
    }

    pub fn train_seed(&self, replicate: usize) -> u64 {
        seed::derive_seed(self.seed, "train", replicate as u64)
    }

    pub fn perturbation_seed(&self, replicate: usize, pair: usize) -> u64 {
        seed::derive_seed2(self.seed, "perturb", replicate as u64, pair as u64)
    }
}

/// Mean of `(1/m) Σ_k ‖w_k − w̃_k‖²` per logged iterate over perturbations and
/// replicates; the standard error is taken over replicate means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityEstimate {
    pub iters: Vec<usize>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub replicates: usize,
    pub pairs: usize,
    pub mode: StabilityMode,
}

impl StabilityEstimate {
    pub fn final_mean(&self) -> f64 {
        *self
            .mean
            .last()
            .expect("estimates always include the initialization")
    }

    pub fn final_std_error(&self) -> f64 {
        *self
            .std_error
            .last()
            .expect("estimates always include the initialization")
    }
}

/// One replicate's data and unperturbed run.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub shards: Shards,
    pub base: Arc<RunTrace>,
    /// Per-pair `(1/m) Σ_k ‖w_k − w̃_k‖²` curves.
    pub pair_curves: Vec<Vec<f64>>,
    /// Per-pair final `w_k − w̃_k`.
    pub final_diffs: Vec<WorkerMatrix>,
    /// Filled when the plan keeps coupled traces.
    pub coupled: Vec<CoupledTrace>,
}

#[derive(Debug, Clone)]
pub struct StabilityRun {
    pub estimate: StabilityEstimate,
    pub replicates: Vec<Replicate>,
}

impl StabilityRun {
    pub fn base_traces(&self) -> Vec<&RunTrace> {
        self.replicates.iter().map(|r| r.base.as_ref()).collect()
    }

    pub fn final_diffs(&self) -> Vec<&WorkerMatrix> {
        self.replicates
            .iter()
            .flat_map(|r| &r.final_diffs)
            .collect()
    }

    pub fn shards(&self) -> Vec<&Shards> {
        self.replicates.iter().map(|r| &r.shards).collect()
    }
}

fn draw_perturbation(
    task: &SyntheticTask,
    m: usize,
    n: usize,
    mode: StabilityMode,
    seed: u64,
) -> Perturbation {
    let mut rng = seed::rng(seed);
    let index = rng.random_range(0..n);
    let (mode, count) = match mode {
        StabilityMode::Synchronized => (PerturbationMode::Synchronized, m),
        StabilityMode::SingleWorker => (PerturbationMode::SingleWorker(rng.random_range(0..m)), 1),
    };
    let replacements = sample_dataset(task, count, rng.random());
    Perturbation {
        mode,
        index,
        replacements,
    }
}

/// Estimates on-average stability by coupled runs.
///
/// Replicate `r` draws fresh shards, runs D-SGD once on them with its own
/// training seed, and then reruns with that seed on `pairs` perturbed copies.
/// Replicates run on the current rayon pool; results are reduced in
/// replicate order.
pub fn estimate_stability(
    p: &GossipMatrix,
    task: &SyntheticTask,
    model: &LossModel,
    config: &TrainConfig,
    plan: &StabilityPlan,
) -> Result<StabilityRun> {
    plan.validate()?;
    config.validate()?;
    let m = p.m();
    let n = plan.samples_per_worker;
    let replicates = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let (shards, base) = base_run(p, task, model, config, plan, r)?;
            let cfg = config.with_seed(plan.train_seed(r));
            let control = plan.control.as_ref();
            let mut rep = Replicate {
                pair_curves: Vec::with_capacity(plan.pairs),
                final_diffs: Vec::with_capacity(plan.pairs),
                coupled: Vec::new(),
                shards,
                base: Arc::new(base),
            };
            for j in 0..plan.pairs {
                let pert = draw_perturbation(task, m, n, plan.mode, plan.perturbation_seed(r, j));
                let perturbed = run_with(p, &pert.apply(&rep.shards)?, model, &cfg, control, None)?;
                let coupled = CoupledTrace::from_runs(Arc::clone(&rep.base), perturbed, pert)?;
                rep.pair_curves.push(coupled.mean_sq_diffs());
                rep.final_diffs.push(coupled.final_diffs.clone());
                if plan.keep_coupled {
                    rep.coupled.push(coupled);
                }
            }
            Ok(rep)
        })
        .collect::<Result<Vec<Replicate>>>()?;

    let iters = replicates[0].base.iterations();
    let per_replicate: Vec<Vec<f64>> = replicates
        .iter()
        .map(|rep| average_curves(&rep.pair_curves))
        .collect();
    let (mean, std_error) = pointwise_mean_se(&per_replicate);
    Ok(StabilityRun {
        estimate: StabilityEstimate {
            iters,
            mean,
            std_error,
            replicates: plan.replicates,
            pairs: plan.pairs,
            mode: plan.mode,
        },
        replicates,
    })
}

fn base_run(
    p: &GossipMatrix,
    task: &SyntheticTask,
    model: &LossModel,
    config: &TrainConfig,
    plan: &StabilityPlan,
    r: usize,
) -> Result<(Shards, RunTrace)> {
    let m = p.m();
    let shards = shard_iid(
        &sample_dataset(task, plan.samples_per_worker * m, plan.data_seed(r)),
        m,
    )?;
    let cfg = config.with_seed(plan.train_seed(r));
    let trace = run_with(p, &shards, model, &cfg, plan.control.as_ref(), None)?;
    Ok((shards, trace))
}

/// The unperturbed run of every replicate, with the same data and seeds as
/// [`estimate_stability`] uses. `plan.pairs` is ignored.
pub fn run_replicates(
    p: &GossipMatrix,
    task: &SyntheticTask,
    model: &LossModel,
    config: &TrainConfig,
    plan: &StabilityPlan,
) -> Result<Vec<(Shards, RunTrace)>> {
    StabilityPlan { pairs: 1, ..*plan }.validate()?;
    config.validate()?;
    (0..plan.replicates)
        .into_par_iter()
        .map(|r| base_run(p, task, model, config, plan, r))
        .collect()
}

fn average_curves(curves: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; curves[0].len()];
    for curve in curves {
        for (a, v) in acc.iter_mut().zip(curve) {
            *a += v;
        }
    }
    let count = curves.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

fn pointwise_mean_se(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    (0..curves[0].len())
        .map(|s| {
            let column: Vec<f64> = curves.iter().map(|c| c[s]).collect();
            mean_and_se(&column)
        })
        .unzip()
}

/// Upper limit on coupled runs in [`exhaustive_stability`].
pub const EXHAUSTIVE_LIMIT: usize = 1 << 20;

/// Stability on fixed shards, averaged exactly over the given perturbations
/// and over every index sequence `ζ ∈ {0..n}^{T·m}`.
pub fn exhaustive_stability(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    perturbations: &[Perturbation],
) -> Result<StabilityEstimate> {
    if perturbations.is_empty() {
        return Err(Error::invalid("at least one perturbation is required"));
    }
    let (m, n, t_total) = (shards.m(), shards.n(), config.iterations);
    let slots = t_total * m;
    let sequences = u32::try_from(slots)
        .ok()
        .and_then(|s| n.checked_pow(s))
        .filter(|&count| count.saturating_mul(perturbations.len()) <= EXHAUSTIVE_LIMIT)
        .ok_or_else(|| {
            Error::invalid(format!(
                "exhaustive enumeration of {n}^{slots} index sequences is too large"
            ))
        })?;
    let perturbed: Vec<Shards> = perturbations
        .iter()
        .map(|pert| pert.apply(shards))
        .collect::<Result<_>>()?;
    let mut zetas = vec![vec![0; m]; t_total];
    let mut totals: Option<Vec<f64>> = None;
    let mut iters = Vec::new();
    for code in 0..sequences {
        let mut rest = code;
        for slot in 0..slots {
            zetas[slot / m][slot % m] = rest % n;
            rest /= n;
        }
        let base = Arc::new(run_with(p, shards, model, config, None, Some(&zetas))?);
        for (pert, other) in perturbations.iter().zip(&perturbed) {
            let run = run_with(p, other, model, config, None, Some(&zetas))?;
            let coupled = CoupledTrace::from_runs(Arc::clone(&base), run, pert.clone())?;
            let curve = coupled.mean_sq_diffs();
            match totals.as_mut() {
                Some(acc) => acc.iter_mut().zip(&curve).for_each(|(a, v)| *a += v),
                None => totals = Some(curve),
            }
        }
        if iters.is_empty() {
            iters = base.iterations();
        }
    }
    let count = (sequences * perturbations.len()) as f64;
    let mean: Vec<f64> = totals
        .expect("at least one sequence")
        .into_iter()
        .map(|v| v / count)
        .collect();
    Ok(StabilityEstimate {
        std_error: vec![0.0; mean.len()],
        iters,
        mean,
        replicates: 1,
        pairs: perturbations.len(),
        mode: match perturbations[0].mode {
            PerturbationMode::Synchronized => StabilityMode::Synchronized,
            PerturbationMode::SingleWorker(_) => StabilityMode::SingleWorker,
        },
    })
}

/// Envelopes `(σ², μ²)` of the final weight differences.
///
/// Per worker, differences are pooled across traces: `μ̂_k` is the
/// per-coordinate mean and `σ̂_k²` the per-coordinate (unbiased) variance
/// averaged over coordinates. Returns `(max_k σ̂_k², max_k ‖μ̂_k‖²/d)`.
pub fn estimate_sigma_mu(coupled: &[CoupledTrace]) -> Result<(f64, f64)> {
    let diffs: Vec<&WorkerMatrix> = coupled.iter().map(|c| &c.final_diffs).collect();
    estimate_sigma_mu_from_diffs(&diffs)
}

pub fn estimate_sigma_mu_from_diffs(diffs: &[&WorkerMatrix]) -> Result<(f64, f64)> {
    if diffs.len() < 2 {
        return Err(Error::InsufficientData {
            what: "coupled traces",
            needed: 2,
            actual: diffs.len(),
        });
    }
    let (m, d) = (diffs[0].m(), diffs[0].d());
    if let Some(bad) = diffs.iter().find(|w| (w.m(), w.d()) != (m, d)) {
        return Err(Error::DimensionMismatch {
            context: "weight difference shape",
            expected: m * d,
            actual: bad.m() * bad.d(),
        });
    }
    let count = diffs.len() as f64;
    let (mut sigma_sq, mut mu_sq) = (0.0_f64, 0.0_f64);
    for k in 0..m {
        let mut mean = vec![0.0; d];
        for w in diffs {
            mean.iter_mut().zip(w.row(k)).for_each(|(a, v)| *a += v);
        }
        mean.iter_mut().for_each(|a| *a /= count);
        let mut var = 0.0;
        for w in diffs {
            var += w
                .row(k)
                .iter()
                .zip(&mean)
                .map(|(v, mu)| (v - mu) * (v - mu))
                .sum::<f64>();
        }
        var /= (count - 1.0) * d as f64;
        sigma_sq = sigma_sq.max(var);
        mu_sq = mu_sq.max(mean.iter().map(|v| v * v).sum::<f64>() / d as f64);
    }
    Ok((sigma_sq, mu_sq))
}

/// `x^e` with `0^0 = 1`.
pub(crate) fn pow0(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// `(1/m) Σ_k F_{S_k}(w_k)^{2α/(1+α)}` at every logged iterate.
pub fn exponentiated_risk_curve(trace: &RunTrace, alpha: f64) -> Vec<f64> {
    let e = 2.0 * alpha / (1.0 + alpha);
    trace
        .snapshots
        .iter()
        .map(|s| {
            s.worker_risks.iter().map(|&r| pow0(r, e)).sum::<f64>() / s.worker_risks.len() as f64
        })
        .collect()
}

/// `ε_S`: the largest [`exponentiated_risk_curve`] value over all traces.
pub fn estimate_epsilon_s(traces: &[&RunTrace], alpha: f64) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::InsufficientData {
            what: "traces",
            needed: 1,
            actual: 0,
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(traces
        .iter()
        .flat_map(|t| exponentiated_risk_curve(t, alpha))
        .fold(0.0, f64::max))
}
