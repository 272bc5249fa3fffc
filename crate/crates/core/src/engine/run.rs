use std::sync::Arc;

use rand::Rng as _;
use serde::Serialize;

use super::{
    check_indices, check_step_inputs, consensus_distance, consensus_model, step_into, TrainConfig,
    WorkerMatrix,
};
use crate::models::{LossModel, Sample, Shards};
use crate::topology::GossipMatrix;
use crate::{seed, Error, Result};

pub const DEFAULT_MAX_ROUNDS: usize = 1000;

/// State logged at one iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub iter: usize,
    pub workers: WorkerMatrix,
    pub consensus: Vec<f64>,
    pub consensus_distance: f64,
    /// `F_{S_k}(w_k)` per worker.
    pub worker_risks: Vec<f64>,
    /// `(1/m) Σ_k F_{S_k}(w_k)`.
    pub mean_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub config: TrainConfig,
    pub snapshots: Vec<Snapshot>,
    pub final_workers: WorkerMatrix,
    /// Extra gossip rounds spent by consensus control over the run.
    pub control_rounds: usize,
    /// Steps after which control hit its round limit above the target.
    pub control_exhausted: usize,
}

impl RunTrace {
    pub fn iterations(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.iter).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("a trace always logs the initialization")
    }
}

/// Keeps the consensus distance at or below `gamma_sq` after every step that
/// produces an iterate later than `t_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusControl {
    pub gamma_sq: f64,
    pub t_gamma: usize,
    pub max_rounds: usize,
}

impl ConsensusControl {
    pub fn new(gamma_sq: f64, t_gamma: usize) -> Self {
        ConsensusControl {
            gamma_sq,
            t_gamma,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    fn validate(&self, iterations: usize) -> Result<()> {
        if !(self.gamma_sq > 0.0) {
            return Err(Error::invalid(format!(
                "gamma_sq must be positive, got {}",
                self.gamma_sq
            )));
        }
        if self.t_gamma > iterations {
            return Err(Error::invalid(format!(
                "t_gamma = {} exceeds the iteration count {iterations}",
                self.t_gamma
            )));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds must be positive"));
        }
        Ok(())
    }
}

/// Repeats `W ← P·W` until the consensus distance is at most `gamma_sq` or
/// `max_rounds` rounds were spent. Returns the matrix and the rounds used.
pub fn consensus_control_step(
    w: &WorkerMatrix,
    p: &GossipMatrix,
    gamma_sq: f64,
    max_rounds: usize,
) -> Result<(WorkerMatrix, usize)> {
    if !(gamma_sq > 0.0) {
        return Err(Error::invalid(format!(
            "gamma_sq must be positive, got {gamma_sq}"
        )));
    }
    if p.m() != w.m() {
        return Err(Error::DimensionMismatch {
            context: "gossip matrix vs worker count",
            expected: w.m(),
            actual: p.m(),
        });
    }
    let mut current = w.clone();
    let mut scratch = WorkerMatrix::zeros(w.m(), w.d());
    let rounds = control_in_place(&mut current, &mut scratch, p, gamma_sq, max_rounds);
    Ok((current, rounds))
}

fn control_in_place(
    w: &mut WorkerMatrix,
    scratch: &mut WorkerMatrix,
    p: &GossipMatrix,
    gamma_sq: f64,
    max_rounds: usize,
) -> usize {
    let mut rounds = 0;
    while rounds < max_rounds && consensus_distance(w) > gamma_sq {
        p.mix_into(&w.data, w.d, &mut scratch.data);
        std::mem::swap(w, scratch);
        rounds += 1;
    }
    rounds
}

fn snapshot(iter: usize, w: &WorkerMatrix, shards: &Shards, model: &LossModel) -> Snapshot {
    let worker_risks: Vec<f64> = shards
        .iter()
        .enumerate()
        .map(|(k, shard)| {
            shard
                .iter()
                .map(|z| model.value_unchecked(w.row(k), z))
                .sum::<f64>()
                / shard.len() as f64
        })
        .collect();
    Snapshot {
        iter,
        workers: w.clone(),
        consensus: consensus_model(w),
        consensus_distance: consensus_distance(w),
        mean_risk: worker_risks.iter().sum::<f64>() / worker_risks.len() as f64,
        worker_risks,
    }
}

enum Indices<'a> {
    Seeded,
    Fixed(&'a [Vec<usize>]),
}

fn run_internal(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    control: Option<&ConsensusControl>,
    indices: Indices<'_>,
) -> Result<RunTrace> {
    config.validate()?;
    let m = p.m();
    let d = model.dim();
    let mut w = WorkerMatrix::zeros(m, d);
    check_step_inputs(&w, p, shards, model)?;
    if let Some(c) = control {
        c.validate(config.iterations)?;
    }
    if let Indices::Fixed(zetas) = indices {
        if zetas.len() != config.iterations {
            return Err(Error::DimensionMismatch {
                context: "index sequence length",
                expected: config.iterations,
                actual: zetas.len(),
            });
        }
        for zeta in zetas {
            check_indices(zeta, m, shards.n())?;
        }
    }

    let n = shards.n();
    let mut rng = seed::rng(config.seed);
    let mut next = WorkerMatrix::zeros(m, d);
    let mut grad = vec![0.0; d];
    let mut zeta = vec![0; m];
    let mut snapshots = vec![snapshot(0, &w, shards, model)];
    let (mut control_rounds, mut control_exhausted) = (0, 0);

    for t in 0..config.iterations {
        match indices {
            Indices::Seeded => zeta.iter_mut().for_each(|i| *i = rng.random_range(0..n)),
            Indices::Fixed(zetas) => zeta.copy_from_slice(&zetas[t]),
        }
        let eta = config.schedule.eta_at(t, config.iterations);
        step_into(&w, p, shards, &zeta, eta, model, &mut next, &mut grad);
        std::mem::swap(&mut w, &mut next);
        if let Some(c) = control.filter(|c| t + 1 > c.t_gamma) {
            let rounds = control_in_place(&mut w, &mut next, p, c.gamma_sq, c.max_rounds);
            control_rounds += rounds;
            if rounds == c.max_rounds && consensus_distance(&w) > c.gamma_sq {
                control_exhausted += 1;
            }
        }
        if !w.is_finite() {
            return Err(Error::NonFinite(format!(
                "worker models diverged at iterate {}",
                t + 1
            )));
        }
        if (t + 1) % config.snapshot_every == 0 || t + 1 == config.iterations {
            snapshots.push(snapshot(t + 1, &w, shards, model));
        }
    }
    Ok(RunTrace {
        config: *config,
        snapshots,
        final_workers: w,
        control_rounds,
        control_exhausted,
    })
}

/// A full run from `W = 0` with per-worker indices drawn uniformly from the
/// stream seeded by `config.seed`, worker by worker within each step.
pub fn run_dsgd(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
) -> Result<RunTrace> {
    run_internal(p, shards, model, config, None, Indices::Seeded)
}

/// A run driven by explicit indices, `zetas[t][k]` for step `t` and worker `k`.
pub fn run_dsgd_with_indices(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    zetas: &[Vec<usize>],
) -> Result<RunTrace> {
    run_internal(p, shards, model, config, None, Indices::Fixed(zetas))
}

/// [`run_dsgd`] with consensus control after every step producing an iterate
/// later than `control.t_gamma`.
pub fn run_with_consensus_control(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    control: &ConsensusControl,
) -> Result<RunTrace> {
    run_internal(p, shards, model, config, Some(control), Indices::Seeded)
}

pub(crate) fn run_with(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    control: Option<&ConsensusControl>,
    zetas: Option<&[Vec<usize>]>,
) -> Result<RunTrace> {
    let indices = zetas.map_or(Indices::Seeded, Indices::Fixed);
    run_internal(p, shards, model, config, control, indices)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationMode {
    /// Index `i` is replaced on every worker.
    Synchronized,
    /// Index `i` is replaced on worker `k` only.
    SingleWorker(usize),
}

/// Replacement of sample `index` by fresh draws: one per worker for
/// [`PerturbationMode::Synchronized`], a single one otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbation {
    pub mode: PerturbationMode,
    pub index: usize,
    pub replacements: Vec<Sample>,
}

impl Perturbation {
    pub fn apply(&self, shards: &Shards) -> Result<Shards> {
        match self.mode {
            PerturbationMode::Synchronized => {
                if self.replacements.len() != shards.m() {
                    return Err(Error::DimensionMismatch {
                        context: "replacement samples",
                        expected: shards.m(),
                        actual: self.replacements.len(),
                    });
                }
                let mut out = shards.clone();
                for (k, z) in self.replacements.iter().enumerate() {
                    out = out.with_replacement(k, self.index, z.clone())?;
                }
                Ok(out)
            }
            PerturbationMode::SingleWorker(k) => {
                if self.replacements.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "replacement samples",
                        expected: 1,
                        actual: self.replacements.len(),
                    });
                }
                shards.with_replacement(k, self.index, self.replacements[0].clone())
            }
        }
    }
}

/// Runs on `S` and a neighboring `S′` sharing every index draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrace {
    pub base: Arc<RunTrace>,
    pub perturbed: RunTrace,
    pub perturbation: Perturbation,
    /// `‖w_k − w̃_k‖²` per logged iterate, per worker.
    pub sq_diffs: Vec<Vec<f64>>,
    /// Final `w_k − w̃_k`.
    pub final_diffs: WorkerMatrix,
}

impl CoupledTrace {
    pub fn from_runs(
        base: Arc<RunTrace>,
        perturbed: RunTrace,
        perturbation: Perturbation,
    ) -> Result<Self> {
        if base.iterations() != perturbed.iterations() || base.config != perturbed.config {
            return Err(Error::invalid(
                "coupled runs must share their configuration",
            ));
        }
        let sq_diffs = base
            .snapshots
            .iter()
            .zip(&perturbed.snapshots)
            .map(|(a, b)| {
                a.workers
                    .rows()
                    .zip(b.workers.rows())
                    .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum())
                    .collect()
            })
            .collect();
        let diffs = base
            .final_workers
            .as_slice()
            .iter()
            .zip(perturbed.final_workers.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let final_diffs = WorkerMatrix {
            m: base.final_workers.m(),
            d: base.final_workers.d(),
            data: diffs,
        };
        Ok(CoupledTrace {
            base,
            perturbed,
            perturbation,
            sq_diffs,
            final_diffs,
        })
    }

    /// `(1/m) Σ_k ‖w_k − w̃_k‖²` per logged iterate.
    pub fn mean_sq_diffs(&self) -> Vec<f64> {
        self.sq_diffs
            .iter()
            .map(|per_worker| per_worker.iter().sum::<f64>() / per_worker.len() as f64)
            .collect()
    }
}

pub fn run_coupled(
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
    config: &TrainConfig,
    perturbation: &Perturbation,
) -> Result<CoupledTrace> {
    let perturbed_shards = perturbation.apply(shards)?;
    let base = Arc::new(run_dsgd(p, shards, model, config)?);
    let perturbed = run_dsgd(p, &perturbed_shards, model, config)?;
    CoupledTrace::from_runs(base, perturbed, perturbation.clone())
}
