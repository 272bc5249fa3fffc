//! The D-SGD recursion `W′ = P·W − η_t·∇f(W; Z_ζ)` in its adapt-while-communicate
//! form: every worker's gradient is taken at its own pre-mixing model.
//!
//! Iterates are indexed from `t = 0` (the zero initialization); one step maps
//! iterate `t` to iterate `t + 1`.

mod run;

use serde::{Deserialize, Serialize};

use crate::models::{LossModel, Shards};
use crate::topology::GossipMatrix;
use crate::{Error, Result};

pub(crate) use run::run_with;
pub use run::{
    consensus_control_step, run_coupled, run_dsgd, run_dsgd_with_indices,
    run_with_consensus_control, ConsensusControl, CoupledTrace, Perturbation, PerturbationMode,
    RunTrace, Snapshot, DEFAULT_MAX_ROUNDS,
};

/// Stacked local models, row `k` is worker `k`'s `w_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkerMatrix {
    m: usize,
    d: usize,
    data: Vec<f64>,
}

impl WorkerMatrix {
    pub fn zeros(m: usize, d: usize) -> Self {
        WorkerMatrix {
            m,
            d,
            data: vec![0.0; m * d],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if m == 0 || d == 0 {
            return Err(Error::invalid("worker matrix must be nonempty"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                context: "worker matrix row",
                expected: d,
                actual: bad.len(),
            });
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("worker matrix entry".into()));
        }
        Ok(WorkerMatrix { m, d, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `P·W`.
    pub fn mixed(&self, p: &GossipMatrix) -> Result<WorkerMatrix> {
        if p.m() != self.m {
            return Err(Error::DimensionMismatch {
                context: "gossip matrix vs worker count",
                expected: self.m,
                actual: p.m(),
            });
        }
        let mut out = WorkerMatrix::zeros(self.m, self.d);
        p.mix_into(&self.data, self.d, &mut out.data);
        Ok(out)
    }
}

/// Learning-rate schedule `η_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    Constant {
        eta: f64,
    },
    /// `η₀`, divided by 10 at step `⌊2T/5⌋` and again at `⌊4T/5⌋`.
    StepDecay {
        eta0: f64,
    },
}

impl LrSchedule {
    pub fn initial(&self) -> f64 {
        match *self {
            LrSchedule::Constant { eta } => eta,
            LrSchedule::StepDecay { eta0 } => eta0,
        }
    }

    /// Step size used by the step from iterate `t` to `t + 1` in a run of
    /// `total` steps.
    pub fn eta_at(&self, t: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant { eta } => eta,
            LrSchedule::StepDecay { eta0 } => {
                let mut eta = eta0;
                if t >= 2 * total / 5 {
                    eta /= 10.0;
                }
                if t >= 4 * total / 5 {
                    eta /= 10.0;
                }
                eta
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.initial();
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be >= 0, got {eta}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    /// Number of steps `T`.
    pub iterations: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub snapshot_every: usize,
}

impl TrainConfig {
    /// Snapshots every `max(1, T/200)` steps.
    pub fn new(iterations: usize, schedule: LrSchedule, seed: u64) -> Self {
        TrainConfig {
            iterations,
            schedule,
            seed,
            snapshot_every: (iterations / 200).max(1),
        }
    }

    pub fn with_snapshot_every(mut self, every: usize) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every must be positive"));
        }
        Ok(())
    }

    /// Iterates at which a snapshot is logged: multiples of `snapshot_every`
    /// and the final iterate.
    pub fn logged_iterations(&self) -> Vec<usize> {
        let mut its: Vec<usize> = (0..=self.iterations).step_by(self.snapshot_every).collect();
        if its.last() != Some(&self.iterations) {
            its.push(self.iterations);
        }
        its
    }

    /// Returns a message when `η₀` exceeds `(1 − 2/m)/(2L)`, the range in which
    /// the fixed-step bound is stated.
    pub fn step_size_warning(&self, l: f64, m: usize) -> Option<String> {
        let limit = (1.0 - 2.0 / m as f64) / (2.0 * l);
        let eta0 = self.schedule.initial();
        (eta0 > limit).then(|| {
            format!("eta0 = {eta0} exceeds (1 - 2/m)/(2L) = {limit:.6} for L = {l}, m = {m}")
        })
    }
}

/// Column-wise mean `w̄ = (1/m) Σ_k w_k`.
pub fn consensus_model(w: &WorkerMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; w.d];
    for row in w.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let m = w.m as f64;
    mean.iter_mut().for_each(|v| *v /= m);
    mean
}

/// `(1/m) Σ_k ‖w_k − w̄‖²`.
pub fn consensus_distance(w: &WorkerMatrix) -> f64 {
    let mean = consensus_model(w);
    w.rows()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum::<f64>()
        / w.m as f64
}

fn check_step_inputs(
    w: &WorkerMatrix,
    p: &GossipMatrix,
    shards: &Shards,
    model: &LossModel,
) -> Result<()> {
    if p.m() != w.m {
        return Err(Error::DimensionMismatch {
            context: "gossip matrix vs worker count",
            expected: w.m,
            actual: p.m(),
        });
    }
    if shards.m() != w.m {
        return Err(Error::DimensionMismatch {
            context: "shard count vs worker count",
            expected: w.m,
            actual: shards.m(),
        });
    }
    if model.dim() != w.d {
        return Err(Error::DimensionMismatch {
            context: "model dimension",
            expected: model.dim(),
            actual: w.d,
        });
    }
    if let Some(bad) = shards.all_samples().find(|z| z.x.len() != model.input_dim) {
        return Err(Error::DimensionMismatch {
            context: "sample features",
            expected: model.input_dim,
            actual: bad.x.len(),
        });
    }
    Ok(())
}

fn check_indices(zeta: &[usize], m: usize, n: usize) -> Result<()> {
    if zeta.len() != m {
        return Err(Error::DimensionMismatch {
            context: "sample indices",
            expected: m,
            actual: zeta.len(),
        });
    }
    if let Some(&bad) = zeta.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange {
            context: "sample",
            index: bad,
            len: n,
        });
    }
    Ok(())
}

/// One D-SGD step. `zeta[k]` is the (0-based) index of the sample worker `k`
/// uses.
pub fn dsgd_step(
    w: &WorkerMatrix,
    p: &GossipMatrix,
    shards: &Shards,
    zeta: &[usize],
    eta: f64,
    model: &LossModel,
) -> Result<WorkerMatrix> {
    check_step_inputs(w, p, shards, model)?;
    check_indices(zeta, w.m, shards.n())?;
    let mut out = WorkerMatrix::zeros(w.m, w.d);
    let mut grad = vec![0.0; w.d];
    step_into(w, p, shards, zeta, eta, model, &mut out, &mut grad);
    Ok(out)
}

/// Unchecked step writing into `out`; `grad` is scratch of length `d`.
#[allow(clippy::too_many_arguments)]
fn step_into(
    w: &WorkerMatrix,
    p: &GossipMatrix,
    shards: &Shards,
    zeta: &[usize],
    eta: f64,
    model: &LossModel,
    out: &mut WorkerMatrix,
    grad: &mut [f64],
) {
    p.mix_into(&w.data, w.d, &mut out.data);
    if eta == 0.0 {
        return;
    }
    for (k, &i) in zeta.iter().enumerate() {
        model.gradient_into(w.row(k), shards.sample(k, i), grad);
        let dst = &mut out.data[k * w.d..(k + 1) * w.d];
        for (o, g) in dst.iter_mut().zip(grad.iter()) {
            *o -= eta * g;
        }
    }
}
