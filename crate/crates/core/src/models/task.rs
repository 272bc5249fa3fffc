//! Synthetic data distributions, sharding, and population risk.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{dot, LossFamily, LossModel, Sample};
use crate::{seed, Error, Result};

/// Default number of fresh draws for Monte-Carlo population risk.
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Seed of the Monte-Carlo stream used by [`population_risk`].
const MC_SEED: u64 = 0x005e_ed0f_c0ff_ee00;

/// A data distribution `D`: Gaussian features `x ~ N(0, Σ)` and labels from a
/// ground-truth weight vector `w*`.
///
/// Labels are `y = x·w* + σ_n·g` for regression families (the two-layer
/// network learns this linear teacher too) and `y ~ Bernoulli(sigmoid(x·w*))`
/// for logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticTask {
    pub family: LossFamily,
    pub w_star: Vec<f64>,
    /// Row-major `d_x × d_x` covariance `Σ`.
    pub feature_cov: Vec<f64>,
    pub noise_std: f64,
    #[serde(skip)]
    cov_factor: Vec<f64>,
}

impl SyntheticTask {
    pub fn new(
        family: LossFamily,
        w_star: Vec<f64>,
        feature_cov: Vec<f64>,
        noise_std: f64,
    ) -> Result<Self> {
        let dx = w_star.len();
        if dx == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if feature_cov.len() != dx * dx {
            return Err(Error::DimensionMismatch {
                context: "feature covariance",
                expected: dx * dx,
                actual: feature_cov.len(),
            });
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_std must be >= 0, got {noise_std}"
            )));
        }
        if w_star.iter().chain(&feature_cov).any(|v| !v.is_finite()) {
            return Err(Error::invalid("task parameters must be finite"));
        }
        if let LossFamily::TwoLayerMlp { hidden: 0 } = family {
            return Err(Error::invalid("hidden width must be positive"));
        }
        let cov_factor = psd_factor(dx, &feature_cov)?;
        Ok(SyntheticTask {
            family,
            w_star,
            feature_cov,
            noise_std,
            cov_factor,
        })
    }

    /// Task with `Σ = variance · I`.
    pub fn isotropic(
        family: LossFamily,
        w_star: Vec<f64>,
        variance: f64,
        noise_std: f64,
    ) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::invalid(format!(
                "feature variance must be >= 0, got {variance}"
            )));
        }
        let dx = w_star.len();
        let mut cov = vec![0.0; dx * dx];
        for i in 0..dx {
            cov[i * dx + i] = variance;
        }
        Self::new(family, w_star, cov, noise_std)
    }

    /// Isotropic task whose teacher `w*` has i.i.d. standard normal entries
    /// drawn from `seed`.
    pub fn isotropic_random(
        family: LossFamily,
        input_dim: usize,
        variance: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = seed::rng(seed);
        let w_star = (0..input_dim).map(|_| rng.sample(StandardNormal)).collect();
        Self::isotropic(family, w_star, variance, noise_std)
    }

    pub fn input_dim(&self) -> usize {
        self.w_star.len()
    }

    /// The loss this task is trained with, `α = 1`, no `L` declared yet.
    pub fn loss_model(&self) -> LossModel {
        LossModel::new(self.family, self.input_dim())
    }

    pub(crate) fn draw(&self, rng: &mut seed::Rng) -> Sample {
        let dx = self.input_dim();
        let g: Vec<f64> = (0..dx).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..dx)
            .map(|i| dot(&self.cov_factor[i * dx..i * dx + i + 1], &g[..=i]))
            .collect();
        let signal = dot(&x, &self.w_star);
        let y = match self.family {
            LossFamily::LogisticRegression => {
                let u: f64 = rng.random();
                if u < 1.0 / (1.0 + (-signal).exp()) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => {
                let noise: f64 = rng.sample(StandardNormal);
                signal + self.noise_std * noise
            }
        };
        Sample { x, y }
    }
}

/// Lower-triangular `F` with `F Fᵀ = Σ` for symmetric positive semi-definite
/// `Σ`; zero pivots give zero columns.
fn psd_factor(n: usize, cov: &[f64]) -> Result<Vec<f64>> {
    for i in 0..n {
        for j in 0..i {
            if (cov[i * n + j] - cov[j * n + i]).abs() > 1e-12 {
                return Err(Error::invalid("feature covariance is not symmetric"));
            }
        }
    }
    let scale = (0..n)
        .map(|i| cov[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-12 * scale;
    let mut f = vec![0.0; n * n];
    for j in 0..n {
        let pivot = cov[j * n + j] - dot(&f[j * n..j * n + j], &f[j * n..j * n + j]);
        if pivot < -tol {
            return Err(Error::invalid(
                "feature covariance is not positive semi-definite",
            ));
        }
        if pivot <= tol {
            for i in (j + 1)..n {
                let rest = cov[i * n + j] - dot(&f[i * n..i * n + j], &f[j * n..j * n + j]);
                if rest.abs() > 1e-9 * scale.max(1.0) {
                    return Err(Error::invalid(
                        "feature covariance is not positive semi-definite",
                    ));
                }
            }
            continue;
        }
        let diag = pivot.sqrt();
        f[j * n + j] = diag;
        for i in (j + 1)..n {
            let rest = cov[i * n + j] - dot(&f[i * n..i * n + j], &f[j * n..j * n + j]);
            f[i * n + j] = rest / diag;
        }
    }
    Ok(f)
}

/// `count` i.i.d. draws from the task distribution.
pub fn sample_dataset(task: &SyntheticTask, count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = seed::rng(seed);
    (0..count).map(|_| task.draw(&mut rng)).collect()
}

/// Equal-size local datasets `S_1..S_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shards {
    shards: Vec<Vec<Sample>>,
}

impl Shards {
    pub fn new(shards: Vec<Vec<Sample>>) -> Result<Self> {
        let Some(first) = shards.first() else {
            return Err(Error::invalid("at least one shard is required"));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::invalid("shards must be nonempty"));
        }
        if let Some(bad) = shards.iter().find(|s| s.len() != n) {
            return Err(Error::invalid(format!(
                "unequal shard sizes: {n} and {}",
                bad.len()
            )));
        }
        Ok(Shards { shards })
    }

    pub fn m(&self) -> usize {
        self.shards.len()
    }

    /// Samples per worker.
    pub fn n(&self) -> usize {
        self.shards[0].len()
    }

    pub fn shard(&self, k: usize) -> &[Sample] {
        &self.shards[k]
    }

    pub fn sample(&self, k: usize, i: usize) -> &Sample {
        &self.shards[k][i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Sample]> {
        self.shards.iter().map(Vec::as_slice)
    }

    /// All `N = n·m` samples, shard by shard.
    pub fn all_samples(&self) -> impl Iterator<Item = &Sample> {
        self.shards.iter().flatten()
    }

    /// Copy with sample `i` of worker `k` replaced.
    pub fn with_replacement(&self, k: usize, i: usize, sample: Sample) -> Result<Shards> {
        if k >= self.m() {
            return Err(Error::IndexOutOfRange {
                context: "worker",
                index: k,
                len: self.m(),
            });
        }
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                context: "sample",
                index: i,
                len: self.n(),
            });
        }
        let mut out = self.clone();
        out.shards[k][i] = sample;
        Ok(out)
    }
}

/// Contiguous partition of `dataset` into `m` shards of `N / m` samples.
pub fn shard_iid(dataset: &[Sample], m: usize) -> Result<Shards> {
    if m == 0 {
        return Err(Error::invalid("worker count must be positive"));
    }
    if dataset.is_empty() || dataset.len() % m != 0 {
        return Err(Error::invalid(format!(
            "{} samples cannot be split evenly across {m} workers",
            dataset.len()
        )));
    }
    let n = dataset.len() / m;
    Shards::new(dataset.chunks(n).map(<[Sample]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub value: f64,
    /// Zero for closed-form values.
    pub std_error: f64,
}

/// Population risk `F(w) = E_z f(w; z)`.
///
/// Closed form `½(w − w*)ᵀΣ(w − w*) + ½σ_n²` for linear regression,
/// Monte-Carlo with [`DEFAULT_MC_SAMPLES`] draws otherwise.
pub fn population_risk(task: &SyntheticTask, w: &[f64]) -> Result<RiskEstimate> {
    match task.family {
        LossFamily::LinearRegression => {
            let dx = task.input_dim();
            if w.len() != dx {
                return Err(Error::DimensionMismatch {
                    context: "model weights",
                    expected: dx,
                    actual: w.len(),
                });
            }
            let delta: Vec<f64> = w.iter().zip(&task.w_star).map(|(a, b)| a - b).collect();
            let quad: f64 = (0..dx)
                .map(|i| delta[i] * dot(&task.feature_cov[i * dx..(i + 1) * dx], &delta))
                .sum();
            Ok(RiskEstimate {
                value: 0.5 * quad + 0.5 * task.noise_std * task.noise_std,
                std_error: 0.0,
            })
        }
        _ => population_risk_mc(task, w, DEFAULT_MC_SAMPLES, MC_SEED),
    }
}

/// Mean loss over `samples` fresh draws, with its standard error.
pub fn population_risk_mc(
    task: &SyntheticTask,
    w: &[f64],
    samples: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if samples < 2 {
        return Err(Error::InsufficientData {
            what: "Monte-Carlo samples",
            needed: 2,
            actual: samples,
        });
    }
    let model = task.loss_model();
    if w.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "model weights",
            expected: model.dim(),
            actual: w.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let f = model.value_unchecked(w, &task.draw(&mut rng));
        sum += f;
        sum_sq += f * f;
    }
    let count = samples as f64;
    let mean = sum / count;
    let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
    Ok(RiskEstimate {
        value: mean,
        std_error: (var / count).sqrt(),
    })
}
