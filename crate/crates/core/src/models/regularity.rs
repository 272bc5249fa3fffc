//! Empirical Hölder constants and the self-bounding property of losses.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{norm, sample_dataset, LossModel, Sample, SyntheticTask};
use crate::{seed, Error, Result};

/// Radius of the ball on which Hölder constants are estimated.
pub const DEFAULT_HOLDER_RADIUS: f64 = 5.0;

/// Slack on the self-bounding inequality.
const SELF_BOUNDING_TOL: f64 = 1e-9;

const POWER_STEPS: usize = 4;
const POOL_CAP: usize = 256;

/// The constant `c_{α,L}` with `‖∇f‖ ≤ c·f^{α/(1+α)}` for non-negative losses
/// with `(α, L)`-Hölder gradients.
///
/// For `α > 0` this is `(1 + 1/α)^{α/(1+α)} · L^{1/(1+α)}`; for `α = 0` it is
/// `sup_z ‖∇f(0; z)‖ + L`.
pub fn c_alpha_constant(alpha: f64, l: f64, grad_at_zero_sup: Option<f64>) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(format!("L must be positive, got {l}")));
    }
    if alpha == 0.0 {
        return match grad_at_zero_sup {
            Some(g) if g >= 0.0 && g.is_finite() => Ok(g + l),
            Some(g) => Err(Error::invalid(format!(
                "gradient supremum must be >= 0, got {g}"
            ))),
            None => Err(Error::invalid(
                "alpha = 0 requires the supremum of the gradient norm at zero",
            )),
        };
    }
    Ok((1.0 + 1.0 / alpha).powf(alpha / (1.0 + alpha)) * l.powf(1.0 / (1.0 + alpha)))
}

/// `max_z ‖∇f(0; z)‖` over `samples`.
pub fn max_gradient_at_zero(model: &LossModel, samples: &[Sample]) -> Result<f64> {
    let zero = vec![0.0; model.dim()];
    samples.iter().try_fold(0.0_f64, |acc, z| {
        Ok(acc.max(norm(&model.loss_gradient(&zero, z)?)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderEstimate {
    /// Largest observed ratio `‖∇f(w;z) − ∇f(w′;z)‖ / ‖w − w′‖^α`.
    pub l_hat: f64,
    pub alpha: f64,
    pub radius: f64,
    pub pairs: usize,
}

/// Empirical Hölder constant on the ball `‖w‖ ≤ radius`, with samples drawn
/// from the task distribution.
///
/// The pool holds `min(pairs, 256)` samples; see
/// [`estimate_holder_constant_on`] for the estimator itself.
pub fn estimate_holder_constant(
    model: &LossModel,
    task: &SyntheticTask,
    alpha: f64,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<HolderEstimate> {
    let pool = sample_dataset(
        task,
        pairs.clamp(1, POOL_CAP),
        seed::derive_seed(seed, "holder-pool", 0),
    );
    estimate_holder_constant_on(model, &pool, alpha, pairs, radius, seed)
}

/// Empirical Hölder constant over a fixed sample pool.
///
/// Triple `j` uses sample `j mod |pool|` and a point `w` uniform in the ball.
/// Two partners are tried: an independent uniform `w′`, and a short step from
/// `w` along the top Hessian direction found by a few power iterations with
/// finite-difference Hessian-vector products. The result is a lower bound on
/// the true constant restricted to the ball.
pub fn estimate_holder_constant_on(
    model: &LossModel,
    samples: &[Sample],
    alpha: f64,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<HolderEstimate> {
    if pairs == 0 {
        return Err(Error::invalid("pairs must be at least 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData {
            what: "samples",
            needed: 1,
            actual: 0,
        });
    }
    if let Some(bad) = samples.iter().find(|z| z.x.len() != model.input_dim) {
        return Err(Error::DimensionMismatch {
            context: "sample features",
            expected: model.input_dim,
            actual: bad.x.len(),
        });
    }

    let d = model.dim();
    let mut rng = seed::rng(seed);
    let fd_step = 1e-4 * radius;
    let probe_step = 1e-3 * radius;
    let mut g0 = vec![0.0; d];
    let mut g1 = vec![0.0; d];
    let mut g2 = vec![0.0; d];
    let mut l_hat = 0.0_f64;

    let mut ratio = |w: &[f64], w2: &[f64], z: &Sample, g0: &[f64], g1: &mut [f64]| {
        model.gradient_into(w2, z, g1);
        let num = g0
            .iter()
            .zip(g1.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = w
            .iter()
            .zip(w2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            l_hat = l_hat.max(num / den.powf(alpha));
        }
    };

    for j in 0..pairs {
        let z = &samples[j % samples.len()];
        let w = uniform_ball(&mut rng, d, radius);
        model.gradient_into(&w, z, &mut g0);

        let other = uniform_ball(&mut rng, d, radius);
        ratio(&w, &other, z, &g0, &mut g1);

        let mut v = unit_gaussian(&mut rng, d);
        let mut shifted = vec![0.0; d];
        for _ in 0..POWER_STEPS {
            for (s, (wi, vi)) in shifted.iter_mut().zip(w.iter().zip(&v)) {
                *s = wi + fd_step * vi;
            }
            model.gradient_into(&shifted, z, &mut g1);
            for (s, (wi, vi)) in shifted.iter_mut().zip(w.iter().zip(&v)) {
                *s = wi - fd_step * vi;
            }
            model.gradient_into(&shifted, z, &mut g2);
            let hv: Vec<f64> = g1
                .iter()
                .zip(&g2)
                .map(|(a, b)| (a - b) / (2.0 * fd_step))
                .collect();
            let len = norm(&hv);
            if !(len > 0.0 && len.is_finite()) {
                break;
            }
            v = hv.into_iter().map(|c| c / len).collect();
        }
        let toward = if w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() > 0.0 {
            -probe_step
        } else {
            probe_step
        };
        let partner: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + toward * b).collect();
        if norm(&partner) <= radius {
            ratio(&w, &partner, z, &g0, &mut g1);
        }
    }
    if !l_hat.is_finite() {
        return Err(Error::NonFinite("Hölder constant estimate".into()));
    }
    Ok(HolderEstimate {
        l_hat,
        alpha,
        radius,
        pairs,
    })
}

fn unit_gaussian(rng: &mut seed::Rng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&g);
        if len > 0.0 {
            return g.into_iter().map(|c| c / len).collect();
        }
    }
}

fn uniform_ball(rng: &mut seed::Rng, d: usize, radius: f64) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    unit_gaussian(rng, d).into_iter().map(|c| c * r).collect()
}

/// Both sides of the self-bounding inequality at `(w, z)`:
/// `(‖∇f(w;z)‖, c_{α,L}·f(w;z)^{α/(1+α)})`.
pub fn self_bounding_sides(
    model: &LossModel,
    w: &[f64],
    z: &Sample,
    alpha: f64,
    l: f64,
    grad_at_zero_sup: Option<f64>,
) -> Result<(f64, f64)> {
    let c = c_alpha_constant(alpha, l, grad_at_zero_sup)?;
    let f = model.loss_value(w, z)?;
    let g = norm(&model.loss_gradient(w, z)?);
    Ok((g, c * f.powf(alpha / (1.0 + alpha))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfBoundingReport {
    pub violations: usize,
    /// Largest `lhs / rhs` seen; `0` when every gradient vanished.
    pub max_ratio: f64,
    pub trials: usize,
}

/// Checks `‖∇f(w;z)‖ ≤ c_{α,L}·f(w;z)^{α/(1+α)} + 1e-9` at `trials` points
/// `w` uniform in the ball of `radius`, cycling through `samples`.
pub fn self_bounding_check(
    model: &LossModel,
    samples: &[Sample],
    alpha: f64,
    l: f64,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<SelfBoundingReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData {
            what: "samples",
            needed: 1,
            actual: 0,
        });
    }
    let grad_sup = if alpha == 0.0 {
        Some(max_gradient_at_zero(model, samples)?)
    } else {
        None
    };
    let mut rng = seed::rng(seed);
    let mut violations = 0;
    let mut max_ratio = 0.0_f64;
    for j in 0..trials {
        let w = uniform_ball(&mut rng, model.dim(), radius);
        let (lhs, rhs) =
            self_bounding_sides(model, &w, &samples[j % samples.len()], alpha, l, grad_sup)?;
        if lhs > rhs + SELF_BOUNDING_TOL {
            violations += 1;
        }
        if lhs > 0.0 {
            max_ratio = max_ratio.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
        }
    }
    Ok(SelfBoundingReport {
        violations,
        max_ratio,
        trials,
    })
}
