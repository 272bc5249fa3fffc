//! Evaluators for the explicit stability and generalization bounds.
//!
//! Iterates are indexed from `t = 0`. The bound on the stability of iterate
//! `t` sums over the `t` steps that produced it:
//! `B(t) = Σ_{τ<t} C^{t−1−τ}·term(τ)` with `C = 2η₀L(1 − 1/n)` and
//! `term(τ) = [1 + p/n + (1 − 1/n)η_τ]·d(σ² + μ²)·[(1 − 1/m)λ² + 1/m]
//!          + (2/n)(1 + 1/p)·c²·η_τ²·r(τ)`,
//! where `c = c_{α,L}` and `r(τ)` is the averaged exponentiated empirical
//! risk at iterate `τ`. In particular `B(0) = 0`.

use serde::Serialize;

use super::stability::pow0;
use crate::engine::LrSchedule;
use crate::models::c_alpha_constant;
use crate::{Error, Result};

/// Every constant the bound expressions consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Hölder constant `L`.
    pub l: f64,
    pub alpha: f64,
    pub schedule: LrSchedule,
    /// Run length, used to place step-decay drops.
    pub iterations: usize,
    /// Samples per worker.
    pub n: usize,
    pub m: usize,
    /// Model dimension.
    pub d: usize,
    pub lambda: f64,
    pub sigma_sq: f64,
    pub mu_sq: f64,
    pub epsilon_s: f64,
    /// Free parameter `p > 0`.
    pub p: f64,
    /// `sup_z ‖∇f(0; z)‖`, needed only when `α = 0`.
    pub grad_at_zero_sup: Option<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be >= 0, got {v}")))
            }
        };
        positive("L", self.l)?;
        positive("p", self.p)?;
        nonneg("sigma_sq", self.sigma_sq)?;
        nonneg("mu_sq", self.mu_sq)?;
        nonneg("epsilon_S", self.epsilon_s)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::invalid("n, m and d must be positive"));
        }
        self.schedule.validate()
    }

    /// `C = 2η₀L(1 − 1/n)`.
    pub fn geometric_factor(&self) -> f64 {
        2.0 * self.schedule.initial() * self.l * (1.0 - 1.0 / self.n as f64)
    }

    /// `c_{α,L}`.
    pub fn c_alpha(&self) -> Result<f64> {
        c_alpha_constant(self.alpha, self.l, self.grad_at_zero_sup)
    }

    /// `(1 − 1/m)λ² + 1/m`.
    pub fn decentralization_factor(&self) -> f64 {
        let m = self.m as f64;
        (1.0 - 1.0 / m) * self.lambda * self.lambda + 1.0 / m
    }

    fn eta(&self, tau: usize) -> f64 {
        self.schedule.eta_at(tau, self.iterations)
    }

    /// Decentralization part of `term(τ)`.
    fn noise_term(&self, tau: usize) -> f64 {
        let n = self.n as f64;
        (1.0 + self.p / n + (1.0 - 1.0 / n) * self.eta(tau))
            * self.d as f64
            * (self.sigma_sq + self.mu_sq)
            * self.decentralization_factor()
    }

    /// Risk part of `term(τ)` without the `1/n` factor or the risk value.
    fn risk_weight(&self, tau: usize, c: f64) -> f64 {
        let eta = self.eta(tau);
        2.0 * (1.0 + 1.0 / self.p) * c * c * eta * eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    /// Bound on the stability of iterates `0..=t_max`.
    pub values: Vec<f64>,
    /// `t → ∞` limit with `r ≡ ε_S`, when the schedule is constant and `C < 1`.
    pub asymptote: Option<f64>,
}

/// The stability bound `B(t)` for `t = 0..=t_max`; `risk_curve[τ]` must
/// cover `τ < t_max`.
pub fn stability_bound_curve(
    inputs: &BoundInputs,
    risk_curve: &[f64],
    t_max: usize,
) -> Result<BoundCurve> {
    inputs.validate()?;
    if risk_curve.len() < t_max {
        return Err(Error::InsufficientData {
            what: "risk curve entries",
            needed: t_max,
            actual: risk_curve.len(),
        });
    }
    if let Some(bad) = risk_curve[..t_max]
        .iter()
        .find(|r| !(**r >= 0.0 && r.is_finite()))
    {
        return Err(Error::invalid(format!(
            "risk curve values must be finite and >= 0, got {bad}"
        )));
    }
    let c = inputs.c_alpha()?;
    let big_c = inputs.geometric_factor();
    let n = inputs.n as f64;
    let mut values = Vec::with_capacity(t_max + 1);
    let mut acc = 0.0;
    values.push(acc);
    for (tau, &risk) in risk_curve[..t_max].iter().enumerate() {
        acc = big_c * acc + inputs.noise_term(tau) + inputs.risk_weight(tau, c) / n * risk;
        values.push(acc);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stability bound".into()));
    }
    let asymptote = stability_bound_asymptote(inputs).ok();
    Ok(BoundCurve { values, asymptote })
}

/// The constant-step `t → ∞` limit `term/(1 − C)` with `r ≡ ε_S`.
pub fn stability_bound_asymptote(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if !matches!(inputs.schedule, LrSchedule::Constant { .. }) {
        return Err(Error::Unsupported(
            "the infinite-horizon bound needs a constant learning rate".into(),
        ));
    }
    let big_c = inputs.geometric_factor();
    if big_c >= 1.0 {
        return Err(Error::DivergentBound { c: big_c });
    }
    let c = inputs.c_alpha()?;
    let term = inputs.noise_term(0) + inputs.risk_weight(0, c) / inputs.n as f64 * inputs.epsilon_s;
    Ok(term / (1.0 - big_c))
}

/// `L / (m·n^{1−α/2}) · stability^{α/2}`, with `0^0 = 1`.
pub fn generalization_bound_from_stability(
    stability: f64,
    l: f64,
    alpha: f64,
    m: usize,
    n: usize,
) -> Result<f64> {
    if !(stability >= 0.0) {
        return Err(Error::invalid(format!(
            "stability must be >= 0, got {stability}"
        )));
    }
    if !(l > 0.0) || m == 0 || n == 0 {
        return Err(Error::invalid("L, m and n must be positive"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(l / (m as f64 * (n as f64).powf(1.0 - alpha / 2.0)) * pow0(stability, alpha / 2.0))
}

/// Two-term generalization bound for the consensus model at iterate `t`:
/// `(L/N)·[Σ_{τ<t} C^{t−1−τ}·2(1 + 1/p)c²η_τ²·ε_S]^{α/2}
///  + (L·n^{α/2}/N)·[Σ_{τ<t} C^{t−1−τ}·[1 + p/n + (1 − 1/n)η_τ]·d(σ² + μ²)·((1 − 1/m)λ² + 1/m)]^{α/2}`
/// with `N = nm`.
pub fn generalization_bound_closed(inputs: &BoundInputs, t: usize) -> Result<f64> {
    inputs.validate()?;
    let c = inputs.c_alpha()?;
    let big_c = inputs.geometric_factor();
    let (mut risk_sum, mut noise_sum) = (0.0, 0.0);
    for tau in 0..t {
        risk_sum = big_c * risk_sum + inputs.risk_weight(tau, c) * inputs.epsilon_s;
        noise_sum = big_c * noise_sum + inputs.noise_term(tau);
    }
    let n = inputs.n as f64;
    let big_n = n * inputs.m as f64;
    let half = inputs.alpha / 2.0;
    let value = inputs.l / big_n * pow0(risk_sum, half)
        + inputs.l * n.powf(half) / big_n * pow0(noise_sum, half);
    if !value.is_finite() {
        return Err(Error::NonFinite("generalization bound".into()));
    }
    Ok(value)
}

/// Golden-section minimization of `B(t)` (with `r ≡ ε_S`) over `p ∈ (0, 100]`.
/// Returns `(p, B(t))`.
pub fn minimize_stability_bound_over_p(inputs: &BoundInputs, t: usize) -> Result<(f64, f64)> {
    let eval = |p: f64| -> Result<f64> {
        let trial = BoundInputs { p, ..*inputs };
        let risks = vec![inputs.epsilon_s; t];
        Ok(*stability_bound_curve(&trial, &risks, t)?
            .values
            .last()
            .expect("nonempty"))
    };
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-6, 100.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    while hi - lo > 1e-8 * (1.0 + lo.abs()) {
        if f1 <= f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let at_edge = eval(100.0)?;
    Ok(if at_edge < best.1 {
        (100.0, at_edge)
    } else {
        best
    })
}
