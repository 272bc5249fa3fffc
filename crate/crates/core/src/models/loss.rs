use serde::{Deserialize, Serialize};

use super::{dot, Sample};
use crate::{Error, Result};

/// Sharpness `β` of the softplus activation `(1/β)·ln(1 + e^{βa})` used by
/// the two-layer network in place of ReLU, so its gradient is Lipschitz on
/// bounded sets.
pub const SOFTPLUS_SHARPNESS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum LossFamily {
    /// `½(x·w − y)²`
    LinearRegression,
    /// `ln(1 + exp(−(2y − 1)·x·w))` with labels in {0, 1}
    LogisticRegression,
    /// `½(net(x; w) − y)²` for a one-hidden-layer softplus network.
    TwoLayerMlp { hidden: usize },
}

impl LossFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LossFamily::LinearRegression => "linear",
            LossFamily::LogisticRegression => "logistic",
            LossFamily::TwoLayerMlp { .. } => "mlp",
        }
    }
}

/// A loss family bound to a feature dimension, together with its declared
/// Hölder exponent `α` and (once estimated) Hölder constant `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossModel {
    pub family: LossFamily,
    pub input_dim: usize,
    pub alpha: f64,
    pub holder_l: Option<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn log1p_exp(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LossModel {
    /// Smooth families default to `α = 1`; the softplus network also uses
    /// `α = 1` on bounded domains.
    pub fn new(family: LossFamily, input_dim: usize) -> Self {
        LossModel {
            family,
            input_dim,
            alpha: 1.0,
            holder_l: None,
        }
    }

    pub fn with_holder(mut self, alpha: f64, l: f64) -> Self {
        self.alpha = alpha;
        self.holder_l = Some(l);
        self
    }

    /// Number of trainable parameters `d`.
    pub fn dim(&self) -> usize {
        match self.family {
            LossFamily::LinearRegression | LossFamily::LogisticRegression => self.input_dim,
            LossFamily::TwoLayerMlp { hidden } => hidden * self.input_dim + 2 * hidden + 1,
        }
    }

    fn check(&self, w: &[f64], z: &Sample) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "model weights",
                expected: self.dim(),
                actual: w.len(),
            });
        }
        if z.x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "sample features",
                expected: self.input_dim,
                actual: z.x.len(),
            });
        }
        Ok(())
    }

    pub fn loss_value(&self, w: &[f64], z: &Sample) -> Result<f64> {
        self.check(w, z)?;
        Ok(self.value_unchecked(w, z))
    }

    pub fn loss_gradient(&self, w: &[f64], z: &Sample) -> Result<Vec<f64>> {
        self.check(w, z)?;
        let mut grad = vec![0.0; w.len()];
        self.gradient_into(w, z, &mut grad);
        Ok(grad)
    }

    /// Loss without dimension checks; callers guarantee consistent shapes.
    pub(crate) fn value_unchecked(&self, w: &[f64], z: &Sample) -> f64 {
        match self.family {
            LossFamily::LinearRegression => {
                let r = dot(&z.x, w) - z.y;
                0.5 * r * r
            }
            LossFamily::LogisticRegression => {
                let margin = (2.0 * z.y - 1.0) * dot(&z.x, w);
                log1p_exp(-margin)
            }
            LossFamily::TwoLayerMlp { hidden } => {
                let r = self.mlp_forward(hidden, w, &z.x, None) - z.y;
                0.5 * r * r
            }
        }
    }

    /// Writes `∇f(w; z)` into `grad` (overwriting it).
    pub(crate) fn gradient_into(&self, w: &[f64], z: &Sample, grad: &mut [f64]) {
        debug_assert_eq!(w.len(), grad.len());
        match self.family {
            LossFamily::LinearRegression => {
                let r = dot(&z.x, w) - z.y;
                for (g, x) in grad.iter_mut().zip(&z.x) {
                    *g = r * x;
                }
            }
            LossFamily::LogisticRegression => {
                let sign = 2.0 * z.y - 1.0;
                let margin = sign * dot(&z.x, w);
                let scale = -sigmoid(-margin) * sign;
                for (g, x) in grad.iter_mut().zip(&z.x) {
                    *g = scale * x;
                }
            }
            LossFamily::TwoLayerMlp { hidden } => {
                let mut pre = vec![0.0; hidden];
                let r = self.mlp_forward(hidden, w, &z.x, Some(&mut pre)) - z.y;
                let dx = self.input_dim;
                let out_w = &w[hidden * dx + hidden..hidden * dx + 2 * hidden];
                let (g_first, g_rest) = grad.split_at_mut(hidden * dx);
                let (g_bias, g_rest) = g_rest.split_at_mut(hidden);
                let (g_out, g_out_bias) = g_rest.split_at_mut(hidden);
                for j in 0..hidden {
                    let a = pre[j];
                    g_out[j] = r * log1p_exp(SOFTPLUS_SHARPNESS * a) / SOFTPLUS_SHARPNESS;
                    let da = r * out_w[j] * sigmoid(SOFTPLUS_SHARPNESS * a);
                    g_bias[j] = da;
                    for (g, x) in g_first[j * dx..(j + 1) * dx].iter_mut().zip(&z.x) {
                        *g = da * x;
                    }
                }
                g_out_bias[0] = r;
            }
        }
    }

    /// Parameter layout: hidden weights (`hidden × input_dim`, row-major),
    /// hidden biases, output weights, output bias.
    fn mlp_forward(&self, hidden: usize, w: &[f64], x: &[f64], mut pre: Option<&mut [f64]>) -> f64 {
        let dx = self.input_dim;
        let bias = &w[hidden * dx..hidden * dx + hidden];
        let out_w = &w[hidden * dx + hidden..hidden * dx + 2 * hidden];
        let out_bias = w[hidden * dx + 2 * hidden];
        let mut out = out_bias;
        for j in 0..hidden {
            let a = dot(&w[j * dx..(j + 1) * dx], x) + bias[j];
            if let Some(pre) = pre.as_deref_mut() {
                pre[j] = a;
            }
            out += out_w[j] * log1p_exp(SOFTPLUS_SHARPNESS * a) / SOFTPLUS_SHARPNESS;
        }
        out
    }
}
