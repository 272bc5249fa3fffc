//! Spectral analysis of gossip matrices: cyclic Jacobi eigensolver, spectral
//! gap, and the contraction `‖Pᵏ − M‖₂ ≤ λᵏ` of powers towards the averaging
//! matrix `M = 11ᵀ/m`.

use serde::Serialize;

use super::{GossipMatrix, TopologyKind};
use crate::{Error, Result};

/// Off-diagonal magnitude below which the Jacobi iteration stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// All eigenvalues, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Largest magnitude among the eigenvalues after the leading one.
    pub lambda: f64,
    pub spectral_gap: f64,
}

/// Eigenvalues of a dense symmetric `n × n` matrix (row-major), sorted
/// descending, by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(n: usize, matrix: &[f64]) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "symmetric eigensolver",
            expected: n * n,
            actual: matrix.len(),
        });
    }
    let mut a = matrix.to_vec();
    let max_off = |a: &[f64]| {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        off
    };

    let mut sweeps = 0;
    loop {
        let off = max_off(&a);
        if off < JACOBI_TOLERANCE {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_diagonal: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }

    let mut eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigenvalues.sort_by(|x, y| y.total_cmp(x));
    Ok(eigenvalues)
}

/// Full spectrum of `p` with `λ = max(|λ₂|, |λ_m|)`.
///
/// Eigenvalues within `64·m·ε` of `0`, `1` or `−1` are set to those values,
/// so the complete graph reports `λ = 0` and the identity `λ = 1` exactly.
///
/// Exactly one leading eigenvalue is excluded by position, so a repeated
/// eigenvalue 1 (disconnected graph) yields `λ = 1`. For `m = 1` there is no
/// second eigenvalue and `λ = 0`.
pub fn eigenvalues_symmetric(p: &GossipMatrix) -> Result<SpectrumReport> {
    let snap = 64.0 * p.m() as f64 * f64::EPSILON;
    let eigenvalues: Vec<f64> = symmetric_eigenvalues(p.m(), p.entries())?
        .into_iter()
        .map(|v| {
            [0.0, 1.0, -1.0]
                .into_iter()
                .find(|t: &f64| (v - t).abs() <= snap)
                .unwrap_or(v)
        })
        .collect();
    let lambda = eigenvalues[1..]
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .min(1.0);
    Ok(SpectrumReport {
        spectral_gap: 1.0 - lambda,
        lambda,
        eigenvalues,
    })
}

pub fn spectral_gap(p: &GossipMatrix) -> Result<f64> {
    Ok(eigenvalues_symmetric(p)?.spectral_gap)
}

fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn deviation_norm(n: usize, power: &[f64]) -> Result<f64> {
    let avg = 1.0 / n as f64;
    let diff: Vec<f64> = power.iter().map(|v| v - avg).collect();
    let eig = symmetric_eigenvalues(n, &diff)?;
    Ok(eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// `‖Pᵏ − M‖₂` with `M` the all-`1/m` matrix, via an explicit matrix power.
pub fn mixing_error(p: &GossipMatrix, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("mixing_error requires k >= 1"));
    }
    Ok(*mixing_errors(p, k)?.last().expect("k >= 1"))
}

/// `‖Pᵏ − M‖₂` for `k = 1..=k_max`, sharing the matrix powers.
pub fn mixing_errors(p: &GossipMatrix, k_max: usize) -> Result<Vec<f64>> {
    let n = p.m();
    let mut power = p.entries().to_vec();
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if k > 1 {
            power = matmul(n, &power, p.entries());
        }
        out.push(deviation_norm(n, &power)?);
    }
    Ok(out)
}

/// Order of the spectral gap of the standard topologies with constants set
/// to one. Only meaningful for ratio and scaling comparisons.
pub fn analytic_gap_order(kind: &TopologyKind, m: usize) -> Result<f64> {
    kind.check_size(m)?;
    let m_f = m as f64;
    Ok(match kind {
        TopologyKind::Ring => 1.0 / (m_f * m_f),
        TopologyKind::Grid2dTorus => 1.0 / (m_f * m_f.log2()),
        TopologyKind::StaticExponential => 1.0 / m_f.log2(),
        TopologyKind::FullyConnected => 1.0,
        TopologyKind::Disconnected => 0.0,
        TopologyKind::Custom(_) => {
            return Err(Error::Unsupported(
                "no analytic spectral-gap order for custom matrices".into(),
            ))
        }
    })
}
