use serde::Serialize;

use crate::engine::{CoupledTrace, WorkerMatrix};
use crate::{Error, Result};

pub const DEFAULT_SKEW_TOL: f64 = 0.5;
pub const DEFAULT_KURT_TOL: f64 = 1.0;
pub const HISTOGRAM_BINS: usize = 50;
/// Fewest pooled coordinates the diagnostic accepts.
pub const MIN_POOLED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Zero variance: moments are undefined.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkerMoments {
    /// `‖μ̂_k‖`.
    pub mean_norm: f64,
    /// Per-coordinate variance averaged over coordinates.
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianityReport {
    pub per_worker: Vec<WorkerMoments>,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skew_tol: f64,
    pub kurt_tol: f64,
    pub verdict: Verdict,
    pub histogram: Vec<HistogramBin>,
}

/// Moment diagnostic of the pooled final weight differences.
pub fn gaussianity_report(
    coupled: &[CoupledTrace],
    skew_tol: f64,
    kurt_tol: f64,
) -> Result<GaussianityReport> {
    let diffs: Vec<&WorkerMatrix> = coupled.iter().map(|c| &c.final_diffs).collect();
    gaussianity_from_diffs(&diffs, skew_tol, kurt_tol)
}

pub fn gaussianity_from_diffs(
    diffs: &[&WorkerMatrix],
    skew_tol: f64,
    kurt_tol: f64,
) -> Result<GaussianityReport> {
    let Some(first) = diffs.first() else {
        return Err(Error::InsufficientData {
            what: "pooled coordinates",
            needed: MIN_POOLED,
            actual: 0,
        });
    };
    let (m, d) = (first.m(), first.d());
    if let Some(bad) = diffs.iter().find(|w| (w.m(), w.d()) != (m, d)) {
        return Err(Error::DimensionMismatch {
            context: "weight difference shape",
            expected: m * d,
            actual: bad.m() * bad.d(),
        });
    }
    let per_worker = (0..m)
        .map(|k| {
            let count = diffs.len() as f64;
            let mut mean = vec![0.0; d];
            for w in diffs {
                mean.iter_mut()
                    .zip(w.row(k))
                    .for_each(|(a, v)| *a += v / count);
            }
            let ss: f64 = diffs
                .iter()
                .map(|w| {
                    w.row(k)
                        .iter()
                        .zip(&mean)
                        .map(|(v, mu)| (v - mu) * (v - mu))
                        .sum::<f64>()
                })
                .sum();
            WorkerMoments {
                mean_norm: mean.iter().map(|v| v * v).sum::<f64>().sqrt(),
                variance: if diffs.len() > 1 {
                    ss / ((count - 1.0) * d as f64)
                } else {
                    0.0
                },
            }
        })
        .collect();
    let pooled: Vec<f64> = diffs
        .iter()
        .flat_map(|w| w.as_slice().iter().copied())
        .collect();
    let mut report = moment_diagnostic(&pooled, skew_tol, kurt_tol)?;
    report.per_worker = per_worker;
    Ok(report)
}

/// Skewness and excess kurtosis of `values` against the tolerances, with a
/// histogram over their range.
pub fn moment_diagnostic(
    values: &[f64],
    skew_tol: f64,
    kurt_tol: f64,
) -> Result<GaussianityReport> {
    if values.len() < MIN_POOLED {
        return Err(Error::InsufficientData {
            what: "pooled coordinates",
            needed: MIN_POOLED,
            actual: values.len(),
        });
    }
    if !(skew_tol >= 0.0 && kurt_tol >= 0.0) {
        return Err(Error::invalid("tolerances must be >= 0"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weight difference".into()));
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let central = |power: i32| values.iter().map(|v| (v - mean).powi(power)).sum::<f64>() / count;
    let m2 = central(2);
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let degenerate = m2 <= (1e-15 * scale).powi(2) || m2 == 0.0;
    let (skewness, excess_kurtosis, verdict) = if degenerate {
        (0.0, 0.0, Verdict::Degenerate)
    } else {
        let skew = central(3) / m2.powf(1.5);
        let kurt = central(4) / (m2 * m2) - 3.0;
        let pass = skew.abs() <= skew_tol && kurt.abs() <= kurt_tol;
        (skew, kurt, if pass { Verdict::Pass } else { Verdict::Fail })
    };
    Ok(GaussianityReport {
        per_worker: Vec::new(),
        count: values.len(),
        mean,
        variance: if degenerate { 0.0 } else { m2 },
        skewness,
        excess_kurtosis,
        skew_tol,
        kurt_tol,
        verdict,
        histogram: histogram(values, HISTOGRAM_BINS),
    })
}

fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            left: lo + width * b as f64,
            right: if b + 1 == bins {
                hi
            } else {
                lo + width * (b + 1) as f64
            },
            count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;
    use rand_distr::{Exp1, StandardNormal};

    #[test]
    fn normal_draws_pass() {
        let mut rng = seed::rng(1);
        let values: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let report = moment_diagnostic(&values, DEFAULT_SKEW_TOL, DEFAULT_KURT_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.skewness.abs() < 0.05);
        assert!(report.excess_kurtosis.abs() < 0.1);
        assert_eq!(report.histogram.len(), 50);
        assert_eq!(
            report.histogram.iter().map(|b| b.count).sum::<usize>(),
            100_000
        );
    }

    #[test]
    fn exponential_draws_fail() {
        let mut rng = seed::rng(2);
        let values: Vec<f64> = (0..100_000).map(|_| rng.sample(Exp1)).collect();
        let report = moment_diagnostic(&values, DEFAULT_SKEW_TOL, DEFAULT_KURT_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert!((report.skewness - 2.0).abs() < 0.15, "{}", report.skewness);
    }

    #[test]
    fn zeros_are_degenerate() {
        let report = moment_diagnostic(&[0.0; 200], 0.5, 1.0).unwrap();
        assert_eq!(report.verdict, Verdict::Degenerate);
        assert_eq!(report.variance, 0.0);
        let diffs = vec![WorkerMatrix::zeros(4, 30); 3];
        let refs: Vec<&WorkerMatrix> = diffs.iter().collect();
        let report = gaussianity_from_diffs(&refs, 0.5, 1.0).unwrap();
        assert_eq!(report.verdict, Verdict::Degenerate);
        assert!(report
            .per_worker
            .iter()
            .all(|w| w.variance == 0.0 && w.mean_norm == 0.0));
    }

    #[test]
    fn too_few_values_rejected() {
        assert!(moment_diagnostic(&[1.0; 99], 0.5, 1.0).is_err());
    }
}
