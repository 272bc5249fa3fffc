//! Estimators for stability, generalization gap and Gaussianity of weight
//! differences, and evaluators for the stability and generalization bounds.

mod bounds;
mod gaussianity;
mod gengap;
mod stability;
mod sweeps;

pub use bounds::{
    generalization_bound_closed, generalization_bound_from_stability,
    minimize_stability_bound_over_p, stability_bound_asymptote, stability_bound_curve, BoundCurve,
    BoundInputs,
};
pub use gaussianity::{
    gaussianity_from_diffs, gaussianity_report, moment_diagnostic, GaussianityReport, HistogramBin,
    Verdict, WorkerMoments, DEFAULT_KURT_TOL, DEFAULT_SKEW_TOL, HISTOGRAM_BINS, MIN_POOLED,
};
pub use gengap::{empirical_risk, generalization_gap, population_risk_value, GenGapReport};
pub use stability::{
    estimate_epsilon_s, estimate_sigma_mu, estimate_sigma_mu_from_diffs, estimate_stability,
    exhaustive_stability, exponentiated_risk_curve, run_replicates, Replicate, StabilityEstimate,
    StabilityMode, StabilityPlan, StabilityRun, EXHAUSTIVE_LIMIT,
};
pub use sweeps::{
    consensus_control_sweep, is_ordered, spearman, topology_comparison, ComparisonRow, SweepPoint,
    SweepReport, TopologyRun,
};

/// Mean and standard error of the mean; the error is zero for one value.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    (mean, (var / count).sqrt())
}

/// `|a − b| / sqrt(se_a² + se_b²)`: separation in pooled standard errors.
pub fn separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    let pooled = (a.1 * a.1 + b.1 * b.1).sqrt();
    if pooled == 0.0 {
        if a.0 == b.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a.0 - b.0).abs() / pooled
    }
}
