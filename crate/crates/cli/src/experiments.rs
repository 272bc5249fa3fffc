//! One function per experiment. Each writes its CSV files and returns the
//! headline numbers for the JSON summary.

use serde_json::{json, Value};

use dsgd_lab_core::analysis::{
    consensus_control_sweep, estimate_epsilon_s, estimate_sigma_mu_from_diffs, estimate_stability,
    gaussianity_from_diffs, generalization_bound_closed, generalization_bound_from_stability,
    generalization_gap, is_ordered, minimize_stability_bound_over_p, run_replicates, separation,
    stability_bound_curve, topology_comparison, BoundInputs, StabilityEstimate,
};
use dsgd_lab_core::engine::ConsensusControl;
use dsgd_lab_core::models::{estimate_holder_constant, max_gradient_at_zero, sample_dataset};
use dsgd_lab_core::seed::derive_seed;
use dsgd_lab_core::topology::{
    analytic_gap_order, build_gossip_matrix, eigenvalues_symmetric, mixing_errors, GossipMatrix,
    TopologyKind,
};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{Cell, OutputDir, Table};
use crate::CliError;

/// Largest `k` tabulated by the topology experiment.
const MIXING_K_MAX: usize = 50;

pub fn run(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    match config.experiment {
        Experiment::Topology => topology(config, out),
        Experiment::Stability => stability(config, out),
        Experiment::Gengap => gengap(config, out),
        Experiment::Bound => bound(config, out),
        Experiment::Compare => compare(config, out),
        Experiment::ConsensusControl => consensus_control(config, out),
        Experiment::Gaussianity => gaussianity(config, out),
    }
}

fn matrix(config: &ExperimentConfig) -> Result<GossipMatrix, CliError> {
    Ok(build_gossip_matrix(&config.kind, config.m)?)
}

fn stability_table(estimate: &StabilityEstimate) -> Table {
    let mut table = Table::new(&["iter", "stability_mean", "stability_se"]);
    for ((&t, &mean), &se) in estimate
        .iters
        .iter()
        .zip(&estimate.mean)
        .zip(&estimate.std_error)
    {
        table.push(vec![t.into(), mean.into(), se.into()]);
    }
    table
}

fn topology(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let spectrum = eigenvalues_symmetric(&p)?;
    let mut summary = Table::new(&["kind", "m", "lambda", "gap"]);
    summary.push(vec![
        config.kind.name().into(),
        config.m.into(),
        spectrum.lambda.into(),
        spectrum.spectral_gap.into(),
    ]);
    out.write_csv("topology.csv", &summary)?;

    let mut eig = Table::new(&["index", "eigenvalue"]);
    for (i, &v) in spectrum.eigenvalues.iter().enumerate() {
        eig.push(vec![i.into(), v.into()]);
    }
    out.write_csv("spectrum.csv", &eig)?;

    let mut mixing = Table::new(&["k", "mixing_error", "lambda_pow_k"]);
    for (i, &e) in mixing_errors(&p, MIXING_K_MAX)?.iter().enumerate() {
        let k = i + 1;
        mixing.push(vec![
            k.into(),
            e.into(),
            spectrum.lambda.powi(k as i32).into(),
        ]);
    }
    out.write_csv("mixing.csv", &mixing)?;

    let order = match config.kind {
        TopologyKind::Custom(_) => Value::Null,
        ref kind => json!(analytic_gap_order(kind, config.m)?),
    };
    Ok(json!({
        "kind": config.kind.name(),
        "m": config.m,
        "lambda": spectrum.lambda,
        "spectral_gap": spectrum.spectral_gap,
        "analytic_gap_order": order,
    }))
}

fn stability(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let task = config.task()?;
    let run = estimate_stability(
        &p,
        &task,
        &task.loss_model(),
        &config.train_config(),
        &config.plan(),
    )?;
    out.write_csv("stability.csv", &stability_table(&run.estimate))?;
    Ok(json!({
        "kind": config.kind.name(),
        "mode": run.estimate.mode,
        "replicates": run.estimate.replicates,
        "pairs": run.estimate.pairs,
        "final_stability": run.estimate.final_mean(),
        "final_stability_se": run.estimate.final_std_error(),
    }))
}

fn gengap(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let task = config.task()?;
    let model = task.loss_model();
    let runs = run_replicates(&p, &task, &model, &config.train_config(), &config.plan())?;
    let traces: Vec<_> = runs.iter().map(|(_, t)| t).collect();
    let shards: Vec<_> = runs.iter().map(|(s, _)| s).collect();
    let report = generalization_gap(&traces, &shards, &task, &model, config.mc_samples)?;
    let mut table = Table::new(&["iter", "gap_mean", "gap_se"]);
    for ((&t, &mean), &se) in report.iters.iter().zip(&report.mean).zip(&report.std_error) {
        table.push(vec![t.into(), mean.into(), se.into()]);
    }
    out.write_csv("gengap.csv", &table)?;
    Ok(json!({
        "kind": config.kind.name(),
        "replicates": traces.len(),
        "final_gap": report.final_mean(),
        "final_gap_se": report.final_std_error(),
    }))
}

fn bound(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let lambda = eigenvalues_symmetric(&p)?.lambda;
    let task = config.task()?;
    let model = task.loss_model();
    let train = config.train_config();
    let run = estimate_stability(&p, &task, &model, &train, &config.plan())?;

    let holder_seed = derive_seed(config.experiment_seed(), "holder", 0);
    let holder = estimate_holder_constant(
        &model,
        &task,
        config.alpha,
        config.holder_pairs,
        config.radius,
        holder_seed,
    )?;
    let grad_sup = if config.alpha == 0.0 {
        let pool = sample_dataset(
            &task,
            256,
            derive_seed(config.experiment_seed(), "grad-sup", 0),
        );
        Some(max_gradient_at_zero(&model, &pool)?)
    } else {
        None
    };
    let (sigma_sq, mu_sq) = estimate_sigma_mu_from_diffs(&run.final_diffs())?;
    let epsilon_s = estimate_epsilon_s(&run.base_traces(), config.alpha)?;
    let mut inputs = BoundInputs {
        l: holder.l_hat,
        alpha: config.alpha,
        schedule: train.schedule,
        iterations: config.iterations,
        n: config.n,
        m: config.m,
        d: model.dim(),
        lambda,
        sigma_sq,
        mu_sq,
        epsilon_s,
        p: config.p,
        grad_at_zero_sup: grad_sup,
    };
    if config.optimize_p {
        inputs.p = minimize_stability_bound_over_p(&inputs, config.iterations)?.0;
    }
    let risks = vec![epsilon_s; config.iterations];
    let curve = stability_bound_curve(&inputs, &risks, config.iterations)?;

    let mut table = Table::new(&[
        "iter",
        "stability_mean",
        "stability_se",
        "stability_bound",
        "gen_bound_from_stability",
        "gen_bound_closed",
    ]);
    let mut dominated = true;
    for (i, &t) in run.estimate.iters.iter().enumerate() {
        let b = curve.values[t];
        dominated &= b >= run.estimate.mean[i];
        table.push(vec![
            t.into(),
            run.estimate.mean[i].into(),
            run.estimate.std_error[i].into(),
            b.into(),
            generalization_bound_from_stability(b, inputs.l, inputs.alpha, inputs.m, inputs.n)?
                .into(),
            generalization_bound_closed(&inputs, t)?.into(),
        ]);
    }
    out.write_csv("bound.csv", &table)?;
    Ok(json!({
        "kind": config.kind.name(),
        "inputs": inputs,
        "holder_radius": holder.radius,
        "geometric_factor": inputs.geometric_factor(),
        "asymptote": curve.asymptote,
        "bound_dominates_measurement": dominated,
        "final_stability": run.estimate.final_mean(),
        "final_bound": curve.values[config.iterations],
        "step_size_warning": train.step_size_warning(inputs.l, inputs.m),
    }))
}

fn compare(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let task = config.task()?;
    let model = task.loss_model();
    let runs = topology_comparison(
        &config.kinds,
        config.m,
        &task,
        &model,
        &config.train_config(),
        &config.plan(),
        config.mc_samples,
    )?;
    let mut table = Table::new(&[
        "kind",
        "m",
        "lambda",
        "stability",
        "stability_se",
        "gen_gap",
        "gen_gap_se",
    ]);
    let mut curves = Table::new(&[
        "kind",
        "iter",
        "stability_mean",
        "stability_se",
        "gap_mean",
        "gap_se",
    ]);
    let rows: Vec<_> = runs.iter().map(|r| r.row()).collect();
    for (run, row) in runs.iter().zip(&rows) {
        table.push(vec![
            row.kind.clone().into(),
            row.m.into(),
            row.lambda.into(),
            row.stability.into(),
            row.stability_se.into(),
            row.gen_gap.into(),
            row.gen_gap_se.into(),
        ]);
        let est = &run.stability.estimate;
        for i in 0..est.iters.len() {
            curves.push(vec![
                Cell::from(row.kind.clone()),
                est.iters[i].into(),
                est.mean[i].into(),
                est.std_error[i].into(),
                run.gen_gap.mean[i].into(),
                run.gen_gap.std_error[i].into(),
            ]);
        }
    }
    out.write_csv("compare.csv", &table)?;
    out.write_csv("compare_curves.csv", &curves)?;

    // Rows sorted by λ give the predicted order of both quantities.
    let mut by_lambda: Vec<_> = rows.iter().collect();
    by_lambda.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let stab: Vec<f64> = by_lambda.iter().map(|r| r.stability).collect();
    let gap: Vec<f64> = by_lambda.iter().map(|r| r.gen_gap).collect();
    let (first, last) = (by_lambda[0], by_lambda[by_lambda.len() - 1]);
    Ok(json!({
        "m": config.m,
        "rows": rows,
        "order_by_lambda": by_lambda.iter().map(|r| r.kind.clone()).collect::<Vec<_>>(),
        "stability_ordered": is_ordered(&stab),
        "gen_gap_ordered": is_ordered(&gap),
        "stability_separation": separation((last.stability, last.stability_se), (first.stability, first.stability_se)),
        "gen_gap_separation": separation((last.gen_gap, last.gen_gap_se), (first.gen_gap, first.gen_gap_se)),
    }))
}

fn consensus_control(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let task = config.task()?;
    let plan = dsgd_lab_core::analysis::StabilityPlan {
        control: Some(ConsensusControl {
            gamma_sq: config.gamma_sq,
            t_gamma: 0,
            max_rounds: config.max_rounds,
        }),
        ..config.plan()
    };
    let report = consensus_control_sweep(
        &p,
        &task,
        &task.loss_model(),
        &config.train_config(),
        &plan,
        config.gamma_sq,
        &config.t_gamma,
    )?;
    let mut table = Table::new(&["t_gamma", "stability", "stability_se", "control_rounds"]);
    for point in &report.points {
        table.push(vec![
            point.t_gamma.into(),
            point.stability.into(),
            point.std_error.into(),
            point.control_rounds.into(),
        ]);
    }
    out.write_csv("consensus_control.csv", &table)?;
    Ok(json!({
        "kind": config.kind.name(),
        "gamma_sq": if config.gamma_sq.is_finite() { json!(config.gamma_sq) } else { json!("inf") },
        "spearman": report.spearman,
    }))
}

fn gaussianity(config: &ExperimentConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let p = matrix(config)?;
    let task = config.task()?;
    let run = estimate_stability(
        &p,
        &task,
        &task.loss_model(),
        &config.train_config(),
        &config.plan(),
    )?;
    let report = gaussianity_from_diffs(&run.final_diffs(), config.skew_tol, config.kurt_tol)?;
    let mut hist = Table::new(&["bin_left", "bin_right", "count"]);
    for bin in &report.histogram {
        hist.push(vec![bin.left.into(), bin.right.into(), bin.count.into()]);
    }
    out.write_csv("histogram.csv", &hist)?;
    let mut moments = Table::new(&["worker", "mean_norm", "variance"]);
    for (k, w) in report.per_worker.iter().enumerate() {
        moments.push(vec![k.into(), w.mean_norm.into(), w.variance.into()]);
    }
    out.write_csv("worker_moments.csv", &moments)?;
    Ok(json!({
        "kind": config.kind.name(),
        "coupled_runs": run.final_diffs().len(),
        "pooled_coordinates": report.count,
        "mean": report.mean,
        "variance": report.variance,
        "skewness": report.skewness,
        "excess_kurtosis": report.excess_kurtosis,
        "verdict": report.verdict,
    }))
}
