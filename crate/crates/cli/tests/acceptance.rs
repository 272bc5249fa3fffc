//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and runtime budgets are pinned below.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde_json::Value;

use dsgd_lab::{parse_config_str, run_experiment, ExperimentConfig};
use dsgd_lab_core::analysis::{
    estimate_epsilon_s, estimate_sigma_mu_from_diffs, exhaustive_stability,
    generalization_bound_closed, generalization_gap, is_ordered, moment_diagnostic, run_replicates,
    separation, stability_bound_curve, topology_comparison, BoundInputs, TopologyRun, Verdict,
};
use dsgd_lab_core::engine::{LrSchedule, Perturbation, PerturbationMode, TrainConfig};
use dsgd_lab_core::models::{
    estimate_holder_constant_on, sample_dataset, self_bounding_check, LossFamily, LossModel,
    Sample, Shards, SyntheticTask,
};
use dsgd_lab_core::seed::rng;
use dsgd_lab_core::topology::{
    build_gossip_matrix, eigenvalues_symmetric, mixing_errors, TopologyKind,
};

const MATRIX_TOL: f64 = 1e-12;
const RING_EIG_TOL: f64 = 1e-9;
const SCALING_SPREAD: f64 = 4.0;
const CONTRACTION_SLACK: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_PROBES: usize = 100;
const FD_STEP: f64 = 1e-5;
const SELF_BOUND_TRIALS: usize = 1000;
const HOLDER_POOL: usize = 256;
const HOLDER_PAIRS: usize = 2000;
const HOLDER_RADIUS: f64 = 5.0;
const ORACLE_TOL: f64 = 1e-12;
const ORDER_SEPARATION: f64 = 2.0;
const WORKER_SEPARATION: f64 = 1.0;
const SKEW_TOL: f64 = 0.5;
const KURT_TOL: f64 = 1.0;
const ORACLE_DRAWS: usize = 20_000;

/// Base seed of every stochastic criterion.
const SEED: u64 = 1;

const CONNECTED: [TopologyKind; 4] = TopologyKind::CONNECTED;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Suite {
    failed: Vec<usize>,
    total: usize,
}

impl Suite {
    fn run(
        &mut self,
        id: usize,
        name: &str,
        budget: Option<Duration>,
        f: impl FnOnce() -> Outcome,
    ) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let pass = result.pass && in_time;
        let budget_note = match budget {
            Some(b) if !in_time => format!("; over budget {:.0?}", b),
            _ => String::new(),
        };
        println!(
            "criterion {id:>2} {} {name}: {} [{:.2?}{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed
        );
        self.total += 1;
        if !pass {
            self.failed.push(id);
        }
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn c1_matrix_invariants() -> Outcome {
    let kinds = [
        TopologyKind::FullyConnected,
        TopologyKind::Ring,
        TopologyKind::Grid2dTorus,
        TopologyKind::StaticExponential,
        TopologyKind::Disconnected,
    ];
    let mut checked = 0;
    let mut worst = 0.0f64;
    for kind in &kinds {
        for m in [4, 9, 16, 64] {
            if kind.check_size(m).is_err() {
                continue;
            }
            let p = build_gossip_matrix(kind, m).unwrap();
            for k in 0..m {
                let (mut row, mut col) = (0.0, 0.0);
                for l in 0..m {
                    let v = p.get(k, l);
                    if !(0.0..=1.0).contains(&v) {
                        return outcome(
                            false,
                            format!("{} m={m}: entry ({k},{l}) = {v}", kind.name()),
                        );
                    }
                    worst = worst.max((v - p.get(l, k)).abs());
                    row += v;
                    col += p.get(l, k);
                }
                worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
            }
            checked += 1;
        }
    }
    outcome(
        worst <= MATRIX_TOL,
        format!("{checked} matrices, worst deviation {worst:.2e}"),
    )
}

fn c2_spectral_exactness() -> Outcome {
    let fc =
        eigenvalues_symmetric(&build_gossip_matrix(&TopologyKind::FullyConnected, 16).unwrap())
            .unwrap();
    let disc =
        eigenvalues_symmetric(&build_gossip_matrix(&TopologyKind::Disconnected, 16).unwrap())
            .unwrap();
    let mut worst = 0.0f64;
    for m in [4usize, 8, 16] {
        let report =
            eigenvalues_symmetric(&build_gossip_matrix(&TopologyKind::Ring, m).unwrap()).unwrap();
        let mut closed: Vec<f64> = (0..m)
            .map(|j| (1.0 + 2.0 * (2.0 * PI * j as f64 / m as f64).cos()) / 3.0)
            .collect();
        closed.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in report.eigenvalues.iter().zip(&closed) {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = fc.spectral_gap == 1.0 && disc.spectral_gap == 0.0 && worst <= RING_EIG_TOL;
    outcome(
        pass,
        format!(
            "fully-connected gap {}, disconnected gap {}, ring eigenvalue error {worst:.2e}",
            fc.spectral_gap, disc.spectral_gap
        ),
    )
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn c3_gap_scaling() -> Outcome {
    let ms = [8usize, 16, 32, 64];
    let gap = |kind: &TopologyKind, m: usize| {
        eigenvalues_symmetric(&build_gossip_matrix(kind, m).unwrap())
            .unwrap()
            .spectral_gap
    };
    let ring: Vec<f64> = ms
        .iter()
        .map(|&m| gap(&TopologyKind::Ring, m) * (m * m) as f64)
        .collect();
    let exp: Vec<f64> = ms
        .iter()
        .map(|&m| gap(&TopologyKind::StaticExponential, m) * (m as f64).log2())
        .collect();
    let (r, e) = (spread(&ring), spread(&exp));
    outcome(
        r < SCALING_SPREAD && e < SCALING_SPREAD,
        format!("ring gap*m^2 spread {r:.3}x, exponential gap*log2(m) spread {e:.3}x"),
    )
}

fn c4_contraction() -> Outcome {
    let mut worst = f64::MIN;
    for kind in &CONNECTED {
        let p = build_gossip_matrix(kind, 16).unwrap();
        let lambda = eigenvalues_symmetric(&p).unwrap().lambda;
        for (i, e) in mixing_errors(&p, 50).unwrap().iter().enumerate() {
            worst = worst.max(e - lambda.powi(i as i32 + 1));
        }
    }
    outcome(
        worst <= CONTRACTION_SLACK,
        format!("max(mixing error - lambda^k) = {worst:.2e}"),
    )
}

fn c5_gradient_fidelity() -> Outcome {
    let d = 5;
    let mut r = rng(SEED);
    let mut worst = 0.0f64;
    for family in [
        LossFamily::LinearRegression,
        LossFamily::LogisticRegression,
        LossFamily::TwoLayerMlp { hidden: 4 },
    ] {
        let model = LossModel::new(family, d);
        for _ in 0..GRAD_PROBES {
            let w: Vec<f64> = (0..model.dim())
                .map(|_| r.sample::<f64, _>(StandardNormal))
                .collect();
            let x: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let y = match family {
                LossFamily::LogisticRegression => f64::from(r.random_bool(0.5)),
                _ => r.sample(StandardNormal),
            };
            let z = Sample::new(x, y);
            let g = model.loss_gradient(&w, &z).unwrap();
            let fd: Vec<f64> = (0..w.len())
                .map(|i| {
                    let (mut hi, mut lo) = (w.clone(), w.clone());
                    hi[i] += FD_STEP;
                    lo[i] -= FD_STEP;
                    (model.loss_value(&hi, &z).unwrap() - model.loss_value(&lo, &z).unwrap())
                        / (2.0 * FD_STEP)
                })
                .collect();
            let num: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let den = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            worst = worst.max(num / den);
        }
    }
    outcome(
        worst <= GRAD_REL_TOL,
        format!("worst relative error {worst:.2e} over 3x{GRAD_PROBES} probes"),
    )
}

fn c6_self_bounding() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for family in [LossFamily::LinearRegression, LossFamily::LogisticRegression] {
        let task = SyntheticTask::isotropic_random(family, 10, 1.0, 0.5, SEED).unwrap();
        let model = task.loss_model();
        let pool = sample_dataset(&task, HOLDER_POOL, SEED);
        let est =
            estimate_holder_constant_on(&model, &pool, 1.0, HOLDER_PAIRS, HOLDER_RADIUS, SEED)
                .unwrap();
        let report = self_bounding_check(
            &model,
            &pool,
            1.0,
            est.l_hat,
            SELF_BOUND_TRIALS,
            HOLDER_RADIUS,
            SEED + 1,
        )
        .unwrap();
        pass &= report.violations == 0 && report.trials == SELF_BOUND_TRIALS;
        parts.push(format!(
            "{} L={:.4} violations {}/{} max ratio {:.6}",
            family.name(),
            est.l_hat,
            report.violations,
            report.trials,
            report.max_ratio
        ));
    }
    outcome(pass, parts.join("; "))
}

/// Scalar D-SGD on two fully connected workers, written out by hand.
fn oracle_expectation(
    shards: &[[(f64, f64); 2]; 2],
    alt: &[[[(f64, f64); 2]; 2]],
    eta: f64,
    t: usize,
) -> Vec<f64> {
    let run = |data: &[[(f64, f64); 2]; 2], code: usize| {
        let mut w = [0.0f64; 2];
        let mut path = vec![w];
        for step in 0..t {
            let i0 = (code >> (2 * step)) & 1;
            let i1 = (code >> (2 * step + 1)) & 1;
            let (x0, y0) = data[0][i0];
            let (x1, y1) = data[1][i1];
            let avg = 0.5 * (w[0] + w[1]);
            w = [
                avg - eta * x0 * (w[0] * x0 - y0),
                avg - eta * x1 * (w[1] * x1 - y1),
            ];
            path.push(w);
        }
        path
    };
    let sequences = 1usize << (2 * t);
    let mut acc = vec![0.0; t + 1];
    for code in 0..sequences {
        let base = run(shards, code);
        for other in alt {
            let pert = run(other, code);
            for s in 0..=t {
                let d0 = base[s][0] - pert[s][0];
                let d1 = base[s][1] - pert[s][1];
                acc[s] += 0.5 * (d0 * d0 + d1 * d1);
            }
        }
    }
    acc.iter()
        .map(|v| v / (sequences * alt.len()) as f64)
        .collect()
}

fn c7_brute_force_oracle() -> Outcome {
    let (eta, t) = (0.1, 3);
    let data = [[(1.0, 0.5), (-0.7, 0.2)], [(0.3, -1.0), (1.5, 0.8)]];
    let replace = [
        (0usize, [(2.0, 1.0), (-0.5, 0.3)]),
        (1usize, [(0.4, -0.6), (-1.2, 1.1)]),
    ];
    let mut alt = Vec::new();
    let mut perturbations = Vec::new();
    for (index, repl) in replace {
        let mut other = data;
        other[0][index] = repl[0];
        other[1][index] = repl[1];
        alt.push(other);
        perturbations.push(Perturbation {
            mode: PerturbationMode::Synchronized,
            index,
            replacements: repl.iter().map(|&(x, y)| Sample::new(vec![x], y)).collect(),
        });
    }
    let shards = Shards::new(
        data.iter()
            .map(|w| w.iter().map(|&(x, y)| Sample::new(vec![x], y)).collect())
            .collect(),
    )
    .unwrap();
    let p = build_gossip_matrix(&TopologyKind::FullyConnected, 2).unwrap();
    let model = LossModel::new(LossFamily::LinearRegression, 1);
    let config = TrainConfig::new(t, LrSchedule::Constant { eta }, 0).with_snapshot_every(1);
    let est = exhaustive_stability(&p, &shards, &model, &config, &perturbations).unwrap();
    let oracle = oracle_expectation(&data, &alt, eta, t);
    if est.iters != (0..=t).collect::<Vec<_>>() {
        return outcome(
            false,
            format!("unexpected logged iterations {:?}", est.iters),
        );
    }
    let worst = est
        .mean
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= ORACLE_TOL,
        format!(
            "final {:.12} vs oracle {:.12}, max error {worst:.2e}",
            est.mean[t], oracle[t]
        ),
    )
}

fn canonical(extra: &str) -> ExperimentConfig {
    let text = format!(r#"{{"seed": {SEED}, {extra}}}"#);
    parse_config_str(&text).unwrap()
}

fn c8_ordering(runs: &[TopologyRun]) -> Outcome {
    let rows: Vec<_> = runs.iter().map(|r| r.row()).collect();
    let stab: Vec<f64> = rows.iter().map(|r| r.stability).collect();
    let gap: Vec<f64> = rows.iter().map(|r| r.gen_gap).collect();
    let (fc, ring) = (&rows[0], &rows[rows.len() - 1]);
    let stab_sep = separation(
        (ring.stability, ring.stability_se),
        (fc.stability, fc.stability_se),
    );
    let gap_sep = separation((ring.gen_gap, ring.gen_gap_se), (fc.gen_gap, fc.gen_gap_se));
    // Paired by replicate: same data and index draws under every topology.
    let paired = |get: &dyn Fn(&TopologyRun) -> Vec<f64>| {
        let diffs: Vec<f64> = get(&runs[runs.len() - 1])
            .iter()
            .zip(get(&runs[0]))
            .map(|(a, b)| a - b)
            .collect();
        let (mean, se) = dsgd_lab_core::analysis::mean_and_se(&diffs);
        mean / se
    };
    let stab_paired = paired(&|r| {
        r.stability
            .replicates
            .iter()
            .map(|x| {
                x.pair_curves.iter().map(|c| c[c.len() - 1]).sum::<f64>()
                    / x.pair_curves.len() as f64
            })
            .collect()
    });
    let gap_paired = paired(&|r| r.gen_gap.final_gaps.clone());
    let pass = is_ordered(&stab)
        && is_ordered(&gap)
        && stab_sep >= ORDER_SEPARATION
        && gap_sep >= ORDER_SEPARATION;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.6e}"))
            .collect::<Vec<_>>()
            .join(" <= ")
    };
    outcome(
        pass,
        format!(
            "stability [{}] ordered={} sep={stab_sep:.2} (paired {stab_paired:.2}); gap [{}] ordered={} sep={gap_sep:.2} (paired {gap_paired:.2})",
            fmt(&stab),
            is_ordered(&stab),
            fmt(&gap),
            is_ordered(&gap)
        ),
    )
}

fn c9_worker_count() -> Outcome {
    let total = 800;
    let mut stats = Vec::new();
    for m in [8usize, 32] {
        let config = canonical(&format!(
            r#""experiment": "gengap", "kind": "ring", "m": {m}, "n": {}"#,
            total / m
        ));
        let task = config.task().unwrap();
        let model = task.loss_model();
        let runs = run_replicates(
            &build_gossip_matrix(&config.kind, m).unwrap(),
            &task,
            &model,
            &config.train_config(),
            &config.plan(),
        )
        .unwrap();
        let traces: Vec<_> = runs.iter().map(|(_, t)| t).collect();
        let shards: Vec<_> = runs.iter().map(|(s, _)| s).collect();
        let report =
            generalization_gap(&traces, &shards, &task, &model, config.mc_samples).unwrap();
        stats.push((report.final_mean(), report.final_std_error()));
    }
    let sep = separation(stats[1], stats[0]);
    outcome(
        stats[1].0 > stats[0].0 && sep >= WORKER_SEPARATION,
        format!(
            "gap m=8 {:.6e} +/- {:.2e}, m=32 {:.6e} +/- {:.2e}, separation {sep:.2}",
            stats[0].0, stats[0].1, stats[1].0, stats[1].1
        ),
    )
}

fn c10_bound_domination(
    config: &ExperimentConfig,
    task: &SyntheticTask,
    runs: &[TopologyRun],
) -> Outcome {
    let model = task.loss_model();
    let pool = sample_dataset(task, HOLDER_POOL, SEED);
    let holder =
        estimate_holder_constant_on(&model, &pool, 1.0, HOLDER_PAIRS, HOLDER_RADIUS, SEED).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let (sigma_sq, mu_sq) = estimate_sigma_mu_from_diffs(&run.stability.final_diffs()).unwrap();
        let epsilon_s = estimate_epsilon_s(&run.stability.base_traces(), 1.0).unwrap();
        let inputs = BoundInputs {
            l: holder.l_hat,
            alpha: 1.0,
            schedule: config.schedule(),
            iterations: config.iterations,
            n: config.n,
            m: config.m,
            d: model.dim(),
            lambda: run.lambda,
            sigma_sq,
            mu_sq,
            epsilon_s,
            p: 1.0,
            grad_at_zero_sup: None,
        };
        let curve = stability_bound_curve(
            &inputs,
            &vec![epsilon_s; config.iterations],
            config.iterations,
        )
        .unwrap();
        let est = &run.stability.estimate;
        let min_ratio = est
            .iters
            .iter()
            .zip(&est.mean)
            .filter(|(_, &s)| s > 0.0)
            .map(|(&t, &s)| curve.values[t] / s)
            .fold(f64::INFINITY, f64::min);
        let dominated = est
            .iters
            .iter()
            .zip(&est.mean)
            .all(|(&t, &s)| curve.values[t] >= s);
        pass &= dominated;
        parts.push(format!(
            "{} min bound/measured {min_ratio:.2}",
            run.kind.name()
        ));
    }
    outcome(pass, format!("L={:.3}; {}", holder.l_hat, parts.join(", ")))
}

fn c11_lambda_monotonicity() -> Outcome {
    let values: Vec<f64> = (0..10)
        .map(|i| {
            let inputs = BoundInputs {
                l: 4.0,
                alpha: 1.0,
                schedule: LrSchedule::Constant { eta: 0.05 },
                iterations: 500,
                n: 50,
                m: 16,
                d: 20,
                lambda: i as f64 / 10.0,
                sigma_sq: 1e-4,
                mu_sq: 1e-5,
                epsilon_s: 1.0,
                p: 1.0,
                grad_at_zero_sup: None,
            };
            generalization_bound_closed(&inputs, 500).unwrap()
        })
        .collect();
    let strict = values.windows(2).all(|w| w[1] > w[0]);
    outcome(
        strict,
        format!(
            "bound from {:.6e} (lambda 0) to {:.6e} (lambda 0.9)",
            values[0], values[9]
        ),
    )
}

fn run_cli(config: &ExperimentConfig, dir: &Path, jobs: usize) -> Value {
    let mut config = config.clone();
    config.output_dir = dir.to_path_buf();
    run_experiment(&config, jobs).unwrap();
    serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn c12_consensus_sweep(summary: &Value, csv: &str) -> Outcome {
    let rho = summary["results"]["spearman"].as_f64();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let first = rows
        .first()
        .and_then(|r| r.split(',').nth(1))
        .unwrap_or("?");
    let last = rows.last().and_then(|r| r.split(',').nth(1)).unwrap_or("?");
    outcome(
        rho.is_some_and(|r| r > 0.0),
        format!("spearman {rho:?}; stability at t_gamma=0 {first}, at t_gamma=T {last}"),
    )
}

fn c13_gaussianity(summary: &Value) -> Outcome {
    let r = &summary["results"];
    let (skew, kurt) = (
        r["skewness"].as_f64().unwrap(),
        r["excess_kurtosis"].as_f64().unwrap(),
    );
    let mut g = rng(SEED);
    let normal: Vec<f64> = (0..ORACLE_DRAWS)
        .map(|_| g.sample(StandardNormal))
        .collect();
    let exponential: Vec<f64> = (0..ORACLE_DRAWS).map(|_| g.sample(Exp1)).collect();
    let normal_ok = moment_diagnostic(&normal, SKEW_TOL, KURT_TOL)
        .unwrap()
        .verdict
        == Verdict::Pass;
    let exp_ok = moment_diagnostic(&exponential, SKEW_TOL, KURT_TOL)
        .unwrap()
        .verdict
        == Verdict::Fail;
    let runs = r["coupled_runs"].as_u64().unwrap_or(0);
    let pass =
        skew.abs() <= SKEW_TOL && kurt.abs() <= KURT_TOL && normal_ok && exp_ok && runs == 30;
    outcome(
        pass,
        format!(
            "{runs} coupled runs, skew {skew:.3}, excess kurtosis {kurt:.3}; normal oracle passes={normal_ok}, exponential oracle fails={exp_ok}"
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c14_determinism(configs: &[(ExperimentConfig, std::path::PathBuf)], scratch: &Path) -> Outcome {
    let mut compared = 0;
    for (i, (config, serial_dir)) in configs.iter().enumerate() {
        let parallel_dir = scratch.join(format!("parallel-{i}"));
        run_cli(config, &parallel_dir, 8);
        let (a, b) = (csv_files(serial_dir), csv_files(&parallel_dir));
        if a.is_empty() || a != b {
            return outcome(
                false,
                format!(
                    "{} differs between --jobs 1 and --jobs 8",
                    config.experiment.name()
                ),
            );
        }
        compared += a.len();
    }
    outcome(
        true,
        format!(
            "{compared} CSV files byte-identical across {} experiments",
            configs.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut suite = Suite {
        failed: Vec::new(),
        total: 0,
    };
    suite.run(1, "matrix invariants", secs(1), c1_matrix_invariants);
    suite.run(2, "spectral exactness", secs(1), c2_spectral_exactness);
    suite.run(3, "gap scaling", secs(5), c3_gap_scaling);
    suite.run(4, "power contraction", secs(5), c4_contraction);
    suite.run(5, "gradient fidelity", secs(5), c5_gradient_fidelity);
    suite.run(6, "self-bounding", secs(5), c6_self_bounding);
    suite.run(
        7,
        "brute-force stability oracle",
        secs(10),
        c7_brute_force_oracle,
    );

    let compare = canonical(r#""experiment": "compare""#);
    let task = compare.task().unwrap();
    let mut runs = Vec::new();
    suite.run(8, "topology ordering", secs(600), || {
        runs = topology_comparison(
            &compare.kinds,
            compare.m,
            &task,
            &task.loss_model(),
            &compare.train_config(),
            &compare.plan(),
            compare.mc_samples,
        )
        .unwrap();
        c8_ordering(&runs)
    });
    suite.run(9, "worker-count effect", secs(600), c9_worker_count);
    suite.run(10, "bound domination", None, || {
        c10_bound_domination(&compare, &task, &runs)
    });
    drop(runs);
    suite.run(
        11,
        "bound monotone in lambda",
        secs(1),
        c11_lambda_monotonicity,
    );

    let scratch = tempfile::tempdir().unwrap();
    let sweep = canonical(
        r#""experiment": "consensus-control", "kind": "ring", "m": 16, "replicates": 10, "gamma_sq": 1e-4"#,
    );
    let sweep_dir = scratch.path().join("sweep");
    suite.run(12, "consensus-control sweep", secs(600), || {
        let summary = run_cli(&sweep, &sweep_dir, 1);
        c12_consensus_sweep(
            &summary,
            &fs::read_to_string(sweep_dir.join("consensus_control.csv")).unwrap(),
        )
    });
    let gauss = canonical(
        r#""experiment": "gaussianity", "kind": "ring", "m": 16, "replicates": 30, "pairs": 1"#,
    );
    let gauss_dir = scratch.path().join("gaussianity");
    suite.run(13, "gaussianity diagnostic", secs(300), || {
        c13_gaussianity(&run_cli(&gauss, &gauss_dir, 1))
    });

    let mut reruns = vec![(sweep, sweep_dir), (gauss, gauss_dir)];
    for (i, extra) in [
        r#""experiment": "topology", "kind": "grid", "m": 16"#,
        r#""experiment": "stability", "kind": "exponential", "m": 8, "iterations": 500, "replicates": 6"#,
        r#""experiment": "bound", "kind": "ring", "m": 8, "iterations": 500, "replicates": 6"#,
        r#""experiment": "compare", "m": 16, "iterations": 500, "replicates": 6"#,
    ]
    .iter()
    .enumerate()
    {
        let config = canonical(extra);
        let dir = scratch.path().join(format!("serial-{i}"));
        run_cli(&config, &dir, 1);
        reruns.push((config, dir));
    }
    suite.run(14, "determinism across --jobs", None, || {
        c14_determinism(&reruns, scratch.path())
    });

    println!(
        "acceptance: {}/{} criteria passed{}",
        suite.total - suite.failed.len(),
        suite.total,
        if suite.failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {:?}", suite.failed)
        }
    );
    if suite.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
