//! Experiment configuration: a flat JSON object, defaults filled in, every
//! constraint checked before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsgd_lab_core::analysis::{StabilityMode, StabilityPlan, DEFAULT_KURT_TOL, DEFAULT_SKEW_TOL};
use dsgd_lab_core::engine::{LrSchedule, TrainConfig, DEFAULT_MAX_ROUNDS};
use dsgd_lab_core::models::{LossFamily, SyntheticTask, DEFAULT_HOLDER_RADIUS, DEFAULT_MC_SAMPLES};
use dsgd_lab_core::seed::derive_seed;
use dsgd_lab_core::topology::TopologyKind;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Topology,
    Stability,
    Gengap,
    Bound,
    Compare,
    ConsensusControl,
    Gaussianity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Topology => "topology",
            Experiment::Stability => "stability",
            Experiment::Gengap => "gengap",
            Experiment::Bound => "bound",
            Experiment::Compare => "compare",
            Experiment::ConsensusControl => "consensus-control",
            Experiment::Gaussianity => "gaussianity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    #[default]
    Linear,
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleName {
    #[default]
    Constant,
    StepDecay,
}

/// The configuration file as written; absent keys take the documented
/// defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: Option<Experiment>,
    pub kind: Option<String>,
    pub kinds: Option<Vec<String>>,
    pub matrix_path: Option<PathBuf>,
    pub m: Option<usize>,
    pub family: Option<FamilyName>,
    pub hidden: Option<usize>,
    pub d: Option<usize>,
    pub noise_std: Option<f64>,
    pub feature_variance: Option<f64>,
    pub n: Option<usize>,
    pub iterations: Option<usize>,
    pub eta: Option<f64>,
    pub schedule: Option<ScheduleName>,
    pub snapshot_every: Option<usize>,
    pub replicates: Option<usize>,
    pub pairs: Option<usize>,
    pub mode: Option<StabilityMode>,
    pub p: Option<f64>,
    pub optimize_p: Option<bool>,
    pub alpha: Option<f64>,
    pub holder_pairs: Option<usize>,
    pub radius: Option<f64>,
    pub gamma_sq: Option<f64>,
    pub t_gamma: Option<Vec<usize>>,
    pub max_rounds: Option<usize>,
    pub skew_tol: Option<f64>,
    pub kurt_tol: Option<f64>,
    pub mc_samples: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// A fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kind: TopologyKind,
    pub kinds: Vec<TopologyKind>,
    pub m: usize,
    pub family: FamilyName,
    pub hidden: usize,
    /// Feature dimension.
    pub d: usize,
    pub noise_std: f64,
    pub feature_variance: f64,
    /// Samples per worker.
    pub n: usize,
    pub iterations: usize,
    pub eta: f64,
    pub schedule: ScheduleName,
    pub snapshot_every: usize,
    pub replicates: usize,
    pub pairs: usize,
    pub mode: StabilityMode,
    pub p: f64,
    pub optimize_p: bool,
    pub alpha: f64,
    pub holder_pairs: usize,
    pub radius: f64,
    #[serde(serialize_with = "serialize_gamma")]
    pub gamma_sq: f64,
    pub t_gamma: Vec<usize>,
    pub max_rounds: usize,
    pub skew_tol: f64,
    pub kurt_tol: f64,
    pub mc_samples: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// `gamma_sq` may be infinite, which JSON cannot hold as a number.
fn serialize_gamma<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

pub const DEFAULT_M: usize = 16;
pub const DEFAULT_D: usize = 20;
pub const DEFAULT_N: usize = 50;
pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_NOISE_STD: f64 = 0.5;
pub const DEFAULT_FEATURE_VARIANCE: f64 = 0.2;
pub const DEFAULT_REPLICATES: usize = 20;
pub const DEFAULT_PAIRS: usize = 8;
pub const DEFAULT_HOLDER_PAIRS: usize = 2000;
pub const DEFAULT_GAMMA_SQ: f64 = 1e-4;
pub const DEFAULT_HIDDEN: usize = 8;

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{key}: {msg}"))
}

fn parse_kind(key: &str, name: &str, matrix_path: Option<&Path>) -> Result<TopologyKind, CliError> {
    if name == "custom" {
        return matrix_path
            .map(|p| TopologyKind::Custom(p.to_path_buf()))
            .ok_or_else(|| invalid("matrix_path", "required when the kind is \"custom\""));
    }
    TopologyKind::from_name(name).ok_or_else(|| {
        invalid(
            key,
            format!(
                "unknown topology {name:?} (expected fully-connected, ring, grid, exponential, disconnected or custom)"
            ),
        )
    })
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
    resolve(raw)
}

pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let experiment = raw
        .experiment
        .ok_or_else(|| invalid("experiment", "missing required key"))?;
    let matrix_path = raw.matrix_path.as_deref();
    let kind = parse_kind("kind", raw.kind.as_deref().unwrap_or("ring"), matrix_path)?;
    let kinds = match &raw.kinds {
        Some(names) if names.is_empty() => return Err(invalid("kinds", "must not be empty")),
        Some(names) => names
            .iter()
            .map(|name| parse_kind("kinds", name, matrix_path))
            .collect::<Result<Vec<_>, _>>()?,
        None => TopologyKind::CONNECTED.to_vec(),
    };
    let iterations = raw.iterations.unwrap_or(DEFAULT_ITERATIONS);
    let config = ExperimentConfig {
        experiment,
        kind,
        kinds,
        m: raw.m.unwrap_or(DEFAULT_M),
        family: raw.family.unwrap_or_default(),
        hidden: raw.hidden.unwrap_or(DEFAULT_HIDDEN),
        d: raw.d.unwrap_or(DEFAULT_D),
        noise_std: raw.noise_std.unwrap_or(DEFAULT_NOISE_STD),
        feature_variance: raw.feature_variance.unwrap_or(DEFAULT_FEATURE_VARIANCE),
        n: raw.n.unwrap_or(DEFAULT_N),
        iterations,
        eta: raw.eta.unwrap_or(DEFAULT_ETA),
        schedule: raw.schedule.unwrap_or_default(),
        snapshot_every: raw.snapshot_every.unwrap_or((iterations / 200).max(1)),
        replicates: raw.replicates.unwrap_or(DEFAULT_REPLICATES),
        pairs: raw.pairs.unwrap_or(DEFAULT_PAIRS),
        mode: raw.mode.unwrap_or_default(),
        p: raw.p.unwrap_or(1.0),
        optimize_p: raw.optimize_p.unwrap_or(false),
        alpha: raw.alpha.unwrap_or(1.0),
        holder_pairs: raw.holder_pairs.unwrap_or(DEFAULT_HOLDER_PAIRS),
        radius: raw.radius.unwrap_or(DEFAULT_HOLDER_RADIUS),
        gamma_sq: raw.gamma_sq.unwrap_or(DEFAULT_GAMMA_SQ),
        t_gamma: raw.t_gamma.unwrap_or_else(|| {
            vec![
                0,
                iterations / 4,
                iterations / 2,
                3 * iterations / 4,
                iterations,
            ]
        }),
        max_rounds: raw.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS),
        skew_tol: raw.skew_tol.unwrap_or(DEFAULT_SKEW_TOL),
        kurt_tol: raw.kurt_tol.unwrap_or(DEFAULT_KURT_TOL),
        mc_samples: raw.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        output_dir: raw
            .output_dir
            .unwrap_or_else(|| PathBuf::from("dsgd-lab-out")),
        seed: raw.seed.unwrap_or(0),
    };
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// Checks every constraint the experiment depends on.
    pub fn validate(&self) -> Result<(), CliError> {
        let needs_training = self.experiment != Experiment::Topology;
        let kinds: &[TopologyKind] = if self.experiment == Experiment::Compare {
            &self.kinds
        } else {
            std::slice::from_ref(&self.kind)
        };
        let key = if self.experiment == Experiment::Compare {
            "kinds"
        } else {
            "m"
        };
        for kind in kinds {
            if !matches!(kind, TopologyKind::Custom(_)) {
                kind.check_size(self.m).map_err(|e| invalid(key, e))?;
            }
        }
        if !needs_training {
            return Ok(());
        }
        if self.d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        if self.family == FamilyName::Mlp && self.hidden == 0 {
            return Err(invalid("hidden", "must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(invalid("noise_std", "must be a finite number >= 0"));
        }
        if !(self.feature_variance > 0.0 && self.feature_variance.is_finite()) {
            return Err(invalid("feature_variance", "must be a finite number > 0"));
        }
        if self.n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be a finite number >= 0"));
        }
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every", "must be positive"));
        }
        if self.replicates < 2 {
            return Err(invalid("replicates", "must be at least 2"));
        }
        if self.experiment == Experiment::ConsensusControl && self.replicates < 5 {
            return Err(invalid(
                "replicates",
                "the consensus-control sweep needs at least 5",
            ));
        }
        if self.pairs == 0 {
            return Err(invalid("pairs", "must be at least 1"));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(invalid("p", "must be a finite number > 0"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", "must lie in [0, 1]"));
        }
        if self.holder_pairs == 0 {
            return Err(invalid("holder_pairs", "must be at least 1"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("radius", "must be a finite number > 0"));
        }
        if self.gamma_sq.is_nan() || self.gamma_sq <= 0.0 {
            return Err(invalid("gamma_sq", "must be > 0"));
        }
        if self.t_gamma.is_empty() || self.t_gamma.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("t_gamma", "must be a nonempty ascending list"));
        }
        if let Some(&t) = self.t_gamma.iter().find(|&&t| t > self.iterations) {
            return Err(invalid(
                "t_gamma",
                format!("{t} exceeds iterations = {}", self.iterations),
            ));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be positive"));
        }
        if !(self.skew_tol >= 0.0 && self.kurt_tol >= 0.0) {
            return Err(invalid("skew_tol", "tolerances must be >= 0"));
        }
        if self.family != FamilyName::Linear && self.mc_samples < 2 {
            return Err(invalid("mc_samples", "must be at least 2"));
        }
        if self.experiment == Experiment::Gaussianity {
            let pooled = self.replicates * self.pairs * self.m * self.model_dim();
            if pooled < dsgd_lab_core::analysis::MIN_POOLED {
                return Err(invalid(
                    "replicates",
                    format!(
                        "replicates * pairs * m * d pools {pooled} coordinates, need at least 100"
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn loss_family(&self) -> LossFamily {
        match self.family {
            FamilyName::Linear => LossFamily::LinearRegression,
            FamilyName::Logistic => LossFamily::LogisticRegression,
            FamilyName::Mlp => LossFamily::TwoLayerMlp {
                hidden: self.hidden,
            },
        }
    }

    pub fn model_dim(&self) -> usize {
        dsgd_lab_core::models::LossModel::new(self.loss_family(), self.d).dim()
    }

    /// `Σ = feature_variance·I`, teacher drawn from the base seed.
    pub fn task(&self) -> Result<SyntheticTask, CliError> {
        SyntheticTask::isotropic_random(
            self.loss_family(),
            self.d,
            self.feature_variance,
            self.noise_std,
            derive_seed(self.seed, "w-star", 0),
        )
        .map_err(CliError::from)
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.schedule {
            ScheduleName::Constant => LrSchedule::Constant { eta: self.eta },
            ScheduleName::StepDecay => LrSchedule::StepDecay { eta0: self.eta },
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig::new(self.iterations, self.schedule(), 0)
            .with_snapshot_every(self.snapshot_every)
    }

    /// Seed family of this experiment: `hash(base, experiment)`.
    pub fn experiment_seed(&self) -> u64 {
        derive_seed(self.seed, self.experiment.name(), 0)
    }

    pub fn plan(&self) -> StabilityPlan {
        StabilityPlan {
            mode: self.mode,
            ..StabilityPlan::new(self.replicates, self.pairs, self.n, self.experiment_seed())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"experiment": "topology", "kind": "ring", "m": 8}"#).unwrap();
        assert_eq!(c.kind, TopologyKind::Ring);
        assert_eq!(c.m, 8);
        assert_eq!(c.iterations, DEFAULT_ITERATIONS);
        assert_eq!(c.snapshot_every, 10);
        assert_eq!(c.t_gamma, vec![0, 500, 1000, 1500, 2000]);
        assert_eq!(c.kinds.len(), 4);
    }

    #[test]
    fn grid_needs_square() {
        let err =
            parse_config_str(r#"{"experiment": "topology", "kind": "grid", "m": 10}"#).unwrap_err();
        assert!(err.to_string().contains("perfect square"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str(r#"{"experiment": "stability", "lr_warmup": 5}"#).unwrap_err();
        assert!(
            err.to_string().contains("unknown field `lr_warmup`"),
            "{err}"
        );
    }

    #[test]
    fn constraint_errors_name_the_key() {
        for (text, key) in [
            (
                r#"{"experiment": "stability", "replicates": 1}"#,
                "replicates",
            ),
            (r#"{"experiment": "stability", "eta": -1}"#, "eta"),
            (
                r#"{"experiment": "consensus-control", "t_gamma": [0, 3000]}"#,
                "t_gamma",
            ),
            (
                r#"{"experiment": "consensus-control", "t_gamma": [5, 1]}"#,
                "t_gamma",
            ),
            (
                r#"{"experiment": "compare", "kinds": ["ring", "exponential"], "m": 12}"#,
                "kinds",
            ),
            (r#"{"experiment": "topology", "kind": "torus"}"#, "kind"),
            (
                r#"{"experiment": "topology", "kind": "custom"}"#,
                "matrix_path",
            ),
            (r#"{"experiment": "bound", "alpha": 2}"#, "alpha"),
            (r#"{"kind": "ring"}"#, "experiment"),
        ] {
            let err = parse_config_str(text).unwrap_err();
            assert!(err.to_string().starts_with(key), "{text}: {err}");
        }
        assert!(parse_config_str("{not json").is_err());
        assert!(parse_config(Path::new("/nonexistent/config.json")).is_err());
    }

    #[test]
    fn task_and_plan_follow_seed() {
        let a = parse_config_str(r#"{"experiment": "stability", "seed": 3}"#).unwrap();
        let b = parse_config_str(r#"{"experiment": "stability", "seed": 4}"#).unwrap();
        assert_ne!(a.task().unwrap().w_star, b.task().unwrap().w_star);
        assert_eq!(a.task().unwrap(), a.task().unwrap());
        assert_ne!(a.plan().seed, b.plan().seed);
    }
}
