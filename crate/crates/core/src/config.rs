//! Experiment configuration: TOML schema and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackKind};
use crate::error::{Error, Result};
use crate::filters::FilterRule;
use crate::projection::target_dimension;
use crate::sim::data::SyntheticSpec;
use crate::sim::model::ModelSpec;
use crate::sim::partition::PartitionSpec;
use crate::sim::train::TrainConfig;
use crate::stpc::CostTable;

/// Which pipeline the servers run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Shares projected to `k` dimensions before distances and norms.
    #[default]
    Abbr,
    /// Same secure pipeline at the original dimension.
    BaselineFullDim,
    /// No sharing, no projection: the plain defense.
    PlaintextMirror,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Abbr => "abbr",
            Mode::BaselineFullDim => "baseline-full-dim",
            Mode::PlaintextMirror => "plaintext-mirror",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub epsilon: f64,
    pub eta: f64,
    /// Seed shared by both servers; derived from the experiment seed if unset.
    pub seed: Option<u64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            eta: 1.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    pub filter: FilterRule,
    /// Adaptive norm clipping after filtering.
    #[serde(default = "yes")]
    pub clipping: bool,
}

fn yes() -> bool {
    true
}

impl DefenseConfig {
    /// Plain mean, no clipping.
    pub fn none() -> Self {
        Self {
            filter: FilterRule::None,
            clipping: false,
        }
    }
}

/// Client updates drawn directly, without training: each client submits
/// `G + center * s + noise`, attackers also add `attacker_offset * t` for a
/// second sign vector `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    pub dim: usize,
    /// Magnitude of the benign mean update, a random sign vector.
    #[serde(default = "default_vector_center")]
    pub center: f64,
    /// Per-coordinate noise standard deviation.
    #[serde(default = "default_vector_noise")]
    pub noise: f64,
    /// Per-coordinate shift of the byzantine cluster, along a random sign vector.
    #[serde(default = "default_vector_offset")]
    pub attacker_offset: f64,
}

fn default_vector_center() -> f64 {
    1.0
}
fn default_vector_noise() -> f64 {
    0.1
}
fn default_vector_offset() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Keep only these classes (relabelled in order).
        #[serde(default)]
        classes: Option<Vec<u32>>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
    Vectors(VectorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_partition")]
    pub partition: PartitionSpec,
}

fn default_partition() -> PartitionSpec {
    PartitionSpec::Dirichlet { alpha: 0.5 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub model: ModelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let sgd = TrainConfig::default();
        Self {
            model: ModelSpec::Logistic,
            epochs: sgd.epochs,
            batch_size: sgd.batch_size,
            learning_rate: sgd.learning_rate,
        }
    }
}

impl TrainingConfig {
    pub fn sgd(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Training rounds `T`.
    pub rounds: usize,
    /// Client population `m`.
    pub clients: usize,
    /// Clients sampled per round `n`.
    pub per_round: usize,
    #[serde(default = "default_precision")]
    pub precision: u32,
    #[serde(default)]
    pub projection: ProjectionConfig,
    pub defense: DefenseConfig,
    #[serde(default = "AttackConfig::none")]
    pub attack: AttackConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub costs: CostTable,
}

fn default_precision() -> u32 {
    crate::ring::DEFAULT_PRECISION
}

fn bad(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

impl ExperimentConfig {
    /// Parses TOML; deserialization errors carry the offending field path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| bad("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(&path, e.into_inner().message().trim().to_string())
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Makes dataset paths relative to `dir` absolute.
    pub fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.data.source {
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(train_images);
                fix(train_labels);
                fix(test_images);
                fix(test_labels);
            }
            DataSource::Csv { train, test } => {
                fix(train);
                fix(test);
            }
            _ => {}
        }
    }

    /// Seed shared by the servers for the projection matrix.
    pub fn projection_seed(&self) -> u64 {
        self.projection.seed.unwrap_or(self.seed ^ 0x9e37_79b9_7f4a_7c15)
    }

    /// Target dimension for this configuration.
    pub fn target_dimension(&self) -> Result<usize> {
        target_dimension(self.per_round, self.projection.epsilon, self.projection.eta)
    }

    /// Byzantine clients in the population and per round.
    pub fn byzantine_counts(&self) -> (usize, usize) {
        (
            self.attack.byzantine_count(self.clients),
            self.attack.byzantine_count(self.per_round),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.per_round;
        if self.clients == 0 {
            return Err(bad("clients", "must be at least 1"));
        }
        if n < 2 || n > self.clients {
            return Err(bad("per_round", format!("must lie in 2..={}", self.clients)));
        }
        if !(1..=30).contains(&self.precision) {
            return Err(bad("precision", "must lie in 1..=30"));
        }
        let p = &self.projection;
        if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
            return Err(bad("projection.epsilon", "must lie in (0, 1)"));
        }
        if !(p.eta > 0.0 && p.eta.is_finite()) {
            return Err(bad("projection.eta", "must be positive"));
        }
        self.costs.validate().map_err(|e| bad("costs", e.to_string()))?;

        match self.defense.filter {
            FilterRule::MultiKrum { f, m_sel } => {
                if n < f + 3 || 2 * f >= n {
                    return Err(bad("defense.filter.f", format!("needs n >= f + 3 and 2f < n with n = {n}")));
                }
                if m_sel == 0 || m_sel > n - f {
                    return Err(bad("defense.filter.m_sel", format!("must lie in 1..={}", n - f)));
                }
            }
            FilterRule::Faba { f } if 2 * f >= n => {
                return Err(bad("defense.filter.f", format!("needs f < n/2 with n = {n}")));
            }
            FilterRule::Flame if n < 3 => {
                return Err(bad("defense.filter", "flame needs per_round >= 3"));
            }
            _ => {}
        }

        self.attack
            .validate(n)
            .map_err(|e| bad("attack", e.to_string()))?;
        let (pool, per) = self.byzantine_counts();
        if per > pool || n - per > self.clients - pool {
            return Err(bad(
                "attack.byzantine_fraction",
                format!("{pool} byzantine of {} clients cannot fill {per} of {n} per round", self.clients),
            ));
        }

        let t = &self.training;
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(bad("training.learning_rate", "must be positive"));
        }
        if t.batch_size == 0 {
            return Err(bad("training.batch_size", "must be at least 1"));
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.training.model {
            return Err(bad("training.model.hidden", "must be at least 1"));
        }

        match &self.data.source {
            DataSource::Synthetic(spec) => {
                if spec.classes < 2 || spec.features == 0 || spec.train_per_class == 0 {
                    return Err(bad("data.source", "synthetic task needs classes >= 2, features >= 1, train_per_class >= 1"));
                }
                if !(spec.noise >= 0.0 && spec.separation.is_finite()) {
                    return Err(bad("data.source", "noise and separation must be finite, noise >= 0"));
                }
            }
            DataSource::Vectors(spec) => {
                if spec.dim == 0 {
                    return Err(bad("data.source.dim", "must be at least 1"));
                }
                if self.attack.behavior.is_data_attack() {
                    return Err(bad("attack.behavior", "data attacks need a training workload"));
                }
            }
            DataSource::Idx { classes: Some(c), .. } if c.len() < 2 => {
                return Err(bad("data.source.classes", "keep at least two classes"));
            }
            _ => {}
        }
        match self.data.partition {
            PartitionSpec::Dirichlet { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(bad("data.partition.alpha", "must be positive"));
            }
            PartitionSpec::Grouped { bias } if !(0.0..=1.0).contains(&bias) => {
                return Err(bad("data.partition.bias", "must lie in [0, 1]"));
            }
            _ => {}
        }
        if let AttackKind::AdaptiveMd { .. } | AttackKind::AdaptiveAt { .. } | AttackKind::Gaussian =
            self.attack.behavior
        {
            if self.byzantine_counts().1 == 0 {
                log::warn!("attack configured but no byzantine client is sampled per round");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
rounds = 3
clients = 10
per_round = 5

[defense]
filter = { rule = "faba", f = 1 }

[data.source]
kind = "vectors"
dim = 32
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, Mode::Abbr);
        assert_eq!(cfg.precision, 20);
        assert!(cfg.defense.clipping);
        assert_eq!(cfg.data.partition, PartitionSpec::Dirichlet { alpha: 0.5 });
        assert_eq!(cfg.training.epochs, 2);
        assert_eq!(cfg.training.batch_size, 64);
        assert_eq!(cfg.attack.byzantine_fraction, 0.0);
    }

    #[test]
    fn unknown_field_reports_path() {
        let text = MINIMAL.replace("dim = 32", "dim = 32\nbogus = 1");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with("data"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_path() {
        let text = MINIMAL.replace("rounds = 3", "rounds = \"three\"");
        match ExperimentConfig::from_toml(&text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "rounds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_paths() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.defense.filter = FilterRule::Faba { f: 3 };
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "defense.filter.f"));
        cfg.defense.filter = FilterRule::Flame;
        cfg.projection.epsilon = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "projection.epsilon"));
    }

    #[test]
    fn majority_attack_rejected() {
        let text = format!(
            "{MINIMAL}\n[attack]\nbyzantine_fraction = 0.6\nbehavior = {{ kind = \"gaussian\" }}\n"
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "attack"));
    }

    #[test]
    fn md_threshold_is_required() {
        let text = format!(
            "{MINIMAL}\n[attack]\nbyzantine_fraction = 0.2\nbehavior = {{ kind = \"adaptive-md\" }}\n"
        );
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config { .. })));
    }
}
