//! Experiment files: TOML with one table per concern. Every table is
//! optional; commands complain about the fields they need.

use std::path::{Path, PathBuf};

use robustlab::attacks::AttackSpec;
use robustlab::data::{load_cifar_dir, load_dataset, DatasetHandle, SyntheticSpec};
use robustlab::harness::{Hyperparams, Schedule, SnapshotPlan};
use robustlab::transforms::GridSpec;
use serde::Deserialize;

use crate::CliError;

pub const DATA_DIR_ENV: &str = "RLAB_DATA_DIR";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    pub adversary: Option<AdversaryConfig>,
    pub robust: Option<RobustConfig>,
    pub nonrobust: Option<NonRobustConfig>,
    pub mix: Option<MixConfig>,
    /// Extra named attacks usable wherever a preset name is accepted.
    #[serde(default, rename = "custom_attack")]
    pub custom_attacks: Vec<CustomAttack>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<DataSource>,
    pub test: Option<DataSource>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// `synthetic`, `cifar` (directory of binary batches) or `rdst`.
    pub source: String,
    pub path: Option<PathBuf>,
    /// Keep only the first `limit` examples.
    pub limit: Option<usize>,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    pub noise: Option<f64>,
    pub tint: Option<f64>,
    pub glyph_reliability: Option<f64>,
}

fn default_size() -> usize {
    16
}
fn default_channels() -> usize {
    3
}
fn default_count() -> usize {
    2000
}

impl DataSource {
    pub fn rdst(path: PathBuf) -> Self {
        DataSource {
            source: "rdst".into(),
            path: Some(path),
            limit: None,
            size: default_size(),
            channels: default_channels(),
            count: default_count(),
            seed: 0,
            noise: None,
            tint: None,
            glyph_reliability: None,
        }
    }

    /// `field` names the config entry in error messages; `train` picks the
    /// CIFAR split.
    pub fn load(&self, field: &str, train: bool) -> Result<DatasetHandle, CliError> {
        let ds = match self.source.as_str() {
            "synthetic" => {
                let mut spec = SyntheticSpec::new(self.size, self.channels, self.count, self.seed);
                if let Some(v) = self.noise {
                    spec.noise = v;
                }
                if let Some(v) = self.tint {
                    spec.tint = v;
                }
                if let Some(v) = self.glyph_reliability {
                    spec.glyph_reliability = v;
                }
                spec.generate()?
            }
            "cifar" => load_cifar_dir(resolve_path(self.path.as_deref(), field, true)?, train)?,
            "rdst" => load_dataset(resolve_path(self.path.as_deref(), field, false)?)?,
            other => {
                return Err(CliError::Config(format!(
                    "{field}.source: unknown dataset source {other:?} (expected synthetic, cifar or rdst)"
                )))
            }
        };
        Ok(match self.limit {
            Some(n) if n < ds.len() => ds.subset(&(0..n).collect::<Vec<_>>())?,
            _ => ds,
        })
    }
}

/// Relative paths fall back to `RLAB_DATA_DIR` when they do not exist as
/// given. A directory source with no path uses the variable itself.
fn resolve_path(path: Option<&Path>, field: &str, dir_ok: bool) -> Result<PathBuf, CliError> {
    let root = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    match (path, root) {
        (Some(p), Some(root)) if p.is_relative() && !p.exists() => Ok(root.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(root)) if dir_ok => Ok(root),
        (None, _) => Err(CliError::Config(format!(
            "{field}.path: missing dataset path (set it in the config{})",
            if dir_ok { format!(" or via {DATA_DIR_ENV}") } else { String::new() }
        ))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_arch")]
    pub arch: String,
    /// Model to evaluate, attack or start from.
    pub checkpoint: Option<PathBuf>,
}

fn default_arch() -> String {
    "micro-resnet-small".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: default_arch(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub epochs: f64,
    pub milestones: Option<Vec<u64>>,
    pub epoch_period: Option<u64>,
    pub augmentation: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            lr: 0.02,
            weight_decay: 5e-4,
            momentum: 0.9,
            epochs: 10.0,
            milestones: None,
            epoch_period: None,
            augmentation: "none".into(),
        }
    }
}

impl TrainConfig {
    pub fn hyperparams(&self, seed: u64) -> Result<Hyperparams, CliError> {
        let schedule = match (&self.milestones, self.epoch_period) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("train: set milestones or epoch_period, not both".into()))
            }
            (Some(m), None) => Schedule::Milestones(m.clone()),
            (None, Some(p)) => Schedule::EpochPeriod(p),
            (None, None) => Schedule::Milestones(Vec::new()),
        };
        let h = Hyperparams {
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            momentum: self.momentum,
            epochs: self.epochs,
            schedule,
            augmentation: self.augmentation.clone(),
            seed,
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotConfig {
    pub dense_interval: u64,
    pub dense_until: f64,
    pub sparse_interval: f64,
    pub attacks: Vec<String>,
    pub eval_size: usize,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        let p = SnapshotPlan::default();
        SnapshotConfig {
            dense_interval: p.dense_interval,
            dense_until: p.dense_until,
            sparse_interval: p.sparse_interval,
            attacks: p.attacks,
            eval_size: p.eval_size,
        }
    }
}

impl SnapshotConfig {
    pub fn plan(&self) -> Result<SnapshotPlan, CliError> {
        let p = SnapshotPlan {
            dense_interval: self.dense_interval,
            dense_until: self.dense_until,
            sparse_interval: self.sparse_interval,
            attacks: self.attacks.clone(),
            eval_size: self.eval_size,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub presets: Vec<String>,
    /// Examples attacked by `attack` and `mix-sweep`; 0 means all.
    pub eval_size: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            presets: vec!["none".into()],
            eval_size: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub attack: String,
    #[serde(default)]
    pub ramp_epochs: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustConfig {
    #[serde(default = "default_repr_steps")]
    pub steps: usize,
    #[serde(default = "default_repr_step")]
    pub step_size: f64,
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub normalize: bool,
}

fn default_repr_steps() -> usize {
    200
}
fn default_repr_step() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonRobustConfig {
    pub attack: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub alphas: Vec<f64>,
    /// Robust images blended into every batch.
    pub robust: Option<DataSource>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAttack {
    pub name: String,
    /// `l2`, `linf` or `grid`.
    pub kind: String,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub step_size: f64,
    #[serde(default)]
    pub iterations: usize,
    pub random_start: Option<bool>,
    #[serde(default = "one")]
    pub translations_per_axis: usize,
    #[serde(default = "one")]
    pub rotations: usize,
    #[serde(default)]
    pub max_translation: f64,
    #[serde(default)]
    pub max_rotation: f64,
}

fn one() -> usize {
    1
}

impl CustomAttack {
    fn spec(&self) -> Result<AttackSpec, CliError> {
        let mut spec = match self.kind.as_str() {
            "l2" => AttackSpec::l2(self.epsilon, self.step_size, self.iterations),
            "linf" => AttackSpec::linf(self.epsilon, self.step_size, self.iterations),
            "grid" => AttackSpec::grid(GridSpec::new(
                &self.name,
                self.translations_per_axis,
                self.rotations,
                self.max_translation,
                self.max_rotation,
            )),
            other => {
                return Err(CliError::Config(format!(
                    "custom_attack {:?}: unknown kind {other:?} (expected l2, linf or grid)",
                    self.name
                )))
            }
        }
        .named(&self.name);
        if let Some(r) = self.random_start {
            spec = spec.with_random_start(r);
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        // fail early on dangling names
        for name in cfg.all_attack_names() {
            cfg.attack_spec(name)?;
        }
        Ok(cfg)
    }

    fn all_attack_names(&self) -> impl Iterator<Item = &String> {
        self.attack
            .presets
            .iter()
            .chain(&self.snapshots.attacks)
            .chain(self.adversary.iter().map(|a| &a.attack))
            .chain(self.nonrobust.iter().map(|a| &a.attack))
    }

    /// Custom attacks shadow built-in presets of the same name.
    pub fn attack_spec(&self, name: &str) -> Result<AttackSpec, CliError> {
        if let Some(c) = self.custom_attacks.iter().find(|c| c.name == name) {
            return c.spec();
        }
        AttackSpec::preset(name).ok_or_else(|| CliError::Config(format!("unknown attack preset {name:?}")))
    }

    pub fn attack_specs(&self, names: &[String]) -> Result<Vec<AttackSpec>, CliError> {
        names.iter().map(|n| self.attack_spec(n)).collect()
    }

    pub fn train_source(&self) -> Result<&DataSource, CliError> {
        self.data
            .train
            .as_ref()
            .ok_or_else(|| CliError::Config("data.train: missing dataset section".into()))
    }

    pub fn test_source(&self) -> Result<&DataSource, CliError> {
        self.data
            .test
            .as_ref()
            .ok_or_else(|| CliError::Config("data.test: missing dataset section".into()))
    }
}
