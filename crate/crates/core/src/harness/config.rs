use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Objective, OptimizerConfig, OptimizerKind};
use crate::unet::{DownMode, KernelCase, KernelSchedule, UNetConfig, UpMode};

/// Network section of an experiment file. Unset fields take the
/// standard network's values; the kernel schedule comes from
/// `kernel_schedule` if given, else from `kernel_case` adapted to the
/// depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_blocks: usize,
    pub base_channels: usize,
    pub kernel_case: KernelCase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_schedule: Option<KernelSchedule>,
    pub down_mode: DownMode,
    pub up_mode: UpMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        let std = UNetConfig::standard();
        ModelSection {
            n_blocks: std.n_blocks,
            base_channels: std.base_channels,
            kernel_case: KernelCase::A,
            kernel_schedule: None,
            down_mode: std.down_mode,
            up_mode: std.up_mode,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, objective: Objective) -> Result<UNetConfig> {
        let mut cfg = UNetConfig {
            n_blocks: self.n_blocks,
            base_channels: self.base_channels,
            down_mode: self.down_mode,
            up_mode: self.up_mode,
            objective,
            ..UNetConfig::with_blocks(self.n_blocks)
        };
        cfg.kernel_schedule = match &self.kernel_schedule {
            Some(s) => s.clone(),
            None => KernelSchedule::for_case(self.kernel_case, cfg.levels().max(1)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Optimizer section. Hyperparameters left unset take the defaults of
/// the chosen kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: None,
            momentum: None,
            beta1: None,
            beta2: None,
            epsilon: None,
        }
    }
}

impl OptimizerSection {
    pub fn to_config(&self) -> OptimizerConfig {
        let d = OptimizerConfig::default_for(self.kind);
        OptimizerConfig {
            kind: self.kind,
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            momentum: self.momentum.unwrap_or(d.momentum),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        }
    }
}

/// One training experiment, run once per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Feed the network `[trace, time]` images.
    pub transpose: bool,
    pub model: ModelSection,
    pub optimizer: OptimizerSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            objective: Objective::Direct,
            epochs: 50,
            batch_size: 16,
            train_data: PathBuf::from("train.dmlt"),
            val_data: PathBuf::from("val.dmlt"),
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("runs"),
            transpose: false,
            model: ModelSection::default(),
            optimizer: OptimizerSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative
    /// to the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub(crate) fn rebase(&mut self, dir: &Path) {
        for p in [&mut self.train_data, &mut self.val_data, &mut self.output_dir] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn unet(&self) -> Result<UNetConfig> {
        self.model.to_config(self.objective)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config(format!("seeds must be distinct: {:?}", self.seeds)));
        }
        let opt = self.optimizer.to_config();
        if !(opt.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.unet()?;
        Ok(())
    }
}
