//! The run configuration file.
//!
//! Plain TOML with one section per concern; every key has a default, so an
//! empty file is a valid desk-scale run. Unknown keys are rejected
//! everywhere. Paths are resolved relative to the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bohb::{BohbConfig, SearchSpace};
use crate::diffengine::{KdLossConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::harness::dataset::{make_synthetic, Dataset, DatasetKind};
use crate::harness::teacher::TeacherSpec;
use crate::netbuilder::InputMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Vector,
    Image,
}

/// `[dataset]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub mode: ModeKind,
    pub samples: usize,
    pub classes: usize,
    /// Feature count in vector mode; image side in image mode.
    pub dims: usize,
    pub noise: f64,
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Spirals,
            mode: ModeKind::Vector,
            samples: 512,
            classes: 2,
            dims: 2,
            noise: 0.03,
            val_fraction: 0.2,
        }
    }
}

impl DatasetConfig {
    pub fn input_mode(&self) -> InputMode {
        match self.mode {
            ModeKind::Vector => InputMode::Vector { dims: self.dims },
            ModeKind::Image => InputMode::Image {
                channels: 1,
                height: self.dims,
                width: self.dims,
            },
        }
    }

    pub fn build(&self, seed: u64) -> Result<Dataset> {
        make_synthetic(
            self.kind,
            self.input_mode(),
            self.samples,
            self.classes,
            self.noise,
            seed,
            self.val_fraction,
        )
    }
}

/// `[search]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub master_seed: u64,
    /// Hyperband iterations looped over the bracket schedule.
    pub iterations: usize,
    /// Student parameter cap.
    pub student_params: u64,
    /// Worker threads per rung; 0 uses all cores.
    pub workers: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            master_seed: 42,
            iterations: 1,
            student_params: 20_000,
            workers: 0,
        }
    }
}

/// `[train]` - student optimizer knobs (the KD part of the loss comes from
/// the searched configuration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub base_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { base_lr: 0.1, momentum: 0.9, batch_size: 32 }
    }
}

/// `[teacher]` - training knobs plus cache paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSettings {
    pub logits_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub level_n: usize,
    pub er_p: f64,
    pub params: u64,
    pub epochs: usize,
    pub min_val_accuracy: f64,
    pub base_lr: f64,
    pub batch_size: usize,
}

impl Default for TeacherSettings {
    fn default() -> Self {
        let spec = TeacherSpec::default();
        TeacherSettings {
            logits_path: PathBuf::from("teacher_logits.akdl"),
            checkpoint_path: PathBuf::from("teacher.akdm"),
            level_n: spec.level_n,
            er_p: spec.er_p,
            params: spec.params,
            epochs: spec.epochs,
            min_val_accuracy: spec.min_val_accuracy,
            base_lr: spec.base_lr,
            batch_size: spec.batch_size,
        }
    }
}

impl TeacherSettings {
    pub fn spec(&self) -> TeacherSpec {
        TeacherSpec {
            level_n: self.level_n,
            er_p: self.er_p,
            params: self.params,
            epochs: self.epochs,
            min_val_accuracy: self.min_val_accuracy,
            base_lr: self.base_lr,
            batch_size: self.batch_size,
        }
    }
}

/// `[retrain]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrainSettings {
    /// Architectures sampled from the winning generator.
    pub samples: usize,
    /// Epochs per sample; 0 means five times the largest search budget.
    pub budget: u32,
}

impl Default for RetrainSettings {
    fn default() -> Self {
        RetrainSettings { samples: 8, budget: 0 }
    }
}

/// `[ablation]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSettings {
    pub tau_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub budget: u32,
    pub seed: u64,
    pub out_path: PathBuf,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            tau_values: vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            alpha_values: vec![0.0, 0.1, 0.2, 0.5, 0.7, 0.9],
            budget: 6,
            seed: 7,
            out_path: PathBuf::from("ablation.csv"),
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub search: SearchSettings,
    pub bohb: BohbConfig,
    pub space: SearchSpace,
    pub train: TrainSettings,
    pub teacher: TeacherSettings,
    pub retrain: RetrainSettings,
    pub ablation: AblationSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
            Error::Config(format!("{}: {}", path.display(), e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bohb.validate()?;
        self.space.validate()?;
        self.teacher.spec().validate()?;
        if self.dataset.samples == 0 || self.dataset.classes < 2 {
            return Err(Error::Config("dataset needs samples and >= 2 classes".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0,1)".into()));
        }
        if self.search.student_params == 0 {
            return Err(Error::Config("student_params must be positive".into()));
        }
        if self.teacher.params <= self.search.student_params {
            return Err(Error::Config(format!(
                "teacher budget ({}) must exceed the student cap ({})",
                self.teacher.params, self.search.student_params
            )));
        }
        if self.search.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.train.base_lr > 0.0) {
            return Err(Error::Config("train.base_lr must be positive".into()));
        }
        if self.retrain.samples == 0 {
            return Err(Error::Config("retrain.samples must be >= 1".into()));
        }
        if self.ablation.tau_values.is_empty() || self.ablation.alpha_values.is_empty() {
            return Err(Error::Config("ablation grids must be non-empty".into()));
        }
        Ok(())
    }

    /// Optimizer config for one student trial with its searched KD settings.
    pub fn train_config(&self, kd: KdLossConfig) -> TrainConfig {
        TrainConfig {
            base_lr: self.train.base_lr,
            momentum: self.train.momentum,
            batch_size: self.train.batch_size,
            kd,
        }
    }

    /// Retrain budget with the `0 = 5 x b_max` default applied.
    pub fn effective_retrain_budget(&self) -> u32 {
        if self.retrain.budget == 0 {
            5 * self.bohb.b_max
        } else {
            self.retrain.budget
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default_run() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.effective_retrain_budget(), 40);
    }

    #[test]
    fn sections_parse_and_unknown_keys_are_rejected() {
        let cfg: RunConfig = toml::from_str(
            r#"
            [dataset]
            kind = "blobs"
            mode = "image"
            samples = 128
            dims = 8

            [search]
            master_seed = 7
            student_params = 9000

            [bohb]
            eta = 3
            b_min = 1
            b_max = 9

            [teacher]
            params = 90001
            "#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.kind, DatasetKind::Blobs);
        assert_eq!(cfg.dataset.mode, ModeKind::Image);
        assert_eq!(cfg.bohb.eta, 3);
        assert_eq!(cfg.teacher.params, 90001);
        cfg.validate().unwrap();

        let err = toml::from_str::<RunConfig>("[search]\nmaster_sead = 7\n");
        assert!(err.is_err(), "typoed key must be rejected");
        let err = toml::from_str::<RunConfig>("[nonsense]\nx = 1\n");
        assert!(err.is_err(), "unknown section must be rejected");
    }

    #[test]
    fn validation_catches_inconsistencies() {
        let mut cfg = RunConfig::default();
        cfg.teacher.params = cfg.search.student_params; // not strictly larger
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.dataset.classes = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.ablation.tau_values.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
