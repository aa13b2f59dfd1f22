//! Teacher training and the cached-logits file.
//!
//! The teacher is a fixed large sample of the hierarchy (four nodes per
//! level by default) scaled to roughly ten times the student parameter cap
//! and trained with plain cross-entropy. Its logits over the *full* dataset
//! are cached to disk so search-time distillation never re-runs the teacher.
//!
//! Logits file layout (`AKDL`): magic, `u32` sample count, `u32` class
//! count, `n x c` little-endian f32 logits row-major, then the 32-byte
//! dataset hash. Logits are held in memory as f32 as well, so a reload is
//! bit-identical to the freshly computed values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bohb::mix_seed;
use crate::diffengine::engine::{evaluate, predict};
use crate::diffengine::{train, EpochMetrics, KdLossConfig, TrainConfig, TrainData};
use crate::error::{Error, Result};
use crate::graphgen::{assemble, GeneratorHyperparams, GraphGenSpec};
use crate::harness::dataset::Dataset;
use crate::netbuilder::{scale_to_budget, BudgetConstraint, Model};

const LOGITS_MAGIC: &[u8; 4] = b"AKDL";

/// Cached teacher outputs aligned with dataset sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherLogits {
    pub n_samples: usize,
    pub n_classes: usize,
    /// Row-major `n x c`, stored as f32 to match the on-disk format exactly.
    pub logits: Vec<f32>,
    pub dataset_hash: [u8; 32],
}

impl TeacherLogits {
    /// Rows widened to f64 for the loss kernels.
    pub fn to_f64(&self) -> Vec<f64> {
        self.logits.iter().map(|&x| x as f64).collect()
    }

    /// Gathers rows (widened to f64) for a list of sample indices.
    pub fn gather_f64(&self, idx: &[usize]) -> Vec<f64> {
        let c = self.n_classes;
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend(self.logits[i * c..(i + 1) * c].iter().map(|&x| x as f64));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + self.logits.len() * 4 + 32);
        bytes.extend_from_slice(LOGITS_MAGIC);
        bytes.extend_from_slice(&(self.n_samples as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.n_classes as u32).to_le_bytes());
        for &x in &self.logits {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        bytes.extend_from_slice(&self.dataset_hash);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(path.display().to_string(), e))?;
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<TeacherLogits> {
        let name = path.display().to_string();
        let mut f =
            fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
        let bad = |m: &str| Error::Format { path: name.clone(), message: m.into() };
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic).map_err(|e| Error::io(name.clone(), e))?;
        if &magic != LOGITS_MAGIC {
            return Err(bad("bad magic, expected AKDL"));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf).map_err(|e| Error::io(name.clone(), e))?;
        let n_samples = u32::from_le_bytes(u32buf) as usize;
        f.read_exact(&mut u32buf).map_err(|e| Error::io(name.clone(), e))?;
        let n_classes = u32::from_le_bytes(u32buf) as usize;
        let mut logits = vec![0f32; n_samples * n_classes];
        let mut fbuf = [0u8; 4];
        for x in &mut logits {
            f.read_exact(&mut fbuf).map_err(|e| Error::io(name.clone(), e))?;
            *x = f32::from_le_bytes(fbuf);
        }
        let mut dataset_hash = [0u8; 32];
        f.read_exact(&mut dataset_hash)
            .map_err(|e| Error::io(name.clone(), e))?;
        let mut rest = Vec::new();
        f.read_to_end(&mut rest).map_err(|e| Error::io(name.clone(), e))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after dataset hash"));
        }
        Ok(TeacherLogits { n_samples, n_classes, logits, dataset_hash })
    }
}

/// How to build and train the teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSpec {
    /// Nodes per hierarchy level of the fixed teacher graph.
    pub level_n: usize,
    /// Edge probability of the per-level ER generators.
    pub er_p: f64,
    /// Parameter budget; keep this well above the student cap.
    pub params: u64,
    pub epochs: usize,
    /// Training below this validation accuracy is an error.
    pub min_val_accuracy: f64,
    pub base_lr: f64,
    pub batch_size: usize,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            level_n: 4,
            er_p: 0.6,
            params: 200_000,
            epochs: 120,
            min_val_accuracy: 0.8,
            base_lr: 0.1,
            batch_size: 32,
        }
    }
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<()> {
        if self.level_n == 0 {
            return Err(Error::Config("teacher level_n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.er_p) {
            return Err(Error::Config("teacher er_p must lie in [0,1]".into()));
        }
        if self.params == 0 || self.epochs == 0 {
            return Err(Error::Config("teacher params and epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_val_accuracy) {
            return Err(Error::Config("teacher accuracy floor must lie in [0,1]".into()));
        }
        Ok(())
    }

    fn theta(&self) -> GeneratorHyperparams {
        GeneratorHyperparams {
            top: GraphGenSpec::er(self.level_n, self.er_p),
            mid: GraphGenSpec::er(self.level_n, self.er_p),
            bottom: GraphGenSpec::er(self.level_n, self.er_p),
            kd_temperature: 1.0,
            kd_weight: 0.0, // the teacher trains on plain cross-entropy
        }
    }
}

/// Trains the teacher on the train split and caches its logits over the full
/// dataset. Fails with a teacher-quality error if the validation accuracy
/// lands below the configured floor.
pub fn train_teacher(
    dataset: &Dataset,
    spec: &TeacherSpec,
    seed: u64,
) -> Result<(Model, TeacherLogits, Vec<EpochMetrics>)> {
    spec.validate()?;
    let theta = spec.theta();
    let cap = theta.unit_count();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x7EAC]));
    let graph = assemble(&theta, cap, &mut rng)?;
    let model = scale_to_budget(
        &graph,
        dataset.mode,
        BudgetConstraint::new(spec.params),
        dataset.num_classes,
        &mut rng,
    )?;

    let (train_inputs, train_labels) = dataset.gather(&dataset.train_idx);
    let data = TrainData {
        inputs: &train_inputs,
        labels: &train_labels,
        teacher_logits: None,
        n: train_labels.len(),
    };
    let cfg = TrainConfig {
        base_lr: spec.base_lr,
        momentum: 0.9,
        batch_size: spec.batch_size,
        kd: KdLossConfig::cross_entropy_only(),
    };
    let (model, metrics) = train(model, &data, cfg, spec.epochs, mix_seed(seed, &[0x7EAD]))?;

    let (val_inputs, val_labels) = dataset.gather(&dataset.val_idx);
    let (val_acc, _) = evaluate(
        &model,
        &val_inputs,
        &val_labels,
        None,
        &KdLossConfig::cross_entropy_only(),
    )?;
    if val_acc < spec.min_val_accuracy {
        return Err(Error::TeacherQuality { accuracy: val_acc, floor: spec.min_val_accuracy });
    }

    let logits64 = predict(&model, &dataset.inputs, dataset.n())?;
    let logits = TeacherLogits {
        n_samples: dataset.n(),
        n_classes: dataset.num_classes,
        logits: logits64.iter().map(|&x| x as f32).collect(),
        dataset_hash: dataset.content_hash(),
    };
    Ok((model, logits, metrics))
}

/// Writes the teacher checkpoint next to its logits.
pub fn save_teacher(model: &Model, checkpoint_path: &Path) -> Result<()> {
    if let Some(parent) = checkpoint_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(checkpoint_path.display().to_string(), e))?;
        }
    }
    let mut bytes = Vec::new();
    model
        .save(&mut bytes)
        .map_err(|e| Error::io(checkpoint_path.display().to_string(), e))?;
    let mut f = fs::File::create(checkpoint_path)
        .map_err(|e| Error::io(checkpoint_path.display().to_string(), e))?;
    f.write_all(&bytes)
        .map_err(|e| Error::io(checkpoint_path.display().to_string(), e))
}
