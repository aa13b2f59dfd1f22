//! Losses, reverse-mode gradients, and the training loop.
//!
//! The distillation objective mixes plain cross-entropy on the labels with
//! the KL divergence between the teacher's and the student's
//! temperature-softened class distributions:
//!
//! ```text
//! l = (1 - alpha) * CE(student, label)
//!   + alpha * KL(softmax(teacher / tau) || softmax(student / tau))
//! ```
//!
//! The KL term is taken in that argument order (teacher first) and is *not*
//! multiplied by `tau^2` unless [`KdLossConfig::tau_squared_scaling`] is set;
//! the conventional scaling is available behind that flag. Batch losses are
//! reported as per-sample means.
//!
//! [`engine`] walks the model graph forwards and backwards; every analytic
//! gradient is validated against central finite differences in the tests.

pub mod engine;
pub mod trainer;

pub use engine::{backward, predict, BackwardResult};
pub use trainer::{sgd_step, train, EpochMetrics, TrainConfig, TrainData, Trainer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the distillation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdLossConfig {
    /// Softmax temperature, `>= 1`.
    pub temperature: f64,
    /// KL mixture weight, in `[0, 1]`. At 0 the loss is plain cross-entropy
    /// and independent of the temperature.
    pub weight: f64,
    /// Multiply the KL term by `tau^2` (off by default).
    #[serde(default)]
    pub tau_squared_scaling: bool,
}

impl KdLossConfig {
    pub fn new(temperature: f64, weight: f64) -> Self {
        KdLossConfig { temperature, weight, tau_squared_scaling: false }
    }

    /// Plain cross-entropy (no teacher involved).
    pub fn cross_entropy_only() -> Self {
        KdLossConfig::new(1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 1.0) {
            return Err(Error::Parameter(format!(
                "kd temperature must be >= 1, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::Parameter(format!(
                "kd weight must lie in [0,1], got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// One batch of samples, borrowed from the owning dataset.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    /// `n x input_len`, row-major.
    pub inputs: &'a [f64],
    /// `n` class indices.
    pub labels: &'a [usize],
    /// `n x num_classes` teacher logits; may be absent when the KL weight is 0.
    pub teacher_logits: Option<&'a [f64]>,
    pub n: usize,
}

impl<'a> Batch<'a> {
    pub fn validate(&self, input_len: usize, num_classes: usize) -> Result<()> {
        if self.inputs.len() != self.n * input_len {
            return Err(Error::Parameter(format!(
                "batch inputs have length {}, expected {} x {}",
                self.inputs.len(),
                self.n,
                input_len
            )));
        }
        if self.labels.len() != self.n {
            return Err(Error::Parameter("one label per sample required".into()));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Parameter(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        if let Some(t) = self.teacher_logits {
            if t.len() != self.n * num_classes {
                return Err(Error::Parameter(
                    "teacher logits must be n x num_classes".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Temperature-scaled softmax, computed with max subtraction.
pub fn softmax_t(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!(
            "softmax temperature must be > 0, got {tau}"
        )));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - m) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    Ok(out)
}

/// `-log softmax(logits)[label]`, numerically stable.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Parameter(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    Ok(lse - (logits[label] - m))
}

/// `sum p ln(p/q)` with the `0 ln 0 = 0` convention.
pub fn kl_div(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Parameter(
            "kl_div requires distributions of equal length".into(),
        ));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// Per-sample distillation loss; see the module docs for the formula.
pub fn kd_loss(
    student_logits: &[f64],
    teacher_logits: Option<&[f64]>,
    label: usize,
    cfg: &KdLossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let alpha = cfg.weight;
    if alpha == 0.0 {
        return cross_entropy(student_logits, label);
    }
    let teacher = teacher_logits.ok_or_else(|| {
        Error::Config("kd weight is positive but no teacher logits were provided".into())
    })?;
    if teacher.len() != student_logits.len() {
        return Err(Error::Parameter(
            "teacher and student logit lengths differ".into(),
        ));
    }
    let tau = cfg.temperature;
    let scale = if cfg.tau_squared_scaling { tau * tau } else { 1.0 };
    let kl = kl_div(&softmax_t(teacher, tau)?, &softmax_t(student_logits, tau)?)?;
    if alpha == 1.0 {
        return Ok(scale * kl);
    }
    Ok((1.0 - alpha) * cross_entropy(student_logits, label)? + alpha * scale * kl)
}

/// Loss and its gradient with respect to the student logits.
pub fn kd_loss_grad(
    student_logits: &[f64],
    teacher_logits: Option<&[f64]>,
    label: usize,
    cfg: &KdLossConfig,
) -> Result<(f64, Vec<f64>)> {
    let loss = kd_loss(student_logits, teacher_logits, label, cfg)?;
    let alpha = cfg.weight;
    let classes = student_logits.len();
    let mut grad = vec![0.0; classes];
    if alpha < 1.0 {
        let p = softmax_t(student_logits, 1.0)?;
        for j in 0..classes {
            grad[j] += (1.0 - alpha) * (p[j] - if j == label { 1.0 } else { 0.0 });
        }
    }
    if alpha > 0.0 {
        let teacher = teacher_logits.expect("validated by kd_loss");
        let tau = cfg.temperature;
        let scale = if cfg.tau_squared_scaling { tau * tau } else { 1.0 };
        let pt = softmax_t(teacher, tau)?;
        let qs = softmax_t(student_logits, tau)?;
        for j in 0..classes {
            grad[j] += alpha * scale * (qs[j] - pt[j]) / tau;
        }
    }
    Ok((loss, grad))
}
