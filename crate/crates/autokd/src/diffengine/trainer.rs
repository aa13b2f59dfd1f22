//! Mini-batch SGD with momentum and a cosine learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffengine::engine::{backward, BackwardResult};
use crate::diffengine::{Batch, KdLossConfig};
use crate::error::{Error, Result};
use crate::netbuilder::{Model, RUNNING_STAT_MOMENTUM};

/// Optimizer and batching knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub kd: KdLossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.1,
            momentum: 0.9,
            batch_size: 32,
            kd: KdLossConfig::cross_entropy_only(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Parameter("base_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter("momentum must lie in [0,1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        self.kd.validate()
    }
}

/// A full training set, borrowed by the trainer.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    /// `n x input_len`, row-major.
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
    /// `n x num_classes`, aligned with `inputs`; required when the KD weight
    /// is positive.
    pub teacher_logits: Option<&'a [f64]>,
    pub n: usize,
}

/// Per-epoch training metrics (losses are per-sample means).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

/// One momentum-SGD update: `v = momentum * v + g; p -= lr * v`.
///
/// `lr = 0` is allowed and leaves the parameters untouched.
pub fn sgd_step(
    model: &mut Model,
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if lr < 0.0 {
        return Err(Error::Parameter("learning rate must be nonnegative".into()));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::Parameter("momentum must lie in [0,1)".into()));
    }
    let total = model.param_count() as usize;
    if grads.len() != total || velocity.len() != total {
        return Err(Error::Parameter(format!(
            "gradient/velocity length must equal the parameter count {total}"
        )));
    }
    let mut offset = 0;
    for block in model.param_blocks_mut() {
        for (j, p) in block.iter_mut().enumerate() {
            let i = offset + j;
            velocity[i] = momentum * velocity[i] + grads[i];
            *p -= lr * velocity[i];
        }
        offset += block.len();
    }
    Ok(())
}

/// Owns a model through one training run. Epochs can be stepped one at a time
/// so callers may interleave their own evaluation.
pub struct Trainer {
    model: Model,
    velocity: Vec<f64>,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
    total_epochs: usize,
    next_epoch: usize,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig, total_epochs: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if total_epochs == 0 {
            return Err(Error::Parameter("training budget must be >= 1 epoch".into()));
        }
        let velocity = vec![0.0; model.param_count() as usize];
        Ok(Trainer {
            model,
            velocity,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            total_epochs,
            next_epoch: 0,
        })
    }

    /// Cosine decay from the base rate over the declared budget.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let t = epoch as f64 / self.total_epochs as f64;
        self.cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// Runs one epoch of shuffled mini-batch SGD.
    pub fn step_epoch(&mut self, data: &TrainData) -> Result<EpochMetrics> {
        if self.next_epoch >= self.total_epochs {
            return Err(Error::Parameter(format!(
                "training budget of {} epochs is exhausted",
                self.total_epochs
            )));
        }
        if data.n == 0 {
            return Err(Error::Parameter("training set is empty".into()));
        }
        let input_len = self.model.input_len();
        let classes = self.model.num_classes;
        if self.cfg.kd.weight > 0.0 && data.teacher_logits.is_none() {
            return Err(Error::Config(
                "kd weight is positive but no teacher logits were supplied".into(),
            ));
        }

        let lr = self.lr_at(self.next_epoch);
        let mut order: Vec<usize> = (0..data.n).collect();
        order.shuffle(&mut self.rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut batch_inputs = Vec::new();
        let mut batch_labels = Vec::new();
        let mut batch_teacher = Vec::new();
        for chunk in order.chunks(self.cfg.batch_size) {
            batch_inputs.clear();
            batch_labels.clear();
            batch_teacher.clear();
            for &i in chunk {
                batch_inputs.extend_from_slice(&data.inputs[i * input_len..(i + 1) * input_len]);
                batch_labels.push(data.labels[i]);
                if let Some(t) = data.teacher_logits {
                    batch_teacher.extend_from_slice(&t[i * classes..(i + 1) * classes]);
                }
            }
            let batch = Batch {
                inputs: &batch_inputs,
                labels: &batch_labels,
                teacher_logits: data.teacher_logits.map(|_| batch_teacher.as_slice()),
                n: chunk.len(),
            };
            let BackwardResult { loss, logits, grads, norm_stats } =
                backward(&self.model, &batch, &self.cfg.kd)?;
            sgd_step(&mut self.model, &grads, &mut self.velocity, lr, self.cfg.momentum)?;

            // Blend the batch statistics into the running averages.
            for (id, mean, var) in norm_stats {
                let unit = &mut self.model.units[id - 1];
                for ch in 0..unit.out_width {
                    unit.run_mean[ch] = RUNNING_STAT_MOMENTUM * unit.run_mean[ch]
                        + (1.0 - RUNNING_STAT_MOMENTUM) * mean[ch];
                    unit.run_var[ch] = RUNNING_STAT_MOMENTUM * unit.run_var[ch]
                        + (1.0 - RUNNING_STAT_MOMENTUM) * var[ch];
                }
            }

            loss_sum += loss * chunk.len() as f64;
            for (row, &label) in chunk.iter().enumerate().map(|(i, _)| i).zip(&batch_labels) {
                let logit_row = &logits[row * classes..(row + 1) * classes];
                let pred = logit_row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                if pred == label {
                    correct += 1;
                }
            }
        }

        let metrics = EpochMetrics {
            epoch: self.next_epoch,
            lr,
            train_loss: loss_sum / data.n as f64,
            train_accuracy: correct as f64 / data.n as f64,
        };
        self.next_epoch += 1;
        Ok(metrics)
    }
}

/// Trains for `epochs` epochs and returns the trained model with one metrics
/// entry per epoch. Deterministic per `(model, data, cfg, epochs, seed)`.
pub fn train(
    model: Model,
    data: &TrainData,
    cfg: TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<(Model, Vec<EpochMetrics>)> {
    if epochs == 0 {
        return Err(Error::Parameter("training budget must be >= 1 epoch".into()));
    }
    let mut trainer = Trainer::new(model, cfg, epochs, seed)?;
    let mut metrics = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        metrics.push(trainer.step_epoch(data)?);
    }
    Ok((trainer.into_model(), metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffengine::engine::evaluate;
    use crate::netbuilder::{materialize, InputMode};
    use rand::{Rng, SeedableRng};

    fn toy_model(units: usize, dims: usize, classes: usize, width: usize, seed: u64) -> Model {
        let g = crate::netbuilder::chain_graph(units);
        materialize(
            &g,
            InputMode::Vector { dims },
            width,
            classes,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn sgd_update_formula() {
        let mut m = toy_model(1, 2, 2, 1, 0);
        let total = m.param_count() as usize;
        let mut flat = vec![0.0; total];
        flat[0] = 1.0;
        m.set_flat_params(&flat).unwrap();
        let mut grads = vec![0.0; total];
        grads[0] = 2.0;
        let mut vel = vec![0.0; total];
        sgd_step(&mut m, &grads, &mut vel, 0.1, 0.0).unwrap();
        assert!((m.flat_params()[0] - 0.8).abs() < 1e-15);

        // lr = 0 leaves everything untouched.
        let before = m.flat_params();
        sgd_step(&mut m, &grads, &mut vel, 0.0, 0.5).unwrap();
        assert_eq!(m.flat_params(), before);

        assert!(sgd_step(&mut m, &grads, &mut vel, -0.1, 0.0).is_err());
        assert!(sgd_step(&mut m, &grads, &mut vel, 0.1, 1.0).is_err());
    }

    #[test]
    fn sgd_descends_a_convex_quadratic() {
        // Loss = sum (p - c)^2 on the model's own parameters.
        let mut m = toy_model(1, 2, 2, 2, 3);
        let total = m.param_count() as usize;
        let target: Vec<f64> = (0..total).map(|i| (i % 5) as f64 * 0.2).collect();
        let mut vel = vec![0.0; total];
        let loss_of = |m: &Model| -> f64 {
            m.flat_params()
                .iter()
                .zip(&target)
                .map(|(p, c)| (p - c) * (p - c))
                .sum()
        };
        let mut last = loss_of(&m);
        for _ in 0..10 {
            let grads: Vec<f64> = m
                .flat_params()
                .iter()
                .zip(&target)
                .map(|(p, c)| 2.0 * (p - c))
                .collect();
            sgd_step(&mut m, &grads, &mut vel, 0.05, 0.5).unwrap();
            let now = loss_of(&m);
            assert!(now < last, "loss failed to decrease: {last} -> {now}");
            last = now;
        }
    }

    fn blob_data(
        n_per_class: usize,
        seed: u64,
    ) -> (Vec<f64>, Vec<usize>) {
        // Two well-separated Gaussian blobs in the positive quadrant.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.25, 0.25], [0.75, 0.75]];
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per_class {
                inputs.push(center[0] + 0.03 * (rng.random::<f64>() - 0.5));
                inputs.push(center[1] + 0.03 * (rng.random::<f64>() - 0.5));
                labels.push(c);
            }
        }
        (inputs, labels)
    }

    #[test]
    fn train_rejects_zero_budget() {
        let m = toy_model(1, 2, 2, 2, 0);
        let (inputs, labels) = blob_data(4, 0);
        let data = TrainData { inputs: &inputs, labels: &labels, teacher_logits: None, n: 8 };
        assert!(train(m, &data, TrainConfig::default(), 0, 1).is_err());
    }

    #[test]
    fn train_is_deterministic_per_seed() {
        let (inputs, labels) = blob_data(8, 1);
        let data = TrainData { inputs: &inputs, labels: &labels, teacher_logits: None, n: 16 };
        let cfg = TrainConfig { batch_size: 4, ..TrainConfig::default() };
        let run = |seed: u64| {
            let m = toy_model(2, 2, 2, 3, 7);
            let (trained, metrics) = train(m, &data, cfg, 5, seed).unwrap();
            (trained.flat_params(), metrics)
        };
        let (p1, m1) = run(11);
        let (p2, m2) = run(11);
        assert_eq!(p1, p2);
        assert_eq!(m1, m2);
        let (p3, _) = run(12);
        assert_ne!(p1, p3);
    }

    #[test]
    fn train_separates_linearly_separable_blobs() {
        let (inputs, labels) = blob_data(40, 5);
        let n = labels.len();
        let data = TrainData { inputs: &inputs, labels: &labels, teacher_logits: None, n };
        let m = toy_model(2, 2, 2, 6, 2);
        let cfg = TrainConfig { base_lr: 0.05, batch_size: 16, ..TrainConfig::default() };
        let (trained, metrics) = train(m, &data, cfg, 20, 3).unwrap();
        assert_eq!(metrics.len(), 20);
        let (acc, _) = evaluate(&trained, &inputs, &labels, None, &KdLossConfig::cross_entropy_only())
            .unwrap();
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn cosine_schedule_starts_at_base_and_decays() {
        let m = toy_model(1, 2, 2, 2, 0);
        let trainer = Trainer::new(m, TrainConfig::default(), 10, 0).unwrap();
        assert!((trainer.lr_at(0) - 0.1).abs() < 1e-12);
        assert!(trainer.lr_at(9) < trainer.lr_at(5));
        assert!(trainer.lr_at(5) < trainer.lr_at(1));
    }
}
