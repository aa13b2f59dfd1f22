//! Synthetic datasets and deterministic train/validation splits.
//!
//! Two families, each available in vector and image form:
//!
//! - `blobs`: one Gaussian cluster per class. In image form each class gets a
//!   smooth random intensity pattern.
//! - `spirals`: interleaved spiral arms, one per class. In image form each
//!   sample renders its spiral point as a bright bump on the grid.
//!
//! Features live in the unit box (plus noise), so the relu at the entry of
//! the first operation units passes them through essentially unchanged.
//! Everything, including the split, is a pure function of the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bohb::mix_seed;
use crate::error::{Error, Result};
use crate::netbuilder::InputMode;

/// Which synthetic family to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Blobs,
    Spirals,
}

/// A labeled dataset with its split baked in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mode: InputMode,
    /// `n x input_len`, row-major.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn input_len(&self) -> usize {
        self.mode.input_len()
    }

    /// Materializes the rows at `idx` as contiguous buffers.
    pub fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let len = self.input_len();
        let mut inputs = Vec::with_capacity(idx.len() * len);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            inputs.extend_from_slice(&self.inputs[i * len..(i + 1) * len]);
            labels.push(self.labels[i]);
        }
        (inputs, labels)
    }

    /// SHA-256 over the full content: mode, classes, features, labels, and
    /// the split. Stored alongside cached teacher logits so stale caches are
    /// rejected.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        match self.mode {
            InputMode::Vector { dims } => {
                h.update([0u8]);
                h.update((dims as u64).to_le_bytes());
            }
            InputMode::Image { channels, height, width } => {
                h.update([1u8]);
                h.update((channels as u64).to_le_bytes());
                h.update((height as u64).to_le_bytes());
                h.update((width as u64).to_le_bytes());
            }
        }
        h.update((self.num_classes as u64).to_le_bytes());
        for x in &self.inputs {
            h.update(x.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        for &i in &self.train_idx {
            h.update((i as u64).to_le_bytes());
        }
        for &i in &self.val_idx {
            h.update((i as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Generates a dataset. `size` is the feature dimension in vector mode and
/// the image side in image mode (one channel).
pub fn make_synthetic(
    kind: DatasetKind,
    mode: InputMode,
    n_samples: usize,
    n_classes: usize,
    noise: f64,
    seed: u64,
    val_fraction: f64,
) -> Result<Dataset> {
    if n_samples == 0 || n_classes < 2 {
        return Err(Error::Parameter(
            "need at least one sample and two classes".into(),
        ));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Parameter("val_fraction must lie in [0,1)".into()));
    }
    if noise < 0.0 {
        return Err(Error::Parameter("noise must be nonnegative".into()));
    }
    match mode {
        InputMode::Vector { dims } => {
            if dims < 2 {
                return Err(Error::Parameter("vector datasets need >= 2 dims".into()));
            }
        }
        InputMode::Image { channels, height, width } => {
            if channels != 1 || height < 4 || width != height {
                return Err(Error::Parameter(
                    "image datasets are single-channel squares with side >= 4".into(),
                ));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xDA7A]));
    let normal = StandardNormal;
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { normal.sample(rng) };

    let len = mode.input_len();
    let mut inputs = vec![0.0; n_samples * len];
    let mut labels = vec![0usize; n_samples];

    // Per-class generators draw their class parameters first so sample count
    // does not shift the class geometry.
    match (kind, mode) {
        (DatasetKind::Blobs, InputMode::Vector { dims }) => {
            let centroids: Vec<Vec<f64>> = (0..n_classes)
                .map(|_| (0..dims).map(|_| 0.25 + 0.5 * rng.random::<f64>()).collect())
                .collect();
            for i in 0..n_samples {
                let c = i % n_classes;
                labels[i] = c;
                for d in 0..dims {
                    inputs[i * dims + d] = centroids[c][d] + noise * gauss(&mut rng);
                }
            }
        }
        (DatasetKind::Blobs, InputMode::Image { height, width, .. }) => {
            // Smooth per-class pattern: a few Gaussian bumps on the grid.
            let mut patterns = Vec::with_capacity(n_classes);
            for _ in 0..n_classes {
                let bumps: Vec<(f64, f64, f64)> = (0..3)
                    .map(|_| {
                        (
                            rng.random::<f64>() * height as f64,
                            rng.random::<f64>() * width as f64,
                            0.5 + rng.random::<f64>(),
                        )
                    })
                    .collect();
                let sigma = height as f64 / 4.0;
                let mut pat = vec![0.0; height * width];
                for y in 0..height {
                    for x in 0..width {
                        let mut v = 0.0;
                        for &(cy, cx, a) in &bumps {
                            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                            v += a * (-d2 / (2.0 * sigma * sigma)).exp();
                        }
                        pat[y * width + x] = v;
                    }
                }
                let max = pat.iter().cloned().fold(f64::MIN, f64::max).max(1e-9);
                for v in &mut pat {
                    *v /= max;
                }
                patterns.push(pat);
            }
            for i in 0..n_samples {
                let c = i % n_classes;
                labels[i] = c;
                for p in 0..len {
                    inputs[i * len + p] = patterns[c][p] + noise * gauss(&mut rng);
                }
            }
        }
        (DatasetKind::Spirals, InputMode::Vector { dims }) => {
            let per_class = n_samples.div_ceil(n_classes);
            for i in 0..n_samples {
                let c = i % n_classes;
                let j = i / n_classes;
                labels[i] = c;
                let t = j as f64 / per_class as f64;
                let (x, y) = spiral_point(t, c, n_classes);
                inputs[i * dims] = x + noise * gauss(&mut rng);
                inputs[i * dims + 1] = y + noise * gauss(&mut rng);
                for d in 2..dims {
                    inputs[i * dims + d] = 0.5 + noise * gauss(&mut rng);
                }
            }
        }
        (DatasetKind::Spirals, InputMode::Image { height, width, .. }) => {
            let per_class = n_samples.div_ceil(n_classes);
            let sigma = height as f64 / 8.0;
            for i in 0..n_samples {
                let c = i % n_classes;
                let j = i / n_classes;
                labels[i] = c;
                let t = j as f64 / per_class as f64;
                let (px, py) = spiral_point(t, c, n_classes);
                let cy = py * (height - 1) as f64;
                let cx = px * (width - 1) as f64;
                for y in 0..height {
                    for x in 0..width {
                        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                        inputs[i * len + y * width + x] =
                            (-d2 / (2.0 * sigma * sigma)).exp() + noise * gauss(&mut rng);
                    }
                }
            }
        }
    }

    // Seeded shuffle split; indices kept sorted inside each side.
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0x5B717]));
    use rand::seq::SliceRandom;
    order.shuffle(&mut split_rng);
    let val_count = ((n_samples as f64) * val_fraction).round() as usize;
    let mut val_idx: Vec<usize> = order[..val_count].to_vec();
    let mut train_idx: Vec<usize> = order[val_count..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();

    Ok(Dataset {
        mode,
        inputs,
        labels,
        num_classes: n_classes,
        train_idx,
        val_idx,
    })
}

/// Point on arm `c` of `classes` interleaved spirals, mapped into the unit
/// box. `t` in `[0, 1)` runs along the arm. The sweep is kept at 1.25 turns
/// so the gap between arms stays well clear of the default noise level.
fn spiral_point(t: f64, c: usize, classes: usize) -> (f64, f64) {
    let r = 0.15 + 0.85 * t;
    let angle = 2.0 * std::f64::consts::PI * (1.25 * t + c as f64 / classes as f64);
    (
        0.5 + 0.45 * r * angle.cos(),
        0.5 + 0.45 * r * angle.sin(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
        let len = ds.input_len();
        let (tr_in, tr_lb) = ds.gather(&ds.train_idx);
        let mut centroids = vec![vec![0.0; len]; ds.num_classes];
        let mut counts = vec![0usize; ds.num_classes];
        for (i, &l) in tr_lb.iter().enumerate() {
            counts[l] += 1;
            for d in 0..len {
                centroids[l][d] += tr_in[i * len + d];
            }
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= *n as f64;
            }
        }
        let mut correct = 0;
        for (i, &l) in tr_lb.iter().enumerate() {
            let row = &tr_in[i * len..(i + 1) * len];
            let pred = (0..ds.num_classes)
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(&centroids[a]).map(|(x, c)| (x - c).powi(2)).sum();
                    let db: f64 = row.iter().zip(&centroids[b]).map(|(x, c)| (x - c).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if pred == l {
                correct += 1;
            }
        }
        correct as f64 / tr_lb.len() as f64
    }

    #[test]
    fn noiseless_blobs_are_separable_by_centroids() {
        let ds = make_synthetic(
            DatasetKind::Blobs,
            InputMode::Vector { dims: 3 },
            120,
            3,
            0.0,
            7,
            0.2,
        )
        .unwrap();
        assert_eq!(nearest_centroid_accuracy(&ds), 1.0);
    }

    #[test]
    fn same_seed_identical_bytes_different_seed_not() {
        let make = |seed| {
            make_synthetic(
                DatasetKind::Spirals,
                InputMode::Vector { dims: 2 },
                64,
                2,
                0.05,
                seed,
                0.25,
            )
            .unwrap()
        };
        let a = make(11);
        let b = make(11);
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
        let c = make(12);
        assert_ne!(a.inputs, c.inputs);
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn split_is_disjoint_and_covers() {
        let ds = make_synthetic(
            DatasetKind::Blobs,
            InputMode::Vector { dims: 2 },
            100,
            2,
            0.1,
            3,
            0.2,
        )
        .unwrap();
        assert_eq!(ds.val_idx.len(), 20);
        assert_eq!(ds.train_idx.len(), 80);
        let mut all: Vec<usize> = ds.train_idx.iter().chain(&ds.val_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn image_datasets_have_grid_shape() {
        for kind in [DatasetKind::Blobs, DatasetKind::Spirals] {
            let ds = make_synthetic(
                kind,
                InputMode::Image { channels: 1, height: 8, width: 8 },
                32,
                2,
                0.02,
                5,
                0.25,
            )
            .unwrap();
            assert_eq!(ds.input_len(), 64);
            assert!(ds.inputs.iter().all(|v| v.is_finite()));
            // Bumps put mass in [0, ~1].
            let max = ds.inputs.iter().cloned().fold(f64::MIN, f64::max);
            assert!(max > 0.5 && max < 2.0, "max intensity {max}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let v = InputMode::Vector { dims: 2 };
        assert!(make_synthetic(DatasetKind::Blobs, v, 0, 2, 0.1, 0, 0.2).is_err());
        assert!(make_synthetic(DatasetKind::Blobs, v, 10, 1, 0.1, 0, 0.2).is_err());
        assert!(make_synthetic(DatasetKind::Blobs, v, 10, 2, -0.1, 0, 0.2).is_err());
        assert!(make_synthetic(DatasetKind::Blobs, v, 10, 2, 0.1, 0, 1.0).is_err());
        let img = InputMode::Image { channels: 3, height: 8, width: 8 };
        assert!(make_synthetic(DatasetKind::Blobs, img, 10, 2, 0.1, 0, 0.2).is_err());
    }
}
