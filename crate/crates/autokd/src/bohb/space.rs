//! The search box over generator hyperparameters.
//!
//! A point is encoded as a fixed-width vector: six dimensions per level
//! (family, node count, and the four family parameters, with inactive ones
//! carried along) plus the distillation temperature and weight. Integer and
//! categorical dimensions live on a continuous relaxation; decoding rounds,
//! clips, fixes the Watts-Strogatz parity constraint, and shrinks node counts
//! until the operation-unit cap holds, so every decoded point is a valid
//! configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::{GeneratorHyperparams, GraphFamily, GraphGenSpec};

/// Kind and bounds of one encoded dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    /// Gaussian kernel on a continuous relaxation; rounded on decode.
    Integer { lo: i64, hi: i64 },
    /// Smoothed frequency table.
    Categorical { arity: usize },
}

impl DimKind {
    /// Width of the dimension, used for bandwidth floors.
    pub fn range(&self) -> f64 {
        match *self {
            DimKind::Continuous { lo, hi } => hi - lo,
            DimKind::Integer { lo, hi } => (hi - lo) as f64,
            DimKind::Categorical { .. } => 1.0,
        }
    }
}

/// Bounds of the searchable space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    /// Node-count range shared by all three levels.
    pub n_min: usize,
    pub n_max: usize,
    /// Cap on `top.n * mid.n * bottom.n`.
    pub unit_cap: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_min: 1,
            n_max: 8,
            unit_cap: crate::graphgen::DEFAULT_UNIT_CAP,
            tau_min: 1.0,
            tau_max: 10.0,
            alpha_min: 0.0,
            alpha_max: 1.0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_max < self.n_min {
            return Err(Error::Config(format!(
                "node-count range [{}, {}] is empty or starts at zero",
                self.n_min, self.n_max
            )));
        }
        if !(1.0 <= self.tau_min && self.tau_min <= self.tau_max && self.tau_max <= 10.0) {
            return Err(Error::Config(format!(
                "temperature range [{}, {}] must nest inside [1, 10]",
                self.tau_min, self.tau_max
            )));
        }
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return Err(Error::Config(format!(
                "kd weight range [{}, {}] must nest inside [0, 1]",
                self.alpha_min, self.alpha_max
            )));
        }
        // Repair shrinks node counts down to each family's minimum; the cap
        // must admit that floor or repair could never terminate.
        let floor = self.n_min.max(3);
        if self.unit_cap < floor * floor * floor {
            return Err(Error::Config(format!(
                "unit_cap {} is below the smallest repairable product {}",
                self.unit_cap,
                floor * floor * floor
            )));
        }
        Ok(())
    }

    /// Dimension descriptors in encoding order: six per level, then the two
    /// distillation hyperparameters.
    pub fn dims(&self) -> Vec<DimKind> {
        let mut dims = Vec::with_capacity(20);
        let k_hi = (self.n_max as i64 - 1).max(2);
        let m_hi = (self.n_max as i64 - 1).max(1);
        for _ in 0..3 {
            dims.push(DimKind::Categorical { arity: 3 });
            dims.push(DimKind::Integer { lo: self.n_min as i64, hi: self.n_max as i64 });
            dims.push(DimKind::Continuous { lo: 0.0, hi: 1.0 }); // er_p
            dims.push(DimKind::Integer { lo: 2, hi: k_hi }); // ws_k
            dims.push(DimKind::Continuous { lo: 0.0, hi: 1.0 }); // ws_beta
            dims.push(DimKind::Integer { lo: 1, hi: m_hi }); // ba_m
        }
        dims.push(DimKind::Continuous { lo: self.tau_min, hi: self.tau_max });
        dims.push(DimKind::Continuous { lo: self.alpha_min, hi: self.alpha_max });
        dims
    }

    pub fn dim_count(&self) -> usize {
        20
    }

    pub fn encode(&self, theta: &GeneratorHyperparams) -> Vec<f64> {
        let mut v = Vec::with_capacity(20);
        for spec in [&theta.top, &theta.mid, &theta.bottom] {
            v.push(match spec.family {
                GraphFamily::Er => 0.0,
                GraphFamily::Ws => 1.0,
                GraphFamily::Ba => 2.0,
            });
            v.push(spec.n as f64);
            v.push(spec.er_p);
            v.push(spec.ws_k as f64);
            v.push(spec.ws_beta);
            v.push(spec.ba_m as f64);
        }
        v.push(theta.kd_temperature);
        v.push(theta.kd_weight);
        v
    }

    /// Rounds, clips, and repairs a raw vector into a valid configuration.
    pub fn decode_and_repair(&self, raw: &[f64]) -> Result<GeneratorHyperparams> {
        if raw.len() != 20 {
            return Err(Error::Parameter(format!(
                "encoded point must have 20 dimensions, got {}",
                raw.len()
            )));
        }
        let clamp_int = |x: f64, lo: usize, hi: usize| -> usize {
            (x.round() as i64).clamp(lo as i64, hi as i64) as usize
        };
        let mut specs = Vec::with_capacity(3);
        for level in 0..3 {
            let d = &raw[level * 6..(level + 1) * 6];
            let family = match clamp_int(d[0], 0, 2) {
                0 => GraphFamily::Er,
                1 => GraphFamily::Ws,
                _ => GraphFamily::Ba,
            };
            let n = clamp_int(d[1], self.n_min, self.n_max).max(family.min_nodes());
            let spec = GraphGenSpec {
                family,
                n,
                er_p: d[2].clamp(0.0, 1.0),
                ws_k: 2, // fixed up below once n is final
                ws_beta: d[4].clamp(0.0, 1.0),
                ba_m: 1,
            };
            specs.push((spec, d[3], d[5]));
        }

        // Shrink the largest level while the unit cap is exceeded. Floors are
        // per-family, so termination is guaranteed by validate().
        loop {
            let product: usize = specs.iter().map(|(s, _, _)| s.n).product();
            if product <= self.unit_cap {
                break;
            }
            let floor =
                |s: &GraphGenSpec| s.family.min_nodes().max(self.n_min);
            let target = specs
                .iter()
                .enumerate()
                .filter(|(_, (s, _, _))| s.n > floor(s))
                .max_by_key(|(i, (s, _, _))| (s.n, usize::MAX - i))
                .map(|(i, _)| i)
                .ok_or_else(|| {
                    Error::Internal("unit-cap repair ran out of shrinkable levels".into())
                })?;
            specs[target].0.n -= 1;
        }

        let mut out = Vec::with_capacity(3);
        for (mut spec, raw_k, raw_m) in specs {
            let n = spec.n;
            if n >= 2 {
                spec.ba_m = clamp_int(raw_m, 1, n - 1);
            }
            if n >= 3 {
                let mut k = clamp_int(raw_k, 2, n - 1);
                if k % 2 == 1 {
                    k -= 1;
                }
                spec.ws_k = k.max(2);
            }
            out.push(spec);
        }
        let mut iter = out.into_iter();
        let theta = GeneratorHyperparams {
            top: iter.next().unwrap(),
            mid: iter.next().unwrap(),
            bottom: iter.next().unwrap(),
            kd_temperature: raw[18].clamp(self.tau_min, self.tau_max),
            kd_weight: raw[19].clamp(self.alpha_min, self.alpha_max),
        };
        theta.validate(self.unit_cap)?;
        Ok(theta)
    }

    /// One uniform draw from the box, repaired into a valid configuration.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Result<GeneratorHyperparams> {
        let raw: Vec<f64> = self
            .dims()
            .iter()
            .map(|kind| match *kind {
                DimKind::Continuous { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
                DimKind::Integer { lo, hi } => rng.random_range(lo..=hi) as f64,
                DimKind::Categorical { arity } => rng.random_range(0..arity) as f64,
            })
            .collect();
        self.decode_and_repair(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_space_validates() {
        SearchSpace::default().validate().unwrap();
        assert_eq!(SearchSpace::default().dims().len(), 20);
    }

    #[test]
    fn undersized_cap_is_rejected() {
        let mut s = SearchSpace::default();
        s.unit_cap = 20;
        assert!(s.validate().is_err());
    }

    #[test]
    fn uniform_samples_are_always_valid() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let theta = space.sample_uniform(&mut rng).unwrap();
            theta.validate(space.unit_cap).unwrap();
            assert!(theta.unit_count() <= space.unit_cap);
        }
    }

    #[test]
    fn repair_is_idempotent() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let theta = space.sample_uniform(&mut rng).unwrap();
            let again = space.decode_and_repair(&space.encode(&theta)).unwrap();
            assert_eq!(theta, again);
        }
    }

    #[test]
    fn cap_repair_shrinks_largest_level_first() {
        let space = SearchSpace::default();
        // Three ER levels at 8 nodes each: 512 units, shrunk to fit 64.
        let mut raw = vec![0.0; 20];
        for level in 0..3 {
            raw[level * 6] = 0.0; // ER
            raw[level * 6 + 1] = 8.0;
            raw[level * 6 + 2] = 0.5;
            raw[level * 6 + 3] = 4.0;
            raw[level * 6 + 4] = 0.5;
            raw[level * 6 + 5] = 2.0;
        }
        raw[18] = 5.0;
        raw[19] = 0.5;
        let theta = space.decode_and_repair(&raw).unwrap();
        assert!(theta.unit_count() <= 64);
        // Shrinking stays balanced: all levels within one node of each other.
        let ns = [theta.top.n, theta.mid.n, theta.bottom.n];
        assert!(ns.iter().max().unwrap() - ns.iter().min().unwrap() <= 1, "{ns:?}");
    }

    proptest! {
        #[test]
        fn arbitrary_raw_vectors_decode_to_valid_configs(
            raw in proptest::collection::vec(-20.0f64..20.0, 20),
        ) {
            let space = SearchSpace::default();
            let theta = space.decode_and_repair(&raw).unwrap();
            prop_assert!(theta.validate(space.unit_cap).is_ok());
            // Parity and bound guarantees the samplers rely on.
            if theta.top.family == GraphFamily::Ws {
                prop_assert!(theta.top.ws_k % 2 == 0 && theta.top.ws_k < theta.top.n);
            }
            if theta.top.family == GraphFamily::Ba {
                prop_assert!(theta.top.ba_m >= 1 && theta.top.ba_m < theta.top.n);
            }
            prop_assert!((1.0..=10.0).contains(&theta.kd_temperature));
            prop_assert!((0.0..=1.0).contains(&theta.kd_weight));
        }
    }
}
