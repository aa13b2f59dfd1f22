//! Multi-fidelity Bayesian optimization: Hyperband bracket arithmetic,
//! Successive Halving, and the good/bad kernel-density proposal model.
//!
//! One search runs `s_max + 1` brackets, indexed `s = s_max .. 0` with
//! `s_max = floor(log_eta(b_max / b_min))`. Bracket `s` starts
//! `M = ceil((s_max + 1) / (s + 1) * eta^s)` configurations at budget
//! `b_max * eta^-s` and repeatedly keeps the best `floor(count / eta)` of
//! them while multiplying the budget by `eta` until it reaches `b_max`. New
//! configurations are proposed by maximizing the ratio of two kernel density
//! estimators fit on the best and the rest of the observed trials.

pub mod kde;
pub mod scheduler;
pub mod space;

pub use kde::{kde_fit, kde_fit_at_best_budget, kde_propose, KdeModel};
pub use scheduler::{run_bohb, RunOptions, TrialOutcome};
pub use space::{DimKind, SearchSpace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::GeneratorHyperparams;

/// Scheduler and proposal-model knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BohbConfig {
    /// Halving rate, `>= 2`.
    pub eta: u32,
    /// Smallest training budget, in epochs.
    pub b_min: u32,
    /// Largest training budget, in epochs.
    pub b_max: u32,
    /// Probability of proposing uniformly at random instead of from the KDE.
    pub random_fraction: f64,
    /// Fraction of trials forming the "good" density.
    pub good_fraction: f64,
    /// Minimum observations before a density model is fit. `None` means
    /// `dim(theta) + 1`.
    pub min_points: Option<usize>,
    /// Candidates drawn from the good density per proposal.
    pub candidates_per_proposal: usize,
}

impl Default for BohbConfig {
    fn default() -> Self {
        BohbConfig {
            eta: 2,
            b_min: 2,
            b_max: 8,
            random_fraction: 1.0 / 3.0,
            good_fraction: 0.15,
            min_points: None,
            candidates_per_proposal: 64,
        }
    }
}

impl BohbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta < 2 {
            return Err(Error::Config("eta must be >= 2".into()));
        }
        if self.b_min == 0 {
            return Err(Error::Config("b_min must be >= 1 epoch".into()));
        }
        if self.b_max < self.b_min {
            return Err(Error::Config("b_max must be >= b_min".into()));
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return Err(Error::Config("random_fraction must lie in [0,1]".into()));
        }
        if !(self.good_fraction > 0.0 && self.good_fraction < 1.0) {
            return Err(Error::Config("good_fraction must lie in (0,1)".into()));
        }
        if self.candidates_per_proposal == 0 {
            return Err(Error::Config("candidates_per_proposal must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective minimum observation count for density fits.
    pub fn effective_min_points(&self, space: &SearchSpace) -> usize {
        self.min_points.unwrap_or(space.dim_count() + 1)
    }
}

/// One rung of a bracket: a budget and the number of configurations run there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub budget: u32,
    pub count: usize,
}

/// One Successive Halving run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub s: u32,
    /// Configurations sampled at the bottom rung (`M`).
    pub initial_count: usize,
    /// Budget of the bottom rung.
    pub initial_budget: u32,
    pub rungs: Vec<Rung>,
}

/// `floor(log_eta(b_max / b_min))`, computed exactly in integers.
pub fn compute_smax(cfg: &BohbConfig) -> Result<u32> {
    cfg.validate()?;
    let mut s = 0u32;
    let mut b = cfg.b_min as u64;
    while b * cfg.eta as u64 <= cfg.b_max as u64 {
        b *= cfg.eta as u64;
        s += 1;
    }
    Ok(s)
}

/// All brackets of one Hyperband iteration, `s` descending from `s_max` to 0.
pub fn compute_brackets(cfg: &BohbConfig) -> Result<Vec<Bracket>> {
    let s_max = compute_smax(cfg)?;
    let eta = cfg.eta as u64;
    let mut brackets = Vec::with_capacity(s_max as usize + 1);
    for s in (0..=s_max).rev() {
        let eta_s = eta.pow(s);
        // ceil((s_max + 1) * eta^s / (s + 1)) in exact integer arithmetic.
        let m = (((s_max as u64 + 1) * eta_s) + s as u64) / (s as u64 + 1);
        let m = m as usize;
        // Rung budgets land exactly on b_max at the top: b_r = b_max / eta^(s-r).
        let budget_at = |r: u32| -> u32 {
            let div = eta.pow(s - r) as f64;
            ((cfg.b_max as f64 / div).round() as u32).max(1)
        };
        let mut rungs = Vec::new();
        let mut count = m;
        for r in 0..=s {
            if count == 0 {
                break;
            }
            rungs.push(Rung { budget: budget_at(r), count });
            count /= cfg.eta as usize;
        }
        brackets.push(Bracket {
            s,
            initial_count: m,
            initial_budget: budget_at(0),
            rungs,
        });
    }
    Ok(brackets)
}

/// One partial evaluation of a configuration at a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub theta: GeneratorHyperparams,
    /// Training budget in epochs.
    pub budget: u32,
    pub seed: u64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    /// Deterministic training-cost estimate; see the harness docs.
    pub wall_seconds: f64,
    pub bracket_s: u32,
    pub rung: u32,
    pub infeasible: bool,
}

/// Indices of the `k` best records: highest validation accuracy first, ties
/// broken by the lower trial id.
pub fn top_k_indices(records: &[&TrialRecord], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[b]
            .val_accuracy
            .partial_cmp(&records[a].val_accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(records[a].trial_id.cmp(&records[b].trial_id))
    });
    order.truncate(k);
    order
}

/// The `k` surviving configurations of one rung. `records[i]` must be the
/// evaluation of `thetas[i]`.
pub fn top_k(
    thetas: &[GeneratorHyperparams],
    records: &[TrialRecord],
    k: usize,
) -> Result<Vec<GeneratorHyperparams>> {
    if thetas.len() != records.len() {
        return Err(Error::Internal(format!(
            "top_k: {} configurations but {} records",
            thetas.len(),
            records.len()
        )));
    }
    for (t, r) in thetas.iter().zip(records) {
        if t != &r.theta {
            return Err(Error::Internal(
                "top_k: record does not belong to its configuration".into(),
            ));
        }
    }
    let refs: Vec<&TrialRecord> = records.iter().collect();
    Ok(top_k_indices(&refs, k)
        .into_iter()
        .map(|i| thetas[i].clone())
        .collect())
}

/// Deterministic seed derivation for nested streams.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = x.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x = z ^ (z >> 31);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::GraphGenSpec;

    fn cfg(b_min: u32, b_max: u32, eta: u32) -> BohbConfig {
        BohbConfig { eta, b_min, b_max, ..BohbConfig::default() }
    }

    #[test]
    fn smax_arithmetic() {
        assert_eq!(compute_smax(&cfg(30, 120, 2)).unwrap(), 2);
        assert_eq!(compute_smax(&cfg(5, 5, 2)).unwrap(), 0);
        assert_eq!(compute_smax(&cfg(1, 27, 3)).unwrap(), 3);
        assert_eq!(compute_smax(&cfg(2, 8, 2)).unwrap(), 2);
    }

    #[test]
    fn bracket_plan_for_the_30_60_120_ladder() {
        let brackets = compute_brackets(&cfg(30, 120, 2)).unwrap();
        let summary: Vec<(u32, usize, u32)> = brackets
            .iter()
            .map(|b| (b.s, b.initial_count, b.initial_budget))
            .collect();
        assert_eq!(summary, vec![(2, 4, 30), (1, 3, 60), (0, 3, 120)]);
        assert_eq!(
            brackets[0].rungs,
            vec![
                Rung { budget: 30, count: 4 },
                Rung { budget: 60, count: 2 },
                Rung { budget: 120, count: 1 },
            ]
        );
        assert_eq!(
            brackets[1].rungs,
            vec![Rung { budget: 60, count: 3 }, Rung { budget: 120, count: 1 }]
        );
        assert_eq!(brackets[2].rungs, vec![Rung { budget: 120, count: 3 }]);
    }

    #[test]
    fn bracket_m_sequence_for_eta_3() {
        let brackets = compute_brackets(&cfg(1, 27, 3)).unwrap();
        let ms: Vec<usize> = brackets.iter().map(|b| b.initial_count).collect();
        assert_eq!(ms, vec![27, 12, 6, 4]);
        let b0s: Vec<u32> = brackets.iter().map(|b| b.initial_budget).collect();
        assert_eq!(b0s, vec![1, 3, 9, 27]);
    }

    #[test]
    fn degenerate_single_budget() {
        let brackets = compute_brackets(&cfg(7, 7, 2)).unwrap();
        assert_eq!(brackets.len(), 1);
        assert_eq!(brackets[0].initial_count, 1);
        assert_eq!(brackets[0].rungs, vec![Rung { budget: 7, count: 1 }]);
    }

    fn record(id: u64, acc: f64) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            theta: test_theta(0.5),
            budget: 4,
            seed: id,
            val_accuracy: acc,
            val_loss: 1.0 - acc,
            wall_seconds: 1.0,
            bracket_s: 0,
            rung: 0,
            infeasible: false,
        }
    }

    pub(crate) fn test_theta(alpha: f64) -> GeneratorHyperparams {
        GeneratorHyperparams {
            top: GraphGenSpec::er(2, 0.5),
            mid: GraphGenSpec::er(2, 0.5),
            bottom: GraphGenSpec::er(2, 0.5),
            kd_temperature: 5.0,
            kd_weight: alpha,
        }
    }

    #[test]
    fn top_k_orders_by_accuracy_then_id() {
        let thetas = vec![test_theta(0.1), test_theta(0.2), test_theta(0.3)];
        let records = vec![record(0, 0.3), record(1, 0.1), record(2, 0.2)];
        let mut records = records;
        for (r, t) in records.iter_mut().zip(&thetas) {
            r.theta = t.clone();
        }
        let survivors = top_k(&thetas, &records, 1).unwrap();
        assert_eq!(survivors, vec![thetas[0].clone()]);

        // Equal accuracies: the earlier trial id survives.
        let mut tied = records.clone();
        for r in &mut tied {
            r.val_accuracy = 0.5;
        }
        let survivors = top_k(&thetas, &tied, 1).unwrap();
        assert_eq!(survivors, vec![thetas[0].clone()]);

        // k = len: identity as a set, ordered by accuracy then id.
        let all = top_k(&thetas, &records, 3).unwrap();
        assert_eq!(all, vec![thetas[0].clone(), thetas[2].clone(), thetas[1].clone()]);

        assert!(top_k(&thetas, &records, 0).unwrap().is_empty());
        assert!(top_k(&thetas[..2], &records, 1).is_err());
    }

    #[test]
    fn mix_seed_is_stable_and_spreads() {
        let a = mix_seed(42, &[1, 2, 3]);
        assert_eq!(a, mix_seed(42, &[1, 2, 3]));
        assert_ne!(a, mix_seed(42, &[1, 2, 4]));
        assert_ne!(a, mix_seed(43, &[1, 2, 3]));
    }
}
