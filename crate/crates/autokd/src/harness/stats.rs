//! Rank statistics over trial logs.

use std::collections::BTreeMap;

use crate::bohb::TrialRecord;
use crate::error::{Error, Result};

/// Spearman rank correlation with average ranks for ties. Returns NaN when a
/// side has no rank variance (all values tied).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Parameter(format!(
            "spearman needs equal-length inputs, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Parameter("spearman needs at least two points".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Ranks starting at 1; tied values share the average of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlations between configuration rankings at every pair of
/// budgets. Configurations are paired by their seed lineage, which Successive
/// Halving preserves across rungs.
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Ascending budgets present in the log.
    pub budgets: Vec<u32>,
    /// `matrix[i][j]` is the correlation between `budgets[i]` and
    /// `budgets[j]`; `None` when fewer than two configurations were evaluated
    /// at both or the correlation is degenerate.
    pub matrix: Vec<Vec<Option<f64>>>,
}

impl RankReport {
    /// Mean of the defined strictly-upper-triangle entries.
    pub fn mean_pairwise(&self) -> Option<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..self.budgets.len() {
            for j in (i + 1)..self.budgets.len() {
                if let Some(v) = self.matrix[i][j] {
                    total += v;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| total / count as f64)
    }

    /// Correlation between two specific budgets, when present.
    pub fn between(&self, b_lo: u32, b_hi: u32) -> Option<f64> {
        let i = self.budgets.iter().position(|&b| b == b_lo)?;
        let j = self.budgets.iter().position(|&b| b == b_hi)?;
        self.matrix[i][j]
    }
}

pub fn rank_correlation_report(records: &[TrialRecord]) -> RankReport {
    let mut budgets: Vec<u32> = records.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();

    // seed lineage -> budget -> accuracy (first record wins; the schedule
    // never evaluates one lineage twice at a budget).
    let mut by_seed: BTreeMap<u64, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in records {
        by_seed.entry(r.seed).or_default().entry(r.budget).or_insert(r.val_accuracy);
    }

    let k = budgets.len();
    let mut matrix = vec![vec![None; k]; k];
    for i in 0..k {
        matrix[i][i] = Some(1.0);
        for j in (i + 1)..k {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for acc in by_seed.values() {
                if let (Some(&a), Some(&b)) = (acc.get(&budgets[i]), acc.get(&budgets[j])) {
                    xs.push(a);
                    ys.push(b);
                }
            }
            if xs.len() >= 2 {
                if let Ok(rho) = spearman(&xs, &ys) {
                    if rho.is_finite() {
                        matrix[i][j] = Some(rho);
                        matrix[j][i] = Some(rho);
                    }
                }
            }
        }
    }
    RankReport { budgets, matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{GeneratorHyperparams, GraphGenSpec};

    #[test]
    fn spearman_basic_values() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&xs, &[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // 1 - 6*2/(4*15) = 0.8
        assert!((spearman(&xs, &[1.0, 2.0, 4.0, 3.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(spearman(&xs, &[1.0]).is_err());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ties_use_average_ranks() {
        // With ties, ranks [1.5, 1.5, 3] vs [1, 2, 3]: rho ~ 0.866.
        let rho = spearman(&[5.0, 5.0, 9.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rho - 0.8660254).abs() < 1e-6);
        // Fully tied side: degenerate.
        assert!(!spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap().is_finite());
    }

    fn rec(seed: u64, budget: u32, acc: f64) -> TrialRecord {
        TrialRecord {
            trial_id: seed * 100 + budget as u64,
            theta: GeneratorHyperparams {
                top: GraphGenSpec::er(1, 0.5),
                mid: GraphGenSpec::er(1, 0.5),
                bottom: GraphGenSpec::er(1, 0.5),
                kd_temperature: 1.0,
                kd_weight: 0.0,
            },
            budget,
            seed,
            val_accuracy: acc,
            val_loss: 1.0 - acc,
            wall_seconds: 0.0,
            bracket_s: 0,
            rung: 0,
            infeasible: false,
        }
    }

    #[test]
    fn monotone_log_gives_perfect_correlations() {
        let mut records = Vec::new();
        for seed in 0..6u64 {
            let base = seed as f64 / 10.0;
            records.push(rec(seed, 2, base));
            records.push(rec(seed, 4, base + 0.2));
            records.push(rec(seed, 8, base + 0.3));
        }
        let report = rank_correlation_report(&records);
        assert_eq!(report.budgets, vec![2, 4, 8]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((report.matrix[i][j].unwrap() - 1.0).abs() < 1e-12);
            }
        }
        assert!((report.mean_pairwise().unwrap() - 1.0).abs() < 1e-12);
        assert!((report.between(2, 8).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shuffled_high_budget_ranks_decorrelate() {
        // 100 configs evaluated at two budgets; the high-budget ranking is a
        // fixed pseudo-random permutation. |rho| should be small.
        let mut records = Vec::new();
        for seed in 0..100u64 {
            let lo = seed as f64 / 100.0;
            let hi = ((seed * 7919 + 13) % 100) as f64 / 100.0;
            records.push(rec(seed, 2, lo));
            records.push(rec(seed, 8, hi));
        }
        let report = rank_correlation_report(&records);
        let rho = report.between(2, 8).unwrap();
        assert!(rho.abs() < 0.5, "shuffled ranks gave rho = {rho}");
    }

    #[test]
    fn sparse_pairs_are_absent() {
        let records = vec![rec(0, 2, 0.5), rec(0, 8, 0.6), rec(1, 2, 0.4)];
        let report = rank_correlation_report(&records);
        // Only one config was seen at both budgets.
        assert_eq!(report.between(2, 8), None);
    }
}
