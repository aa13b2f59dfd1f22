//! Drives brackets, rungs, and proposals against a caller-supplied
//! evaluation function.
//!
//! The schedule is a pure function of the configuration, proposals are a
//! pure function of the proposal stream and past records, and the evaluator
//! is required to be pure per `(theta, budget, seed)`, so a run is fully
//! reproducible and rung evaluations can fan out across a worker pool
//! without affecting the result. Records are appended in trial-id order at
//! rung completion.
//!
//! Every configuration keeps its seed when it survives to the next rung, so
//! a higher-budget evaluation is the continuation of the same training
//! lineage - the pairing that budget-correlation analysis depends on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::bohb::kde::{kde_fit_at_best_budget, kde_propose};
use crate::bohb::space::SearchSpace;
use crate::bohb::{compute_brackets, mix_seed, top_k_indices, BohbConfig, TrialRecord};
use crate::error::{Error, Result};
use crate::graphgen::GeneratorHyperparams;

/// What one evaluation reports back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
    pub infeasible: bool,
}

/// Run-level options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub master_seed: u64,
    /// Hyperband iterations (full passes over all brackets).
    pub iterations: usize,
    /// Worker threads for rung evaluation; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { master_seed: 0, iterations: 1, workers: 0 }
    }
}

/// Runs the full multi-fidelity search. `evaluate` must be pure per
/// `(theta, budget, seed)`. Records already present in `existing` (matched by
/// trial id) are reused instead of re-evaluated, which makes a run resumable
/// from its own log. `on_record` sees every record once, in trial-id order.
pub fn run_bohb<F>(
    cfg: &BohbConfig,
    space: &SearchSpace,
    opts: &RunOptions,
    evaluate: F,
    existing: &[TrialRecord],
    mut on_record: impl FnMut(&TrialRecord) -> Result<()>,
) -> Result<Vec<TrialRecord>>
where
    F: Fn(&GeneratorHyperparams, u32, u64) -> Result<TrialOutcome> + Sync,
{
    cfg.validate()?;
    space.validate()?;
    if opts.iterations == 0 {
        return Err(Error::Config("iterations must be >= 1".into()));
    }
    let brackets = compute_brackets(cfg)?;
    let existing_by_id: BTreeMap<u64, &TrialRecord> =
        existing.iter().map(|r| (r.trial_id, r)).collect();

    let pool = if opts.workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| Error::Internal(format!("worker pool: {e}")))?,
        )
    } else {
        None
    };

    let mut proposal_rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.master_seed, &[0xB0]));
    let mut records: Vec<TrialRecord> = Vec::new();
    let mut next_trial_id = 0u64;

    for iteration in 0..opts.iterations {
        for bracket in &brackets {
            let model = kde_fit_at_best_budget(&records, space, cfg)?;
            let mut configs: Vec<(GeneratorHyperparams, u64)> = Vec::new();
            for j in 0..bracket.initial_count {
                let theta = kde_propose(model.as_ref(), space, cfg, &mut proposal_rng)?;
                let seed = mix_seed(
                    opts.master_seed,
                    &[1, iteration as u64, bracket.s as u64, j as u64],
                );
                configs.push((theta, seed));
            }

            for (rung_idx, rung) in bracket.rungs.iter().enumerate() {
                debug_assert_eq!(configs.len(), rung.count);
                let base_id = next_trial_id;

                // Reuse logged outcomes where available; evaluate the rest in
                // parallel and stitch results back by index.
                let mut outcomes: Vec<Option<TrialOutcome>> = vec![None; configs.len()];
                let mut pending: Vec<usize> = Vec::new();
                for (i, (theta, seed)) in configs.iter().enumerate() {
                    let id = base_id + i as u64;
                    if let Some(r) = existing_by_id.get(&id) {
                        if &r.theta != theta
                            || r.budget != rung.budget
                            || r.seed != *seed
                            || r.bracket_s != bracket.s
                            || r.rung != rung_idx as u32
                        {
                            return Err(Error::Config(format!(
                                "existing trial {id} does not match the schedule; \
                                 was the log produced by a different configuration?"
                            )));
                        }
                        outcomes[i] = Some(TrialOutcome {
                            val_accuracy: r.val_accuracy,
                            val_loss: r.val_loss,
                            wall_seconds: r.wall_seconds,
                            infeasible: r.infeasible,
                        });
                    } else {
                        pending.push(i);
                    }
                }

                let run_pending = || -> Result<Vec<(usize, TrialOutcome)>> {
                    pending
                        .par_iter()
                        .map(|&i| {
                            let (theta, seed) = &configs[i];
                            evaluate(theta, rung.budget, *seed).map(|o| (i, o))
                        })
                        .collect()
                };
                let evaluated = match &pool {
                    Some(p) => p.install(run_pending)?,
                    None => run_pending()?,
                };
                for (i, o) in evaluated {
                    outcomes[i] = Some(o);
                }

                let mut rung_records = Vec::with_capacity(configs.len());
                for (i, (theta, seed)) in configs.iter().enumerate() {
                    let o = outcomes[i].take().expect("every slot filled");
                    let record = TrialRecord {
                        trial_id: base_id + i as u64,
                        theta: theta.clone(),
                        budget: rung.budget,
                        seed: *seed,
                        val_accuracy: o.val_accuracy,
                        val_loss: o.val_loss,
                        wall_seconds: o.wall_seconds,
                        bracket_s: bracket.s,
                        rung: rung_idx as u32,
                        infeasible: o.infeasible,
                    };
                    on_record(&record)?;
                    rung_records.push(record);
                }
                next_trial_id += configs.len() as u64;

                if rung_idx + 1 < bracket.rungs.len() {
                    let keep = bracket.rungs[rung_idx + 1].count;
                    let refs: Vec<&TrialRecord> = rung_records.iter().collect();
                    let survivors = top_k_indices(&refs, keep);
                    configs = survivors.into_iter().map(|i| configs[i].clone()).collect();
                }
                records.extend(rung_records);
            }
        }
    }
    Ok(records)
}

/// Best configuration at the full budget: highest validation accuracy, ties
/// to the lower trial id. `None` when nothing ran at `b_max`.
pub fn best_at_full_budget(records: &[TrialRecord], b_max: u32) -> Option<&TrialRecord> {
    records
        .iter()
        .filter(|r| r.budget == b_max && !r.infeasible)
        .max_by(|a, b| {
            a.val_accuracy
                .partial_cmp(&b.val_accuracy)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.trial_id.cmp(&a.trial_id))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn cfg() -> BohbConfig {
        BohbConfig {
            eta: 2,
            b_min: 2,
            b_max: 8,
            min_points: Some(4),
            ..BohbConfig::default()
        }
    }

    /// A cheap deterministic stand-in objective: prefers temperature near 5,
    /// mildly rewards budget.
    fn synthetic_eval(
        theta: &GeneratorHyperparams,
        budget: u32,
        seed: u64,
    ) -> Result<TrialOutcome> {
        let base = 1.0 - (theta.kd_temperature - 5.0).powi(2) / 25.0;
        let jitter = ((seed % 97) as f64) / 9700.0;
        let acc = (base + (budget as f64).ln() / 50.0 + jitter).clamp(0.0, 1.0);
        Ok(TrialOutcome {
            val_accuracy: acc,
            val_loss: 1.0 - acc,
            wall_seconds: budget as f64 * 0.001,
            infeasible: false,
        })
    }

    #[test]
    fn trial_counts_match_the_schedule() {
        let cfg = cfg();
        let space = SearchSpace::default();
        let opts = RunOptions { master_seed: 3, iterations: 1, workers: 1 };
        let records =
            run_bohb(&cfg, &space, &opts, synthetic_eval, &[], |_| Ok(())).unwrap();
        let expected: usize = compute_brackets(&cfg)
            .unwrap()
            .iter()
            .flat_map(|b| b.rungs.iter().map(|r| r.count))
            .sum();
        assert_eq!(records.len(), expected);
        // Trial ids are dense and ascending.
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.trial_id, i as u64);
        }
    }

    #[test]
    fn survivors_keep_theta_and_seed() {
        let cfg = cfg();
        let space = SearchSpace::default();
        let opts = RunOptions { master_seed: 5, iterations: 2, workers: 0 };
        let records =
            run_bohb(&cfg, &space, &opts, synthetic_eval, &[], |_| Ok(())).unwrap();
        for r in records.iter().filter(|r| r.rung > 0) {
            let prev = records.iter().find(|p| {
                p.bracket_s == r.bracket_s
                    && p.rung + 1 == r.rung
                    && p.seed == r.seed
                    && p.theta == r.theta
                    && p.trial_id < r.trial_id
            });
            assert!(
                prev.is_some(),
                "trial {} at rung {} has no parent at the previous rung",
                r.trial_id,
                r.rung
            );
        }
    }

    #[test]
    fn runs_are_deterministic_and_worker_count_independent() {
        let cfg = cfg();
        let space = SearchSpace::default();
        let run = |workers: usize| {
            let opts = RunOptions { master_seed: 11, iterations: 1, workers };
            run_bohb(&cfg, &space, &opts, synthetic_eval, &[], |_| Ok(())).unwrap()
        };
        let a = run(1);
        let b = run(1);
        let c = run(4);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn resume_reuses_logged_trials() {
        let cfg = cfg();
        let space = SearchSpace::default();
        let opts = RunOptions { master_seed: 7, iterations: 1, workers: 1 };
        let full = run_bohb(&cfg, &space, &opts, synthetic_eval, &[], |_| Ok(())).unwrap();

        // Full log: the evaluator must never be called again.
        let replayed = run_bohb(
            &cfg,
            &space,
            &opts,
            |_: &GeneratorHyperparams, _: u32, _: u64| -> Result<TrialOutcome> {
                panic!("evaluator must not run when the log is complete")
            },
            &full,
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(replayed, full);

        // Half log: only the missing trials are evaluated.
        let half = &full[..full.len() / 2];
        let calls = AtomicUsize::new(0);
        let resumed = run_bohb(
            &cfg,
            &space,
            &opts,
            |t: &GeneratorHyperparams, b: u32, s: u64| {
                calls.fetch_add(1, Ordering::SeqCst);
                synthetic_eval(t, b, s)
            },
            half,
            |_| Ok(()),
        )
        .unwrap();
        assert_eq!(resumed, full);
        assert_eq!(calls.load(Ordering::SeqCst), full.len() - half.len());
    }

    #[test]
    fn full_random_fraction_ignores_observations() {
        // With random_fraction = 1 the proposal sequence must not depend on
        // the evaluator: pure random search plus Successive Halving.
        let mut c = cfg();
        c.random_fraction = 1.0;
        let space = SearchSpace::default();
        let opts = RunOptions { master_seed: 13, iterations: 1, workers: 1 };
        let run = |flip: bool| {
            let eval = move |theta: &GeneratorHyperparams, b: u32, s: u64| {
                let mut o = synthetic_eval(theta, b, s)?;
                if flip {
                    o.val_accuracy = 1.0 - o.val_accuracy;
                }
                Ok(o)
            };
            run_bohb(&c, &space, &opts, eval, &[], |_| Ok(())).unwrap()
        };
        let a = run(false);
        let b = run(true);
        // Bottom-rung proposals are identical even though accuracies differ.
        let bottoms = |rs: &[TrialRecord]| -> Vec<GeneratorHyperparams> {
            rs.iter().filter(|r| r.rung == 0).map(|r| r.theta.clone()).collect()
        };
        assert_eq!(bottoms(&a), bottoms(&b));
    }

    #[test]
    fn best_at_full_budget_breaks_ties_by_id() {
        let cfg = cfg();
        let space = SearchSpace::default();
        let opts = RunOptions { master_seed: 17, iterations: 1, workers: 1 };
        let constant_eval = |_: &GeneratorHyperparams, _: u32, _: u64| {
            Ok(TrialOutcome {
                val_accuracy: 0.5,
                val_loss: 0.5,
                wall_seconds: 0.0,
                infeasible: false,
            })
        };
        let records = run_bohb(&cfg, &space, &opts, constant_eval, &[], |_| Ok(())).unwrap();
        let best = best_at_full_budget(&records, cfg.b_max).unwrap();
        let min_id = records
            .iter()
            .filter(|r| r.budget == cfg.b_max)
            .map(|r| r.trial_id)
            .min()
            .unwrap();
        assert_eq!(best.trial_id, min_id);
    }
}
