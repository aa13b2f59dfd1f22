//! Good/bad kernel density estimators over the encoded search space.
//!
//! Continuous and integer dimensions get Gaussian kernels with per-dimension
//! Scott's-rule bandwidths (floored at 1e-3 of the dimension's range);
//! categorical dimensions get add-one-smoothed frequency tables. Densities
//! are evaluated in log space so the good/bad ratio is well defined
//! everywhere on the box.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bohb::space::{DimKind, SearchSpace};
use crate::bohb::{BohbConfig, TrialRecord};
use crate::error::{Error, Result};
use crate::graphgen::GeneratorHyperparams;

const LN_SQRT_2PI: f64 = 0.9189385332046727; // ln(sqrt(2 pi))

/// One kernel density estimator over encoded points.
#[derive(Debug, Clone)]
pub struct DensityEstimator {
    points: Vec<Vec<f64>>,
    /// Per-dimension bandwidth; meaningless for categorical dimensions.
    bandwidths: Vec<f64>,
    /// Smoothed frequency table per categorical dimension.
    cat_tables: Vec<Option<Vec<f64>>>,
}

impl DensityEstimator {
    fn fit(points: Vec<Vec<f64>>, dims: &[DimKind]) -> Self {
        let n = points.len();
        let d_numeric = dims
            .iter()
            .filter(|k| !matches!(k, DimKind::Categorical { .. }))
            .count();
        let scott = (n as f64).powf(-1.0 / (d_numeric as f64 + 4.0));
        let mut bandwidths = vec![0.0; dims.len()];
        let mut cat_tables = vec![None; dims.len()];
        for (d, kind) in dims.iter().enumerate() {
            match *kind {
                DimKind::Categorical { arity } => {
                    let mut counts = vec![1.0f64; arity]; // add-one smoothing
                    for p in &points {
                        let c = (p[d].round() as i64).clamp(0, arity as i64 - 1) as usize;
                        counts[c] += 1.0;
                    }
                    let total = n as f64 + arity as f64;
                    for c in &mut counts {
                        *c /= total;
                    }
                    cat_tables[d] = Some(counts);
                }
                _ => {
                    let mean = points.iter().map(|p| p[d]).sum::<f64>() / n as f64;
                    let var = if n > 1 {
                        points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>()
                            / (n as f64 - 1.0)
                    } else {
                        0.0
                    };
                    bandwidths[d] = (var.sqrt() * scott).max(1e-3 * kind.range());
                }
            }
        }
        DensityEstimator { points, bandwidths, cat_tables }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Log density at an encoded point; always finite on the box.
    pub fn log_density(&self, x: &[f64], dims: &[DimKind]) -> f64 {
        let mut cat_term = 0.0;
        for (d, kind) in dims.iter().enumerate() {
            if let DimKind::Categorical { arity } = *kind {
                let table = self.cat_tables[d].as_ref().expect("table built at fit");
                let c = (x[d].round() as i64).clamp(0, arity as i64 - 1) as usize;
                cat_term += table[c].ln();
            }
        }
        // log mean_i prod_d N(x_d; p_id, h_d) via logsumexp.
        let mut terms = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let mut t = 0.0;
            for (d, kind) in dims.iter().enumerate() {
                if matches!(kind, DimKind::Categorical { .. }) {
                    continue;
                }
                let h = self.bandwidths[d];
                let z = (x[d] - p[d]) / h;
                t += -0.5 * z * z - h.ln() - LN_SQRT_2PI;
            }
            terms.push(t);
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        cat_term + lse - (self.points.len() as f64).ln()
    }

    /// Draws one raw point: a uniformly chosen kernel center perturbed by its
    /// bandwidth, clipped to the box; categorical dimensions resample from
    /// the smoothed table.
    pub fn sample_raw<R: Rng>(&self, dims: &[DimKind], rng: &mut R) -> Vec<f64> {
        let center = &self.points[rng.random_range(0..self.points.len())];
        let mut out = vec![0.0; dims.len()];
        for (d, kind) in dims.iter().enumerate() {
            match *kind {
                DimKind::Categorical { arity } => {
                    let table = self.cat_tables[d].as_ref().expect("table built at fit");
                    let mut u = rng.random::<f64>();
                    let mut pick = arity - 1;
                    for (c, &w) in table.iter().enumerate() {
                        if u < w {
                            pick = c;
                            break;
                        }
                        u -= w;
                    }
                    out[d] = pick as f64;
                }
                DimKind::Continuous { lo, hi } => {
                    let dist = Normal::new(center[d], self.bandwidths[d]).expect("finite");
                    out[d] = dist.sample(rng).clamp(lo, hi);
                }
                DimKind::Integer { lo, hi } => {
                    let dist = Normal::new(center[d], self.bandwidths[d]).expect("finite");
                    out[d] = dist.sample(rng).clamp(lo as f64, hi as f64);
                }
            }
        }
        out
    }
}

/// The proposal model: densities of the best trials and of the rest.
#[derive(Debug, Clone)]
pub struct KdeModel {
    dims: Vec<DimKind>,
    pub good: DensityEstimator,
    pub bad: DensityEstimator,
    /// Budget level the model was fit on.
    pub budget: u32,
}

impl KdeModel {
    /// `log good(x) - log bad(x)`; proposals maximize this.
    pub fn ratio_score(&self, x: &[f64]) -> f64 {
        self.good.log_density(x, &self.dims) - self.bad.log_density(x, &self.dims)
    }

    pub fn dims(&self) -> &[DimKind] {
        &self.dims
    }
}

/// Fits the good/bad densities on trials that share one budget level.
///
/// The top `max(ceil(good_fraction * N), min_points)` records by validation
/// accuracy form the good set, the rest the bad set. Returns `None` when
/// fewer than `min_points + 2` records are available (the bad set must be
/// nonempty for the ratio to mean anything).
pub fn kde_fit(
    records: &[&TrialRecord],
    space: &SearchSpace,
    cfg: &BohbConfig,
) -> Result<Option<KdeModel>> {
    cfg.validate()?;
    space.validate()?;
    let n = records.len();
    if n == 0 {
        return Ok(None);
    }
    let budget = records[0].budget;
    if records.iter().any(|r| r.budget != budget) {
        return Err(Error::Internal(
            "kde_fit requires records at a single budget level".into(),
        ));
    }
    let min_points = cfg.effective_min_points(space);
    if n < min_points + 2 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        records[b]
            .val_accuracy
            .partial_cmp(&records[a].val_accuracy)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(records[a].trial_id.cmp(&records[b].trial_id))
    });
    let n_good = ((cfg.good_fraction * n as f64).ceil() as usize)
        .max(min_points)
        .min(n - 1);
    let dims = space.dims();
    let encode = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter().map(|&i| space.encode(&records[i].theta)).collect()
    };
    let good = DensityEstimator::fit(encode(&order[..n_good]), &dims);
    let bad = DensityEstimator::fit(encode(&order[n_good..]), &dims);
    Ok(Some(KdeModel { dims, good, bad, budget }))
}

/// Fits on the highest budget that has enough records.
pub fn kde_fit_at_best_budget(
    records: &[TrialRecord],
    space: &SearchSpace,
    cfg: &BohbConfig,
) -> Result<Option<KdeModel>> {
    let min_needed = cfg.effective_min_points(space) + 2;
    let mut budgets: Vec<u32> = records.iter().map(|r| r.budget).collect();
    budgets.sort_unstable();
    budgets.dedup();
    for &b in budgets.iter().rev() {
        let at: Vec<&TrialRecord> = records.iter().filter(|r| r.budget == b).collect();
        if at.len() >= min_needed {
            return kde_fit(&at, space, cfg);
        }
    }
    Ok(None)
}

/// Proposes one configuration: uniform with probability `random_fraction` (or
/// whenever no model is available), otherwise the best of
/// `candidates_per_proposal` draws from the good density by good/bad ratio.
pub fn kde_propose<R: Rng>(
    model: Option<&KdeModel>,
    space: &SearchSpace,
    cfg: &BohbConfig,
    rng: &mut R,
) -> Result<GeneratorHyperparams> {
    cfg.validate()?;
    // Drawn unconditionally so that random_fraction = 1 reproduces the pure
    // random-search stream no matter what has been observed.
    let coin = rng.random::<f64>();
    let model = match model {
        Some(m) if coin >= cfg.random_fraction => m,
        _ => return space.sample_uniform(rng),
    };
    let mut best: Option<(f64, GeneratorHyperparams)> = None;
    for _ in 0..cfg.candidates_per_proposal {
        let raw = model.good.sample_raw(model.dims(), rng);
        let theta = space.decode_and_repair(&raw)?;
        // Score the repaired point: that is what would actually run.
        let score = model.ratio_score(&space.encode(&theta));
        match &best {
            Some((s, _)) if *s >= score => {}
            _ => best = Some((score, theta)),
        }
    }
    Ok(best.expect("candidates_per_proposal >= 1").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Records whose accuracy peaks at temperature 5.
    fn tau_peak_records(n: usize, seed: u64, space: &SearchSpace) -> Vec<TrialRecord> {
        let mut r = rng(seed);
        (0..n as u64)
            .map(|i| {
                let mut theta = space.sample_uniform(&mut r).unwrap();
                theta.kd_temperature = 1.0 + 9.0 * r.random::<f64>();
                let acc = 1.0 - (theta.kd_temperature - 5.0).powi(2) / 25.0;
                TrialRecord {
                    trial_id: i,
                    theta,
                    budget: 4,
                    seed: i,
                    val_accuracy: acc,
                    val_loss: 1.0 - acc,
                    wall_seconds: 1.0,
                    bracket_s: 0,
                    rung: 0,
                    infeasible: false,
                }
            })
            .collect()
    }

    fn small_cfg() -> BohbConfig {
        BohbConfig { min_points: Some(3), ..BohbConfig::default() }
    }

    #[test]
    fn good_set_sizing() {
        let space = SearchSpace::default();
        let cfg = small_cfg();
        let records = tau_peak_records(20, 1, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        let model = kde_fit(&refs, &space, &cfg).unwrap().unwrap();
        // ceil(0.15 * 20) = 3, min_points = 3 -> good set of 3.
        assert_eq!(model.good.len(), 3);
        assert_eq!(model.bad.len(), 17);
        assert_eq!(model.budget, 4);
    }

    #[test]
    fn too_few_records_yield_no_model() {
        let space = SearchSpace::default();
        let cfg = BohbConfig::default(); // min_points = dim + 1 = 21
        let records = tau_peak_records(20, 2, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        assert!(kde_fit(&refs, &space, &cfg).unwrap().is_none());
    }

    #[test]
    fn mixed_budgets_are_rejected() {
        let space = SearchSpace::default();
        let mut records = tau_peak_records(10, 3, &space);
        records[0].budget = 99;
        let refs: Vec<&TrialRecord> = records.iter().collect();
        assert!(kde_fit(&refs, &space, &small_cfg()).is_err());
    }

    #[test]
    fn good_set_concentrates_near_the_peak() {
        let space = SearchSpace::default();
        let cfg = small_cfg();
        let records = tau_peak_records(60, 4, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        let model = kde_fit(&refs, &space, &cfg).unwrap().unwrap();
        let mean_tau = |est: &DensityEstimator| {
            est_points_tau(est).iter().sum::<f64>() / est.len() as f64
        };
        let good_dist = (mean_tau(&model.good) - 5.0).abs();
        let bad_dist = (mean_tau(&model.bad) - 5.0).abs();
        assert!(
            good_dist < bad_dist,
            "good mean tau off by {good_dist}, bad by {bad_dist}"
        );
    }

    fn est_points_tau(est: &DensityEstimator) -> Vec<f64> {
        // Temperature is dimension 18 of the encoding.
        est.points_for_test().iter().map(|p| p[18]).collect()
    }

    #[test]
    fn proposals_concentrate_near_the_peak() {
        let space = SearchSpace::default();
        let mut cfg = small_cfg();
        cfg.random_fraction = 0.0;
        let records = tau_peak_records(60, 5, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        let model = kde_fit(&refs, &space, &cfg).unwrap().unwrap();

        let mut r = rng(6);
        let mut kde_err = 0.0;
        for _ in 0..200 {
            let theta = kde_propose(Some(&model), &space, &cfg, &mut r).unwrap();
            kde_err += (theta.kd_temperature - 5.0).abs();
        }
        let mut r = rng(6);
        let mut uni_err = 0.0;
        for _ in 0..200 {
            let theta = space.sample_uniform(&mut r).unwrap();
            uni_err += (theta.kd_temperature - 5.0).abs();
        }
        assert!(
            kde_err / 200.0 < uni_err / 200.0,
            "kde mean |tau-5| = {} not below uniform {}",
            kde_err / 200.0,
            uni_err / 200.0
        );
    }

    #[test]
    fn no_model_or_full_random_fraction_sample_uniformly() {
        let space = SearchSpace::default();
        let cfg = small_cfg();
        // No model: identical to the uniform stream.
        let a = kde_propose(None, &space, &cfg, &mut rng(7)).unwrap();
        let mut r = rng(7);
        let _coin = r.random::<f64>();
        let b = space.sample_uniform(&mut r).unwrap();
        assert_eq!(a, b);

        // random_fraction = 1: the model is ignored entirely.
        let records = tau_peak_records(60, 8, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        let model = kde_fit(&refs, &space, &cfg).unwrap().unwrap();
        let mut always_random = cfg;
        always_random.random_fraction = 1.0;
        let with_model = kde_propose(Some(&model), &space, &always_random, &mut rng(9)).unwrap();
        let without = kde_propose(None, &space, &always_random, &mut rng(9)).unwrap();
        assert_eq!(with_model, without);
    }

    #[test]
    fn log_density_is_finite_across_the_box() {
        let space = SearchSpace::default();
        let records = tau_peak_records(30, 10, &space);
        let refs: Vec<&TrialRecord> = records.iter().collect();
        let model = kde_fit(&refs, &space, &small_cfg()).unwrap().unwrap();
        let mut r = rng(11);
        for _ in 0..100 {
            let theta = space.sample_uniform(&mut r).unwrap();
            let score = model.ratio_score(&space.encode(&theta));
            assert!(score.is_finite(), "ratio score must stay finite");
        }
    }
}

#[cfg(test)]
impl DensityEstimator {
    fn points_for_test(&self) -> &[Vec<f64>] {
        &self.points
    }
}
