//! The evaluation framework: gold-standard estimation, the amputation ->
//! imputation -> pooling loop, the RB / ER / MSE / CR / ratio-SE metric
//! suite, Wilcoxon signed-rank comparisons, and win-tie-loss grids.

use crate::amputation::{ampute_batch, AmputationPlan};
use crate::design::{fit_outcome, prepare_for_estimation, FuzzyMode, OutcomeSpec};
use crate::error::{Error, Result};
use crate::estimators::EstimateVector;
use crate::imputers::fcs::{run_fcs, FcsConfig};
use crate::imputers::forest::{run_forest_imputer, ForestConfig};
use crate::imputers::jm::{run_jm_imputer, JmConfig};
use crate::imputers::ImputedSet;
use crate::ipw::{fit_missingness_model, ipw_estimates, IpwConfig};
use crate::pooling::rubin_pool;
use crate::rng::{self, stream};
use crate::stats::{normal_cdf, normal_quantile};
use crate::tabular::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Minimum fraction of amputations that must succeed before a method report
/// is considered valid.
const MIN_SUCCESS_FRACTION: f64 = 0.8;
/// Gold estimates smaller than this have no meaningful estimate ratio.
const ER_SUPPRESS_BELOW: f64 = 1e-6;

/// Gold-standard estimates on the complete, normalized dataset.
#[derive(Debug, Clone)]
pub struct GoldStandard {
    pub per_outcome: BTreeMap<String, EstimateVector>,
}

/// Compute the gold standard once per experiment.
pub fn gold_standard(
    ds_complete: &Dataset,
    outcomes: &[OutcomeSpec],
    binarize: bool,
    fuzzy: FuzzyMode,
) -> Result<GoldStandard> {
    if !ds_complete.is_complete() {
        return Err(Error::NotComplete(ds_complete.missing_cell_count()));
    }
    let prepared = prepare_for_estimation(ds_complete, binarize, fuzzy)?;
    let mut per_outcome = BTreeMap::new();
    for outcome in outcomes {
        let fit = fit_outcome(&prepared, outcome, None)?;
        if fit.non_identifiable.iter().any(|&b| b) {
            let bad: Vec<&str> = fit
                .non_identifiable
                .iter()
                .zip(fit.names.iter())
                .filter(|(b, _)| **b)
                .map(|(_, n)| n.as_str())
                .collect();
            return Err(Error::Contract(format!(
                "gold standard for '{}' has non-identifiable predictors {bad:?}; \
                 the complete dataset is too small for this schema",
                outcome.name()
            )));
        }
        per_outcome.insert(outcome.name().to_string(), fit);
    }
    Ok(GoldStandard { per_outcome })
}

/// Degenerate fits (constant covariates after imputation) make the
/// amputation unusable for this method; surfaced as a per-amputation
/// failure.
fn reject_non_identifiable(fit: &EstimateVector, outcome: &str) -> Result<()> {
    if fit.non_identifiable.iter().any(|&b| b) {
        let bad: Vec<&str> = fit
            .non_identifiable
            .iter()
            .zip(fit.names.iter())
            .filter(|(b, _)| **b)
            .map(|(_, n)| n.as_str())
            .collect();
        return Err(Error::Contract(format!(
            "non-identifiable predictors {bad:?} in '{outcome}' fit"
        )));
    }
    Ok(())
}

/// A strategy under evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum MethodConfig {
    Fcs(FcsConfig),
    Forest(ForestConfig),
    Jm(JmConfig),
    Ipw(IpwConfig),
    /// restores the pre-amputation values; harness self-test only
    Oracle,
}

impl MethodConfig {
    pub fn set_m(&mut self, m: usize) {
        match self {
            MethodConfig::Fcs(c) => c.m = m,
            MethodConfig::Forest(c) => c.m = m,
            MethodConfig::Jm(c) => c.m = m,
            MethodConfig::Ipw(_) | MethodConfig::Oracle => {}
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            MethodConfig::Fcs(c) => c.seed = seed,
            MethodConfig::Forest(c) => c.seed = seed,
            MethodConfig::Jm(c) => c.seed = seed,
            MethodConfig::Ipw(c) => c.seed = seed,
            MethodConfig::Oracle => {}
        }
    }
}

/// Per-amputation pooled result for one outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmputationEstimate {
    pub amputation: usize,
    pub q: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
}

/// Metric vectors for one outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeMetrics {
    pub outcome: String,
    pub predictor_names: Vec<String>,
    pub rb: Vec<f64>,
    /// None where the gold estimate is too close to zero
    pub er: Vec<Option<f64>>,
    pub mse: Vec<f64>,
    pub cr: Vec<f64>,
    pub ratio_se: Vec<f64>,
    pub mean_abs_rb: f64,
    pub mean_mse: f64,
    pub mean_er: f64,
    pub mean_cr: f64,
    pub mean_ratio_se: f64,
    /// per-amputation pooled estimates behind the metrics
    pub raw: Vec<AmputationEstimate>,
    pub coverage_flags: Vec<String>,
}

/// Full evaluation record for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method_id: String,
    pub fingerprint: String,
    pub a_planned: usize,
    pub a_succeeded: usize,
    pub failed: bool,
    pub failures: Vec<String>,
    pub per_outcome: Vec<OutcomeMetrics>,
    pub cross_outcome_mean_abs_rb: f64,
    pub cross_outcome_mean_mse: f64,
    pub cross_outcome_mean_er: f64,
    pub cross_outcome_mean_cr: f64,
    pub cross_outcome_mean_ratio_se: f64,
}

impl MethodReport {
    pub fn metric_vector(&self, outcome: &str, metric: Metric) -> Option<Vec<f64>> {
        let om = self.per_outcome.iter().find(|o| o.outcome == outcome)?;
        Some(match metric {
            Metric::AbsRb => om.rb.iter().map(|v| v.abs()).collect(),
            Metric::Mse => om.mse.clone(),
            Metric::AbsErDeviation => om
                .er
                .iter()
                .map(|v| v.map(|e| (1.0 - e).abs()).unwrap_or(f64::NAN))
                .collect(),
            Metric::CrDeviation => om.cr.iter().map(|v| (v - 0.95).abs()).collect(),
            Metric::RatioSe => om.ratio_se.clone(),
        })
    }
}

/// Metrics that enter win-tie-loss comparisons; all are lower-is-better
/// transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AbsRb,
    Mse,
    AbsErDeviation,
    CrDeviation,
    RatioSe,
}

impl Metric {
    pub fn all() -> [Metric; 5] {
        [
            Metric::AbsRb,
            Metric::Mse,
            Metric::AbsErDeviation,
            Metric::CrDeviation,
            Metric::RatioSe,
        ]
    }

    pub fn file_tag(&self) -> &'static str {
        match self {
            Metric::AbsRb => "rb",
            Metric::Mse => "mse",
            Metric::AbsErDeviation => "er",
            Metric::CrDeviation => "cr",
            Metric::RatioSe => "ratio_se",
        }
    }
}

/// Options shared by every evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub binarize: bool,
    pub fuzzy: FuzzyMode,
    pub alpha: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            binarize: true,
            fuzzy: FuzzyMode::Threshold,
            alpha: 0.05,
        }
    }
}

fn impute_for_method(
    method: &MethodConfig,
    amputed: &Dataset,
    complete: &Dataset,
    m: usize,
    seed: u64,
) -> Result<Vec<ImputedSet>> {
    match method {
        MethodConfig::Fcs(cfg) => {
            let mut c = cfg.clone();
            c.m = m;
            c.seed = seed;
            run_fcs(amputed, &c)
        }
        MethodConfig::Forest(cfg) => {
            let mut c = cfg.clone();
            c.m = m;
            c.seed = seed;
            run_forest_imputer(amputed, &c)
        }
        MethodConfig::Jm(cfg) => {
            let mut c = cfg.clone();
            c.m = m;
            c.seed = seed;
            run_jm_imputer(amputed, &c)
        }
        MethodConfig::Oracle => Ok((1..=m)
            .map(|j| ImputedSet {
                index: j,
                dataset: complete.clone(),
            })
            .collect()),
        MethodConfig::Ipw(_) => unreachable!("IPW does not impute"),
    }
}

/// Pool one amputation's m imputed datasets for every outcome.
fn pooled_for_amputation(
    imputed: &[ImputedSet],
    outcomes: &[OutcomeSpec],
    opts: &EvalOptions,
) -> Result<BTreeMap<String, AmputationEstimate>> {
    let mut fits: BTreeMap<String, Vec<EstimateVector>> = BTreeMap::new();
    for set in imputed {
        let prepared = prepare_for_estimation(&set.dataset, opts.binarize, opts.fuzzy)?;
        for outcome in outcomes {
            let fit = fit_outcome(&prepared, outcome, None)?;
            reject_non_identifiable(&fit, outcome.name())?;
            fits.entry(outcome.name().to_string()).or_default().push(fit);
        }
    }
    let mut out = BTreeMap::new();
    for (name, evs) in fits {
        let names = evs[0].names.clone();
        if evs.len() == 1 {
            // m = 1: no pooling, single-fit intervals
            let ev = &evs[0];
            out.insert(
                name,
                AmputationEstimate {
                    amputation: 0,
                    q: ev.q.clone(),
                    se: ev.se.clone(),
                    ci: ev.ci.clone(),
                },
            );
            continue;
        }
        let estimates: Vec<Vec<f64>> = evs.iter().map(|e| e.q.clone()).collect();
        let variances: Vec<Vec<f64>> = evs
            .iter()
            .map(|e| e.var.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect())
            .collect();
        let pooled = rubin_pool(&estimates, &variances, &names)?;
        out.insert(
            name,
            AmputationEstimate {
                amputation: 0,
                q: pooled.qbar,
                se: pooled.se,
                ci: pooled.ci,
            },
        );
    }
    Ok(out)
}

/// Metric suite for one outcome given the gold fit and the per-amputation
/// pooled estimates.
pub fn metrics(
    gold: &EstimateVector,
    pooled: &[AmputationEstimate],
    outcome: &str,
) -> Result<OutcomeMetrics> {
    let d = gold.q.len();
    if pooled.is_empty() || pooled.iter().any(|p| p.q.len() != d) {
        return Err(Error::Contract("metric dimensions disagree".into()));
    }
    let a = pooled.len() as f64;
    let mut rb = Vec::with_capacity(d);
    let mut er = Vec::with_capacity(d);
    let mut mse = Vec::with_capacity(d);
    let mut cr = Vec::with_capacity(d);
    let mut ratio_se = Vec::with_capacity(d);
    for i in 0..d {
        let q_gold = gold.q[i];
        let qbar = if pooled.iter().all(|p| p.q[i] == pooled[0].q[i]) {
            pooled[0].q[i]
        } else {
            pooled.iter().map(|p| p.q[i]).sum::<f64>() / a
        };
        rb.push(qbar - q_gold);
        er.push(if q_gold.abs() < ER_SUPPRESS_BELOW {
            None
        } else {
            Some(qbar / q_gold)
        });
        mse.push(pooled.iter().map(|p| (p.q[i] - q_gold).powi(2)).sum::<f64>() / a);
        cr.push(
            pooled
                .iter()
                .filter(|p| p.ci[i].0 <= q_gold && q_gold <= p.ci[i].1)
                .count() as f64
                / a,
        );
        ratio_se.push(pooled.iter().map(|p| p.se[i] / gold.se[i]).sum::<f64>() / a);
    }
    // variance decomposition sanity: MSE_i >= RB_i^2 (within epsilon)
    for i in 0..d {
        if mse[i] + 1e-12 < rb[i] * rb[i] {
            return Err(Error::Numerical(format!(
                "MSE {} below squared bias {} for predictor {}",
                mse[i],
                rb[i] * rb[i],
                gold.names[i]
            )));
        }
    }
    let mean_abs_rb = rb.iter().map(|v| v.abs()).sum::<f64>() / d as f64;
    let mean_mse = mse.iter().sum::<f64>() / d as f64;
    let ers: Vec<f64> = er.iter().filter_map(|v| *v).collect();
    let mean_er = if ers.is_empty() {
        f64::NAN
    } else {
        ers.iter().sum::<f64>() / ers.len() as f64
    };
    let mean_cr = cr.iter().sum::<f64>() / d as f64;
    let mean_ratio_se = ratio_se.iter().sum::<f64>() / d as f64;
    let mut coverage_flags = Vec::new();
    for (i, &c) in cr.iter().enumerate() {
        if c < 0.90 {
            coverage_flags.push(format!("{}: too optimistic (CR {:.3})", gold.names[i], c));
        } else if c > 0.99 {
            coverage_flags.push(format!(
                "{}: possibly inefficient, inspect ratio_SE (CR {:.3})",
                gold.names[i], c
            ));
        }
    }
    Ok(OutcomeMetrics {
        outcome: outcome.to_string(),
        predictor_names: gold.names.clone(),
        rb,
        er,
        mse,
        cr,
        ratio_se,
        mean_abs_rb,
        mean_mse,
        mean_er,
        mean_cr,
        mean_ratio_se,
        raw: pooled.to_vec(),
        coverage_flags,
    })
}

/// Evaluate one method over A amputations of the complete dataset.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_method(
    ds_complete: &Dataset,
    gold: &GoldStandard,
    method_id: &str,
    method: &MethodConfig,
    plan: &AmputationPlan,
    m: usize,
    outcomes: &[OutcomeSpec],
    opts: &EvalOptions,
    method_seed: u64,
) -> Result<MethodReport> {
    let amputed_sets = ampute_batch(ds_complete, plan)?;
    let a_planned = amputed_sets.len();

    let results: Vec<(usize, Result<BTreeMap<String, AmputationEstimate>>)> = amputed_sets
        .par_iter()
        .map(|amp| {
            let run = || -> Result<BTreeMap<String, AmputationEstimate>> {
                match method {
                    MethodConfig::Ipw(cfg) => {
                        let mut c = cfg.clone();
                        c.seed = rng::derive_path(
                            method_seed,
                            &[stream::AMPUTATION, amp.index as u64],
                        );
                        let probs = fit_missingness_model(&amp.dataset, &c)?;
                        let mut out = BTreeMap::new();
                        for outcome in outcomes {
                            let fit = ipw_estimates(
                                &amp.dataset,
                                &probs,
                                outcome,
                                opts.binarize,
                                opts.fuzzy,
                                c.weight_cap_quantile,
                            )?;
                            reject_non_identifiable(&fit, outcome.name())?;
                            out.insert(
                                outcome.name().to_string(),
                                AmputationEstimate {
                                    amputation: amp.index,
                                    q: fit.q.clone(),
                                    se: fit.se.clone(),
                                    ci: fit.ci.clone(),
                                },
                            );
                        }
                        Ok(out)
                    }
                    _ => {
                        let seed = rng::derive_path(
                            method_seed,
                            &[stream::AMPUTATION, amp.index as u64],
                        );
                        let imputed =
                            impute_for_method(method, &amp.dataset, ds_complete, m, seed)?;
                        let mut pooled = pooled_for_amputation(&imputed, outcomes, opts)?;
                        for est in pooled.values_mut() {
                            est.amputation = amp.index;
                        }
                        Ok(pooled)
                    }
                }
            };
            (amp.index, run())
        })
        .collect();

    let mut failures = Vec::new();
    let mut per_outcome_raw: BTreeMap<String, Vec<AmputationEstimate>> = BTreeMap::new();
    for (index, res) in results {
        match res {
            Ok(map) => {
                for (name, est) in map {
                    per_outcome_raw.entry(name).or_default().push(est);
                }
            }
            Err(e) => failures.push(format!("amputation {index}: {e}")),
        }
    }
    let a_succeeded = a_planned - failures.len();
    let failed = (a_succeeded as f64) < MIN_SUCCESS_FRACTION * a_planned as f64;

    let mut per_outcome = Vec::new();
    if !failed {
        for outcome in outcomes {
            let name = outcome.name();
            let gold_fit = gold
                .per_outcome
                .get(name)
                .ok_or_else(|| Error::Contract(format!("no gold standard for '{name}'")))?;
            let mut raws = per_outcome_raw.remove(name).unwrap_or_default();
            raws.sort_by_key(|r| r.amputation);
            per_outcome.push(metrics(gold_fit, &raws, name)?);
        }
    }

    let k = per_outcome.len().max(1) as f64;
    let report = MethodReport {
        method_id: method_id.to_string(),
        fingerprint: method_fingerprint(method_id, method, plan, m),
        a_planned,
        a_succeeded,
        failed,
        failures,
        cross_outcome_mean_abs_rb: per_outcome.iter().map(|o| o.mean_abs_rb).sum::<f64>() / k,
        cross_outcome_mean_mse: per_outcome.iter().map(|o| o.mean_mse).sum::<f64>() / k,
        cross_outcome_mean_er: per_outcome.iter().map(|o| o.mean_er).sum::<f64>() / k,
        cross_outcome_mean_cr: per_outcome.iter().map(|o| o.mean_cr).sum::<f64>() / k,
        cross_outcome_mean_ratio_se: per_outcome.iter().map(|o| o.mean_ratio_se).sum::<f64>()
            / k,
        per_outcome,
    };
    Ok(report)
}

fn method_fingerprint(
    method_id: &str,
    method: &MethodConfig,
    plan: &AmputationPlan,
    m: usize,
) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(method_id.as_bytes());
    hasher.update(serde_json::to_vec(method).unwrap_or_default());
    hasher.update(serde_json::to_vec(plan).unwrap_or_default());
    hasher.update(m.to_le_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped,
/// midranks handle ties, the exact distribution is enumerated for n <= 12,
/// and the normal approximation with tie and continuity corrections is used
/// beyond. Returns (W+, p).
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Contract("paired samples of equal length required".into()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0 && d.is_finite())
        .collect();
    let n = diffs.len();
    if n == 0 {
        // no signal
        return Ok((0.0, 1.0));
    }
    // midranks of |d|
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = midrank;
        }
        i = j + 1;
    }
    let w_plus: f64 = diffs
        .iter()
        .zip(ranks.iter())
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let p = if n <= 12 {
        // exact: enumerate all sign assignments over the observed ranks
        let total = 1usize << n;
        let mut count_le = 0usize;
        let mut count_ge = 0usize;
        for pattern in 0..total {
            let mut w = 0.0;
            for (bit, r) in ranks.iter().enumerate() {
                if pattern & (1 << bit) != 0 {
                    w += r;
                }
            }
            if w <= w_plus + 1e-12 {
                count_le += 1;
            }
            if w >= w_plus - 1e-12 {
                count_ge += 1;
            }
        }
        let p_le = count_le as f64 / total as f64;
        let p_ge = count_ge as f64 / total as f64;
        (2.0 * p_le.min(p_ge)).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // tie correction over groups of equal |d|
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return Ok((w_plus, 1.0));
        }
        let delta = w_plus - mean;
        let corrected = delta.abs() - 0.5;
        let z = corrected.max(0.0) / var.sqrt();
        (2.0 * (1.0 - normal_cdf(z))).min(1.0)
    };
    Ok((w_plus, p))
}

/// Pairwise win-tie-loss grid over methods for one metric: entries sum the
/// per-outcome +1/0/-1 comparisons decided by the Wilcoxon test at `alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtlGrid {
    pub metric: Metric,
    pub method_ids: Vec<String>,
    /// grid[i][j]: wins of method i over method j minus losses, summed over
    /// outcomes; antisymmetric with zero diagonal
    pub grid: Vec<Vec<i64>>,
}

pub fn win_tie_loss(
    reports: &[&MethodReport],
    metric: Metric,
    outcomes: &[String],
    alpha: f64,
) -> Result<WtlGrid> {
    if reports.len() < 2 {
        return Err(Error::Contract("win_tie_loss needs at least 2 methods".into()));
    }
    let k = reports.len();
    let mut grid = vec![vec![0i64; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let mut entry = 0i64;
            for outcome in outcomes {
                let (Some(vi), Some(vj)) = (
                    reports[i].metric_vector(outcome, metric),
                    reports[j].metric_vector(outcome, metric),
                ) else {
                    continue;
                };
                // drop pairs with suppressed (NaN) values
                let pairs: (Vec<f64>, Vec<f64>) = vi
                    .iter()
                    .zip(vj.iter())
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .map(|(a, b)| (*a, *b))
                    .unzip();
                if pairs.0.is_empty() {
                    continue;
                }
                let (w_plus, p) = wilcoxon_signed_rank(&pairs.0, &pairs.1)?;
                if p < alpha {
                    // lower transformed metric wins; W+ large means method i
                    // tends to sit above method j
                    let n_eff = pairs
                        .0
                        .iter()
                        .zip(pairs.1.iter())
                        .filter(|(a, b)| a != b)
                        .count() as f64;
                    let w_total = n_eff * (n_eff + 1.0) / 2.0;
                    if w_plus > w_total / 2.0 {
                        entry -= 1; // i larger -> i loses
                    } else if w_plus < w_total / 2.0 {
                        entry += 1;
                    }
                }
            }
            grid[i][j] = entry;
            grid[j][i] = -entry;
        }
    }
    Ok(WtlGrid {
        metric,
        method_ids: reports.iter().map(|r| r.method_id.clone()).collect(),
        grid,
    })
}

/// CI at the normal quantile, matching the pooled t-interval as df grows.
pub fn normal_ci(q: f64, se: f64) -> (f64, f64) {
    let z = normal_quantile(0.975);
    (q - z * se, q + z * se)
}
