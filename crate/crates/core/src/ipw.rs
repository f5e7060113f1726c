//! Complete-case inverse-probability-weighted baselines: the completeness
//! model (logistic or forest), the weights, and weighted estimation.

use crate::design::{fit_outcome, FuzzyMode, OutcomeSpec};
use crate::error::{Error, Result};
use crate::estimators::EstimateVector;
use crate::imputers::forest::{fit_forest, ForestConfig, ForestTask};
use crate::imputers::fcs::irls_fit;
use crate::rng::{self, stream};
use crate::stats::logistic;
use crate::tabular::{Dataset, Role};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbModel {
    Logistic,
    Forest,
}

fn default_true() -> bool {
    true
}
fn default_trees() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpwConfig {
    pub prob_model: ProbModel,
    #[serde(default = "default_true")]
    pub include_outcomes: bool,
    #[serde(default)]
    pub one_hot_numeric_bins: bool,
    /// Optional stabilization: cap weights at this quantile of the
    /// complete-case weights. Must lie in (0.5, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_cap_quantile: Option<f64>,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub seed: u64,
}

impl IpwConfig {
    pub fn new(prob_model: ProbModel) -> Self {
        IpwConfig {
            prob_model,
            include_outcomes: true,
            one_hot_numeric_bins: false,
            weight_cap_quantile: None,
            n_trees: default_trees(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(q) = self.weight_cap_quantile {
            if !(q > 0.5 && q <= 1.0) {
                return Err(Error::Config(
                    "weight_cap_quantile must lie in (0.5, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-row estimated probability of being complete, fitted on the fully
/// observed columns.
pub fn fit_missingness_model(ds: &Dataset, cfg: &IpwConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = ds.n_rows();
    let complete: Vec<f64> = (0..n)
        .map(|r| if ds.row_is_complete(r) { 1.0 } else { 0.0 })
        .collect();
    let n_complete = complete.iter().filter(|&&v| v == 1.0).count();
    if n_complete == n {
        return Ok(vec![1.0; n]);
    }
    if n_complete == 0 {
        return Err(Error::IpwInfeasible("no complete rows".into()));
    }

    // representation flags first, then keep only fully observed columns
    let transformed =
        crate::imputers::apply_one_hot_flags(ds, cfg.one_hot_numeric_bins, false)?;
    let keep: Vec<usize> = (0..transformed.n_cols())
        .filter(|&c| {
            let spec = transformed.spec(c);
            let role_ok = match spec.role {
                Role::Predictor => true,
                Role::Outcome | Role::SurvivalTime | Role::SurvivalEvent => {
                    cfg.include_outcomes
                }
                Role::Id => false,
            };
            role_ok && transformed.missing_count_of(c) == 0
        })
        .collect();
    if keep.is_empty() || !keep.iter().any(|&c| transformed.spec(c).role == Role::Predictor)
    {
        return Err(Error::IpwInfeasible(
            "no fully observed predictor columns".into(),
        ));
    }
    let reduced = transformed.select_columns(&keep)?;
    let frame = crate::frame::numeric_frame(&reduced, crate::frame::RoleFilter::AllButId);
    let x = frame.data;

    match cfg.prob_model {
        ProbModel::Logistic => {
            let fit = irls_fit(&complete, &x)?;
            Ok((0..n)
                .map(|r| {
                    let mut eta = fit.beta[0];
                    for j in 0..x.ncols() {
                        eta += fit.beta[j + 1] * x[[r, j]];
                    }
                    logistic(eta).clamp(1e-12, 1.0)
                })
                .collect())
        }
        ProbModel::Forest => {
            let fcfg = ForestConfig {
                n_trees: cfg.n_trees,
                ..ForestConfig::default()
            };
            let mut rng = rng::rng_for(cfg.seed, &[stream::METHOD, 0x1b]);
            let forest = fit_forest(
                &x,
                &complete,
                ForestTask::Classification { n_classes: 2 },
                &fcfg,
                &mut rng,
            )?;
            let floor = 1.0 / (2.0 * cfg.n_trees as f64);
            Ok((0..n)
                .map(|r| forest.predict_proportions(&x, r)[1].max(floor))
                .collect())
        }
    }
}

/// Weighted complete-case estimation: weights 1 / p-hat on complete rows,
/// optional quantile capping, robust sandwich variance via the estimators.
pub fn ipw_estimates(
    ds: &Dataset,
    probs: &[f64],
    outcome: &OutcomeSpec,
    binarize: bool,
    fuzzy: FuzzyMode,
    cap_quantile: Option<f64>,
) -> Result<EstimateVector> {
    if probs.len() != ds.n_rows() {
        return Err(Error::Contract("probability vector length mismatch".into()));
    }
    let rows: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.row_is_complete(r)).collect();
    if rows.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    let mut weights = Vec::with_capacity(rows.len());
    for &r in &rows {
        let p = probs[r];
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Contract(format!(
                "completeness probability {p} outside (0,1] at row {r}"
            )));
        }
        weights.push(1.0 / p);
    }
    if let Some(q) = cap_quantile {
        let mut sorted = weights.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
        let cap = sorted[idx];
        for w in weights.iter_mut() {
            if *w > cap {
                *w = cap;
            }
        }
    }
    let complete = ds.select_rows(&rows)?;
    let prepared = crate::design::prepare_for_estimation(&complete, binarize, fuzzy)?;
    fit_outcome(&prepared, outcome, Some(&weights))
}

/// Unweighted complete-case fit, the baseline IPW is compared against.
pub fn complete_case_estimates(
    ds: &Dataset,
    outcome: &OutcomeSpec,
    binarize: bool,
    fuzzy: FuzzyMode,
) -> Result<EstimateVector> {
    let complete = ds.listwise_delete()?;
    let prepared = crate::design::prepare_for_estimation(&complete, binarize, fuzzy)?;
    fit_outcome(&prepared, outcome, None)
}

/// Spearman rank correlation, used to diagnose propensity gradients.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let n = v.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut out = vec![0.0; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let rank = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = rank;
            }
            i = j + 1;
        }
        out
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let (ma, sa) = crate::stats::mean_sd(&ra);
    let (mb, sb) = crate::stats::mean_sd(&rb);
    let cov = ra
        .iter()
        .zip(rb.iter())
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / ra.len() as f64;
    cov / (sa * sb)
}
