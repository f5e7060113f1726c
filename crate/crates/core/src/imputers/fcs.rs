//! Chained-equations imputer with three univariate families: predictive
//! mean matching / logistic / polytomous (default), Bayesian normal draws,
//! and logistic-on-one-hot.

use super::{Drawn, ImputedSet, SurvivalInModel, SweepOptions, TargetTask, VisitOrder};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, inv_spd, solve_spd};
use crate::rng::{self, draw_chi_square, draw_standard_normal};
use crate::stats::logistic;
use crate::tabular::{ColumnKind, Dataset};
use ndarray::{Array1, Array2};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

const RIDGE: f64 = 1e-8;
const SEPARATION_RIDGE: f64 = 1e-4;
const SEPARATION_BOUND: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcsVariant {
    /// pmm for numeric, logistic for binary, polytomous for categorical
    Default,
    /// Bayesian normal draws for every target (fuzzy on binary targets)
    Norm,
    /// logistic for every target; requires an all-binary representation
    Logreg,
}

fn default_max_iter() -> usize {
    21
}
fn default_donors() -> usize {
    3
}
fn default_m() -> usize {
    5
}
fn default_tol() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}
fn default_visit() -> VisitOrder {
    VisitOrder::Monotone
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcsConfig {
    pub variant: FcsVariant,
    #[serde(default = "default_true")]
    pub include_outcomes: bool,
    #[serde(default)]
    pub one_hot_numeric_bins: bool,
    #[serde(default)]
    pub one_hot_categorical: bool,
    #[serde(default = "default_visit")]
    pub visit_order: VisitOrder,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_donors")]
    pub pmm_donors: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub early_stop_tol: f64,
    #[serde(default)]
    pub survival_in_model: SurvivalInModel,
}

impl FcsConfig {
    pub fn new(variant: FcsVariant) -> Self {
        FcsConfig {
            variant,
            include_outcomes: true,
            one_hot_numeric_bins: false,
            one_hot_categorical: false,
            visit_order: VisitOrder::Monotone,
            max_iter: default_max_iter(),
            pmm_donors: default_donors(),
            m: default_m(),
            seed: 0,
            early_stop_tol: default_tol(),
            survival_in_model: SurvivalInModel::EventAndTime,
        }
    }
}

/// beta-hat, a posterior draw of beta, and the drawn residual sd.
fn bayes_linear_draw(
    y: &[f64],
    x: &Array2<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<(Array1<f64>, Array1<f64>, f64)> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    let mut xtx = Array2::zeros((p, p));
    let mut xty = Array1::zeros(p);
    for r in 0..n {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for j in 0..x.ncols() {
            row.push(x[[r, j]]);
        }
        for j in 0..p {
            xty[j] += row[j] * y[r];
            for k in j..p {
                xtx[[j, k]] += row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtx[[j, k]] = xtx[[k, j]];
        }
    }
    let (beta_hat, _) = solve_spd(&xtx, &xty, RIDGE)?;
    let mut ss = 0.0;
    for r in 0..n {
        let mut pred = beta_hat[0];
        for j in 0..x.ncols() {
            pred += beta_hat[j + 1] * x[[r, j]];
        }
        ss += (y[r] - pred).powi(2);
    }
    let df = (n.saturating_sub(p)).max(1) as f64;
    let sigma2_star = ss / draw_chi_square(rng, df).max(1e-300);
    let sigma_star = sigma2_star.sqrt();
    let (v, _) = inv_spd(&xtx, RIDGE)?;
    let l = cholesky_lower(&v, 0.0)?;
    let z: Vec<f64> = (0..p).map(|_| draw_standard_normal(rng)).collect();
    let mut beta_star = beta_hat.clone();
    for j in 0..p {
        let mut acc = 0.0;
        for k in 0..=j {
            acc += l[[j, k]] * z[k];
        }
        beta_star[j] += sigma_star * acc;
    }
    Ok((beta_hat, beta_star, sigma_star))
}

fn predict(x: &Array2<f64>, beta: &Array1<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|r| {
            let mut acc = beta[0];
            for j in 0..x.ncols() {
                acc += beta[j + 1] * x[[r, j]];
            }
            acc
        })
        .collect()
}

/// Donor indices (into the observed rows) by type-1 predictive mean
/// matching: observed predictions use beta-hat, missing-row predictions use
/// the posterior draw.
pub(crate) fn pmm_donor_indices(
    y_obs: &[f64],
    x_obs: &Array2<f64>,
    x_mis: &Array2<f64>,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>> {
    let n_obs = y_obs.len();
    if k == 0 {
        return Err(Error::Contract("pmm needs at least one donor".into()));
    }
    if k > n_obs {
        return Err(Error::Contract(format!(
            "pmm donors k={k} exceeds {n_obs} observed rows"
        )));
    }
    let (beta_hat, beta_star, _) = bayes_linear_draw(y_obs, x_obs, rng)?;
    let pred_obs = predict(x_obs, &beta_hat);
    let pred_mis = predict(x_mis, &beta_star);
    super::match_donors(&pred_obs, &pred_mis, k, rng)
}

/// Predictive mean matching: each missing row receives the observed value of
/// one of its k nearest donors by predicted mean.
pub fn impute_pmm(
    y_obs: &[f64],
    x_obs: &Array2<f64>,
    x_mis: &Array2<f64>,
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let donors = pmm_donor_indices(y_obs, x_obs, x_mis, k, rng)?;
    Ok(donors.into_iter().map(|d| y_obs[d]).collect())
}

/// Bayesian normal imputation: posterior draw of (beta, sigma) plus residual
/// noise.
pub fn impute_norm(
    y_obs: &[f64],
    x_obs: &Array2<f64>,
    x_mis: &Array2<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let (_, beta_star, sigma_star) = bayes_linear_draw(y_obs, x_obs, rng)?;
    let mut out = predict(x_mis, &beta_star);
    for v in out.iter_mut() {
        *v += sigma_star * draw_standard_normal(rng);
    }
    Ok(out)
}

pub(crate) struct LogisticFit {
    pub(crate) beta: Array1<f64>,
    pub(crate) cov: Array2<f64>,
}

/// IRLS with the standard separation fallback; shared with the IPW
/// completeness model.
pub(crate) fn irls_fit(y: &[f64], x: &Array2<f64>) -> Result<LogisticFit> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::Contract(
            "both classes must be present among observed values".into(),
        ));
    }
    let fit = irls(y, x, 0.0)?;
    if standardized_norm(&fit.beta, x) > SEPARATION_BOUND {
        log::warn!("separation in logistic model; ridge fallback applied");
        return irls(y, x, SEPARATION_RIDGE);
    }
    Ok(fit)
}

fn irls(
    y: &[f64],
    x: &Array2<f64>,
    extra_ridge: f64,
) -> Result<LogisticFit> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    let mut beta = Array1::zeros(p);
    let mut info = Array2::zeros((p, p));
    let scale = n as f64 / 4.0;
    for iter in 0..60 {
        let mut score = Array1::zeros(p);
        info.fill(0.0);
        for r in 0..n {
            let mut eta = beta[0];
            for j in 0..x.ncols() {
                eta += beta[j + 1] * x[[r, j]];
            }
            let pr = logistic(eta);
            let resid = y[r] - pr;
            let wt = pr * (1.0 - pr);
            let mut row = Vec::with_capacity(p);
            row.push(1.0);
            for j in 0..x.ncols() {
                row.push(x[[r, j]]);
            }
            for j in 0..p {
                score[j] += row[j] * resid;
                for k in j..p {
                    info[[j, k]] += wt * row[j] * row[k];
                }
            }
        }
        if extra_ridge > 0.0 {
            for j in 0..p {
                score[j] -= extra_ridge * scale * beta[j];
                info[[j, j]] += extra_ridge * scale;
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[[j, k]] = info[[k, j]];
            }
        }
        let norm = score.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
        if norm < 1e-8 && iter > 0 {
            break;
        }
        let (step, _) = solve_spd(&info, &score, RIDGE)?;
        beta = &beta + &step;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Numerical("non-finite fit".into()));
        }
    }
    let (cov, _) = inv_spd(&info, RIDGE)?;
    Ok(LogisticFit { beta, cov })
}

/// Norm of the slope vector on the standardized-x scale; the separation
/// heuristic compares it to SEPARATION_BOUND.
fn standardized_norm(beta: &Array1<f64>, x: &Array2<f64>) -> f64 {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let mean = x.column(j).sum() / n;
            let sd = (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            (beta[j + 1] * sd.max(1e-12)).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Logistic imputation of a binary target: IRLS fit, normal posterior draw,
/// Bernoulli sampling. Falls back to a ridge-penalized fit when separation
/// is detected.
pub fn impute_logreg(
    y_obs: &[f64],
    x_obs: &Array2<f64>,
    x_mis: &Array2<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let fit = irls_fit(y_obs, x_obs)?;
    let l = cholesky_lower(&fit.cov, 1e-12)?;
    let p = fit.beta.len();
    let z: Vec<f64> = (0..p).map(|_| draw_standard_normal(rng)).collect();
    let mut beta_star = fit.beta.clone();
    for j in 0..p {
        let mut acc = 0.0;
        for k in 0..=j {
            acc += l[[j, k]] * z[k];
        }
        beta_star[j] += acc;
    }
    let out = predict(x_mis, &beta_star)
        .into_iter()
        .map(|eta| {
            if rng.random::<f64>() < logistic(eta) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(out)
}

/// Polytomous (multinomial logistic) imputation of a categorical target.
/// The reference is the largest observed category; categories never observed
/// get probability zero.
pub fn impute_polyreg(
    y_obs: &[f64],
    x_obs: &Array2<f64>,
    x_mis: &Array2<f64>,
    n_categories: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>> {
    let n = y_obs.len();
    let mut counts = vec![0usize; n_categories];
    for &v in y_obs {
        counts[v as usize] += 1;
    }
    let observed: Vec<usize> = (0..n_categories).filter(|&k| counts[k] > 0).collect();
    if observed.len() < 2 {
        return Err(Error::Contract(
            "at least two categories must be observed".into(),
        ));
    }
    let reference = *observed
        .iter()
        .max_by(|&&a, &&b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .unwrap();
    let contrasts: Vec<usize> = observed
        .iter()
        .copied()
        .filter(|&k| k != reference)
        .collect();
    let kc = contrasts.len();
    let p = x_obs.ncols() + 1;
    let dim = kc * p;

    let row_of = |x: &Array2<f64>, r: usize| -> Vec<f64> {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for j in 0..x.ncols() {
            row.push(x[[r, j]]);
        }
        row
    };

    let probs_at = |beta: &[f64], row: &[f64]| -> Vec<f64> {
        // softmax over reference (eta 0) and contrasts
        let mut etas = Vec::with_capacity(kc);
        for a in 0..kc {
            let mut e = 0.0;
            for j in 0..p {
                e += beta[a * p + j] * row[j];
            }
            etas.push(e);
        }
        let max_e = etas.iter().cloned().fold(0.0f64, f64::max);
        let mut denom = (0.0 - max_e).exp();
        let mut exps = Vec::with_capacity(kc);
        for &e in &etas {
            let v = (e - max_e).exp();
            denom += v;
            exps.push(v);
        }
        exps.into_iter().map(|v| v / denom).collect()
    };

    let newton = |extra_ridge: f64| -> Result<(Vec<f64>, Array2<f64>)> {
        let mut beta = vec![0.0; dim];
        let mut hess = Array2::zeros((dim, dim));
        let scale = n as f64 / 4.0;
        for iter in 0..60 {
            let mut score = Array1::zeros(dim);
            hess.fill(0.0);
            for r in 0..n {
                let row = row_of(x_obs, r);
                let pr = probs_at(&beta, &row);
                for (a, &cat_a) in contrasts.iter().enumerate() {
                    let ya = if y_obs[r] as usize == cat_a { 1.0 } else { 0.0 };
                    for j in 0..p {
                        score[a * p + j] += row[j] * (ya - pr[a]);
                    }
                    for (b, _) in contrasts.iter().enumerate().skip(a) {
                        let w = if a == b {
                            pr[a] * (1.0 - pr[a])
                        } else {
                            -pr[a] * pr[b]
                        };
                        for j in 0..p {
                            for l in 0..p {
                                hess[[a * p + j, b * p + l]] += w * row[j] * row[l];
                            }
                        }
                    }
                }
            }
            for i in 0..dim {
                for j in 0..i {
                    hess[[i, j]] = hess[[j, i]];
                }
            }
            if extra_ridge > 0.0 {
                for i in 0..dim {
                    score[i] -= extra_ridge * scale * beta[i];
                    hess[[i, i]] += extra_ridge * scale;
                }
            }
            let norm = score.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
            if norm < 1e-8 && iter > 0 {
                break;
            }
            let (step, _) = solve_spd(&hess, &score, RIDGE)?;
            for i in 0..dim {
                beta[i] += step[i];
                if !beta[i].is_finite() {
                    return Err(Error::Numerical("non-finite fit".into()));
                }
            }
        }
        Ok((beta, hess))
    };

    let (mut beta, mut hess) = newton(0.0)?;
    let slope_norm = {
        let nf = n as f64;
        (0..x_obs.ncols())
            .map(|j| {
                let mean = x_obs.column(j).sum() / nf;
                let sd = (x_obs.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / nf)
                    .sqrt();
                (0..kc)
                    .map(|a| (beta[a * p + j + 1] * sd.max(1e-12)).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    };
    if slope_norm > SEPARATION_BOUND {
        log::warn!("separation in polytomous imputation model; ridge fallback applied");
        let refit = newton(SEPARATION_RIDGE)?;
        beta = refit.0;
        hess = refit.1;
    }

    let (cov, _) = inv_spd(&hess, RIDGE)?;
    let l = cholesky_lower(&cov, 1e-12)?;
    let z: Vec<f64> = (0..dim).map(|_| draw_standard_normal(rng)).collect();
    let mut beta_star = beta.clone();
    for i in 0..dim {
        let mut acc = 0.0;
        for k in 0..=i {
            acc += l[[i, k]] * z[k];
        }
        beta_star[i] += acc;
    }

    let mut out = Vec::with_capacity(x_mis.nrows());
    for r in 0..x_mis.nrows() {
        let row = row_of(x_mis, r);
        let pr = probs_at(&beta_star, &row);
        let p_ref = 1.0 - pr.iter().sum::<f64>();
        let mut weights = Vec::with_capacity(kc + 1);
        weights.push(p_ref.max(0.0));
        weights.extend(pr.iter().copied());
        let drawn = rng::draw_categorical(rng, &weights);
        out.push(if drawn == 0 {
            reference
        } else {
            contrasts[drawn - 1]
        });
    }
    Ok(out)
}

/// Run the chained-equations imputer, producing m completed datasets.
pub fn run_fcs(ds: &Dataset, cfg: &FcsConfig) -> Result<Vec<ImputedSet>> {
    if cfg.variant == FcsVariant::Default && cfg.pmm_donors == 0 {
        return Err(Error::Config("default variant needs pmm_donors >= 1".into()));
    }
    let transformed =
        super::apply_one_hot_flags(ds, cfg.one_hot_numeric_bins, cfg.one_hot_categorical)?;
    for c in 0..transformed.n_cols() {
        if transformed.missing_count_of(c) == 0 {
            continue;
        }
        let kind = transformed.spec(c).kind;
        match cfg.variant {
            FcsVariant::Norm => {
                if kind == ColumnKind::Categorical {
                    return Err(Error::Config(format!(
                        "norm variant cannot impute categorical '{}'; enable one_hot_categorical",
                        transformed.spec(c).name
                    )));
                }
            }
            FcsVariant::Logreg => {
                if kind != ColumnKind::Binary {
                    return Err(Error::Config(format!(
                        "logreg variant needs binary targets but '{}' is not; enable the one-hot flags",
                        transformed.spec(c).name
                    )));
                }
            }
            FcsVariant::Default => {}
        }
    }

    let opts = SweepOptions {
        include_outcomes: cfg.include_outcomes,
        survival: cfg.survival_in_model,
        visit_order: cfg.visit_order,
        max_iter: cfg.max_iter,
        early_stop_tol: cfg.early_stop_tol,
        m: cfg.m,
        seed: cfg.seed,
        min_obs_warn_ratio: 10,
    };
    let variant = cfg.variant;
    let donors = cfg.pmm_donors;
    super::run_chained(
        ds,
        cfg.one_hot_numeric_bins,
        cfg.one_hot_categorical,
        &opts,
        || {
            Box::new(move |task: &TargetTask, rng: &mut ChaCha12Rng| match variant {
                FcsVariant::Default => match task.kind {
                    ColumnKind::Numeric => Ok(Drawn::Donors(pmm_donor_indices(
                        &task.y_obs,
                        &task.x_obs,
                        &task.x_mis,
                        donors,
                        rng,
                    )?)),
                    ColumnKind::Binary => Ok(Drawn::Values(impute_logreg(
                        &task.y_obs,
                        &task.x_obs,
                        &task.x_mis,
                        rng,
                    )?)),
                    ColumnKind::Categorical => Ok(Drawn::Categories(impute_polyreg(
                        &task.y_obs,
                        &task.x_obs,
                        &task.x_mis,
                        task.n_categories,
                        rng,
                    )?)),
                },
                FcsVariant::Norm => Ok(Drawn::Values(impute_norm(
                    &task.y_obs,
                    &task.x_obs,
                    &task.x_mis,
                    rng,
                )?)),
                FcsVariant::Logreg => Ok(Drawn::Values(impute_logreg(
                    &task.y_obs,
                    &task.x_obs,
                    &task.x_mis,
                    rng,
                )?)),
            })
        },
    )
}
