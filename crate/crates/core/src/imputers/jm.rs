//! Joint-modeling Gaussian imputer: EM for the multivariate normal with
//! missing data, nonparametric bootstrap for parameter uncertainty, and
//! conditional-normal draws for each incomplete row. Categorical columns are
//! one-hot encoded and imputed as continuous "fuzzy" indicators, never
//! rounded here; thresholding is the estimation step's decision.

use super::{ImputedSet, SurvivalInModel};
use crate::error::{Error, Result};
use crate::frame::{numeric_frame, NumericFrame, RoleFilter};
use crate::linalg::cholesky_lower;
use crate::rng::{self, draw_standard_normal, stream};
use crate::tabular::{ColumnKind, Dataset};
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Maximum-likelihood fit of the multivariate normal under missingness.
#[derive(Debug, Clone)]
pub struct MvnFit {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// a ridge was needed to keep observed blocks invertible
    pub ridged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    /// relative log-likelihood change for convergence
    pub tol: f64,
    pub max_iter: usize,
    /// ridge scale (multiplied by the mean diagonal) applied on singular
    /// observed blocks
    pub ridge: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iter: 500,
            ridge: 1e-6,
        }
    }
}

fn default_m() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_em_tol() -> f64 {
    1e-6
}
fn default_em_max_iter() -> usize {
    500
}
fn default_ridge() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JmConfig {
    #[serde(default = "default_true")]
    pub include_outcomes: bool,
    #[serde(default)]
    pub one_hot_numeric_bins: bool,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_em_tol")]
    pub em_tol: f64,
    #[serde(default = "default_em_max_iter")]
    pub em_max_iter: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub survival_in_model: SurvivalInModel,
}

impl Default for JmConfig {
    fn default() -> Self {
        JmConfig {
            include_outcomes: true,
            one_hot_numeric_bins: false,
            m: default_m(),
            seed: 0,
            em_tol: default_em_tol(),
            em_max_iter: default_em_max_iter(),
            ridge: default_ridge(),
            survival_in_model: SurvivalInModel::EventAndTime,
        }
    }
}

struct Pattern {
    observed: Vec<usize>,
    missing: Vec<usize>,
    rows: Vec<usize>,
}

fn group_patterns(data: &Array2<f64>) -> Vec<Pattern> {
    let (n, p) = data.dim();
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        let key: Vec<bool> = (0..p).map(|c| data[[r, c]].is_nan()).collect();
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, rows)| Pattern {
            observed: (0..p).filter(|&c| !key[c]).collect(),
            missing: (0..p).filter(|&c| key[c]).collect(),
            rows,
        })
        .collect()
}

fn submatrix(a: &Array2<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[[rows[i], cols[j]]])
}

/// EM for (mu, Sigma) of a multivariate normal observed with missing
/// entries (NaN). The log-likelihood trace is non-decreasing.
pub fn em_mvn(data: &Array2<f64>, opts: &EmOptions) -> Result<MvnFit> {
    let (n, p) = data.dim();
    if p == 0 || n == 0 {
        return Err(Error::Contract("empty data".into()));
    }
    if n <= p {
        return Err(Error::Contract(format!(
            "EM needs n > d (n={n}, d={p})"
        )));
    }
    for c in 0..p {
        let obs = (0..n).filter(|&r| !data[[r, c]].is_nan()).count();
        if obs < 2 {
            return Err(Error::Contract(format!(
                "variable {c} has fewer than 2 observed values"
            )));
        }
    }

    let patterns = group_patterns(data);

    // moment initialization from observed values
    let mut mu = Array1::zeros(p);
    let mut sigma = Array2::zeros((p, p));
    for c in 0..p {
        let vals: Vec<f64> = (0..n)
            .filter_map(|r| {
                let v = data[[r, c]];
                (!v.is_nan()).then_some(v)
            })
            .collect();
        let (mean, sd) = crate::stats::mean_sd(&vals);
        mu[c] = mean;
        sigma[[c, c]] = (sd * sd).max(1e-12);
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut ridged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let mut t1 = Array1::<f64>::zeros(p);
        let mut t2 = Array2::<f64>::zeros((p, p));
        let mut loglik = 0.0;

        for pat in &patterns {
            let o = &pat.observed;
            let mi = &pat.missing;
            let no = o.len();
            let nm = mi.len();

            let (b, cond_cov, chol_oo) = if no > 0 {
                let idx: Vec<usize> = o.clone();
                let mut sig_oo = DMatrix::from_fn(no, no, |i, j| sigma[[idx[i], idx[j]]]);
                let mut chol = Cholesky::new(sig_oo.clone());
                if chol.is_none() {
                    ridged = true;
                    let scale =
                        (0..no).map(|i| sig_oo[(i, i)].abs()).sum::<f64>() / no as f64;
                    for i in 0..no {
                        sig_oo[(i, i)] += opts.ridge * scale.max(1e-12);
                    }
                    chol = Cholesky::new(sig_oo.clone());
                }
                let chol = chol.ok_or_else(|| {
                    Error::Numerical("singular observed-block covariance".into())
                })?;
                if nm > 0 {
                    let sig_mo = DMatrix::from_fn(nm, no, |i, j| sigma[[mi[i], idx[j]]]);
                    // B = Sigma_mo Sigma_oo^{-1}
                    let bt = chol.solve(&sig_mo.transpose());
                    let b = bt.transpose();
                    let sig_mm = DMatrix::from_fn(nm, nm, |i, j| sigma[[mi[i], mi[j]]]);
                    let cond = &sig_mm - &b * sig_mo.transpose();
                    (Some(b), Some(cond), Some(chol))
                } else {
                    (None, None, Some(chol))
                }
            } else {
                // nothing observed: unconditional mean and covariance
                let sig_mm = DMatrix::from_fn(nm, nm, |i, j| sigma[[mi[i], mi[j]]]);
                (None, Some(sig_mm), None)
            };

            let logdet = chol_oo
                .as_ref()
                .map(|ch| {
                    2.0 * (0..no)
                        .map(|i| ch.l_dirty()[(i, i)].ln())
                        .sum::<f64>()
                })
                .unwrap_or(0.0);

            for &r in &pat.rows {
                // observed deviation and conditional mean of the missing block
                let dev = DVector::from_fn(no, |i, _| data[[r, o[i]]] - mu[o[i]]);
                if let Some(ch) = &chol_oo {
                    let alpha = ch.solve(&dev);
                    loglik += -0.5
                        * (no as f64 * (2.0 * std::f64::consts::PI).ln()
                            + logdet
                            + dev.dot(&alpha));
                }
                let cond_mean: Vec<f64> = match (&b, nm) {
                    (_, 0) => Vec::new(),
                    (Some(b), _) => {
                        let bm = b * &dev;
                        (0..nm).map(|i| mu[mi[i]] + bm[i]).collect()
                    }
                    (None, _) => (0..nm).map(|i| mu[mi[i]]).collect(),
                };

                // expected sufficient statistics for this row
                let mut full = vec![0.0; p];
                for (i, &c) in o.iter().enumerate() {
                    full[c] = data[[r, c]];
                    let _ = i;
                }
                for (i, &c) in mi.iter().enumerate() {
                    full[c] = cond_mean[i];
                }
                for c in 0..p {
                    t1[c] += full[c];
                    for d in c..p {
                        t2[[c, d]] += full[c] * full[d];
                    }
                }
                if let Some(cc) = &cond_cov {
                    for (i, &ci) in mi.iter().enumerate() {
                        for (j, &cj) in mi.iter().enumerate() {
                            if cj >= ci {
                                t2[[ci, cj]] += cc[(i, j)];
                            }
                        }
                    }
                }
            }
        }

        for c in 0..p {
            for d in 0..c {
                t2[[c, d]] = t2[[d, c]];
            }
        }

        trace.push(loglik);
        if iter >= 1 {
            let prev = trace[iter - 1];
            let rel = (loglik - prev).abs() / (prev.abs() + 1e-12);
            if rel < opts.tol {
                converged = true;
                break;
            }
        }

        // M-step
        let nf = n as f64;
        for c in 0..p {
            mu[c] = t1[c] / nf;
        }
        for c in 0..p {
            for d in 0..p {
                sigma[[c, d]] = t2[[c, d]] / nf - mu[c] * mu[d];
            }
        }
        // exact symmetry
        for c in 0..p {
            for d in 0..c {
                let avg = 0.5 * (sigma[[c, d]] + sigma[[d, c]]);
                sigma[[c, d]] = avg;
                sigma[[d, c]] = avg;
            }
        }
    }

    if !converged && iterations >= opts.max_iter {
        return Err(Error::NoConvergence(format!(
            "EM did not converge in {} iterations",
            opts.max_iter
        )));
    }

    Ok(MvnFit {
        mu,
        sigma,
        loglik_trace: trace,
        iterations,
        converged,
        ridged,
    })
}

fn frame_filter(cfg: &JmConfig) -> RoleFilter {
    if cfg.include_outcomes {
        match cfg.survival_in_model {
            SurvivalInModel::EventAndTime => RoleFilter::PredictorsAndOutcomes {
                survival_time: true,
                survival_event: true,
            },
            SurvivalInModel::EventOnly => RoleFilter::PredictorsAndOutcomes {
                survival_time: false,
                survival_event: true,
            },
            SurvivalInModel::Excluded => RoleFilter::PredictorsAndOutcomes {
                survival_time: false,
                survival_event: false,
            },
        }
    } else {
        RoleFilter::Predictors
    }
}

/// Bootstrap-EM multiple imputation from the joint Gaussian model.
pub fn run_jm_imputer(ds: &Dataset, cfg: &JmConfig) -> Result<Vec<ImputedSet>> {
    if cfg.m < 1 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    // categoricals always enter one-hot encoded
    let transformed = super::apply_one_hot_flags(ds, cfg.one_hot_numeric_bins, true)?;
    let frame = numeric_frame(&transformed, frame_filter(cfg));
    let n = frame.n_rows();
    let p = frame.n_cols();

    // every masked cell must be visible to the joint model
    let covered: Vec<usize> = frame.columns.iter().map(|c| c.source).collect();
    for c in 0..transformed.n_cols() {
        if transformed.missing_count_of(c) > 0 && !covered.contains(&c) {
            return Err(Error::Contract(format!(
                "column '{}' has missing values outside the joint model; enable include_outcomes",
                transformed.spec(c).name
            )));
        }
    }

    let em_opts = EmOptions {
        tol: cfg.em_tol,
        max_iter: cfg.em_max_iter,
        ridge: cfg.ridge,
    };

    let sets: Result<Vec<ImputedSet>> = (1..=cfg.m)
        .into_par_iter()
        .map(|j| {
            // bootstrap until the resample supports EM (rare retries)
            let mut fit = None;
            for attempt in 0..10u64 {
                let mut boot_rng = rng::rng_for(
                    cfg.seed,
                    &[stream::BOOTSTRAP, j as u64, attempt],
                );
                let rows: Vec<usize> = (0..n).map(|_| boot_rng.random_range(0..n)).collect();
                let boot = Array2::from_shape_fn((n, p), |(i, c)| frame.data[[rows[i], c]]);
                match em_mvn(&boot, &em_opts) {
                    Ok(f) => {
                        fit = Some(f);
                        break;
                    }
                    Err(_) if attempt < 9 => continue,
                    Err(e) => return Err(e),
                }
            }
            let fit = fit.ok_or_else(|| {
                Error::NoConvergence("bootstrap EM failed on every attempt".into())
            })?;
            let mut draw_rng = rng::rng_for(cfg.seed, &[stream::IMPUTATION, j as u64]);
            let imputed = conditional_impute(&transformed, &frame, &fit, &mut draw_rng)?;
            Ok(ImputedSet {
                index: j,
                dataset: imputed,
            })
        })
        .collect();
    sets
}

/// Fill each incomplete row of the frame from the conditional normal given
/// its observed block, then write the values back into the dataset columns.
fn conditional_impute(
    transformed: &Dataset,
    frame: &NumericFrame,
    fit: &MvnFit,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Result<Dataset> {
    let n = frame.n_rows();
    let p = frame.n_cols();
    let patterns = group_patterns(&frame.data);

    // imputed values per frame column (model scale)
    let mut values: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..n).map(|r| frame.data[[r, c]]).collect())
        .collect();

    for pat in &patterns {
        if pat.missing.is_empty() {
            continue;
        }
        let o = &pat.observed;
        let mi = &pat.missing;
        let no = o.len();
        let nm = mi.len();

        let (b, cond_cov) = if no > 0 {
            let sig_oo = submatrix(&fit.sigma, o, o);
            let mut chol = Cholesky::new(sig_oo.clone());
            if chol.is_none() {
                let mut s = sig_oo.clone();
                let scale = (0..no).map(|i| s[(i, i)].abs()).sum::<f64>() / no as f64;
                for i in 0..no {
                    s[(i, i)] += 1e-6 * scale.max(1e-12);
                }
                chol = Cholesky::new(s);
            }
            let chol = chol
                .ok_or_else(|| Error::Numerical("singular observed block".into()))?;
            let sig_mo = submatrix(&fit.sigma, mi, o);
            let bt = chol.solve(&sig_mo.transpose());
            let b = bt.transpose();
            let sig_mm = submatrix(&fit.sigma, mi, mi);
            let cond = &sig_mm - &b * sig_mo.transpose();
            (Some(b), cond)
        } else {
            (None, submatrix(&fit.sigma, mi, mi))
        };

        // draw factor; non-PSD conditional blocks get the scaled ridge
        let cond_nd = Array2::from_shape_fn((nm, nm), |(i, j)| {
            0.5 * (cond_cov[(i, j)] + cond_cov[(j, i)])
        });
        let l = cholesky_lower(&cond_nd, 1e-10)?;

        for &r in &pat.rows {
            let cond_mean: Vec<f64> = match &b {
                Some(b) => {
                    let dev = DVector::from_fn(no, |i, _| {
                        frame.data[[r, o[i]]] - fit.mu[o[i]]
                    });
                    let bm = b * &dev;
                    (0..nm).map(|i| fit.mu[mi[i]] + bm[i]).collect()
                }
                None => (0..nm).map(|i| fit.mu[mi[i]]).collect(),
            };
            let z: Vec<f64> = (0..nm).map(|_| draw_standard_normal(rng)).collect();
            for i in 0..nm {
                let mut v = cond_mean[i];
                for k in 0..=i {
                    v += l[[i, k]] * z[k];
                }
                values[mi[i]][r] = v;
            }
        }
    }

    // write back: one frame column corresponds to one (numeric or binary)
    // dataset column after the one-hot transform
    let mut out = transformed.clone();
    for (c, fc) in frame.columns.iter().enumerate() {
        let source = fc.source;
        if transformed.missing_count_of(source) == 0 {
            continue;
        }
        debug_assert!(transformed.spec(source).kind != ColumnKind::Categorical);
        let col: Vec<f64> = (0..n)
            .map(|r| match transformed.value(r, source) {
                Some(v) => v,
                None => {
                    let v = values[c][r];
                    if fc.log_scale {
                        v.exp()
                    } else {
                        v
                    }
                }
            })
            .collect();
        let spec = transformed.spec(source).clone();
        out = out.with_column_replaced(source, spec, col, vec![false; n])?;
    }
    if !out.is_complete() {
        return Err(Error::Contract(
            "joint model left masked cells unfilled".into(),
        ));
    }
    Ok(out)
}
