//! Statistical estimators of interest: logistic regression (IRLS) and Cox
//! proportional hazards (Breslow ties, Newton-Raphson), both optionally
//! weighted, returning per-predictor estimates, standard errors, and Wald
//! confidence intervals.

use crate::error::{Error, Result};
use crate::linalg::{inv_spd, solve_spd, weak_pivot_columns};
use crate::stats::{logistic, normal_quantile, t_quantile};
use ndarray::{Array1, Array2};

const RIDGE: f64 = 1e-8;
const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const SEPARATION_BOUND: f64 = 25.0;

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum
    }
}

/// Per-predictor estimates for one fitted model.
#[derive(Debug, Clone)]
pub struct EstimateVector {
    pub names: Vec<String>,
    /// log-odds or log-hazard
    pub q: Vec<f64>,
    pub var: Vec<f64>,
    pub se: Vec<f64>,
    /// Wald interval at level 0.95
    pub ci: Vec<(f64, f64)>,
    /// (estimate, se) of the intercept; absent for Cox
    pub intercept: Option<(f64, f64)>,
    pub n_used: usize,
    pub weights_applied: bool,
    /// true where the coefficient could not be identified (constant covariate)
    pub non_identifiable: Vec<bool>,
    pub flags: Vec<String>,
}

impl EstimateVector {
    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Wald interval `q ± quantile * se`; Student-t when df is given, normal
/// otherwise.
pub fn wald_ci(q: f64, se: f64, df: Option<f64>) -> (f64, f64) {
    let z = match df {
        Some(d) => t_quantile(0.975, d),
        None => normal_quantile(0.975),
    };
    (q - z * se, q + z * se)
}

fn column_sds(x: &Array2<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let mean = x.column(j).sum() / n;
            (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

fn check_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Contract("weights length mismatch".into()));
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Contract("weights must be nonnegative".into()));
            }
            Ok(w.to_vec())
        }
    }
}

/// Weighted logistic regression by IRLS. `x` excludes the intercept, which
/// is added internally and reported separately. Variance comes from the
/// inverse observed information, or a robust sandwich when weights are
/// supplied.
pub fn fit_logistic(
    x: &Array2<f64>,
    names: &[String],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<EstimateVector> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n || names.len() != p {
        return Err(Error::Contract("design dimensions disagree".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Contract("outcome must be 0/1".into()));
    }
    let w = check_weights(n, weights)?;
    let weights_applied = weights.is_some();
    let wsum: f64 = w.iter().sum();
    let events: f64 = y.iter().zip(&w).map(|(yi, wi)| yi * wi).sum();
    if events <= 0.0 || events >= wsum {
        return Err(Error::Contract(
            "both outcome classes must be present".into(),
        ));
    }

    // constant covariates carry no information and poison the variance
    let all_sds = column_sds(x);
    let active: Vec<usize> = (0..p).filter(|&j| all_sds[j] > 0.0).collect();
    let non_identifiable: Vec<bool> = (0..p).map(|j| all_sds[j] == 0.0).collect();
    let dropped_flags: Vec<String> = (0..p)
        .filter(|&j| all_sds[j] == 0.0)
        .map(|j| format!("non-identifiable (constant covariate): {}", names[j]))
        .collect();
    let p_active = active.len();

    // design with intercept in column 0
    let d = p_active + 1;
    let mut design = Array2::zeros((n, d));
    for r in 0..n {
        design[[r, 0]] = 1.0;
        for (aj, &j) in active.iter().enumerate() {
            design[[r, aj + 1]] = x[[r, j]];
        }
    }

    let mut beta = Array1::zeros(d);
    let mut flags = Vec::new();
    let mut info = Array2::zeros((d, d));
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let eta = design.dot(&beta);
        let probs: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let mut score = Array1::zeros(d);
        info.fill(0.0);
        for r in 0..n {
            let resid = w[r] * (y[r] - probs[r]);
            let wt = w[r] * probs[r] * (1.0 - probs[r]);
            for j in 0..d {
                score[j] += design[[r, j]] * resid;
                for k in j..d {
                    info[[j, k]] += wt * design[[r, j]] * design[[r, k]];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                info[[j, k]] = info[[k, j]];
            }
        }
        let score_norm = score.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs()));
        if score_norm < SCORE_TOL {
            converged = true;
            break;
        }
        let (step, _) = solve_spd(&info, &score, RIDGE)?;
        beta = &beta + &step;
    }
    // separation first: runaway coefficients also stall the score norm
    let offenders: Vec<String> = active
        .iter()
        .enumerate()
        .filter(|&(aj, &j)| (beta[aj + 1] * all_sds[j]).abs() > SEPARATION_BOUND)
        .map(|(_, &j)| names[j].clone())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Separation(offenders));
    }
    if !converged {
        // one more score check at the final beta
        let eta = design.dot(&beta);
        let score_norm = (0..design.ncols())
            .map(|j| {
                (0..n)
                    .map(|r| design[[r, j]] * w[r] * (y[r] - logistic(eta[r])))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0f64, f64::max);
        if score_norm >= SCORE_TOL {
            return Err(Error::NoConvergence(format!(
                "logistic IRLS score norm {score_norm}"
            )));
        }
    }

    flags.extend(dropped_flags);
    let weak = weak_pivot_columns(&info, 1e-12);
    for &j in &weak {
        if j == 0 {
            flags.push("collinear: (intercept)".to_string());
        } else {
            flags.push(format!("collinear: {}", names[active[j - 1]]));
        }
    }

    let (cov, ridge_used) = if weights_applied {
        // sandwich: A^{-1} B A^{-1} with B the weighted score outer product
        let (a_inv, ridge_used) = inv_spd(&info, RIDGE)?;
        let eta = design.dot(&beta);
        let mut b = Array2::zeros((d, d));
        for r in 0..n {
            let u = w[r] * (y[r] - logistic(eta[r]));
            for j in 0..d {
                for k in j..d {
                    b[[j, k]] += u * u * design[[r, j]] * design[[r, k]];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                b[[j, k]] = b[[k, j]];
            }
        }
        (a_inv.dot(&b).dot(&a_inv), ridge_used)
    } else {
        inv_spd(&info, RIDGE)?
    };
    if ridge_used > RIDGE {
        flags.push(format!("ridge boosted to {ridge_used:.1e}"));
    }

    let mut ev = EstimateVector {
        names: names.to_vec(),
        q: vec![0.0; p],
        var: vec![f64::INFINITY; p],
        se: vec![f64::INFINITY; p],
        ci: vec![(f64::NEG_INFINITY, f64::INFINITY); p],
        intercept: Some((beta[0], cov[[0, 0]].max(0.0).sqrt())),
        n_used: n,
        weights_applied,
        non_identifiable,
        flags,
    };
    for (aj, &j) in active.iter().enumerate() {
        let q = beta[aj + 1];
        let var = cov[[aj + 1, aj + 1]].max(0.0);
        let se = var.sqrt();
        ev.q[j] = q;
        ev.var[j] = var;
        ev.se[j] = se;
        ev.ci[j] = wald_ci(q, se, None);
    }
    Ok(ev)
}

/// Cox proportional hazards with Breslow tie handling; weighted partial
/// likelihood, Newton-Raphson, and a robust sandwich variance when weights
/// are supplied. Constant covariates are flagged non-identifiable and
/// excluded from the solve.
pub fn fit_cox(
    x: &Array2<f64>,
    names: &[String],
    time: &[f64],
    event: &[f64],
    weights: Option<&[f64]>,
) -> Result<EstimateVector> {
    let n = x.nrows();
    let p_all = x.ncols();
    if time.len() != n || event.len() != n || names.len() != p_all {
        return Err(Error::Contract("design dimensions disagree".into()));
    }
    if time.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Contract("times must be positive".into()));
    }
    if event.iter().any(|&e| e != 0.0 && e != 1.0) {
        return Err(Error::Contract("event indicator must be 0/1".into()));
    }
    if !event.iter().any(|&e| e == 1.0) {
        return Err(Error::Contract("at least one event is required".into()));
    }
    let w = check_weights(n, weights)?;
    let weights_applied = weights.is_some();

    // identifiability screen: constant columns cannot enter the solve
    let sds = column_sds(x);
    let active: Vec<usize> = (0..p_all).filter(|&j| sds[j] > 0.0).collect();
    let non_identifiable: Vec<bool> = (0..p_all).map(|j| sds[j] == 0.0).collect();
    let mut flags: Vec<String> = (0..p_all)
        .filter(|&j| sds[j] == 0.0)
        .map(|j| format!("non-identifiable (constant covariate): {}", names[j]))
        .collect();
    let p = active.len();

    // rows sorted by time descending so risk sets grow as we walk
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        time[b]
            .partial_cmp(&time[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let xa = |r: usize, j: usize| x[[r, active[j]]];

    let mut beta = vec![0.0; p];
    let mut info = Array2::zeros((p, p));
    // the risk-set sums and the score run over tens of thousands of terms;
    // compensated summation keeps the achievable gradient norm below the
    // 1e-8 stopping tolerance
    let loglik_and_derivs = |beta: &[f64],
                             grad: &mut Vec<f64>,
                             info: &mut Array2<f64>|
     -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        info.fill(0.0);
        let mut loglik = 0.0;
        let mut s0 = Kahan::default();
        let mut s1 = vec![Kahan::default(); p];
        let mut grad_acc = vec![Kahan::default(); p];
        let mut s2 = Array2::<f64>::zeros((p, p));
        let mut idx = 0;
        while idx < n {
            // all rows sharing this time join the risk set first (Breslow)
            let t = time[order[idx]];
            let start = idx;
            while idx < n && time[order[idx]] == t {
                let r = order[idx];
                let eta: f64 = (0..p).map(|j| beta[j] * xa(r, j)).sum();
                let wexp = w[r] * eta.exp();
                s0.add(wexp);
                for j in 0..p {
                    s1[j].add(wexp * xa(r, j));
                    for k in j..p {
                        s2[[j, k]] += wexp * xa(r, j) * xa(r, k);
                    }
                }
                idx += 1;
            }
            for &r in &order[start..idx] {
                if event[r] == 1.0 && w[r] > 0.0 {
                    let eta: f64 = (0..p).map(|j| beta[j] * xa(r, j)).sum();
                    let s0v = s0.value();
                    loglik += w[r] * (eta - s0v.ln());
                    for j in 0..p {
                        let xbar = s1[j].value() / s0v;
                        grad_acc[j].add(w[r] * (xa(r, j) - xbar));
                        for k in j..p {
                            info[[j, k]] +=
                                w[r] * (s2[[j, k]] / s0v - xbar * (s1[k].value() / s0v));
                        }
                    }
                }
            }
        }
        for j in 0..p {
            grad[j] = grad_acc[j].value();
            for k in 0..j {
                info[[j, k]] = info[[k, j]];
            }
        }
        loglik
    };

    let mut grad = vec![0.0; p];
    let mut converged = p == 0;
    let mut loglik = loglik_and_derivs(&beta, &mut grad, &mut info);
    // each event term carries a quotient rounding error, so the gradient
    // cannot be driven below roughly (weighted event count) * 1e-12; the
    // nominal 1e-8 tolerance binds whenever it is representable
    let event_weight: f64 = (0..n)
        .filter(|&r| event[r] == 1.0)
        .map(|r| w[r])
        .sum();
    let gtol = SCORE_TOL.max(event_weight * 1e-12);
    for _ in 0..MAX_ITER {
        if p == 0 {
            break;
        }
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < gtol {
            converged = true;
            break;
        }
        let g = Array1::from_vec(grad.clone());
        let (step, _) = solve_spd(&info, &g, RIDGE)?;
        // step halving keeps the partial likelihood non-decreasing up to
        // its own rounding resolution
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = (0..p).map(|j| beta[j] + scale * step[j]).collect();
            let ll = loglik_and_derivs(&trial, &mut grad, &mut info);
            if ll >= loglik - 1e-9 * (1.0 + loglik.abs()) {
                beta = trial;
                loglik = ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence(
                "cox step halving failed to improve the partial likelihood".into(),
            ));
        }
    }
    if !converged && p > 0 {
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm >= gtol {
            return Err(Error::NoConvergence(format!(
                "cox newton gradient norm {gnorm}"
            )));
        }
    }

    // separation analogue: runaway standardized coefficients
    let offenders: Vec<String> = (0..p)
        .filter(|&j| (beta[j] * sds[active[j]]).abs() > SEPARATION_BOUND)
        .map(|j| names[active[j]].clone())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Separation(offenders));
    }

    let cov_active = if p > 0 {
        let (a_inv, ridge_used) = inv_spd(&info, RIDGE)?;
        if ridge_used > RIDGE {
            flags.push(format!("ridge boosted to {ridge_used:.1e}"));
        }
        let weak = weak_pivot_columns(&info, 1e-12);
        for &j in &weak {
            flags.push(format!("collinear: {}", names[active[j]]));
        }
        if weights_applied {
            let b = cox_score_outer(x, &active, time, event, &w, &beta, &order);
            a_inv.dot(&b).dot(&a_inv)
        } else {
            a_inv
        }
    } else {
        Array2::zeros((0, 0))
    };

    let mut ev = EstimateVector {
        names: names.to_vec(),
        q: vec![0.0; p_all],
        var: vec![f64::INFINITY; p_all],
        se: vec![f64::INFINITY; p_all],
        ci: vec![(f64::NEG_INFINITY, f64::INFINITY); p_all],
        intercept: None,
        n_used: n,
        weights_applied,
        non_identifiable,
        flags,
    };
    for (aj, &j) in active.iter().enumerate() {
        let q = beta[aj];
        let var = cov_active[[aj, aj]].max(0.0);
        let se = var.sqrt();
        ev.q[j] = q;
        ev.var[j] = var;
        ev.se[j] = se;
        ev.ci[j] = wald_ci(q, se, None);
    }
    Ok(ev)
}

/// Outer product of per-subject score residuals for the weighted Cox model
/// (Lin-Wei robust variance).
fn cox_score_outer(
    x: &Array2<f64>,
    active: &[usize],
    time: &[f64],
    event: &[f64],
    w: &[f64],
    beta: &[f64],
    order_desc: &[usize],
) -> Array2<f64> {
    let n = x.nrows();
    let p = active.len();
    let xa = |r: usize, j: usize| x[[r, active[j]]];

    // risk-set sums at each distinct time (descending walk)
    let mut s0_at = vec![0.0; n];
    let mut xbar_at = vec![vec![0.0; p]; n];
    {
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut idx = 0;
        while idx < n {
            let t = time[order_desc[idx]];
            let start = idx;
            while idx < n && time[order_desc[idx]] == t {
                let r = order_desc[idx];
                let eta: f64 = (0..p).map(|j| beta[j] * xa(r, j)).sum();
                let wexp = w[r] * eta.exp();
                s0 += wexp;
                for j in 0..p {
                    s1[j] += wexp * xa(r, j);
                }
                idx += 1;
            }
            for &r in &order_desc[start..idx] {
                s0_at[r] = s0;
                for j in 0..p {
                    xbar_at[r][j] = s1[j] / s0;
                }
            }
        }
    }

    // ascending walk accumulating the cumulative-hazard terms
    let mut order_asc: Vec<usize> = order_desc.to_vec();
    order_asc.reverse();
    let mut c0 = 0.0;
    let mut c1 = vec![0.0; p];
    let mut b = Array2::zeros((p, p));
    let mut idx = 0;
    while idx < n {
        let t = time[order_asc[idx]];
        let start = idx;
        // events at this time extend the cumulative sums
        let mut d_w = 0.0;
        while idx < n && time[order_asc[idx]] == t {
            let r = order_asc[idx];
            if event[r] == 1.0 {
                d_w += w[r];
            }
            idx += 1;
        }
        if d_w > 0.0 {
            let r0 = order_asc[start];
            c0 += d_w / s0_at[r0];
            for j in 0..p {
                c1[j] += d_w * xbar_at[r0][j] / s0_at[r0];
            }
        }
        for &r in &order_asc[start..idx] {
            let eta: f64 = (0..p).map(|j| beta[j] * xa(r, j)).sum();
            let e = eta.exp();
            let mut u = vec![0.0; p];
            for j in 0..p {
                let martingale_part = e * (c0 * xa(r, j) - c1[j]);
                let event_part = if event[r] == 1.0 {
                    xa(r, j) - xbar_at[r][j]
                } else {
                    0.0
                };
                u[j] = w[r] * (event_part - martingale_part);
            }
            for j in 0..p {
                for k in j..p {
                    b[[j, k]] += u[j] * u[k];
                }
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            b[[j, k]] = b[[k, j]];
        }
    }
    b
}

/// Analytic score (gradient of the Breslow partial log-likelihood) at a
/// given beta.
pub fn cox_partial_score(
    x: &Array2<f64>,
    time: &[f64],
    event: &[f64],
    weights: Option<&[f64]>,
    beta: &[f64],
) -> Vec<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let w = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap().then(a.cmp(&b)));
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut idx = 0;
    while idx < n {
        let t = time[order[idx]];
        let start = idx;
        while idx < n && time[order[idx]] == t {
            let r = order[idx];
            let eta: f64 = (0..p).map(|j| beta[j] * x[[r, j]]).sum();
            let wexp = w[r] * eta.exp();
            s0 += wexp;
            for j in 0..p {
                s1[j] += wexp * x[[r, j]];
            }
            idx += 1;
        }
        for &r in &order[start..idx] {
            if event[r] == 1.0 {
                for j in 0..p {
                    grad[j] += w[r] * (x[[r, j]] - s1[j] / s0);
                }
            }
        }
    }
    grad
}

/// Observed-data Cox partial log-likelihood at a given beta (Breslow ties).
pub fn cox_partial_loglik(
    x: &Array2<f64>,
    time: &[f64],
    event: &[f64],
    weights: Option<&[f64]>,
    beta: &[f64],
) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    let w = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].partial_cmp(&time[a]).unwrap().then(a.cmp(&b)));
    let mut s0 = 0.0;
    let mut loglik = 0.0;
    let mut idx = 0;
    while idx < n {
        let t = time[order[idx]];
        let start = idx;
        while idx < n && time[order[idx]] == t {
            let r = order[idx];
            let eta: f64 = (0..p).map(|j| beta[j] * x[[r, j]]).sum();
            s0 += w[r] * eta.exp();
            idx += 1;
        }
        for &r in &order[start..idx] {
            if event[r] == 1.0 {
                let eta: f64 = (0..p).map(|j| beta[j] * x[[r, j]]).sum();
                loglik += w[r] * (eta - s0.ln());
            }
        }
    }
    loglik
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, draw_standard_normal, rng_for};
    use rand::RngExt;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn intercept_only_matches_closed_form() {
        let n = 1000;
        let x = Array2::zeros((n, 0));
        let y: Vec<f64> = (0..n).map(|i| if i < 300 { 1.0 } else { 0.0 }).collect();
        let fit = fit_logistic(&x, &[], &y, None).unwrap();
        let p: f64 = 0.3;
        let expect = (p / (1.0 - p)).ln();
        let (b0, _) = fit.intercept.unwrap();
        assert!((b0 - expect).abs() < 1e-8, "intercept {b0} vs {expect}");
    }

    #[test]
    fn logistic_score_vanishes_at_convergence() {
        let n = 500;
        let mut rng = rng_for(1, &[7]);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            x[[r, 1]] = draw_standard_normal(&mut rng);
            let eta = 0.3 - x[[r, 0]] + 0.5 * x[[r, 1]];
            y[r] = if rng.random::<f64>() < logistic(eta) {
                1.0
            } else {
                0.0
            };
        }
        let fit = fit_logistic(&x, &names(2), &y, None).unwrap();
        // recompute the score at the fitted beta
        let mut score = vec![0.0; 3];
        for r in 0..n {
            let eta =
                fit.intercept.unwrap().0 + fit.q[0] * x[[r, 0]] + fit.q[1] * x[[r, 1]];
            let resid = y[r] - logistic(eta);
            score[0] += resid;
            score[1] += x[[r, 0]] * resid;
            score[2] += x[[r, 1]] * resid;
        }
        for s in score {
            assert!(s.abs() < 1e-8, "score {s}");
        }
    }

    #[test]
    fn logistic_analytic_score_matches_finite_differences() {
        // d loglik / d beta_j == X' (y - p), checked by central differences
        let n = 60;
        let mut rng = rng_for(2, &[3]);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            x[[r, 1]] = draw_standard_normal(&mut rng);
            y[r] = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        }
        let beta = [0.2, -0.4, 0.7];
        let loglik = |b: &[f64]| -> f64 {
            (0..n)
                .map(|r| {
                    let eta = b[0] + b[1] * x[[r, 0]] + b[2] * x[[r, 1]];
                    y[r] * eta - (1.0 + eta.exp()).ln()
                })
                .sum()
        };
        let h = 1e-5;
        for j in 0..3 {
            let mut bp = beta;
            let mut bm = beta;
            bp[j] += h;
            bm[j] -= h;
            let fd = (loglik(&bp) - loglik(&bm)) / (2.0 * h);
            let analytic: f64 = (0..n)
                .map(|r| {
                    let eta = beta[0] + beta[1] * x[[r, 0]] + beta[2] * x[[r, 1]];
                    let xr = [1.0, x[[r, 0]], x[[r, 1]]][j];
                    xr * (y[r] - logistic(eta))
                })
                .sum();
            let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
            assert!(rel < 1e-6, "component {j}: fd {fd} vs analytic {analytic}");
        }
    }

    #[test]
    fn logistic_one_class_errors() {
        let x = Array2::zeros((10, 0));
        let y = vec![1.0; 10];
        assert!(fit_logistic(&x, &[], &y, None).is_err());
    }

    #[test]
    fn logistic_detects_separation() {
        let n = 200;
        let mut x = Array2::zeros((n, 1));
        let mut y = vec![0.0; n];
        for r in 0..n {
            let v = (r as f64 / n as f64) - 0.5;
            x[[r, 0]] = v;
            y[r] = if v > 0.0 { 1.0 } else { 0.0 };
        }
        match fit_logistic(&x, &names(1), &y, None) {
            Err(Error::Separation(cols)) => assert_eq!(cols, vec!["x0".to_string()]),
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn unit_weights_match_unweighted_fit() {
        let n = 300;
        let mut rng = rng_for(3, &[5]);
        let mut x = Array2::zeros((n, 1));
        let mut y = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            y[r] = if rng.random::<f64>() < logistic(0.4 * x[[r, 0]]) {
                1.0
            } else {
                0.0
            };
        }
        let plain = fit_logistic(&x, &names(1), &y, None).unwrap();
        let weighted = fit_logistic(&x, &names(1), &y, Some(&vec![1.0; n])).unwrap();
        assert!((plain.q[0] - weighted.q[0]).abs() < 1e-12);
        // sandwich vs information differ, but the point estimate is identical
        assert!(weighted.weights_applied);
    }

    #[test]
    fn cox_matches_hand_derived_root() {
        // four subjects, events at t=1 (x=1) and t=2 (x=0); the Breslow
        // score is 1 - u/(u+1) - u/(u+2) with u = exp(beta), whose root is
        // u = sqrt(2), i.e. beta = ln(2)/2
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let time = vec![1.0, 2.0, 3.0, 4.0];
        let event = vec![1.0, 1.0, 0.0, 0.0];
        let fit = fit_cox(&x, &names(1), &time, &event, None).unwrap();
        let expect = 0.5 * (2.0f64).ln();
        assert!(
            (fit.q[0] - expect).abs() < 1e-10,
            "beta {} vs {}",
            fit.q[0],
            expect
        );
    }

    #[test]
    fn cox_gradient_matches_finite_differences() {
        let n = 80;
        let mut rng = rng_for(4, &[9]);
        let mut x = Array2::zeros((n, 2));
        let mut time = vec![0.0; n];
        let mut event = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            x[[r, 1]] = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let rate = (0.4 * x[[r, 0]] - 0.3 * x[[r, 1]]).exp() * 0.1;
            let u: f64 = rng.random();
            let t = -u.ln() / rate;
            time[r] = t.min(15.0);
            event[r] = if t <= 15.0 { 1.0 } else { 0.0 };
        }
        let beta = [0.25, -0.15];
        let analytic = cox_partial_score(&x, &time, &event, None, &beta);
        let h = 1e-5;
        for j in 0..2 {
            let mut bp = beta.to_vec();
            let mut bm = beta.to_vec();
            bp[j] += h;
            bm[j] -= h;
            let fd = (cox_partial_loglik(&x, &time, &event, None, &bp)
                - cox_partial_loglik(&x, &time, &event, None, &bm))
                / (2.0 * h);
            let rel = (fd - analytic[j]).abs() / analytic[j].abs().max(1.0);
            assert!(rel < 1e-6, "component {j}: fd {fd} vs analytic {}", analytic[j]);
        }
    }

    #[test]
    fn cox_loglik_at_fit_beats_null() {
        let n = 300;
        let mut rng = rng_for(6, &[2]);
        let mut x = Array2::zeros((n, 1));
        let mut time = vec![0.0; n];
        let mut event = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let rate = f64::exp(0.7 * x[[r, 0]]) * 0.05;
            let u: f64 = rng.random();
            let t = -u.ln() / rate;
            time[r] = t.min(40.0);
            event[r] = if t <= 40.0 { 1.0 } else { 0.0 };
        }
        let fit = fit_cox(&x, &names(1), &time, &event, None).unwrap();
        let ll_hat = cox_partial_loglik(&x, &time, &event, None, &[fit.q[0]]);
        let ll_null = cox_partial_loglik(&x, &time, &event, None, &[0.0]);
        assert!(ll_hat >= ll_null);
        // the gradient at the fit is ~0: nudging beta cannot improve
        assert!(ll_hat >= cox_partial_loglik(&x, &time, &event, None, &[fit.q[0] + 1e-4]));
    }

    #[test]
    fn cox_constant_covariate_is_flagged() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let time = vec![1.0, 2.0, 3.0, 4.0];
        let event = vec![1.0, 0.0, 1.0, 0.0];
        let fit = fit_cox(&x, &names(1), &time, &event, None).unwrap();
        assert!(fit.non_identifiable[0]);
        assert!(fit.se[0].is_infinite());
        assert!(!fit.flags.is_empty());
    }

    #[test]
    fn row_permutation_leaves_estimates_unchanged() {
        let n = 200;
        let mut rng = rng_for(8, &[4]);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        let mut time = vec![0.0; n];
        let mut event = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            x[[r, 1]] = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
            y[r] = if rng.random::<f64>() < logistic(0.5 * x[[r, 0]] - 0.3) {
                1.0
            } else {
                0.0
            };
            let u: f64 = rng.random();
            time[r] = (-u.ln() / 0.1).min(25.0) + 0.01 * (r as f64); // unique times
            event[r] = if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 };
        }
        if !event.iter().any(|&e| e == 1.0) {
            event[0] = 1.0;
        }
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            // deterministic shuffle
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                p.swap(i, j);
            }
            p
        };
        let mut xp = Array2::zeros((n, 2));
        let mut yp = vec![0.0; n];
        let mut tp = vec![0.0; n];
        let mut ep = vec![0.0; n];
        for (new, &old) in perm.iter().enumerate() {
            xp[[new, 0]] = x[[old, 0]];
            xp[[new, 1]] = x[[old, 1]];
            yp[new] = y[old];
            tp[new] = time[old];
            ep[new] = event[old];
        }
        let f1 = fit_logistic(&x, &names(2), &y, None).unwrap();
        let f2 = fit_logistic(&xp, &names(2), &yp, None).unwrap();
        for j in 0..2 {
            assert!((f1.q[j] - f2.q[j]).abs() < 1e-10);
        }
        let c1 = fit_cox(&x, &names(2), &time, &event, None).unwrap();
        let c2 = fit_cox(&xp, &names(2), &tp, &ep, None).unwrap();
        for j in 0..2 {
            assert!((c1.q[j] - c2.q[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn wald_ci_known_values() {
        let (lo, hi) = wald_ci(0.0, 1.0, None);
        assert!((lo + 1.959964).abs() < 1e-4 && (hi - 1.959964).abs() < 1e-4);
        let (lo, hi) = wald_ci(1.0, 0.5, None);
        assert!((lo - 0.0200).abs() < 5e-4 && (hi - 1.9800).abs() < 5e-4);
        let (tl, th) = wald_ci(0.0, 1.0, Some(4.0));
        assert!(tl < lo - 0.5 && th > hi + 0.5);
    }

    #[test]
    fn fitted_probabilities_average_to_prevalence() {
        let n = 400;
        let mut rng = rng_for(9, &[6]);
        let mut x = Array2::zeros((n, 1));
        let mut y = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            y[r] = if rng.random::<f64>() < logistic(0.8 * x[[r, 0]] + 0.2) {
                1.0
            } else {
                0.0
            };
        }
        let fit = fit_logistic(&x, &names(1), &y, None).unwrap();
        let mean_p: f64 = (0..n)
            .map(|r| logistic(fit.intercept.unwrap().0 + fit.q[0] * x[[r, 0]]))
            .sum::<f64>()
            / n as f64;
        let prevalence = y.iter().sum::<f64>() / n as f64;
        assert!((mean_p - prevalence).abs() < 1e-8);
    }

    #[test]
    fn planted_coefficients_recovered_within_3_se() {
        let n = 20_000;
        let mut rng = rng::rng_for(10, &[8]);
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        for r in 0..n {
            x[[r, 0]] = draw_standard_normal(&mut rng);
            x[[r, 1]] = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let eta = 0.2 - 1.0 * x[[r, 0]] + 0.5 * x[[r, 1]];
            y[r] = if rng.random::<f64>() < logistic(eta) {
                1.0
            } else {
                0.0
            };
        }
        let fit = fit_logistic(&x, &names(2), &y, None).unwrap();
        assert!((fit.q[0] + 1.0).abs() < 3.0 * fit.se[0], "q0 {}", fit.q[0]);
        assert!((fit.q[1] - 0.5).abs() < 3.0 * fit.se[1], "q1 {}", fit.q[1]);
    }
}
