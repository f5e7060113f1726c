//! Rubin's-rule pooling, fraction of missing information, and rules for
//! choosing the number of imputations.

use crate::error::{Error, Result};
use crate::estimators::wald_ci;
use serde::{Deserialize, Serialize};

/// Pooled quantities per predictor across m imputations.
#[derive(Debug, Clone)]
pub struct PooledEstimate {
    pub names: Vec<String>,
    /// mean of the m estimates
    pub qbar: Vec<f64>,
    /// within-imputation variance
    pub w: Vec<f64>,
    /// between-imputation variance
    pub b: Vec<f64>,
    /// total variance W + (1 + 1/m) B
    pub t: Vec<f64>,
    pub se: Vec<f64>,
    /// Rubin degrees of freedom; infinite when B = 0
    pub df: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    /// fraction of missing information B / (W + B)
    pub fmi: Vec<f64>,
    pub m: usize,
}

/// Pool an m x d matrix of estimates and their variances.
pub fn rubin_pool(
    estimates: &[Vec<f64>],
    variances: &[Vec<f64>],
    names: &[String],
) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::Contract("rubin_pool needs m >= 2".into()));
    }
    if variances.len() != m {
        return Err(Error::Contract("estimates/variances length mismatch".into()));
    }
    let d = estimates[0].len();
    if estimates.iter().any(|e| e.len() != d)
        || variances.iter().any(|v| v.len() != d)
        || names.len() != d
    {
        return Err(Error::Contract("ragged pooling input".into()));
    }
    if variances.iter().flatten().any(|&v| v < 0.0) {
        return Err(Error::Contract("variances must be nonnegative".into()));
    }

    let mf = m as f64;
    let mut out = PooledEstimate {
        names: names.to_vec(),
        qbar: Vec::with_capacity(d),
        w: Vec::with_capacity(d),
        b: Vec::with_capacity(d),
        t: Vec::with_capacity(d),
        se: Vec::with_capacity(d),
        df: Vec::with_capacity(d),
        ci: Vec::with_capacity(d),
        fmi: Vec::with_capacity(d),
        m,
    };
    for i in 0..d {
        // the mean of identical replicates is that value, with no float dust
        let qbar = if estimates.iter().all(|e| e[i] == estimates[0][i]) {
            estimates[0][i]
        } else {
            estimates.iter().map(|e| e[i]).sum::<f64>() / mf
        };
        let w = if variances.iter().all(|v| v[i] == variances[0][i]) {
            variances[0][i]
        } else {
            variances.iter().map(|v| v[i]).sum::<f64>() / mf
        };
        // identical replicates have exactly zero between-imputation variance
        let b = if estimates.iter().all(|e| e[i] == estimates[0][i]) {
            0.0
        } else {
            estimates
                .iter()
                .map(|e| (e[i] - qbar).powi(2))
                .sum::<f64>()
                / (mf - 1.0)
        };
        let t = w + (1.0 + 1.0 / mf) * b;
        let se = t.sqrt();
        let df = if b > 0.0 {
            (mf - 1.0) * (1.0 + w / ((1.0 + 1.0 / mf) * b)).powi(2)
        } else {
            f64::INFINITY
        };
        let fmi = if w + b > 0.0 { b / (w + b) } else { 0.0 };
        out.qbar.push(qbar);
        out.w.push(w);
        out.b.push(b);
        out.t.push(t);
        out.se.push(se);
        out.df.push(df);
        out.ci.push(wald_ci(qbar, se, Some(df)));
        out.fmi.push(fmi);
    }
    Ok(out)
}

/// Relative efficiency of an m-imputation estimator: 1 + gamma0 / m.
pub fn relative_efficiency(gamma0: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma0) {
        return Err(Error::Contract("gamma0 must lie in [0,1]".into()));
    }
    if m < 1 {
        return Err(Error::Contract("m must be at least 1".into()));
    }
    Ok(1.0 + gamma0 / m as f64)
}

/// Rules for picking the number of imputations from the incomplete-case
/// fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum MRule {
    /// m comparable to the percentage of incomplete cases
    VonHippel,
    /// smallest m with expected efficiency loss below `max_loss`
    White { max_loss: f64 },
    /// lookup from simulation-based guidelines, stepping up between knots
    Bodner,
    /// the classic default of 5
    RubinDefault,
    /// at least 20 to limit power loss
    Graham,
}

const BODNER_TABLE: [(f64, usize); 5] =
    [(0.05, 3), (0.1, 6), (0.2, 12), (0.3, 24), (0.5, 59)];

/// Recommended imputation count for a fraction of incomplete cases.
pub fn recommend_m(frac_incomplete: f64, rule: MRule) -> Result<usize> {
    if !(0.0..=1.0).contains(&frac_incomplete) {
        return Err(Error::Contract(
            "frac_incomplete must lie in [0,1]".into(),
        ));
    }
    let m = match rule {
        MRule::VonHippel => (100.0 * frac_incomplete).ceil() as usize,
        MRule::White { max_loss } => {
            if max_loss <= 0.0 {
                return Err(Error::Contract("max_loss must be positive".into()));
            }
            (frac_incomplete / max_loss).ceil() as usize
        }
        MRule::Bodner => BODNER_TABLE
            .iter()
            .find(|(fmi, _)| frac_incomplete <= *fmi)
            .map(|(_, m)| *m)
            .unwrap_or(BODNER_TABLE[BODNER_TABLE.len() - 1].1),
        MRule::RubinDefault => 5,
        MRule::Graham => 20,
    };
    Ok(m.max(1))
}
