//! Distribution helpers shared across modules.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Student-t quantile. The closed-form inverse in the distributions crate
/// stalls at the huge df values Rubin pooling produces, so this bisects the
/// CDF instead and switches to the normal once the difference is below
/// floating noise.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if !df.is_finite() || df > 1e5 {
        return normal_quantile(p);
    }
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let mut lo = -1e3;
    let mut hi = 1e3;
    while dist.cdf(lo) > p && lo > -1e12 {
        lo *= 2.0;
    }
    while dist.cdf(hi) < p && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Upper tail of the chi-square distribution: P(X > x) with df degrees of
/// freedom. df = 0 is the degenerate point mass at zero.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    let d = ChiSquared::new(df).unwrap();
    (1.0 - d.cdf(x)).clamp(0.0, 1.0)
}

/// Logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and (population) standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Median of a slice (copies and sorts).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
