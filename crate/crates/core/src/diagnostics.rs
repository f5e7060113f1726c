//! Missingness-mechanism diagnostics, principally Little's MCAR test.

use crate::error::{Error, Result};
use crate::frame::{numeric_frame, RoleFilter};
use crate::imputers::jm::{em_mvn, EmOptions};
use crate::stats::chi_square_sf;
use crate::tabular::Dataset;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct McarTestResult {
    /// chi-square statistic
    pub d2: f64,
    pub df: f64,
    pub p_value: f64,
    pub n_patterns: usize,
    /// a ridge was applied on some pattern's covariance block
    pub ridged: bool,
}

const PATTERN_RIDGE: f64 = 1e-8;

/// Little's MCAR test on the one-hot numeric representation of the
/// predictor columns. The statistic compares per-pattern observed means to
/// the EM maximum-likelihood estimates; under MCAR it is asymptotically
/// chi-square with sum(|O_j|) - p degrees of freedom.
///
/// A dataset with a single pattern (no incomplete rows) returns the
/// degenerate result d2 = 0, df = 0, p = 1.
pub fn little_mcar_test(ds: &Dataset) -> Result<McarTestResult> {
    let frame = numeric_frame(ds, RoleFilter::Predictors);
    let p = frame.n_cols();
    if p < 2 {
        return Err(Error::Contract(
            "Little's test needs at least 2 encoded variables".into(),
        ));
    }
    let n = frame.n_rows();

    // group rows by observed set, dropping rows with nothing observed
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        let key: Vec<bool> = (0..p).map(|c| frame.mask[[r, c]]).collect();
        if key.iter().all(|&miss| miss) {
            continue;
        }
        groups.entry(key).or_default().push(r);
    }
    let n_patterns = groups.len();
    if n_patterns == 1 && groups.keys().next().unwrap().iter().all(|&miss| !miss) {
        return Ok(McarTestResult {
            d2: 0.0,
            df: 0.0,
            p_value: 1.0,
            n_patterns: 1,
            ridged: false,
        });
    }

    let fit = em_mvn(&frame.data, &EmOptions::default())?;

    let mut d2 = 0.0;
    let mut sum_obs = 0usize;
    let mut ridged = fit.ridged;
    for (key, rows) in &groups {
        let observed: Vec<usize> = (0..p).filter(|&c| !key[c]).collect();
        let no = observed.len();
        sum_obs += no;
        let nj = rows.len() as f64;

        let mut dev = DVector::zeros(no);
        for (i, &c) in observed.iter().enumerate() {
            let mean = rows.iter().map(|&r| frame.data[[r, c]]).sum::<f64>() / nj;
            dev[i] = mean - fit.mu[c];
        }
        let mut sig = DMatrix::from_fn(no, no, |i, j| {
            fit.sigma[[observed[i], observed[j]]]
        });
        // small patterns cannot support their own covariance: ridge and keep
        if (rows.len() as f64) < (no + 1) as f64 {
            ridged = true;
            let scale = (0..no).map(|i| sig[(i, i)].abs()).sum::<f64>() / no as f64;
            for i in 0..no {
                sig[(i, i)] += PATTERN_RIDGE * scale.max(1.0);
            }
        }
        let chol = match Cholesky::new(sig.clone()) {
            Some(c) => c,
            None => {
                ridged = true;
                let scale = (0..no).map(|i| sig[(i, i)].abs()).sum::<f64>() / no as f64;
                for i in 0..no {
                    sig[(i, i)] += PATTERN_RIDGE * scale.max(1.0);
                }
                Cholesky::new(sig).ok_or_else(|| {
                    Error::Numerical("singular pattern covariance".into())
                })?
            }
        };
        let alpha = chol.solve(&dev);
        d2 += nj * dev.dot(&alpha);
    }

    let df = (sum_obs as f64) - (p as f64);
    let p_value = if df <= 0.0 {
        1.0
    } else {
        chi_square_sf(d2, df)
    };
    Ok(McarTestResult {
        d2,
        df,
        p_value,
        n_patterns,
        ridged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{draw_standard_normal, rng_for};
    use crate::tabular::ColumnSpec;
    use rand::RngExt;

    fn bivariate(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = rng_for(seed, &[21]);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let z = draw_standard_normal(&mut rng);
            a.push(z);
            b.push(0.6 * z + 0.8 * draw_standard_normal(&mut rng));
        }
        (a, b)
    }

    fn dataset(a: Vec<f64>, b: Vec<f64>, mask_b: Vec<bool>) -> Dataset {
        let n = a.len();
        Dataset::new(
            vec![ColumnSpec::numeric("y1"), ColumnSpec::numeric("y2")],
            vec![a, b],
            vec![vec![false; n], mask_b],
        )
        .unwrap()
    }

    #[test]
    fn complete_dataset_gives_degenerate_result() {
        let (a, b) = bivariate(100, 1);
        let ds = dataset(a, b, vec![false; 100]);
        let res = little_mcar_test(&ds).unwrap();
        assert_eq!(res.d2, 0.0);
        assert_eq!(res.df, 0.0);
        assert_eq!(res.p_value, 1.0);
        assert_eq!(res.n_patterns, 1);
    }

    #[test]
    fn df_matches_hand_count_two_patterns() {
        let (a, b) = bivariate(200, 2);
        let mask: Vec<bool> = (0..200).map(|i| i % 4 == 0).collect();
        let ds = dataset(a, b, mask);
        let res = little_mcar_test(&ds).unwrap();
        // patterns: complete (2 observed) + y2-missing (1 observed) => 3 - 2
        assert_eq!(res.df, 1.0);
        assert_eq!(res.n_patterns, 2);
    }

    #[test]
    fn df_matches_hand_count_three_patterns() {
        let n = 300;
        let (a, b) = bivariate(n, 3);
        let mut mask_a = vec![false; n];
        let mut mask_b = vec![false; n];
        for i in 0..n {
            if i % 5 == 0 {
                mask_b[i] = true;
            } else if i % 7 == 0 {
                mask_a[i] = true;
            }
        }
        let ds = Dataset::new(
            vec![ColumnSpec::numeric("y1"), ColumnSpec::numeric("y2")],
            vec![a, b],
            vec![mask_a, mask_b],
        )
        .unwrap();
        let res = little_mcar_test(&ds).unwrap();
        // complete (2) + y2-missing (1) + y1-missing (1) => 4 - 2
        assert_eq!(res.df, 2.0);
    }

    #[test]
    fn statistic_is_affine_invariant() {
        let n = 400;
        let (a, b) = bivariate(n, 4);
        let mut rng = rng_for(5, &[1]);
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
        let ds = dataset(a.clone(), b.clone(), mask.clone());
        let res1 = little_mcar_test(&ds).unwrap();

        let a2: Vec<f64> = a.iter().map(|v| 100.0 + 7.0 * v).collect();
        let b2: Vec<f64> = b.iter().map(|v| -3.0 + 0.01 * v).collect();
        let ds2 = dataset(a2, b2, mask);
        let res2 = little_mcar_test(&ds2).unwrap();
        assert!(
            (res1.d2 - res2.d2).abs() < 1e-8,
            "d2 changed under affine rescaling: {} vs {}",
            res1.d2,
            res2.d2
        );
    }

    #[test]
    fn mar_missingness_is_rejected() {
        // y2 missing where y1 is large: grossly non-MCAR
        let n = 2000;
        let (a, b) = bivariate(n, 6);
        let mask: Vec<bool> = a.iter().map(|&v| v > 0.5).collect();
        let ds = dataset(a, b, mask);
        let res = little_mcar_test(&ds).unwrap();
        assert!(res.p_value < 1e-4, "p = {}", res.p_value);
    }
}
