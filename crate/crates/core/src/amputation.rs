//! Synthetic missingness: MCAR cell-wise masking and multivariate MAR
//! amputation with weighted-sum scores.
//!
//! MAR amputation assigns each row one candidate pattern by a multinomial
//! draw over the pattern frequencies, computes a weighted sum of
//! standardized observed variables per pattern, and masks the row with
//! probability `logistic(shape * (score - shift))`, where the shift is
//! bisected so the expected masked fraction inside each pattern group equals
//! the overall target. Conditional on being masked, the pattern mix then
//! follows the requested frequencies.

use crate::error::{Error, Result};
use crate::frame::{numeric_frame, RoleFilter};
use crate::rng::{self, stream};
use crate::stats::{logistic, median};
use crate::tabular::Dataset;
use rand::RngExt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    Mar,
}

/// How the weighted-sum score maps to masking propensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreType {
    /// high scores more likely missing
    Right,
    /// low scores more likely missing
    Left,
    /// scores near the median more likely missing
    Mid,
    /// scores in both tails more likely missing
    Tail,
}

fn default_shape() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_a() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmputationPlan {
    pub mechanism: Mechanism,
    /// Variable subsets to blank (MAR).
    #[serde(default)]
    pub patterns: Vec<Vec<String>>,
    /// Probabilities of each pattern, summing to 1 (MAR).
    #[serde(default)]
    pub pattern_freqs: Vec<f64>,
    /// Fraction of rows made incomplete (MAR).
    #[serde(default)]
    pub overall_prop: f64,
    /// Per-pattern weights over variables observed under the pattern;
    /// `None` selects weight 1 on every observed variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<BTreeMap<String, f64>>>,
    #[serde(default = "default_score_type")]
    pub score_type: ScoreType,
    /// Steepness of the logistic propensity on standardized scores.
    #[serde(default = "default_shape")]
    pub shape: f64,
    /// Per-variable masking rates (MCAR).
    #[serde(default)]
    pub per_variable_rates: BTreeMap<String, f64>,
    /// Let MAR scores condition on outcome columns as well as predictors.
    #[serde(default = "default_true")]
    pub condition_on_outcomes: bool,
    /// Number of amputated copies produced by [`ampute_batch`].
    #[serde(default = "default_a")]
    pub a: usize,
    pub seed: u64,
}

fn default_score_type() -> ScoreType {
    ScoreType::Right
}

#[derive(Debug, Clone)]
pub struct AmputedSet {
    /// 1-based amputation index.
    pub index: usize,
    pub dataset: Dataset,
    /// Realized fraction of incomplete rows.
    pub realized_prop: f64,
}

impl AmputationPlan {
    pub fn from_json(text: &str) -> Result<AmputationPlan> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.a < 1 {
            return Err(Error::Config("plan needs a >= 1".into()));
        }
        match self.mechanism {
            Mechanism::Mcar => {
                if self.per_variable_rates.is_empty() {
                    return Err(Error::Config("MCAR plan needs per_variable_rates".into()));
                }
                for (var, rate) in &self.per_variable_rates {
                    ds.col_index(var)?;
                    if !(0.0..=1.0).contains(rate) {
                        return Err(Error::Config(format!(
                            "rate {rate} for '{var}' outside [0,1]"
                        )));
                    }
                }
            }
            Mechanism::Mar => {
                if self.patterns.is_empty() || self.patterns.len() != self.pattern_freqs.len() {
                    return Err(Error::Config(
                        "MAR plan needs patterns with matching frequencies".into(),
                    ));
                }
                let total: f64 = self.pattern_freqs.iter().sum();
                if (total - 1.0).abs() > 1e-9 || self.pattern_freqs.iter().any(|&f| f < 0.0) {
                    return Err(Error::Config("pattern_freqs must sum to 1".into()));
                }
                if !(self.overall_prop > 0.0 && self.overall_prop < 1.0) {
                    return Err(Error::Config("overall_prop must lie in (0,1)".into()));
                }
                if self.shape <= 0.0 {
                    return Err(Error::Config("shape must be positive".into()));
                }
                for pattern in &self.patterns {
                    if pattern.is_empty() {
                        return Err(Error::Config("empty pattern".into()));
                    }
                    for var in pattern {
                        ds.col_index(var)?;
                    }
                }
                if let Some(weight_maps) = &self.weights {
                    if weight_maps.len() != self.patterns.len() {
                        return Err(Error::Config(
                            "weights must align with patterns".into(),
                        ));
                    }
                    for (pattern, weights) in self.patterns.iter().zip(weight_maps) {
                        for var in weights.keys() {
                            ds.col_index(var)?;
                            if pattern.contains(var) {
                                return Err(Error::Config(format!(
                                    "weight on '{var}' which is amputated by its own pattern"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mask cells of the listed variables independently at their per-variable
/// rates.
pub fn ampute_mcar(ds: &Dataset, plan: &AmputationPlan) -> Result<AmputedSet> {
    ampute_mcar_seeded(ds, plan, plan.seed, 1)
}

fn ampute_mcar_seeded(
    ds: &Dataset,
    plan: &AmputationPlan,
    seed: u64,
    index: usize,
) -> Result<AmputedSet> {
    ensure_complete(ds)?;
    plan.validate(ds)?;
    let n = ds.n_rows();
    let mut masks: Vec<Vec<bool>> = (0..ds.n_cols()).map(|_| vec![false; n]).collect();
    let mut rng = rng::rng_for(seed, &[stream::AMPUTATION]);
    // fixed column order: BTreeMap iterates by variable name
    for (var, rate) in &plan.per_variable_rates {
        let c = ds.col_index(var)?;
        for row_mask in masks[c].iter_mut() {
            if rng.random::<f64>() < *rate {
                *row_mask = true;
            }
        }
    }
    build_amputed(ds, masks, index)
}

/// Multivariate MAR amputation.
pub fn ampute_mar(ds: &Dataset, plan: &AmputationPlan) -> Result<AmputedSet> {
    ampute_mar_seeded(ds, plan, plan.seed, 1)
}

fn ampute_mar_seeded(
    ds: &Dataset,
    plan: &AmputationPlan,
    seed: u64,
    index: usize,
) -> Result<AmputedSet> {
    ensure_complete(ds)?;
    plan.validate(ds)?;
    let n = ds.n_rows();

    let filter = if plan.condition_on_outcomes {
        RoleFilter::with_all_outcomes()
    } else {
        RoleFilter::Predictors
    };
    let frame = numeric_frame(ds, filter);

    // standardize frame columns once
    let p = frame.n_cols();
    let mut z = frame.data.clone();
    let mut usable = vec![false; p];
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|r| frame.data[[r, j]]).collect();
        let (mean, sd) = crate::stats::mean_sd(&col);
        if sd > 0.0 {
            usable[j] = true;
            for r in 0..n {
                z[[r, j]] = (frame.data[[r, j]] - mean) / sd;
            }
        } else {
            for r in 0..n {
                z[[r, j]] = 0.0;
            }
        }
    }

    // per-pattern scores over observed (non-amputated) variables
    let mut pattern_cols: Vec<Vec<usize>> = Vec::with_capacity(plan.patterns.len());
    for pattern in &plan.patterns {
        let amputed: Vec<usize> = pattern
            .iter()
            .map(|v| ds.col_index(v))
            .collect::<Result<_>>()?;
        let cols: Vec<usize> = (0..ds.n_cols())
            .filter(|c| !amputed.contains(c))
            .collect();
        pattern_cols.push(cols);
    }

    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(plan.patterns.len());
    for (g, pattern) in plan.patterns.iter().enumerate() {
        let mut weight_per_frame_col = vec![0.0; p];
        let mut any = false;
        match plan.weights.as_ref().map(|ws| &ws[g]) {
            Some(weights) => {
                for (var, w) in weights {
                    let source = ds.col_index(var)?;
                    for (j, fc) in frame.columns.iter().enumerate() {
                        if fc.source == source && usable[j] && *w != 0.0 {
                            weight_per_frame_col[j] = *w;
                            any = true;
                        }
                    }
                }
            }
            None => {
                // default: weight 1 on every observed variable in the frame
                for (j, fc) in frame.columns.iter().enumerate() {
                    if usable[j] && pattern_cols[g].contains(&fc.source) {
                        weight_per_frame_col[j] = 1.0;
                        any = true;
                    }
                }
            }
        }
        let _ = pattern;
        if !any {
            return Err(Error::Contract("uninformative weights".into()));
        }
        let mut s = vec![0.0; n];
        for r in 0..n {
            let mut acc = 0.0;
            for j in 0..p {
                if weight_per_frame_col[j] != 0.0 {
                    acc += weight_per_frame_col[j] * z[[r, j]];
                }
            }
            s[r] = acc;
        }
        let (_, sd) = crate::stats::mean_sd(&s);
        if sd == 0.0 {
            return Err(Error::Contract("uninformative weights".into()));
        }
        let med = median(&s);
        for v in s.iter_mut() {
            *v = match plan.score_type {
                ScoreType::Right => *v,
                ScoreType::Left => -*v,
                ScoreType::Mid => -(*v - med).abs(),
                ScoreType::Tail => (*v - med).abs(),
            };
        }
        scores.push(s);
    }

    let mut rng = rng::rng_for(seed, &[stream::AMPUTATION]);

    // pass 1: candidate pattern per row
    let mut group = vec![0usize; n];
    for g in group.iter_mut() {
        *g = rng::draw_categorical(&mut rng, &plan.pattern_freqs);
    }

    // per-group shift so that the expected masked fraction hits the target
    let mut shifts = vec![0.0; plan.patterns.len()];
    for g in 0..plan.patterns.len() {
        let member_scores: Vec<f64> = (0..n).filter(|&r| group[r] == g).map(|r| scores[g][r]).collect();
        if member_scores.is_empty() {
            continue;
        }
        shifts[g] = solve_shift(&member_scores, plan.overall_prop, plan.shape)?;
    }

    // pass 2: acceptance draws
    let mut masks: Vec<Vec<bool>> = (0..ds.n_cols()).map(|_| vec![false; n]).collect();
    for r in 0..n {
        let g = group[r];
        let prob = logistic(plan.shape * (scores[g][r] - shifts[g]));
        if rng.random::<f64>() < prob {
            for var in &plan.patterns[g] {
                let c = ds.col_index(var)?;
                masks[c][r] = true;
            }
        }
    }
    build_amputed(ds, masks, index)
}

/// Solve `mean(logistic(shape * (scores - shift))) = target` for the shift
/// by monotone bisection.
pub fn solve_shift(scores: &[f64], target: f64, shape: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Contract("target must lie in (0,1)".into()));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Contract("scores must be finite".into()));
    }
    let mean_prob = |shift: f64| {
        scores
            .iter()
            .map(|&s| logistic(shape * (s - shift)))
            .sum::<f64>()
            / scores.len() as f64
    };
    let lo0 = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = lo0 - 1.0;
    let mut hi = hi0 + 1.0;
    let mut span = (hi0 - lo0).max(1.0);
    // mean_prob decreases in shift: widen until the target is bracketed
    for _ in 0..64 {
        if mean_prob(lo) >= target {
            break;
        }
        lo -= span;
        span *= 2.0;
    }
    span = (hi0 - lo0).max(1.0);
    for _ in 0..64 {
        if mean_prob(hi) <= target {
            break;
        }
        hi += span;
        span *= 2.0;
    }
    let mut shift = 0.5 * (lo + hi);
    for _ in 0..200 {
        shift = 0.5 * (lo + hi);
        let f = mean_prob(shift);
        if (f - target).abs() <= 1e-6 {
            return Ok(shift);
        }
        if f > target {
            lo = shift;
        } else {
            hi = shift;
        }
    }
    let f = mean_prob(shift);
    if (f - target).abs() <= 1e-6 {
        Ok(shift)
    } else {
        Err(Error::NoConvergence(format!(
            "solve_shift stuck at mean prob {f} for target {target}"
        )))
    }
}

/// A independent amputations with per-index derived seeds; the first k of
/// a batch of A >= k are identical to a batch of k.
pub fn ampute_batch(ds: &Dataset, plan: &AmputationPlan) -> Result<Vec<AmputedSet>> {
    ensure_complete(ds)?;
    plan.validate(ds)?;
    (1..=plan.a)
        .map(|a| {
            let seed = rng::derive_path(plan.seed, &[stream::AMPUTATION, a as u64]);
            match plan.mechanism {
                Mechanism::Mcar => ampute_mcar_seeded(ds, plan, seed, a),
                Mechanism::Mar => ampute_mar_seeded(ds, plan, seed, a),
            }
        })
        .collect()
}

fn ensure_complete(ds: &Dataset) -> Result<()> {
    let missing = ds.missing_cell_count();
    if missing > 0 {
        return Err(Error::NotComplete(missing));
    }
    Ok(())
}

fn build_amputed(ds: &Dataset, masks: Vec<Vec<bool>>, index: usize) -> Result<AmputedSet> {
    let n = ds.n_rows();
    let cols: Vec<Vec<f64>> = (0..ds.n_cols())
        .map(|c| ds.raw_col(c).to_vec())
        .collect();
    let dataset = Dataset::new(ds.specs().to_vec(), cols, masks)?;
    let incomplete = (0..n).filter(|&r| !dataset.row_is_complete(r)).count();
    Ok(AmputedSet {
        index,
        dataset,
        realized_prop: incomplete as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::logistic;
    use crate::tabular::ColumnSpec;

    fn gaussian_ds(n: usize, seed: u64) -> Dataset {
        let mut rng = rng::rng_for(seed, &[99]);
        let mut age = Vec::with_capacity(n);
        let mut bmi = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rng::draw_standard_normal(&mut rng);
            let b = 0.6 * a + 0.8 * rng::draw_standard_normal(&mut rng);
            age.push(50.0 + 10.0 * a);
            bmi.push(30.0 + 5.0 * b);
        }
        Dataset::new(
            vec![ColumnSpec::numeric("age"), ColumnSpec::numeric("bmi")],
            vec![age, bmi],
            vec![vec![false; n], vec![false; n]],
        )
        .unwrap()
    }

    fn mcar_plan(rate: f64, seed: u64) -> AmputationPlan {
        AmputationPlan {
            mechanism: Mechanism::Mcar,
            patterns: vec![],
            pattern_freqs: vec![],
            overall_prop: 0.0,
            weights: None,
            score_type: ScoreType::Right,
            shape: 1.0,
            per_variable_rates: [("bmi".to_string(), rate)].into_iter().collect(),
            condition_on_outcomes: true,
            a: 1,
            seed,
        }
    }

    fn mar_plan(seed: u64) -> AmputationPlan {
        AmputationPlan {
            mechanism: Mechanism::Mar,
            patterns: vec![vec!["bmi".into()]],
            pattern_freqs: vec![1.0],
            overall_prop: 0.4,
            weights: Some(vec![[("age".to_string(), 1.0)].into_iter().collect()]),
            score_type: ScoreType::Right,
            shape: 1.0,
            per_variable_rates: BTreeMap::new(),
            condition_on_outcomes: true,
            a: 1,
            seed,
        }
    }

    #[test]
    fn solve_shift_matches_trivial_cases() {
        // symmetric scores, target one half -> shift at the median
        let scores = vec![-1.0, 0.0, 1.0];
        let shift = solve_shift(&scores, 0.5, 1.0).unwrap();
        assert!(shift.abs() < 1e-6, "shift {shift}");
    }

    #[test]
    fn solve_shift_hits_target_on_normal_scores() {
        let mut rng = rng::rng_for(5, &[1]);
        let scores: Vec<f64> = (0..10_000)
            .map(|_| rng::draw_standard_normal(&mut rng))
            .collect();
        let shift = solve_shift(&scores, 0.3, 1.0).unwrap();
        let mean: f64 = scores
            .iter()
            .map(|&s| logistic(s - shift))
            .sum::<f64>()
            / scores.len() as f64;
        assert!((mean - 0.3).abs() <= 1e-6, "mean {mean}");
    }

    #[test]
    fn mcar_rate_zero_changes_nothing() {
        let ds = gaussian_ds(200, 3);
        let out = ampute_mcar(&ds, &mcar_plan(0.0, 3)).unwrap();
        assert_eq!(out.dataset.missing_cell_count(), 0);
        assert_eq!(out.realized_prop, 0.0);
    }

    #[test]
    fn mcar_realized_count_within_binomial_bound() {
        let n = 10_000;
        let ds = gaussian_ds(n, 4);
        let out = ampute_mcar(&ds, &mcar_plan(0.3, 4)).unwrap();
        let c = out.dataset.col_index("bmi").unwrap();
        let masked = out.dataset.missing_count_of(c) as f64;
        let bound = 3.0 * (n as f64 * 0.3 * 0.7).sqrt();
        assert!(
            (masked - 3000.0).abs() < bound,
            "masked {masked} outside 3-sigma of 3000"
        );
    }

    #[test]
    fn mar_realizes_target_and_depends_on_score() {
        let n = 20_000;
        let ds = gaussian_ds(n, 5);
        let out = ampute_mar(&ds, &mar_plan(5)).unwrap();
        assert!(
            (out.realized_prop - 0.4).abs() < 0.02,
            "prop {}",
            out.realized_prop
        );
        // RIGHT-type on age: missing-bmi rows must be older on average
        let age = out.dataset.col_index("age").unwrap();
        let bmi = out.dataset.col_index("bmi").unwrap();
        let (mut s_mis, mut n_mis, mut s_obs, mut n_obs) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..n {
            let a = out.dataset.value(r, age).unwrap();
            if out.dataset.is_missing(r, bmi) {
                s_mis += a;
                n_mis += 1.0;
            } else {
                s_obs += a;
                n_obs += 1.0;
            }
        }
        let gap = s_mis / n_mis - s_obs / n_obs;
        assert!(gap > 2.0, "mean age gap {gap} too small for RIGHT MAR");
    }

    #[test]
    fn flat_shape_reduces_to_uniform_masking() {
        let n = 20_000;
        let ds = gaussian_ds(n, 6);
        let mut plan = mar_plan(6);
        plan.shape = 1e-9;
        plan.overall_prop = 0.5;
        let out = ampute_mar(&ds, &plan).unwrap();
        let age = out.dataset.col_index("age").unwrap();
        let bmi = out.dataset.col_index("bmi").unwrap();
        let (mut s_mis, mut n_mis, mut s_obs, mut n_obs) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..n {
            let a = out.dataset.value(r, age).unwrap();
            if out.dataset.is_missing(r, bmi) {
                s_mis += a;
                n_mis += 1.0;
            } else {
                s_obs += a;
                n_obs += 1.0;
            }
        }
        let gap = (s_mis / n_mis - s_obs / n_obs).abs();
        // 10 / sqrt(10000) ~ 0.1 sd of the mean; allow 4 sigma
        assert!(gap < 0.8, "uniform masking should not shift age, gap {gap}");
    }

    #[test]
    fn batch_is_deterministic_and_prefix_stable() {
        let ds = gaussian_ds(500, 7);
        let mut plan = mar_plan(7);
        plan.a = 5;
        let five = ampute_batch(&ds, &plan).unwrap();
        plan.a = 25;
        let twenty_five = ampute_batch(&ds, &plan).unwrap();
        assert_eq!(twenty_five.len(), 25);
        for (a, b) in five.iter().zip(twenty_five.iter().take(5)) {
            for c in 0..ds.n_cols() {
                assert_eq!(a.dataset.mask_col(c), b.dataset.mask_col(c));
            }
        }
        // distinct masks across indices
        let m0 = five[0].dataset.mask_col(1);
        let m1 = five[1].dataset.mask_col(1);
        assert_ne!(m0, m1);
        // same seed twice -> identical
        let again = ampute_batch(&ds, &plan).unwrap();
        for (a, b) in twenty_five.iter().zip(again.iter()) {
            for c in 0..ds.n_cols() {
                assert_eq!(a.dataset.mask_col(c), b.dataset.mask_col(c));
            }
        }
    }

    #[test]
    fn incomplete_source_is_rejected() {
        let specs = vec![ColumnSpec::numeric("x")];
        let ds = Dataset::new(specs, vec![vec![1.0, f64::NAN]], vec![vec![false, true]]).unwrap();
        assert!(matches!(
            ampute_mcar(&ds, &mcar_plan(0.1, 1)),
            Err(Error::NotComplete(_))
        ));
    }

    #[test]
    fn degenerate_weights_error() {
        let n = 100;
        let specs = vec![ColumnSpec::numeric("constant"), ColumnSpec::numeric("bmi")];
        let ds = Dataset::new(
            specs,
            vec![vec![1.0; n], vec![2.0; n]],
            vec![vec![false; n], vec![false; n]],
        )
        .unwrap();
        let mut plan = mar_plan(1);
        plan.weights = Some(vec![[("constant".to_string(), 1.0)].into_iter().collect()]);
        match ampute_mar(&ds, &plan) {
            Err(Error::Contract(msg)) => assert!(msg.contains("uninformative")),
            other => panic!("expected uninformative weights, got {other:?}"),
        }
    }
}
