//! Synthetic cohort generator with planted coefficients.
//!
//! Rows are drawn from a latent Gaussian copula and transformed to the
//! declared marginals; binary and survival outcomes are generated from
//! planted models on the binarized predictor scale, so the whole pipeline
//! can be verified against a known truth.

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::tabular::{bin_labels, ColumnKind, ColumnSpec, Dataset, Role};
use rand::RngExt;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Marginal distribution of one predictor on its natural scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip: Option<(f64, f64)>,
    },
    /// value = exp(Normal(log_mean, log_sd))
    LogNormal { log_mean: f64, log_sd: f64 },
    Bernoulli { p: f64 },
    /// Probabilities aligned with the column's declared categories.
    Categorical { probs: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub column: ColumnSpec,
    pub marginal: Marginal,
}

/// Logistic outcome model on the binarized predictor scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub name: String,
    pub intercept: f64,
    /// Keyed by binarized predictor name; absent keys mean zero.
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

/// Exponential proportional-hazards outcome with administrative censoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalModel {
    pub time_name: String,
    pub event_name: String,
    pub baseline_rate: f64,
    pub censor_horizon: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    pub seed: u64,
    pub predictors: Vec<PredictorSpec>,
    /// Pairwise latent (copula) correlations; unlisted pairs are zero.
    #[serde(default)]
    pub correlations: Vec<(String, String, f64)>,
    #[serde(default)]
    pub logistic_outcomes: Vec<LogisticModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalModel>,
}

/// Planted coefficient vectors on the binarized scale, one per outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub predictor_names: Vec<String>,
    /// outcome name -> coefficient vector aligned with `predictor_names`
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub intercepts: BTreeMap<String, f64>,
}

/// Names of the binary predictors produced by `binarize_for_estimation`,
/// derived purely from the schema. Requires declared bins on numeric
/// predictors and declared reference categories, so the set does not depend
/// on a data realization.
pub fn binarized_predictor_names(specs: &[ColumnSpec]) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for spec in specs {
        if spec.role != Role::Predictor {
            continue;
        }
        match spec.kind {
            ColumnKind::Binary => names.push(spec.name.clone()),
            ColumnKind::Numeric => match spec.bins.as_ref() {
                // no bins: the variable enters linear predictors as itself
                None => names.push(spec.name.clone()),
                Some(bins) => {
                    let labels = bin_labels(&spec.name, bins);
                    let reference = spec.reference_category.clone().ok_or_else(|| {
                        Error::BadColumn {
                            column: spec.name.clone(),
                            reason: "reference category must be declared".into(),
                        }
                    })?;
                    if !labels.contains(&reference) {
                        return Err(Error::BadColumn {
                            column: spec.name.clone(),
                            reason: format!("reference '{reference}' is not a bin label"),
                        });
                    }
                    names.extend(labels.into_iter().filter(|l| *l != reference));
                }
            },
            ColumnKind::Categorical => {
                let cats = spec.categories.as_ref().unwrap();
                let reference = spec.reference_category.clone().ok_or_else(|| {
                    Error::BadColumn {
                        column: spec.name.clone(),
                        reason: "reference category must be declared".into(),
                    }
                })?;
                for cat in cats {
                    if *cat != reference {
                        names.push(format!("{}={}", spec.name, cat));
                    }
                }
            }
        }
    }
    Ok(names)
}

impl CohortSpec {
    pub fn from_json(text: &str) -> Result<CohortSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cohort spec serializes")
    }

    fn validate(&self) -> Result<Vec<String>> {
        if self.n == 0 {
            return Err(Error::Config("cohort n must be positive".into()));
        }
        for p in &self.predictors {
            if p.column.role != Role::Predictor {
                return Err(Error::Config(format!(
                    "cohort predictor '{}' must have predictor role",
                    p.column.name
                )));
            }
            match (&p.marginal, p.column.kind) {
                (Marginal::Normal { sd, .. }, ColumnKind::Numeric) => {
                    if *sd <= 0.0 {
                        return Err(Error::Config(format!(
                            "sd must be positive for '{}'",
                            p.column.name
                        )));
                    }
                }
                (Marginal::LogNormal { log_sd, .. }, ColumnKind::Numeric) => {
                    if *log_sd <= 0.0 {
                        return Err(Error::Config(format!(
                            "log_sd must be positive for '{}'",
                            p.column.name
                        )));
                    }
                }
                (Marginal::Bernoulli { p: prob }, ColumnKind::Binary) => {
                    if !(0.0..=1.0).contains(prob) {
                        return Err(Error::Config(format!(
                            "p outside [0,1] for '{}'",
                            p.column.name
                        )));
                    }
                }
                (Marginal::Categorical { probs }, ColumnKind::Categorical) => {
                    let k = p.column.categories.as_ref().map(|c| c.len()).unwrap_or(0);
                    if probs.len() != k {
                        return Err(Error::Config(format!(
                            "'{}': {} probabilities for {} categories",
                            p.column.name,
                            probs.len(),
                            k
                        )));
                    }
                    let total: f64 = probs.iter().sum();
                    if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&q| q < 0.0) {
                        return Err(Error::Config(format!(
                            "category probabilities of '{}' must be nonnegative and sum to 1",
                            p.column.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "marginal does not match column kind for '{}'",
                        p.column.name
                    )));
                }
            }
        }
        let specs: Vec<ColumnSpec> = self.predictors.iter().map(|p| p.column.clone()).collect();
        let bin_names = binarized_predictor_names(&specs)?;
        let known: std::collections::BTreeSet<&str> =
            bin_names.iter().map(|s| s.as_str()).collect();
        for m in &self.logistic_outcomes {
            for key in m.coefficients.keys() {
                if !known.contains(key.as_str()) {
                    return Err(Error::Config(format!(
                        "outcome '{}' references unknown binarized predictor '{}'",
                        m.name, key
                    )));
                }
            }
        }
        if let Some(s) = &self.survival {
            if s.baseline_rate <= 0.0 || s.censor_horizon <= 0.0 {
                return Err(Error::Config(
                    "survival baseline rate and censor horizon must be positive".into(),
                ));
            }
            for key in s.coefficients.keys() {
                if !known.contains(key.as_str()) {
                    return Err(Error::Config(format!(
                        "survival outcome references unknown binarized predictor '{key}'"
                    )));
                }
            }
        }
        Ok(bin_names)
    }

    fn predictor_index(&self, name: &str) -> Result<usize> {
        self.predictors
            .iter()
            .position(|p| p.column.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    }

    /// Lower Cholesky factor of the latent correlation matrix.
    fn copula_cholesky(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.predictors.len();
        let mut corr = vec![vec![0.0; d]; d];
        for (i, row) in corr.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for (a, b, rho) in &self.correlations {
            let i = self.predictor_index(a)?;
            let j = self.predictor_index(b)?;
            if i == j || rho.abs() >= 1.0 {
                return Err(Error::Config(format!(
                    "bad correlation entry ({a}, {b}, {rho})"
                )));
            }
            corr[i][j] = *rho;
            corr[j][i] = *rho;
        }
        // plain Cholesky; failure means the matrix is not positive definite
        let mut l = vec![vec![0.0; d]; d];
        for j in 0..d {
            let mut diag = corr[j][j];
            for k in 0..j {
                diag -= l[j][k] * l[j][k];
            }
            if diag <= 0.0 {
                return Err(Error::Config(
                    "copula correlation matrix is not positive definite".into(),
                ));
            }
            l[j][j] = diag.sqrt();
            for i in (j + 1)..d {
                let mut s = corr[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / l[j][j];
            }
        }
        Ok(l)
    }
}

/// Precomputed mapping from one predictor's raw value to positions in the
/// binarized name list.
enum IndicatorLayout {
    /// position of the binary predictor itself
    Binary(usize),
    /// un-binned numeric: the raw value enters the linear predictor
    Linear(usize),
    /// per bin index, the target position (None = reference bin)
    Binned {
        cuts: Vec<f64>,
        slots: Vec<Option<usize>>,
    },
    /// per category index, the target position (None = reference)
    Categorical(Vec<Option<usize>>),
}

fn indicator_layouts(predictors: &[PredictorSpec], names: &[String]) -> Vec<IndicatorLayout> {
    let pos = |n: &str| names.iter().position(|x| x == n);
    predictors
        .iter()
        .map(|p| {
            let col = &p.column;
            match col.kind {
                ColumnKind::Binary => IndicatorLayout::Binary(pos(&col.name).expect("validated")),
                ColumnKind::Numeric => match col.bins.clone() {
                    None => IndicatorLayout::Linear(pos(&col.name).expect("validated")),
                    Some(cuts) => {
                        let slots = bin_labels(&col.name, &cuts)
                            .iter()
                            .map(|l| pos(l))
                            .collect();
                        IndicatorLayout::Binned { cuts, slots }
                    }
                },
                ColumnKind::Categorical => {
                    let cats = col.categories.as_ref().unwrap();
                    IndicatorLayout::Categorical(
                        cats.iter()
                            .map(|c| pos(&format!("{}={}", col.name, c)))
                            .collect(),
                    )
                }
            }
        })
        .collect()
}

/// Indicator vector of one raw predictor row on the binarized scale.
fn binarized_row(values: &[f64], layouts: &[IndicatorLayout], width: usize) -> Vec<f64> {
    let mut row = vec![0.0; width];
    for (layout, &value) in layouts.iter().zip(values.iter()) {
        match layout {
            IndicatorLayout::Binary(slot) => row[*slot] = value,
            IndicatorLayout::Linear(slot) => row[*slot] = value,
            IndicatorLayout::Binned { cuts, slots } => {
                let bin = cuts.iter().filter(|&&c| value >= c).count();
                if let Some(slot) = slots[bin] {
                    row[slot] = 1.0;
                }
            }
            IndicatorLayout::Categorical(slots) => {
                if let Some(slot) = slots[value as usize] {
                    row[slot] = 1.0;
                }
            }
        }
    }
    row
}

/// Generate a complete dataset plus the planted ground truth.
pub fn generate_cohort(spec: &CohortSpec) -> Result<(Dataset, GroundTruth)> {
    let bin_names = spec.validate()?;
    let chol = spec.copula_cholesky()?;
    let layouts = indicator_layouts(&spec.predictors, &bin_names);
    let d = spec.predictors.len();
    let n = spec.n;

    let mut raw: Vec<Vec<f64>> = vec![vec![0.0; n]; d];
    let mut bin_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut spec_values: Vec<f64> = vec![0.0; d];

    for r in 0..n {
        // counter-based per-row stream: generation order never matters
        let mut row_rng = rng::rng_for(spec.seed, &[stream::SYNTH_ROW, r as u64]);
        let eps: Vec<f64> = (0..d)
            .map(|_| rng::draw_standard_normal(&mut row_rng))
            .collect();
        for (i, pred) in spec.predictors.iter().enumerate() {
            let mut z = 0.0;
            for k in 0..=i {
                z += chol[i][k] * eps[k];
            }
            let u = crate::stats::normal_cdf(z);
            let value = match &pred.marginal {
                Marginal::Normal { mean, sd, clip } => {
                    let mut v = mean + sd * z;
                    if let Some((lo, hi)) = clip {
                        v = v.clamp(*lo, *hi);
                    }
                    v
                }
                Marginal::LogNormal { log_mean, log_sd } => (log_mean + log_sd * z).exp(),
                Marginal::Bernoulli { p } => {
                    if u > 1.0 - p {
                        1.0
                    } else {
                        0.0
                    }
                }
                Marginal::Categorical { probs } => {
                    let mut acc = 0.0;
                    let mut idx = probs.len() - 1;
                    for (k, q) in probs.iter().enumerate() {
                        acc += q;
                        if u <= acc {
                            idx = k;
                            break;
                        }
                    }
                    idx as f64
                }
            };
            raw[i][r] = value;
            spec_values[i] = value;
        }
        bin_rows.push(binarized_row(&spec_values, &layouts, bin_names.len()));
    }

    // outcome columns
    let mut specs: Vec<ColumnSpec> = spec.predictors.iter().map(|p| p.column.clone()).collect();
    let mut cols = raw;

    let align = |coefs: &BTreeMap<String, f64>| -> Vec<f64> {
        bin_names
            .iter()
            .map(|n| coefs.get(n).copied().unwrap_or(0.0))
            .collect()
    };

    let mut truth = GroundTruth {
        predictor_names: bin_names.clone(),
        coefficients: BTreeMap::new(),
        intercepts: BTreeMap::new(),
    };

    for (oi, model) in spec.logistic_outcomes.iter().enumerate() {
        let beta = align(&model.coefficients);
        let mut y = vec![0.0; n];
        for r in 0..n {
            let mut rng = rng::rng_for(
                spec.seed,
                &[stream::SYNTH_OUTCOME, oi as u64, r as u64],
            );
            let eta = model.intercept
                + beta
                    .iter()
                    .zip(bin_rows[r].iter())
                    .map(|(b, x)| b * x)
                    .sum::<f64>();
            let p = crate::stats::logistic(eta);
            y[r] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
        specs.push(ColumnSpec::binary(&model.name).with_role(Role::Outcome));
        cols.push(y);
        truth.coefficients.insert(model.name.clone(), beta);
        truth.intercepts.insert(model.name.clone(), model.intercept);
    }

    if let Some(surv) = &spec.survival {
        let beta = align(&surv.coefficients);
        let mut time = vec![0.0; n];
        let mut event = vec![0.0; n];
        for r in 0..n {
            let mut rng = rng::rng_for(
                spec.seed,
                &[stream::SYNTH_OUTCOME, 0xD0_u64, r as u64],
            );
            let eta: f64 = beta
                .iter()
                .zip(bin_rows[r].iter())
                .map(|(b, x)| b * x)
                .sum();
            let rate = surv.baseline_rate * eta.exp();
            let u: f64 = rng.random();
            let t = -u.ln() / rate;
            if t <= surv.censor_horizon {
                time[r] = t;
                event[r] = 1.0;
            } else {
                time[r] = surv.censor_horizon;
                event[r] = 0.0;
            }
        }
        specs.push(ColumnSpec::numeric(&surv.time_name).with_role(Role::SurvivalTime));
        cols.push(time);
        specs.push(ColumnSpec::binary(&surv.event_name).with_role(Role::SurvivalEvent));
        cols.push(event);
        truth
            .coefficients
            .insert(surv.event_name.clone(), beta);
    }

    let mask = cols.iter().map(|c| vec![false; c.len()]).collect();
    let ds = Dataset::new(specs, cols, mask)?;
    Ok((ds, truth))
}

/// Default cohort: a type-2-diabetes-style schema with demographic,
/// laboratory, comorbidity, and treatment predictors (38 binarized
/// indicators), two binary outcomes, and one survival outcome.
pub fn default_cohort(n: usize, seed: u64) -> CohortSpec {
    let num = |name: &str, mean: f64, sd: f64, lo: f64, hi: f64, bins: &[f64], r: &str| {
        PredictorSpec {
            column: ColumnSpec::numeric(name).with_bins(bins).with_reference(r),
            marginal: Marginal::Normal {
                mean,
                sd,
                clip: Some((lo, hi)),
            },
        }
    };
    let flag = |name: &str, p: f64| PredictorSpec {
        column: ColumnSpec::binary(name),
        marginal: Marginal::Bernoulli { p },
    };

    let mut predictors = vec![
        flag("male", 0.49),
        num(
            "age",
            62.0,
            13.0,
            18.0,
            89.0,
            &[40.0, 50.0, 60.0, 70.0, 80.0],
            "60<=age<70",
        ),
        PredictorSpec {
            column: ColumnSpec::numeric("bmi")
                .with_bins(&[20.0, 25.0, 30.0, 35.0, 40.0])
                .with_reference("30<=bmi<35")
                .with_log_transform(),
            marginal: Marginal::LogNormal {
                log_mean: 3.48,
                log_sd: 0.22,
            },
        },
        PredictorSpec {
            column: ColumnSpec::categorical("race", &["white", "black", "asian", "other"])
                .with_reference("white"),
            marginal: Marginal::Categorical {
                probs: vec![0.647, 0.306, 0.033, 0.014],
            },
        },
        PredictorSpec {
            column: ColumnSpec::categorical("ethnicity", &["hispanic", "not_hispanic"])
                .with_reference("not_hispanic"),
            marginal: Marginal::Categorical {
                probs: vec![0.18, 0.82],
            },
        },
        num(
            "hba1c",
            7.6,
            1.7,
            4.1,
            19.0,
            &[6.0, 7.0, 8.0, 9.0, 10.0],
            "6<=hba1c<7",
        ),
    ];
    for (name, p) in [
        ("mi", 0.13),
        ("chf", 0.23),
        ("pvd", 0.21),
        ("stroke", 0.17),
        ("dementia", 0.08),
        ("pulmonary", 0.31),
        ("liver_mild", 0.16),
        ("liver_severe", 0.06),
        ("renal", 0.30),
        ("cancer", 0.14),
        ("hiv", 0.05),
    ] {
        predictors.push(flag(name, p));
    }
    for (name, p) in [
        ("metformin", 0.26),
        ("dpp4", 0.08),
        ("sglt2", 0.08),
        ("glp", 0.09),
        ("tzd", 0.05),
        ("insulin", 0.25),
        ("sulfonylurea", 0.10),
    ] {
        predictors.push(flag(name, p));
    }

    // Latent dependence so that MAR amputation has observables to condition
    // on and imputers have signal to exploit.
    let correlations = vec![
        ("age".into(), "bmi".into(), -0.30),
        ("age".into(), "chf".into(), 0.35),
        ("age".into(), "renal".into(), 0.30),
        ("age".into(), "dementia".into(), 0.40),
        ("age".into(), "cancer".into(), 0.25),
        ("bmi".into(), "hba1c".into(), 0.30),
        ("bmi".into(), "insulin".into(), 0.25),
        ("bmi".into(), "pulmonary".into(), 0.20),
        ("hba1c".into(), "insulin".into(), 0.35),
        ("hba1c".into(), "metformin".into(), 0.20),
        ("race".into(), "ethnicity".into(), 0.25),
        ("race".into(), "bmi".into(), 0.20),
        ("race".into(), "renal".into(), 0.15),
        ("ethnicity".into(), "age".into(), -0.20),
        ("mi".into(), "chf".into(), 0.30),
        ("pvd".into(), "stroke".into(), 0.20),
        ("liver_mild".into(), "liver_severe".into(), 0.30),
    ];

    let coef = |pairs: &[(&str, f64)]| -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    };

    let hospitalization = LogisticModel {
        name: "hospitalization".into(),
        intercept: -0.55,
        coefficients: coef(&[
            ("male", 0.25),
            ("age<40", -0.65),
            ("40<=age<50", -0.45),
            ("50<=age<60", -0.25),
            ("70<=age<80", 0.30),
            ("age>=80", 0.60),
            ("bmi<20", 0.45),
            ("20<=bmi<25", 0.25),
            ("25<=bmi<30", 0.10),
            ("35<=bmi<40", 0.12),
            ("bmi>=40", 0.30),
            ("race=black", 0.35),
            ("race=asian", -0.15),
            ("ethnicity=hispanic", 0.25),
            ("hba1c<6", 0.15),
            ("7<=hba1c<8", 0.20),
            ("8<=hba1c<9", 0.40),
            ("9<=hba1c<10", 0.55),
            ("hba1c>=10", 0.70),
            ("mi", 0.35),
            ("chf", 0.45),
            ("renal", 0.50),
            ("pulmonary", 0.20),
            ("insulin", 0.40),
            ("metformin", -0.35),
        ]),
    };
    let ventilation = LogisticModel {
        name: "ventilation".into(),
        intercept: -2.2,
        coefficients: coef(&[
            ("male", 0.35),
            ("age<40", -0.55),
            ("70<=age<80", 0.30),
            ("age>=80", 0.25),
            ("bmi>=40", 0.45),
            ("bmi<20", 0.30),
            ("race=black", 0.25),
            ("ethnicity=hispanic", 0.20),
            ("8<=hba1c<9", 0.35),
            ("9<=hba1c<10", 0.50),
            ("hba1c>=10", 0.55),
            ("chf", 0.40),
            ("renal", 0.45),
            ("pulmonary", 0.30),
            ("insulin", 0.35),
        ]),
    };
    let survival = SurvivalModel {
        time_name: "followup_days".into(),
        event_name: "death".into(),
        baseline_rate: 0.0008,
        censor_horizon: 120.0,
        coefficients: coef(&[
            ("male", 0.30),
            ("age<40", -0.80),
            ("40<=age<50", -0.55),
            ("50<=age<60", -0.30),
            ("70<=age<80", 0.45),
            ("age>=80", 0.90),
            ("bmi<20", 0.50),
            ("bmi>=40", 0.30),
            ("race=black", 0.20),
            ("8<=hba1c<9", 0.30),
            ("9<=hba1c<10", 0.35),
            ("hba1c>=10", 0.45),
            ("mi", 0.30),
            ("chf", 0.55),
            ("dementia", 0.60),
            ("renal", 0.50),
            ("cancer", 0.40),
            ("insulin", 0.30),
        ]),
    };

    CohortSpec {
        n,
        seed,
        predictors,
        correlations,
        logistic_outcomes: vec![hospitalization, ventilation],
        survival: Some(survival),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cohort_has_38_binarized_predictors() {
        let spec = default_cohort(10, 1);
        let specs: Vec<ColumnSpec> = spec.predictors.iter().map(|p| p.column.clone()).collect();
        let names = binarized_predictor_names(&specs).unwrap();
        assert_eq!(names.len(), 38);
    }

    #[test]
    fn generated_cohort_is_complete_and_deterministic() {
        let spec = default_cohort(500, 7);
        let (ds, truth) = generate_cohort(&spec).unwrap();
        assert!(ds.is_complete());
        assert_eq!(truth.predictor_names.len(), 38);

        let (ds2, _) = generate_cohort(&spec).unwrap();
        for c in 0..ds.n_cols() {
            for r in 0..ds.n_rows() {
                assert_eq!(
                    ds.value(r, c).map(f64::to_bits),
                    ds2.value(r, c).map(f64::to_bits)
                );
            }
        }
    }

    #[test]
    fn marginal_fractions_match_spec() {
        let spec = default_cohort(50_000, 11);
        let (ds, _) = generate_cohort(&spec).unwrap();
        let male = ds.col_index("male").unwrap();
        let frac = (0..ds.n_rows())
            .map(|r| ds.value(r, male).unwrap())
            .sum::<f64>()
            / ds.n_rows() as f64;
        assert!((frac - 0.49).abs() < 0.01, "male fraction {frac}");
    }

    #[test]
    fn null_logistic_model_hits_intercept_prevalence() {
        let mut spec = default_cohort(50_000, 13);
        spec.logistic_outcomes = vec![LogisticModel {
            name: "flat".into(),
            intercept: -1.0,
            coefficients: BTreeMap::new(),
        }];
        spec.survival = None;
        let (ds, _) = generate_cohort(&spec).unwrap();
        let c = ds.col_index("flat").unwrap();
        let prevalence = (0..ds.n_rows())
            .map(|r| ds.value(r, c).unwrap())
            .sum::<f64>()
            / ds.n_rows() as f64;
        let expect = crate::stats::logistic(-1.0);
        assert!(
            (prevalence - expect).abs() < 0.01,
            "prevalence {prevalence} vs {expect}"
        );
    }

    #[test]
    fn survival_rows_are_well_formed() {
        let spec = default_cohort(2_000, 17);
        let (ds, _) = generate_cohort(&spec).unwrap();
        let t = ds.col_index("followup_days").unwrap();
        let e = ds.col_index("death").unwrap();
        let horizon = spec.survival.as_ref().unwrap().censor_horizon;
        for r in 0..ds.n_rows() {
            let time = ds.value(r, t).unwrap();
            let ev = ds.value(r, e).unwrap();
            assert!(time > 0.0);
            assert!(ev == 0.0 || ev == 1.0);
            if ev == 0.0 {
                assert_eq!(time, horizon);
            } else {
                assert!(time <= horizon);
            }
        }
    }

    #[test]
    fn bad_correlation_matrix_is_rejected() {
        let mut spec = default_cohort(10, 1);
        spec.correlations = vec![
            ("age".into(), "bmi".into(), 0.95),
            ("age".into(), "hba1c".into(), 0.95),
            ("bmi".into(), "hba1c".into(), -0.95),
        ];
        assert!(generate_cohort(&spec).is_err());
    }
}
