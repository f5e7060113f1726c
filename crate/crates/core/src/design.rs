//! Glue between completed datasets and the estimators: outcome
//! declarations, the normalization (binarization) step, fuzzy-indicator
//! policy, and design-matrix assembly.

use crate::error::{Error, Result};
use crate::estimators::{fit_cox, fit_logistic, EstimateVector};
use crate::frame::{numeric_frame, RoleFilter};
use crate::tabular::{ColumnKind, Dataset, Role};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// One outcome of interest and the estimator it implies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutcomeSpec {
    /// logistic regression on a binary outcome column
    Binary { name: String },
    /// Cox proportional hazards on a (time, event) pair
    Survival {
        name: String,
        time: String,
        event: String,
    },
}

impl OutcomeSpec {
    pub fn name(&self) -> &str {
        match self {
            OutcomeSpec::Binary { name } => name,
            OutcomeSpec::Survival { name, .. } => name,
        }
    }
}

/// What to do with fractional values sitting in binary columns (fuzzy
/// imputations) when the estimation step consumes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzyMode {
    /// threshold at 0.5
    Threshold,
    /// keep the fractional value
    AsIs,
}

impl Default for FuzzyMode {
    fn default() -> Self {
        FuzzyMode::Threshold
    }
}

/// Normalize a completed dataset for estimation: binarize predictors when
/// requested and resolve fuzzy binary cells per the chosen policy.
pub fn prepare_for_estimation(
    ds: &Dataset,
    binarize: bool,
    fuzzy: FuzzyMode,
) -> Result<Dataset> {
    let mut out = if binarize {
        ds.binarize_for_estimation()?
    } else {
        ds.clone()
    };
    if fuzzy == FuzzyMode::Threshold {
        for c in 0..out.n_cols() {
            let spec = out.spec(c).clone();
            if spec.kind != ColumnKind::Binary || spec.role != Role::Predictor {
                continue;
            }
            let needs_fix = (0..out.n_rows()).any(|r| {
                matches!(out.value(r, c), Some(v) if v != 0.0 && v != 1.0)
            });
            if !needs_fix {
                continue;
            }
            let values: Vec<f64> = (0..out.n_rows())
                .map(|r| match out.value(r, c) {
                    Some(v) if v != 0.0 && v != 1.0 => {
                        if v >= 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Some(v) => v,
                    None => f64::NAN,
                })
                .collect();
            let mask: Vec<bool> = (0..out.n_rows()).map(|r| out.is_missing(r, c)).collect();
            out = out.with_column_replaced(c, spec, values, mask)?;
        }
    }
    Ok(out)
}

/// Predictor design matrix (no intercept) plus column names.
pub fn design_matrix(ds: &Dataset) -> (Array2<f64>, Vec<String>) {
    let frame = numeric_frame(ds, RoleFilter::Predictors);
    let names = frame.names();
    (frame.data, names)
}

/// Fit the estimator implied by an outcome spec on a complete dataset.
pub fn fit_outcome(
    ds: &Dataset,
    outcome: &OutcomeSpec,
    weights: Option<&[f64]>,
) -> Result<EstimateVector> {
    if !ds.is_complete() {
        return Err(Error::NotComplete(ds.missing_cell_count()));
    }
    let (x, names) = design_matrix(ds);
    match outcome {
        OutcomeSpec::Binary { name } => {
            let c = ds.col_index(name)?;
            if ds.spec(c).role != Role::Outcome {
                return Err(Error::Config(format!(
                    "'{name}' does not have outcome role"
                )));
            }
            let y: Vec<f64> = (0..ds.n_rows()).map(|r| ds.value(r, c).unwrap()).collect();
            fit_logistic(&x, &names, &y, weights)
        }
        OutcomeSpec::Survival { time, event, .. } => {
            let tc = ds.col_index(time)?;
            let ec = ds.col_index(event)?;
            if ds.spec(tc).role != Role::SurvivalTime || ds.spec(ec).role != Role::SurvivalEvent
            {
                return Err(Error::Config(
                    "survival outcome columns must carry the survival roles".into(),
                ));
            }
            let t: Vec<f64> = (0..ds.n_rows()).map(|r| ds.value(r, tc).unwrap()).collect();
            let e: Vec<f64> = (0..ds.n_rows()).map(|r| ds.value(r, ec).unwrap()).collect();
            fit_cox(&x, &names, &t, &e, weights)
        }
    }
}

/// Outcome specs implied by a schema: one Binary per outcome-role column and
/// one Survival when the pair is present.
pub fn outcomes_from_schema(ds: &Dataset) -> Vec<OutcomeSpec> {
    let mut out = Vec::new();
    for spec in ds.specs() {
        if spec.role == Role::Outcome && spec.kind == ColumnKind::Binary {
            out.push(OutcomeSpec::Binary {
                name: spec.name.clone(),
            });
        }
    }
    let time = ds
        .specs()
        .iter()
        .find(|s| s.role == Role::SurvivalTime)
        .map(|s| s.name.clone());
    let event = ds
        .specs()
        .iter()
        .find(|s| s.role == Role::SurvivalEvent)
        .map(|s| s.name.clone());
    if let (Some(time), Some(event)) = (time, event) {
        out.push(OutcomeSpec::Survival {
            name: event.clone(),
            time,
            event,
        });
    }
    out
}
