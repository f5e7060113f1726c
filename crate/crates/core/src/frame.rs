//! Numeric encodings of a [`Dataset`](crate::tabular::Dataset).
//!
//! Several consumers (the joint-model imputer, Little's test, MAR score
//! construction, estimation) need the data as a numeric matrix: numeric
//! columns as-is (log scale where declared), binary columns as 0/1, and
//! categorical columns expanded to reference-dropped indicators.

use crate::tabular::{ColumnKind, ColumnSpec, Dataset, Role};
use ndarray::Array2;

/// Which dataset columns enter the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleFilter {
    /// Predictor columns only.
    Predictors,
    /// Predictors plus binary outcomes, with separate switches for the
    /// survival pair.
    PredictorsAndOutcomes {
        survival_time: bool,
        survival_event: bool,
    },
    /// Every column except identifiers.
    AllButId,
}

impl RoleFilter {
    /// Predictors and all outcome columns including the survival pair.
    pub fn with_all_outcomes() -> Self {
        RoleFilter::PredictorsAndOutcomes {
            survival_time: true,
            survival_event: true,
        }
    }

    fn admits(&self, spec: &ColumnSpec) -> bool {
        match self {
            RoleFilter::Predictors => spec.role == Role::Predictor,
            RoleFilter::PredictorsAndOutcomes {
                survival_time,
                survival_event,
            } => match spec.role {
                Role::Predictor | Role::Outcome => true,
                Role::SurvivalEvent => *survival_event,
                Role::SurvivalTime => *survival_time,
                Role::Id => false,
            },
            RoleFilter::AllButId => spec.role != Role::Id,
        }
    }
}

/// One encoded column of a [`NumericFrame`].
#[derive(Debug, Clone)]
pub struct FrameColumn {
    pub name: String,
    /// Index of the source dataset column.
    pub source: usize,
    /// For categorical sources, the category index this indicator encodes.
    pub category: Option<usize>,
    /// Natural-log scale applied (numeric columns with log_transform).
    pub log_scale: bool,
}

/// Dense numeric view with its own missingness mask (NaN at masked cells).
#[derive(Debug, Clone)]
pub struct NumericFrame {
    pub columns: Vec<FrameColumn>,
    pub data: Array2<f64>,
    pub mask: Array2<bool>,
}

impl NumericFrame {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Reference category index used when expanding a categorical column:
/// the declared reference if any, otherwise the largest observed category
/// (ties broken by declaration order).
pub fn reference_index(ds: &Dataset, col: usize) -> usize {
    let spec = ds.spec(col);
    let cats = spec.categories.as_ref().expect("categorical column");
    if let Some(r) = &spec.reference_category {
        return cats.iter().position(|c| c == r).unwrap();
    }
    let mut counts = vec![0usize; cats.len()];
    for r in 0..ds.n_rows() {
        if let Some(v) = ds.value(r, col) {
            counts[v as usize] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Build the numeric view of `ds` over the columns admitted by `filter`.
pub fn numeric_frame(ds: &Dataset, filter: RoleFilter) -> NumericFrame {
    let n = ds.n_rows();
    let mut columns = Vec::new();
    let mut data_cols: Vec<Vec<f64>> = Vec::new();
    let mut mask_cols: Vec<Vec<bool>> = Vec::new();

    for c in 0..ds.n_cols() {
        let spec = ds.spec(c);
        if !filter.admits(spec) {
            continue;
        }
        match spec.kind {
            ColumnKind::Numeric | ColumnKind::Binary => {
                let log_scale = spec.kind == ColumnKind::Numeric && spec.log_transform;
                let mut vals = Vec::with_capacity(n);
                let mut mask = Vec::with_capacity(n);
                for r in 0..n {
                    match ds.value(r, c) {
                        Some(v) => {
                            vals.push(if log_scale { v.ln() } else { v });
                            mask.push(false);
                        }
                        None => {
                            vals.push(f64::NAN);
                            mask.push(true);
                        }
                    }
                }
                columns.push(FrameColumn {
                    name: spec.name.clone(),
                    source: c,
                    category: None,
                    log_scale,
                });
                data_cols.push(vals);
                mask_cols.push(mask);
            }
            ColumnKind::Categorical => {
                let cats = spec.categories.as_ref().unwrap();
                let reference = reference_index(ds, c);
                for (k, cat) in cats.iter().enumerate() {
                    if k == reference {
                        continue;
                    }
                    let mut vals = Vec::with_capacity(n);
                    let mut mask = Vec::with_capacity(n);
                    for r in 0..n {
                        match ds.value(r, c) {
                            Some(v) => {
                                vals.push(if v as usize == k { 1.0 } else { 0.0 });
                                mask.push(false);
                            }
                            None => {
                                vals.push(f64::NAN);
                                mask.push(true);
                            }
                        }
                    }
                    let name = if cat.contains(spec.name.as_str()) {
                        cat.clone()
                    } else {
                        format!("{}={}", spec.name, cat)
                    };
                    columns.push(FrameColumn {
                        name,
                        source: c,
                        category: Some(k),
                        log_scale: false,
                    });
                    data_cols.push(vals);
                    mask_cols.push(mask);
                }
            }
        }
    }

    let p = columns.len();
    let mut data = Array2::from_elem((n, p), f64::NAN);
    let mut mask = Array2::from_elem((n, p), false);
    for (j, (vals, ms)) in data_cols.iter().zip(mask_cols.iter()).enumerate() {
        for r in 0..n {
            data[[r, j]] = vals[r];
            mask[[r, j]] = ms[r];
        }
    }
    NumericFrame { columns, data, mask }
}
