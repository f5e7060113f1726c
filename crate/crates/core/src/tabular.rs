//! Mixed-type dataset model and the transforms every other module consumes:
//! binning, one-hot encoding, listwise deletion, missingness-pattern
//! summaries.
//!
//! Cells are stored as `f64` column-major; a masked (missing) cell holds NaN
//! and is unreadable through the public accessors. Categorical cells store
//! the index into the declared category list. Binary cells are 0/1 on load;
//! imputers may write fractional ("fuzzy") values in binary columns, which
//! downstream estimation either thresholds or consumes as-is.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Predictor,
    Outcome,
    SurvivalTime,
    SurvivalEvent,
    Id,
}

fn default_role() -> Role {
    Role::Predictor
}

/// Declared shape of one column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_role")]
    pub role: Role,
    /// Ordered cut points for numeric binning. Intervals are left-closed,
    /// right-open; the leftmost bin is unbounded below, the rightmost above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
    /// Declared categories (categorical only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Reference category dropped by one-hot encoding. Defaults to the
    /// largest observed category.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_category: Option<String>,
    /// Impute on the natural-log scale, back-transform by exponentiation.
    #[serde(default)]
    pub log_transform: bool,
}

impl ColumnSpec {
    pub fn numeric(name: &str) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
            role: Role::Predictor,
            bins: None,
            categories: None,
            reference_category: None,
            log_transform: false,
        }
    }

    pub fn binary(name: &str) -> Self {
        ColumnSpec {
            kind: ColumnKind::Binary,
            ..ColumnSpec::numeric(name)
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        ColumnSpec {
            kind: ColumnKind::Categorical,
            categories: Some(categories.iter().map(|s| s.to_string()).collect()),
            ..ColumnSpec::numeric(name)
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_bins(mut self, bins: &[f64]) -> Self {
        self.bins = Some(bins.to_vec());
        self
    }

    pub fn with_reference(mut self, reference: &str) -> Self {
        self.reference_category = Some(reference.into());
        self
    }

    pub fn with_log_transform(mut self) -> Self {
        self.log_transform = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(bins) = &self.bins {
            if self.kind != ColumnKind::Numeric {
                return Err(Error::BadColumn {
                    column: self.name.clone(),
                    reason: "bins are only valid on numeric columns".into(),
                });
            }
            if bins.is_empty() || bins.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::BadColumn {
                    column: self.name.clone(),
                    reason: "bins must be non-empty and strictly increasing".into(),
                });
            }
        }
        match self.kind {
            ColumnKind::Categorical => {
                let cats = self.categories.as_ref().ok_or_else(|| Error::BadColumn {
                    column: self.name.clone(),
                    reason: "categorical column needs declared categories".into(),
                })?;
                if cats.len() < 2 {
                    return Err(Error::BadColumn {
                        column: self.name.clone(),
                        reason: "fewer than 2 categories".into(),
                    });
                }
                let mut seen = std::collections::BTreeSet::new();
                for c in cats {
                    if !seen.insert(c) {
                        return Err(Error::BadColumn {
                            column: self.name.clone(),
                            reason: format!("duplicate category '{c}'"),
                        });
                    }
                }
                if let Some(r) = &self.reference_category {
                    if !cats.contains(r) {
                        return Err(Error::BadColumn {
                            column: self.name.clone(),
                            reason: format!("reference category '{r}' not declared"),
                        });
                    }
                }
            }
            _ => {
                if self.categories.is_some() {
                    return Err(Error::BadColumn {
                        column: self.name.clone(),
                        reason: "categories are only valid on categorical columns".into(),
                    });
                }
            }
        }
        if self.log_transform && self.kind != ColumnKind::Numeric {
            return Err(Error::BadColumn {
                column: self.name.clone(),
                reason: "log_transform is only valid on numeric columns".into(),
            });
        }
        Ok(())
    }
}

/// Load a schema (a JSON list of [`ColumnSpec`]) from a file.
pub fn load_schema(path: &Path) -> Result<Vec<ColumnSpec>> {
    let text = std::fs::read_to_string(path)?;
    let specs: Vec<ColumnSpec> = serde_json::from_str(&text)?;
    Ok(specs)
}

pub fn save_schema(path: &Path, specs: &[ColumnSpec]) -> Result<()> {
    let text = serde_json::to_string_pretty(specs)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Immutable mixed-type dataset with a per-cell missingness mask.
#[derive(Debug, Clone)]
pub struct Dataset {
    specs: Vec<ColumnSpec>,
    cols: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    n_rows: usize,
}

impl Dataset {
    /// Build a dataset from column-major values and masks, checking every
    /// declared invariant.
    pub fn new(specs: Vec<ColumnSpec>, cols: Vec<Vec<f64>>, mask: Vec<Vec<bool>>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Contract("dataset needs at least one column".into()));
        }
        if cols.len() != specs.len() || mask.len() != specs.len() {
            return Err(Error::Contract("column count mismatch".into()));
        }
        let n_rows = cols[0].len();
        if n_rows == 0 {
            return Err(Error::Contract("dataset needs at least one row".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for spec in &specs {
            spec.validate()?;
            if !names.insert(spec.name.clone()) {
                return Err(Error::BadColumn {
                    column: spec.name.clone(),
                    reason: "duplicate column name".into(),
                });
            }
        }
        let has_time = specs.iter().any(|s| s.role == Role::SurvivalTime);
        let has_event = specs.iter().any(|s| s.role == Role::SurvivalEvent);
        if has_time != has_event {
            return Err(Error::Contract(
                "survival_time and survival_event must appear as a pair".into(),
            ));
        }
        let mut ds = Dataset {
            specs,
            cols: Vec::with_capacity(cols.len()),
            mask,
            n_rows,
        };
        for (c, mut col) in cols.into_iter().enumerate() {
            if col.len() != n_rows || ds.mask[c].len() != n_rows {
                return Err(Error::Contract("ragged columns".into()));
            }
            for r in 0..n_rows {
                if ds.mask[c][r] {
                    col[r] = f64::NAN; // masked cells are unreadable
                } else {
                    let v = col[r];
                    let spec = &ds.specs[c];
                    match spec.kind {
                        ColumnKind::Numeric => {
                            if !v.is_finite() {
                                return Err(Error::InvalidValue {
                                    column: spec.name.clone(),
                                    row: r,
                                    value: format!("{v}"),
                                });
                            }
                        }
                        ColumnKind::Binary => {
                            if !v.is_finite() {
                                return Err(Error::InvalidValue {
                                    column: spec.name.clone(),
                                    row: r,
                                    value: format!("{v}"),
                                });
                            }
                        }
                        ColumnKind::Categorical => {
                            let k = spec.categories.as_ref().unwrap().len();
                            if v.fract() != 0.0 || v < 0.0 || (v as usize) >= k {
                                return Err(Error::InvalidValue {
                                    column: spec.name.clone(),
                                    row: r,
                                    value: format!("{v}"),
                                });
                            }
                        }
                    }
                }
            }
            ds.cols.push(col);
        }
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ColumnSpec] {
        &self.specs
    }

    pub fn spec(&self, c: usize) -> &ColumnSpec {
        &self.specs[c]
    }

    pub fn col_index(&self, name: &str) -> Result<usize> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    }

    /// Cell value; `None` when masked.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        if self.mask[col][row] {
            None
        } else {
            Some(self.cols[col][row])
        }
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[col][row]
    }

    /// Raw storage including NaN for masked cells; used by transforms.
    pub(crate) fn raw_col(&self, col: usize) -> &[f64] {
        &self.cols[col]
    }

    /// Column missingness mask (true = missing).
    pub fn mask_col(&self, col: usize) -> &[bool] {
        &self.mask[col]
    }

    /// Label of a categorical value.
    pub fn category_label(&self, col: usize, value: f64) -> Option<&str> {
        self.specs[col]
            .categories
            .as_ref()
            .and_then(|cats| cats.get(value as usize))
            .map(|s| s.as_str())
    }

    pub fn row_is_complete(&self, row: usize) -> bool {
        self.mask.iter().all(|m| !m[row])
    }

    pub fn missing_cell_count(&self) -> usize {
        self.mask
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_cell_count() == 0
    }

    pub fn missing_count_of(&self, col: usize) -> usize {
        self.mask[col].iter().filter(|&&b| b).count()
    }

    /// Replace one column's values/mask, returning a new dataset. Internal
    /// building block for the transforms and the imputers.
    pub(crate) fn with_column_replaced(
        &self,
        col: usize,
        spec: ColumnSpec,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Dataset> {
        let mut specs = self.specs.clone();
        let mut cols = self.cols.clone();
        let mut masks = self.mask.clone();
        specs[col] = spec;
        cols[col] = values;
        masks[col] = mask;
        Dataset::new(specs, cols, masks)
    }

    /// Splice `replacements` in place of column `col`.
    fn with_column_expanded(
        &self,
        col: usize,
        replacements: Vec<(ColumnSpec, Vec<f64>, Vec<bool>)>,
    ) -> Result<Dataset> {
        let mut specs = Vec::with_capacity(self.specs.len() + replacements.len() - 1);
        let mut cols = Vec::with_capacity(specs.capacity());
        let mut masks = Vec::with_capacity(specs.capacity());
        for c in 0..self.specs.len() {
            if c == col {
                for (s, v, m) in &replacements {
                    specs.push(s.clone());
                    cols.push(v.clone());
                    masks.push(m.clone());
                }
            } else {
                specs.push(self.specs[c].clone());
                cols.push(self.cols[c].clone());
                masks.push(self.mask[c].clone());
            }
        }
        Dataset::new(specs, cols, masks)
    }

    /// Bin a numeric variable into an ordered categorical of interval labels.
    /// Intervals are left-closed/right-open with unbounded first and last
    /// bins. Missing cells stay missing.
    pub fn bin_numeric(&self, var: &str) -> Result<Dataset> {
        let col = self.col_index(var)?;
        let spec = &self.specs[col];
        if spec.kind != ColumnKind::Numeric {
            return Err(Error::BadColumn {
                column: var.into(),
                reason: "bin_numeric needs a numeric column".into(),
            });
        }
        let cuts = spec.bins.as_ref().ok_or_else(|| Error::BadColumn {
            column: var.into(),
            reason: "bins undeclared".into(),
        })?;
        let labels = bin_labels(var, cuts);
        let mut values = vec![0.0; self.n_rows];
        let mask = self.mask[col].clone();
        for r in 0..self.n_rows {
            if !mask[r] {
                let v = self.cols[col][r];
                values[r] = cuts.iter().filter(|&&c| v >= c).count() as f64;
            } else {
                values[r] = f64::NAN;
            }
        }
        let new_spec = ColumnSpec {
            name: spec.name.clone(),
            kind: ColumnKind::Categorical,
            role: spec.role,
            bins: None,
            categories: Some(labels),
            reference_category: spec.reference_category.clone(),
            log_transform: false,
        };
        self.with_column_replaced(col, new_spec, values, mask)
    }

    /// Expand a categorical variable into (#categories - 1) binary columns,
    /// omitting the reference category. A row missing the source is missing
    /// in every generated column.
    pub fn one_hot(&self, var: &str) -> Result<Dataset> {
        let col = self.col_index(var)?;
        let spec = &self.specs[col];
        if spec.kind != ColumnKind::Categorical {
            return Err(Error::BadColumn {
                column: var.into(),
                reason: "one_hot needs a categorical column".into(),
            });
        }
        let cats = spec.categories.as_ref().unwrap();
        if cats.len() < 2 {
            return Err(Error::BadColumn {
                column: var.into(),
                reason: "fewer than 2 categories".into(),
            });
        }
        let reference = match &spec.reference_category {
            Some(r) => r.clone(),
            None => {
                // largest observed category; ties broken by declaration order
                let mut counts = vec![0usize; cats.len()];
                for r in 0..self.n_rows {
                    if !self.mask[col][r] {
                        counts[self.cols[col][r] as usize] += 1;
                    }
                }
                let best = counts
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                cats[best].clone()
            }
        };
        let mut replacements = Vec::new();
        for (k, cat) in cats.iter().enumerate() {
            if *cat == reference {
                continue;
            }
            let mut values = vec![0.0; self.n_rows];
            let mut mask = vec![false; self.n_rows];
            for r in 0..self.n_rows {
                if self.mask[col][r] {
                    mask[r] = true;
                    values[r] = f64::NAN;
                } else {
                    values[r] = if self.cols[col][r] as usize == k {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
            let s = ColumnSpec {
                name: format!("{var}={cat}"),
                kind: ColumnKind::Binary,
                role: spec.role,
                bins: None,
                categories: None,
                reference_category: None,
                log_transform: false,
            };
            replacements.push((s, values, mask));
        }
        self.with_column_expanded(col, replacements)
    }

    /// Keep only rows with zero masked cells, preserving order.
    pub fn listwise_delete(&self) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.n_rows)
            .filter(|&r| self.row_is_complete(r))
            .collect();
        if keep.is_empty() {
            return Err(Error::NoCompleteCases);
        }
        let cols = self
            .cols
            .iter()
            .map(|col| keep.iter().map(|&r| col[r]).collect())
            .collect();
        let mask = self
            .mask
            .iter()
            .map(|_| vec![false; keep.len()])
            .collect();
        Dataset::new(self.specs.clone(), cols, mask)
    }

    /// Keep only the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        let specs = cols.iter().map(|&c| self.specs[c].clone()).collect();
        let values = cols.iter().map(|&c| self.cols[c].clone()).collect();
        let mask = cols.iter().map(|&c| self.mask[c].clone()).collect();
        Dataset::new(specs, values, mask)
    }

    /// Select a subset of rows (used by bootstrap resampling).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let cols = self
            .cols
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        let mask = self
            .mask
            .iter()
            .map(|m| rows.iter().map(|&r| m[r]).collect())
            .collect();
        Dataset::new(self.specs.clone(), cols, mask)
    }

    /// One entry per distinct missing-variable subset, sorted by count
    /// descending (ties by pattern name).
    pub fn pattern_summary(&self) -> PatternTable {
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for r in 0..self.n_rows {
            let pattern: Vec<usize> = (0..self.specs.len())
                .filter(|&c| self.mask[c][r])
                .collect();
            *counts.entry(pattern).or_insert(0) += 1;
        }
        let complete_rows = counts.get(&Vec::new()).copied().unwrap_or(0);
        let mut entries: Vec<PatternEntry> = counts
            .into_iter()
            .map(|(pattern, count)| PatternEntry {
                missing_vars: pattern
                    .iter()
                    .map(|&c| self.specs[c].name.clone())
                    .collect(),
                count,
                percent: 100.0 * count as f64 / self.n_rows as f64,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.count
                .cmp(&a.count)
                .then_with(|| a.missing_vars.cmp(&b.missing_vars))
        });
        PatternTable {
            entries,
            n_rows: self.n_rows,
            complete_rows,
            incomplete_rows: self.n_rows - complete_rows,
        }
    }

    /// Bin + one-hot every non-binary predictor so that all predictors are
    /// binary indicators on a common scale. Idempotent on its own output.
    pub fn binarize_for_estimation(&self) -> Result<Dataset> {
        let mut ds = self.clone();
        loop {
            let next = ds.specs.iter().find_map(|s| {
                if s.role != Role::Predictor {
                    return None;
                }
                match s.kind {
                    ColumnKind::Numeric => Some((s.name.clone(), true)),
                    ColumnKind::Categorical => Some((s.name.clone(), false)),
                    ColumnKind::Binary => None,
                }
            });
            match next {
                Some((name, true)) => {
                    ds = ds.bin_numeric(&name)?.one_hot(&name)?;
                }
                Some((name, false)) => {
                    ds = ds.one_hot(&name)?;
                }
                None => break,
            }
        }
        Ok(ds)
    }

    /// Write the dataset as RFC-4180 CSV with a header row; masked cells
    /// become empty fields.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.specs.iter().map(|s| s.name.as_str()))?;
        let mut record = Vec::with_capacity(self.specs.len());
        for r in 0..self.n_rows {
            record.clear();
            for c in 0..self.specs.len() {
                record.push(self.format_cell(r, c));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    fn format_cell(&self, row: usize, col: usize) -> String {
        if self.mask[col][row] {
            return String::new();
        }
        let v = self.cols[col][row];
        match self.specs[col].kind {
            ColumnKind::Categorical => self.category_label(col, v).unwrap_or("").to_string(),
            ColumnKind::Binary => {
                if v == 0.0 {
                    "0".into()
                } else if v == 1.0 {
                    "1".into()
                } else {
                    format!("{v}") // fuzzy imputation
                }
            }
            ColumnKind::Numeric => format!("{v}"),
        }
    }

    /// Parse a CSV file against a schema. Header columns may appear in any
    /// order but must cover the schema exactly; empty fields become masked
    /// cells.
    pub fn load_csv(path: &Path, schema: &[ColumnSpec]) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut order = Vec::with_capacity(headers.len());
        for h in headers.iter() {
            let idx = schema
                .iter()
                .position(|s| s.name == h)
                .ok_or_else(|| Error::UnknownColumn(h.into()))?;
            order.push(idx);
        }
        for spec in schema {
            if !headers.iter().any(|h| h == spec.name) {
                return Err(Error::BadColumn {
                    column: spec.name.clone(),
                    reason: "missing from CSV header".into(),
                });
            }
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
        let mut mask: Vec<Vec<bool>> = vec![Vec::new(); schema.len()];
        for (row_idx, record) in reader.records().enumerate() {
            let record = record?;
            for (pos, field) in record.iter().enumerate() {
                let c = order[pos];
                let spec = &schema[c];
                if field.is_empty() {
                    cols[c].push(f64::NAN);
                    mask[c].push(true);
                    continue;
                }
                let parsed = parse_cell(spec, field).ok_or_else(|| Error::InvalidValue {
                    column: spec.name.clone(),
                    row: row_idx,
                    value: field.into(),
                })?;
                cols[c].push(parsed);
                mask[c].push(false);
            }
        }
        Dataset::new(schema.to_vec(), cols, mask)
    }
}

fn parse_cell(spec: &ColumnSpec, field: &str) -> Option<f64> {
    match spec.kind {
        ColumnKind::Numeric => field.parse::<f64>().ok().filter(|v| v.is_finite()),
        // "0"/"1" on clean data; arbitrary finite floats are accepted so that
        // fuzzy-imputed files round-trip
        ColumnKind::Binary => field.parse::<f64>().ok().filter(|v| v.is_finite()),
        ColumnKind::Categorical => spec
            .categories
            .as_ref()
            .and_then(|cats| cats.iter().position(|c| c == field))
            .map(|i| i as f64),
    }
}

fn fmt_cut(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Interval labels for a set of cut points, e.g. `bmi<20`, `20<=bmi<25`,
/// `bmi>=40`.
pub fn bin_labels(var: &str, cuts: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(cuts.len() + 1);
    labels.push(format!("{var}<{}", fmt_cut(cuts[0])));
    for w in cuts.windows(2) {
        let mut s = String::new();
        let _ = write!(s, "{}<={var}<{}", fmt_cut(w[0]), fmt_cut(w[1]));
        labels.push(s);
    }
    labels.push(format!("{var}>={}", fmt_cut(cuts[cuts.len() - 1])));
    labels
}

/// Per-pattern missingness accounting.
#[derive(Debug, Clone, Serialize)]
pub struct PatternEntry {
    pub missing_vars: Vec<String>,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternTable {
    pub entries: Vec<PatternEntry>,
    pub n_rows: usize,
    pub complete_rows: usize,
    pub incomplete_rows: usize,
}

impl PatternTable {
    pub fn count_of(&self, vars: &[&str]) -> Option<usize> {
        let mut key: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        key.sort();
        self.entries.iter().find_map(|e| {
            let mut have = e.missing_vars.clone();
            have.sort();
            (have == key).then_some(e.count)
        })
    }
}
