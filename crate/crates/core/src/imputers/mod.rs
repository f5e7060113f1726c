//! Multiple imputers: chained equations (FCS), random-forest FCS, and the
//! bootstrap-EM joint Gaussian model, plus the sweep machinery they share.

pub mod fcs;
pub mod forest;
pub mod jm;

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::tabular::{ColumnKind, Dataset, Role};
use ndarray::Array2;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One completed dataset out of m.
#[derive(Debug, Clone)]
pub struct ImputedSet {
    /// 1-based imputation index j.
    pub index: usize,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitOrder {
    /// ascending number of missing values
    Monotone,
    /// descending number of missing values
    Revmonotone,
}

/// How the survival outcome enters imputation models when outcomes are
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalInModel {
    /// event indicator and follow-up time as numeric predictors
    EventAndTime,
    EventOnly,
    Excluded,
}

impl Default for SurvivalInModel {
    fn default() -> Self {
        SurvivalInModel::EventAndTime
    }
}

/// Fill missing numeric cells with the observed mean and binary/categorical
/// cells with the observed mode (ties broken by the first-declared
/// category).
pub fn initial_fill(ds: &Dataset) -> Result<Dataset> {
    let n = ds.n_rows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(ds.n_cols());
    let masks: Vec<Vec<bool>> = (0..ds.n_cols()).map(|_| vec![false; n]).collect();
    for c in 0..ds.n_cols() {
        let spec = ds.spec(c);
        let observed: Vec<f64> = (0..n).filter_map(|r| ds.value(r, c)).collect();
        if observed.is_empty() {
            return Err(Error::BadColumn {
                column: spec.name.clone(),
                reason: "fully missing variable".into(),
            });
        }
        let fill = match spec.kind {
            ColumnKind::Numeric => observed.iter().sum::<f64>() / observed.len() as f64,
            ColumnKind::Binary => {
                let ones = observed.iter().filter(|&&v| v == 1.0).count();
                let zeros = observed.len() - ones;
                if ones > zeros {
                    1.0
                } else {
                    0.0
                }
            }
            ColumnKind::Categorical => {
                let k = spec.categories.as_ref().unwrap().len();
                let mut counts = vec![0usize; k];
                for &v in &observed {
                    counts[v as usize] += 1;
                }
                counts
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i as f64)
                    .unwrap()
            }
        };
        let col: Vec<f64> = (0..n)
            .map(|r| ds.value(r, c).unwrap_or(fill))
            .collect();
        cols.push(col);
    }
    Dataset::new(ds.specs().to_vec(), cols, masks)
}

/// Apply the representation flags: bin + one-hot numeric predictors with
/// declared bins, and/or one-hot categorical predictors.
pub(crate) fn apply_one_hot_flags(
    ds: &Dataset,
    one_hot_numeric_bins: bool,
    one_hot_categorical: bool,
) -> Result<Dataset> {
    let mut out = ds.clone();
    if one_hot_numeric_bins {
        loop {
            let next = out.specs().iter().find_map(|s| {
                (s.role == Role::Predictor && s.kind == ColumnKind::Numeric && s.bins.is_some())
                    .then(|| s.name.clone())
            });
            match next {
                Some(name) => out = out.bin_numeric(&name)?.one_hot(&name)?,
                None => break,
            }
        }
    }
    if one_hot_categorical {
        loop {
            let next = out.specs().iter().find_map(|s| {
                (s.role == Role::Predictor && s.kind == ColumnKind::Categorical)
                    .then(|| s.name.clone())
            });
            match next {
                Some(name) => out = out.one_hot(&name)?,
                None => break,
            }
        }
    }
    Ok(out)
}

/// Columns that participate in a univariate imputation model.
pub(crate) fn model_columns(
    ds: &Dataset,
    include_outcomes: bool,
    survival: SurvivalInModel,
) -> Vec<usize> {
    (0..ds.n_cols())
        .filter(|&c| match ds.spec(c).role {
            Role::Predictor => true,
            Role::Outcome => include_outcomes,
            Role::SurvivalEvent => {
                include_outcomes && !matches!(survival, SurvivalInModel::Excluded)
            }
            Role::SurvivalTime => {
                include_outcomes && matches!(survival, SurvivalInModel::EventAndTime)
            }
            Role::Id => false,
        })
        .collect()
}

/// Sweep order over incomplete columns.
pub(crate) fn visit_sequence(ds: &Dataset, order: VisitOrder) -> Vec<usize> {
    let mut targets: Vec<(usize, usize)> = (0..ds.n_cols())
        .filter(|&c| ds.spec(c).role != Role::Id)
        .map(|c| (c, ds.missing_count_of(c)))
        .filter(|&(_, miss)| miss > 0)
        .collect();
    match order {
        VisitOrder::Monotone => targets.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0))),
        VisitOrder::Revmonotone => targets.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0))),
    }
    targets.into_iter().map(|(c, _)| c).collect()
}

/// A univariate imputation problem handed to an engine: observed target
/// values on the model scale and encoded predictor matrices for observed and
/// missing rows (no intercept column).
pub(crate) struct TargetTask {
    pub kind: ColumnKind,
    pub n_categories: usize,
    pub y_obs: Vec<f64>,
    pub x_obs: Array2<f64>,
    pub x_mis: Array2<f64>,
}

/// What an engine produced for the missing rows.
pub(crate) enum Drawn {
    /// values on the model scale (numeric or fuzzy-binary)
    Values(Vec<f64>),
    /// category indices
    Categories(Vec<usize>),
    /// indices into the observed rows whose raw value is copied verbatim
    Donors(Vec<usize>),
}

pub(crate) type Engine<'a> =
    dyn Fn(&TargetTask, &mut ChaCha12Rng) -> Result<Drawn> + Sync + 'a;

pub(crate) struct SweepOptions {
    pub include_outcomes: bool,
    pub survival: SurvivalInModel,
    pub visit_order: VisitOrder,
    pub max_iter: usize,
    pub early_stop_tol: f64,
    pub m: usize,
    pub seed: u64,
    pub min_obs_warn_ratio: usize,
}

/// Encode model columns of `working` (a complete dataset) into a numeric
/// matrix for the given rows, excluding the target column.
fn encode_predictors(
    working: &Dataset,
    cols: &[usize],
    target: usize,
    rows: &[usize],
) -> Array2<f64> {
    let mut widths = Vec::new();
    let mut total = 0usize;
    for &c in cols {
        if c == target {
            widths.push(0);
            continue;
        }
        let w = match working.spec(c).kind {
            ColumnKind::Numeric | ColumnKind::Binary => 1,
            ColumnKind::Categorical => working.spec(c).categories.as_ref().unwrap().len() - 1,
        };
        widths.push(w);
        total += w;
    }
    let mut x = Array2::zeros((rows.len(), total));
    for (ri, &r) in rows.iter().enumerate() {
        let mut j = 0usize;
        for (ci, &c) in cols.iter().enumerate() {
            if c == target {
                continue;
            }
            let spec = working.spec(c);
            let v = working.value(r, c).expect("working dataset is complete");
            match spec.kind {
                ColumnKind::Numeric => {
                    x[[ri, j]] = if spec.log_transform { v.ln() } else { v };
                    j += 1;
                }
                ColumnKind::Binary => {
                    x[[ri, j]] = v;
                    j += 1;
                }
                ColumnKind::Categorical => {
                    let k = spec.categories.as_ref().unwrap().len();
                    let reference = crate::frame::reference_index(working, c);
                    let mut slot = 0usize;
                    for cat in 0..k {
                        if cat == reference {
                            continue;
                        }
                        x[[ri, j + slot]] = if v as usize == cat { 1.0 } else { 0.0 };
                        slot += 1;
                    }
                    j += k - 1;
                }
            }
            debug_assert_eq!(widths[ci] + j - widths[ci], j);
        }
    }
    x
}

fn target_summary(working: &Dataset, target: usize, mis_rows: &[usize]) -> Vec<f64> {
    let spec = working.spec(target);
    match spec.kind {
        ColumnKind::Numeric | ColumnKind::Binary => {
            let mean = mis_rows
                .iter()
                .map(|&r| working.value(r, target).unwrap())
                .sum::<f64>()
                / mis_rows.len().max(1) as f64;
            vec![mean]
        }
        ColumnKind::Categorical => {
            let k = spec.categories.as_ref().unwrap().len();
            let mut props = vec![0.0; k];
            for &r in mis_rows {
                props[working.value(r, target).unwrap() as usize] += 1.0;
            }
            let n = mis_rows.len().max(1) as f64;
            props.iter_mut().for_each(|p| *p /= n);
            props
        }
    }
}

fn summaries_converged(old: &[Vec<f64>], new: &[Vec<f64>], tol: f64) -> bool {
    old.iter().zip(new.iter()).all(|(a, b)| {
        if a.len() == 1 {
            // numeric/binary: relative mean change
            (a[0] - b[0]).abs() / (a[0].abs() + 1e-12) < tol
        } else {
            // categorical: absolute proportion change
            a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < tol)
        }
    })
}

/// Run one full chained imputation (index j) and return the completed
/// dataset. The engine is invoked once per incomplete variable per sweep.
fn chained_single(
    transformed: &Dataset,
    opts: &SweepOptions,
    engine: &Engine,
    j: usize,
) -> Result<ImputedSet> {
    let mut rng = rng::rng_for(opts.seed, &[stream::IMPUTATION, j as u64]);
    let targets = visit_sequence(transformed, opts.visit_order);
    let cols = model_columns(transformed, opts.include_outcomes, opts.survival);
    let mut working = initial_fill(transformed)?;

    let obs_rows: Vec<Vec<usize>> = targets
        .iter()
        .map(|&t| {
            (0..transformed.n_rows())
                .filter(|&r| !transformed.is_missing(r, t))
                .collect()
        })
        .collect();
    let mis_rows: Vec<Vec<usize>> = targets
        .iter()
        .map(|&t| {
            (0..transformed.n_rows())
                .filter(|&r| transformed.is_missing(r, t))
                .collect()
        })
        .collect();

    let mut last_summaries: Vec<Vec<f64>> = targets
        .iter()
        .enumerate()
        .map(|(ti, &t)| target_summary(&working, t, &mis_rows[ti]))
        .collect();

    for _sweep in 0..opts.max_iter {
        for (ti, &t) in targets.iter().enumerate() {
            let spec = transformed.spec(t).clone();
            let x_obs = encode_predictors(&working, &cols, t, &obs_rows[ti]);
            let x_mis = encode_predictors(&working, &cols, t, &mis_rows[ti]);
            let y_obs: Vec<f64> = obs_rows[ti]
                .iter()
                .map(|&r| {
                    let v = transformed.value(r, t).unwrap();
                    if spec.kind == ColumnKind::Numeric && spec.log_transform {
                        v.ln()
                    } else {
                        v
                    }
                })
                .collect();
            let task = TargetTask {
                kind: spec.kind,
                n_categories: spec
                    .categories
                    .as_ref()
                    .map(|c| c.len())
                    .unwrap_or(0),
                y_obs,
                x_obs,
                x_mis,
            };
            let drawn = engine(&task, &mut rng)?;
            write_back(&mut working, transformed, t, &mis_rows[ti], &obs_rows[ti], drawn)?;
        }
        let summaries: Vec<Vec<f64>> = targets
            .iter()
            .enumerate()
            .map(|(ti, &t)| target_summary(&working, t, &mis_rows[ti]))
            .collect();
        let done = summaries_converged(&last_summaries, &summaries, opts.early_stop_tol);
        last_summaries = summaries;
        if done {
            break;
        }
    }

    Ok(ImputedSet {
        index: j,
        dataset: working,
    })
}

fn write_back(
    working: &mut Dataset,
    original: &Dataset,
    target: usize,
    mis_rows: &[usize],
    obs_rows: &[usize],
    drawn: Drawn,
) -> Result<()> {
    let spec = original.spec(target).clone();
    let mut values: Vec<f64> = (0..working.n_rows())
        .map(|r| working.value(r, target).unwrap())
        .collect();
    match drawn {
        Drawn::Values(vs) => {
            if vs.len() != mis_rows.len() {
                return Err(Error::Numerical("engine returned wrong row count".into()));
            }
            for (&r, v) in mis_rows.iter().zip(vs.iter()) {
                if !v.is_finite() {
                    return Err(Error::Numerical("non-finite imputed value".into()));
                }
                values[r] = if spec.kind == ColumnKind::Numeric && spec.log_transform {
                    v.exp()
                } else {
                    *v
                };
            }
        }
        Drawn::Categories(ks) => {
            if ks.len() != mis_rows.len() {
                return Err(Error::Numerical("engine returned wrong row count".into()));
            }
            for (&r, &k) in mis_rows.iter().zip(ks.iter()) {
                values[r] = k as f64;
            }
        }
        Drawn::Donors(idx) => {
            if idx.len() != mis_rows.len() {
                return Err(Error::Numerical("engine returned wrong row count".into()));
            }
            for (&r, &d) in mis_rows.iter().zip(idx.iter()) {
                // copy the donor's raw value byte-for-byte
                values[r] = original.value(obs_rows[d], target).unwrap();
            }
        }
    }
    let mask = vec![false; working.n_rows()];
    *working = working.with_column_replaced(target, spec, values, mask)?;
    Ok(())
}

/// Shared entry point: validate, transform, and run m independent chained
/// imputations in parallel. `make_engine` builds one engine per imputation.
pub(crate) fn run_chained<F>(
    ds: &Dataset,
    one_hot_numeric_bins: bool,
    one_hot_categorical: bool,
    opts: &SweepOptions,
    make_engine: F,
) -> Result<Vec<ImputedSet>>
where
    F: Fn() -> Box<dyn Fn(&TargetTask, &mut ChaCha12Rng) -> Result<Drawn> + Sync + Send>
        + Sync,
{
    if opts.m < 1 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let transformed = apply_one_hot_flags(ds, one_hot_numeric_bins, one_hot_categorical)?;
    warn_small_samples(&transformed, opts);
    (1..=opts.m)
        .into_par_iter()
        .map(|j| {
            let engine = make_engine();
            chained_single(&transformed, opts, engine.as_ref(), j)
        })
        .collect()
}

fn warn_small_samples(ds: &Dataset, opts: &SweepOptions) {
    let p = model_columns(ds, opts.include_outcomes, opts.survival).len();
    for c in 0..ds.n_cols() {
        let miss = ds.missing_count_of(c);
        if miss == 0 {
            continue;
        }
        let obs = ds.n_rows() - miss;
        if obs < opts.min_obs_warn_ratio * p {
            log::warn!(
                "variable '{}' has only {} observed rows for ~{} predictors",
                ds.spec(c).name,
                obs,
                p
            );
        }
    }
}

/// For each entry of `pred_mis`, pick uniformly among the k nearest entries
/// of `pred_obs` (two-pointer expansion over the sorted predictions) and
/// return the chosen observed-row indices.
pub(crate) fn match_donors(
    pred_obs: &[f64],
    pred_mis: &[f64],
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>> {
    use rand::RngExt as _;
    let n_obs = pred_obs.len();
    if k == 0 {
        return Err(Error::Contract("donor matching needs k >= 1".into()));
    }
    if k > n_obs {
        return Err(Error::Contract(format!(
            "k={k} donors exceed {n_obs} observed rows"
        )));
    }
    let mut order: Vec<usize> = (0..n_obs).collect();
    order.sort_by(|&a, &b| {
        pred_obs[a]
            .partial_cmp(&pred_obs[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let sorted: Vec<f64> = order.iter().map(|&i| pred_obs[i]).collect();
    let mut donors = Vec::with_capacity(pred_mis.len());
    for &target in pred_mis {
        let mut hi = sorted.partition_point(|&v| v < target);
        let mut lo = hi;
        let mut candidates = Vec::with_capacity(k);
        while candidates.len() < k {
            let dl = (lo > 0).then(|| (target - sorted[lo - 1]).abs());
            let dh = (hi < n_obs).then(|| (sorted[hi] - target).abs());
            match (dl, dh) {
                (Some(a), Some(b)) if a <= b => {
                    lo -= 1;
                    candidates.push(order[lo]);
                }
                (_, Some(_)) => {
                    candidates.push(order[hi]);
                    hi += 1;
                }
                (Some(_), None) => {
                    lo -= 1;
                    candidates.push(order[lo]);
                }
                (None, None) => break,
            }
        }
        donors.push(candidates[rng.random_range(0..candidates.len())]);
    }
    Ok(donors)
}

/// Audit helper: observed cells of `original` must be byte-identical in
/// every imputed set, and no masked cells may remain.
pub fn assert_observed_immutable(original: &Dataset, imputed: &[ImputedSet]) -> Result<()> {
    for set in imputed {
        if set.dataset.missing_cell_count() != 0 {
            return Err(Error::Contract("imputed set has masked cells".into()));
        }
        // transformed representations may differ; compare matching columns
        for c in 0..original.n_cols() {
            let name = &original.spec(c).name;
            let Ok(ci) = set.dataset.col_index(name) else {
                continue;
            };
            for r in 0..original.n_rows() {
                if let Some(v) = original.value(r, c) {
                    let w = set.dataset.value(r, ci).ok_or_else(|| {
                        Error::Contract("observed cell became missing".into())
                    })?;
                    if v.to_bits() != w.to_bits() {
                        return Err(Error::Contract(format!(
                            "observed cell changed: {name} row {r}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}
