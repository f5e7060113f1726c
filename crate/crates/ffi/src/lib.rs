//! C ABI for the missing-data evaluation library.
//!
//! Conventions: objects are opaque handles freed by their `_free` function;
//! every fallible call returns a [`MievalStatus`] and stores a thread-local
//! message retrievable via [`mieval_last_error`]; strings returned through
//! out-parameters are owned by the caller and released with
//! [`mieval_string_free`].

use libc::{c_char, size_t};
use mieval::amputation::AmputationPlan;
use mieval::diagnostics::little_mcar_test;
use mieval::evaluation::MethodConfig;
use mieval::experiment::{run_experiment, ExperimentConfig};
use mieval::imputers::fcs::run_fcs;
use mieval::imputers::forest::run_forest_imputer;
use mieval::imputers::jm::run_jm_imputer;
use mieval::synth::{generate_cohort, CohortSpec};
use mieval::tabular::{load_schema, Dataset};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MievalStatus {
    Ok = 0,
    /// invalid configuration, schema, or JSON input
    ConfigError = 1,
    /// contract violation in the data (missing classes, incomplete input, ...)
    DataError = 2,
    /// numerical failure (singular system, non-convergence)
    NumericError = 3,
    /// file system failure
    IoError = 4,
    /// a required pointer argument was null
    NullArgument = 5,
    /// a string argument was not valid UTF-8
    Utf8Error = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &mieval::Error) -> MievalStatus {
    use mieval::Error as E;
    match err {
        E::Config(_) | E::UnknownColumn(_) | E::Json(_) => MievalStatus::ConfigError,
        E::InvalidValue { .. }
        | E::BadColumn { .. }
        | E::NoCompleteCases
        | E::NotComplete(_)
        | E::Contract(_)
        | E::IpwInfeasible(_) => MievalStatus::DataError,
        E::Separation(_) | E::NoConvergence(_) | E::Numerical(_) => MievalStatus::NumericError,
        E::Io(_) | E::Csv(_) => MievalStatus::IoError,
    }
}

fn fail(err: mieval::Error) -> MievalStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, MievalStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(MievalStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        MievalStatus::Utf8Error
    })
}

fn give_string(out: *mut *mut c_char, value: String) -> MievalStatus {
    if out.is_null() {
        set_error("null output pointer");
        return MievalStatus::NullArgument;
    }
    match CString::new(value.replace('\0', " ")) {
        Ok(cs) => {
            unsafe { *out = cs.into_raw() };
            MievalStatus::Ok
        }
        Err(_) => {
            set_error("string contained interior NUL");
            MievalStatus::NumericError
        }
    }
}

/// Opaque dataset handle.
pub struct MievalDataset {
    inner: Dataset,
}

/// Opaque list of imputed datasets.
pub struct MievalImputedList {
    sets: Vec<Dataset>,
}

/// Library version string (static storage, do not free).
#[no_mangle]
pub extern "C" fn mieval_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message of the most recent error on this thread (thread-local storage,
/// do not free; valid until the next failing call).
#[no_mangle]
pub extern "C" fn mieval_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Free a string returned through an out-parameter.
#[no_mangle]
pub unsafe extern "C" fn mieval_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a dataset from a CSV file and a schema JSON file.
#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_load_csv(
    csv_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut MievalDataset,
) -> MievalStatus {
    if out.is_null() {
        set_error("null output pointer");
        return MievalStatus::NullArgument;
    }
    let csv_path = match cstr(csv_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let schema_path = match cstr(schema_path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let schema = match load_schema(Path::new(schema_path)) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match Dataset::load_csv(Path::new(csv_path), &schema) {
        Ok(ds) => {
            *out = Box::into_raw(Box::new(MievalDataset { inner: ds }));
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Generate a synthetic cohort from a cohort-spec JSON document. On success
/// `out` holds the complete dataset; when `truth_json_out` is non-null it
/// receives the planted ground truth as JSON.
#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_from_cohort_spec(
    spec_json: *const c_char,
    out: *mut *mut MievalDataset,
    truth_json_out: *mut *mut c_char,
) -> MievalStatus {
    if out.is_null() {
        set_error("null output pointer");
        return MievalStatus::NullArgument;
    }
    let text = match cstr(spec_json) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let spec = match CohortSpec::from_json(text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match generate_cohort(&spec) {
        Ok((ds, truth)) => {
            if !truth_json_out.is_null() {
                let json = match serde_json::to_string_pretty(&truth) {
                    Ok(j) => j,
                    Err(e) => return fail(mieval::Error::Json(e)),
                };
                let code = give_string(truth_json_out, json);
                if code != MievalStatus::Ok {
                    return code;
                }
            }
            *out = Box::into_raw(Box::new(MievalDataset { inner: ds }));
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_free(ds: *mut MievalDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_rows(ds: *const MievalDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.n_rows()
}

#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_cols(ds: *const MievalDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.n_cols()
}

#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_missing_cells(ds: *const MievalDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.missing_cell_count()
}

/// Write the dataset as CSV (missing cells become empty fields).
#[no_mangle]
pub unsafe extern "C" fn mieval_dataset_write_csv(
    ds: *const MievalDataset,
    path: *const c_char,
) -> MievalStatus {
    if ds.is_null() {
        set_error("null dataset handle");
        return MievalStatus::NullArgument;
    }
    let path = match cstr(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match (*ds).inner.write_csv(Path::new(path)) {
        Ok(()) => MievalStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Missingness-pattern summary as a JSON document.
#[no_mangle]
pub unsafe extern "C" fn mieval_pattern_summary_json(
    ds: *const MievalDataset,
    json_out: *mut *mut c_char,
) -> MievalStatus {
    if ds.is_null() {
        set_error("null dataset handle");
        return MievalStatus::NullArgument;
    }
    let table = (*ds).inner.pattern_summary();
    match serde_json::to_string_pretty(&table) {
        Ok(json) => give_string(json_out, json),
        Err(e) => fail(mieval::Error::Json(e)),
    }
}

/// Little's MCAR test; writes the statistic, degrees of freedom, and
/// p-value through the out-pointers.
#[no_mangle]
pub unsafe extern "C" fn mieval_little_mcar_test(
    ds: *const MievalDataset,
    d2: *mut f64,
    df: *mut f64,
    p_value: *mut f64,
) -> MievalStatus {
    if ds.is_null() || d2.is_null() || df.is_null() || p_value.is_null() {
        set_error("null argument");
        return MievalStatus::NullArgument;
    }
    match little_mcar_test(&(*ds).inner) {
        Ok(res) => {
            *d2 = res.d2;
            *df = res.df;
            *p_value = res.p_value;
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Produce the `index`-th (1-based) amputation of a complete dataset under
/// a plan given as JSON. `realized_prop` receives the realized incomplete
/// fraction when non-null.
#[no_mangle]
pub unsafe extern "C" fn mieval_ampute(
    ds: *const MievalDataset,
    plan_json: *const c_char,
    index: u32,
    out: *mut *mut MievalDataset,
    realized_prop: *mut f64,
) -> MievalStatus {
    if ds.is_null() || out.is_null() {
        set_error("null argument");
        return MievalStatus::NullArgument;
    }
    let text = match cstr(plan_json) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut plan = match AmputationPlan::from_json(text) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    if index == 0 || (index as usize) > plan.a.max(1) {
        plan.a = index.max(1) as usize;
    }
    match mieval::amputation::ampute_batch(&(*ds).inner, &plan) {
        Ok(mut sets) => {
            let idx = (index.max(1) as usize - 1).min(sets.len() - 1);
            let set = sets.swap_remove(idx);
            if !realized_prop.is_null() {
                *realized_prop = set.realized_prop;
            }
            *out = Box::into_raw(Box::new(MievalDataset { inner: set.dataset }));
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Impute a dataset m times with a method config given as JSON
/// ({"family": "fcs" | "forest" | "jm", ...}).
#[no_mangle]
pub unsafe extern "C" fn mieval_impute(
    ds: *const MievalDataset,
    method_json: *const c_char,
    m: u32,
    seed: u64,
    out: *mut *mut MievalImputedList,
) -> MievalStatus {
    if ds.is_null() || out.is_null() {
        set_error("null argument");
        return MievalStatus::NullArgument;
    }
    let text = match cstr(method_json) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut method: MethodConfig = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return fail(mieval::Error::Json(e)),
    };
    method.set_m(m.max(1) as usize);
    method.set_seed(seed);
    let result = match &method {
        MethodConfig::Fcs(cfg) => run_fcs(&(*ds).inner, cfg),
        MethodConfig::Forest(cfg) => run_forest_imputer(&(*ds).inner, cfg),
        MethodConfig::Jm(cfg) => run_jm_imputer(&(*ds).inner, cfg),
        MethodConfig::Ipw(_) | MethodConfig::Oracle => {
            set_error("method is not an imputer");
            return MievalStatus::ConfigError;
        }
    };
    match result {
        Ok(sets) => {
            *out = Box::into_raw(Box::new(MievalImputedList {
                sets: sets.into_iter().map(|s| s.dataset).collect(),
            }));
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}

#[no_mangle]
pub unsafe extern "C" fn mieval_imputed_list_len(list: *const MievalImputedList) -> size_t {
    if list.is_null() {
        return 0;
    }
    (*list).sets.len()
}

/// Copy the j-th (0-based) imputed dataset out of a list as a standalone
/// handle.
#[no_mangle]
pub unsafe extern "C" fn mieval_imputed_list_get(
    list: *const MievalImputedList,
    index: size_t,
    out: *mut *mut MievalDataset,
) -> MievalStatus {
    if list.is_null() || out.is_null() {
        set_error("null argument");
        return MievalStatus::NullArgument;
    }
    let sets = &(*list).sets;
    match sets.get(index) {
        Some(ds) => {
            *out = Box::into_raw(Box::new(MievalDataset { inner: ds.clone() }));
            MievalStatus::Ok
        }
        None => {
            set_error("imputed-list index out of range");
            MievalStatus::ConfigError
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn mieval_imputed_list_free(list: *mut MievalImputedList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Run a full evaluation experiment from an experiment-config JSON document,
/// writing artifacts into `out_dir`. When `summary_json_out` is non-null it
/// receives a JSON summary (method ids, m, a, failed methods, artifacts).
#[no_mangle]
pub unsafe extern "C" fn mieval_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    verbose: bool,
    summary_json_out: *mut *mut c_char,
) -> MievalStatus {
    let text = match cstr(config_json) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let dir = match cstr(out_dir) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let cfg = match ExperimentConfig::from_json(text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_experiment(&cfg, Path::new(dir), verbose) {
        Ok(summary) => {
            if !summary_json_out.is_null() {
                let json = match serde_json::to_string_pretty(&summary) {
                    Ok(j) => j,
                    Err(e) => return fail(mieval::Error::Json(e)),
                };
                return give_string(summary_json_out, json);
            }
            MievalStatus::Ok
        }
        Err(e) => fail(e),
    }
}
