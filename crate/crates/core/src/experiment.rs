//! Experiment orchestration: configuration with method-grid expansion,
//! the full evaluation run, and artifact emission.

use crate::amputation::{AmputationPlan, Mechanism};
use crate::design::{FuzzyMode, OutcomeSpec};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_method, gold_standard, win_tie_loss, EvalOptions, GoldStandard, MethodConfig,
    MethodReport, Metric, WtlGrid,
};
use crate::imputers::fcs::{FcsConfig, FcsVariant};
use crate::imputers::forest::ForestConfig;
use crate::imputers::jm::JmConfig;
use crate::imputers::VisitOrder;
use crate::ipw::{IpwConfig, ProbModel};
use crate::pooling::{recommend_m, MRule};
use crate::rng::{self, stream};
use crate::synth::{generate_cohort, CohortSpec, GroundTruth};
use crate::tabular::{load_schema, Dataset};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// generate a synthetic cohort
    Synthetic(CohortSpec),
    /// load CSV + schema JSON from disk
    Csv { data: PathBuf, schema: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MCount {
    Fixed(usize),
    Rule(MRule),
}

/// A scalar-or-list field in the method grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

fn one<T>(v: T) -> OneOrMany<T> {
    OneOrMany::One(v)
}

fn bools() -> OneOrMany<bool> {
    one(true)
}
fn bools_false() -> OneOrMany<bool> {
    one(false)
}
fn orders() -> OneOrMany<VisitOrder> {
    one(VisitOrder::Monotone)
}

/// Cartesian method grids, the compact form of a comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum MethodGrid {
    Fcs {
        variant: OneOrMany<FcsVariant>,
        #[serde(default = "bools")]
        include_outcomes: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_numeric_bins: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_categorical: OneOrMany<bool>,
        #[serde(default = "orders")]
        visit_order: OneOrMany<VisitOrder>,
        #[serde(default = "default_donor_grid")]
        pmm_donors: OneOrMany<usize>,
    },
    Forest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default = "default_forest_donors")]
        pmm_donors: OneOrMany<usize>,
        #[serde(default = "bools")]
        include_outcomes: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_numeric_bins: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_categorical: OneOrMany<bool>,
        #[serde(default = "orders")]
        visit_order: OneOrMany<VisitOrder>,
    },
    Jm {
        #[serde(default = "bools")]
        include_outcomes: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_numeric_bins: OneOrMany<bool>,
    },
    Ipw {
        prob_model: OneOrMany<ProbModel>,
        #[serde(default = "bools")]
        include_outcomes: OneOrMany<bool>,
        #[serde(default = "bools_false")]
        one_hot_numeric_bins: OneOrMany<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_cap_quantile: Option<f64>,
    },
    Oracle,
}

fn default_donor_grid() -> OneOrMany<usize> {
    one(3)
}
fn default_forest_donors() -> OneOrMany<usize> {
    one(0)
}
fn default_trees() -> usize {
    50
}

fn flag(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

fn order_tag(v: VisitOrder) -> &'static str {
    match v {
        VisitOrder::Monotone => "mono",
        VisitOrder::Revmonotone => "rev",
    }
}

impl MethodGrid {
    /// Expand the grid into (id, config) pairs, in a stable order.
    pub fn expand(&self) -> Vec<(String, MethodConfig)> {
        let mut out = Vec::new();
        match self {
            MethodGrid::Fcs {
                variant,
                include_outcomes,
                one_hot_numeric_bins,
                one_hot_categorical,
                visit_order,
                pmm_donors,
            } => {
                for v in variant.values() {
                    for inc in include_outcomes.values() {
                        for ohn in one_hot_numeric_bins.values() {
                            for ohc in one_hot_categorical.values() {
                                for ord in visit_order.values() {
                                    for donors in pmm_donors.values() {
                                        let mut cfg = FcsConfig::new(v);
                                        cfg.include_outcomes = inc;
                                        cfg.one_hot_numeric_bins = ohn;
                                        cfg.one_hot_categorical = ohc;
                                        cfg.visit_order = ord;
                                        cfg.pmm_donors = donors;
                                        let vtag = match v {
                                            FcsVariant::Default => "default",
                                            FcsVariant::Norm => "norm",
                                            FcsVariant::Logreg => "logreg",
                                        };
                                        let id = format!(
                                            "fcs_{vtag}_out{}_ohn{}_ohc{}_{}{}",
                                            flag(inc),
                                            flag(ohn),
                                            flag(ohc),
                                            order_tag(ord),
                                            if v == FcsVariant::Default {
                                                format!("_d{donors}")
                                            } else {
                                                String::new()
                                            }
                                        );
                                        out.push((id, MethodConfig::Fcs(cfg)));
                                        if v != FcsVariant::Default {
                                            break; // donors only matter for pmm
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            MethodGrid::Forest {
                n_trees,
                pmm_donors,
                include_outcomes,
                one_hot_numeric_bins,
                one_hot_categorical,
                visit_order,
            } => {
                for donors in pmm_donors.values() {
                    for inc in include_outcomes.values() {
                        for ohn in one_hot_numeric_bins.values() {
                            for ohc in one_hot_categorical.values() {
                                for ord in visit_order.values() {
                                    let cfg = ForestConfig {
                                        n_trees: *n_trees,
                                        pmm_donors: donors,
                                        include_outcomes: inc,
                                        one_hot_numeric_bins: ohn,
                                        one_hot_categorical: ohc,
                                        visit_order: ord,
                                        ..ForestConfig::default()
                                    };
                                    let id = format!(
                                        "forest_pmm{donors}_out{}_ohn{}_ohc{}_{}",
                                        flag(inc),
                                        flag(ohn),
                                        flag(ohc),
                                        order_tag(ord)
                                    );
                                    out.push((id, MethodConfig::Forest(cfg)));
                                }
                            }
                        }
                    }
                }
            }
            MethodGrid::Jm {
                include_outcomes,
                one_hot_numeric_bins,
            } => {
                for inc in include_outcomes.values() {
                    for ohn in one_hot_numeric_bins.values() {
                        let cfg = JmConfig {
                            include_outcomes: inc,
                            one_hot_numeric_bins: ohn,
                            ..JmConfig::default()
                        };
                        let id = format!("jm_out{}_ohn{}", flag(inc), flag(ohn));
                        out.push((id, MethodConfig::Jm(cfg)));
                    }
                }
            }
            MethodGrid::Ipw {
                prob_model,
                include_outcomes,
                one_hot_numeric_bins,
                weight_cap_quantile,
            } => {
                for pm in prob_model.values() {
                    for inc in include_outcomes.values() {
                        for ohn in one_hot_numeric_bins.values() {
                            let mut cfg = IpwConfig::new(pm);
                            cfg.include_outcomes = inc;
                            cfg.one_hot_numeric_bins = ohn;
                            cfg.weight_cap_quantile = *weight_cap_quantile;
                            let ptag = match pm {
                                ProbModel::Logistic => "logistic",
                                ProbModel::Forest => "forest",
                            };
                            let id =
                                format!("ipw_{ptag}_out{}_ohn{}", flag(inc), flag(ohn));
                            out.push((id, MethodConfig::Ipw(cfg)));
                        }
                    }
                }
            }
            MethodGrid::Oracle => out.push(("oracle".into(), MethodConfig::Oracle)),
        }
        out
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_coverage() -> f64 {
    0.95
}
fn default_binarize() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Outcomes of interest; derived from the schema roles when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<OutcomeSpec>>,
    pub plan: AmputationPlan,
    /// Overrides plan.a when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<usize>,
    pub m: MCount,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_coverage")]
    pub nominal_coverage: f64,
    pub seed: u64,
    #[serde(default = "default_binarize")]
    pub binarize: bool,
    #[serde(default)]
    pub fuzzy_mode: FuzzyMode,
    /// 0 = use every core.
    #[serde(default)]
    pub threads: usize,
    pub methods: Vec<MethodGrid>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0,1)".into()));
        }
        if (self.nominal_coverage - 0.95).abs() > 1e-12 {
            return Err(Error::Config(
                "nominal coverage is fixed at 0.95 in this version".into(),
            ));
        }
        Ok(())
    }

    /// Expected fraction of incomplete rows under the plan.
    pub fn expected_incomplete_fraction(&self) -> f64 {
        match self.plan.mechanism {
            Mechanism::Mar => self.plan.overall_prop,
            Mechanism::Mcar => {
                1.0 - self
                    .plan
                    .per_variable_rates
                    .values()
                    .map(|r| 1.0 - r)
                    .product::<f64>()
            }
        }
    }

    pub fn resolve_m(&self) -> Result<usize> {
        match self.m {
            MCount::Fixed(m) => {
                if m < 1 {
                    Err(Error::Config("m must be at least 1".into()))
                } else {
                    Ok(m)
                }
            }
            MCount::Rule(rule) => recommend_m(self.expected_incomplete_fraction(), rule),
        }
    }

    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        // worker count never changes results, so it must not change the
        // fingerprint
        let mut canonical = self.clone();
        canonical.threads = 0;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&canonical).unwrap_or_default());
        let digest = hasher.finalize();
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub fingerprint: String,
    pub m: usize,
    pub a: usize,
    pub method_ids: Vec<String>,
    pub failed_methods: Vec<String>,
    pub artifacts: Vec<String>,
}

struct RunLog {
    file: std::fs::File,
    verbose: bool,
    start: std::time::Instant,
}

impl RunLog {
    fn new(path: &Path, verbose: bool) -> Result<RunLog> {
        Ok(RunLog {
            file: std::fs::File::create(path)?,
            verbose,
            start: std::time::Instant::now(),
        })
    }

    /// Events are deterministic; wall-clock timings only appear in verbose
    /// mode so default artifacts stay byte-reproducible.
    fn event(&mut self, stage: &str, detail: serde_json::Value) -> Result<()> {
        let mut obj = serde_json::json!({ "stage": stage, "detail": detail });
        if self.verbose {
            obj["elapsed_ms"] = serde_json::json!(self.start.elapsed().as_millis() as u64);
        }
        writeln!(self.file, "{obj}")?;
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Method settings for the report table; blank where not applicable.
fn settings_row(method: &MethodConfig) -> [String; 6] {
    let b = |v: bool| if v { "true" } else { "false" }.to_string();
    match method {
        MethodConfig::Fcs(c) => [
            match c.variant {
                FcsVariant::Default => "fcs-default",
                FcsVariant::Norm => "fcs-norm",
                FcsVariant::Logreg => "fcs-logreg",
            }
            .into(),
            b(c.include_outcomes),
            b(c.one_hot_numeric_bins),
            b(c.one_hot_categorical),
            order_tag(c.visit_order).into(),
            if c.variant == FcsVariant::Default {
                c.pmm_donors.to_string()
            } else {
                String::new()
            },
        ],
        MethodConfig::Forest(c) => [
            "forest".into(),
            b(c.include_outcomes),
            b(c.one_hot_numeric_bins),
            b(c.one_hot_categorical),
            order_tag(c.visit_order).into(),
            c.pmm_donors.to_string(),
        ],
        MethodConfig::Jm(c) => [
            "jm".into(),
            b(c.include_outcomes),
            b(c.one_hot_numeric_bins),
            String::new(),
            String::new(),
            String::new(),
        ],
        MethodConfig::Ipw(c) => [
            match c.prob_model {
                ProbModel::Logistic => "ipw-logistic",
                ProbModel::Forest => "ipw-forest",
            }
            .into(),
            b(c.include_outcomes),
            b(c.one_hot_numeric_bins),
            String::new(),
            String::new(),
            String::new(),
        ],
        MethodConfig::Oracle => [
            "oracle".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ],
    }
}

/// Write the per-method summary table in the comparison-figure layout.
pub fn write_method_summary(
    path: &Path,
    rows: &[(String, MethodConfig, MethodReport)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "model",
        "use_outcomes",
        "one_hot_numeric",
        "one_hot_categorical",
        "visit_order",
        "pmm_donors",
        "mean_abs_rb",
        "mean_mse",
        "mean_er",
        "mean_cr",
        "mean_ratio_se",
        "amputations_succeeded",
        "failed",
    ])?;
    for (id, method, report) in rows {
        let s = settings_row(method);
        w.write_record([
            id.as_str(),
            s[0].as_str(),
            s[1].as_str(),
            s[2].as_str(),
            s[3].as_str(),
            s[4].as_str(),
            s[5].as_str(),
            &fmt_num(report.cross_outcome_mean_abs_rb),
            &fmt_num(report.cross_outcome_mean_mse),
            &fmt_num(report.cross_outcome_mean_er),
            &fmt_num(report.cross_outcome_mean_cr),
            &fmt_num(report.cross_outcome_mean_ratio_se),
            &report.a_succeeded.to_string(),
            if report.failed { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_gold_csv(path: &Path, gold: &GoldStandard) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "predictor", "q", "var", "se", "ci_low", "ci_high"])?;
    for (outcome, ev) in &gold.per_outcome {
        for i in 0..ev.q.len() {
            w.write_record([
                outcome.as_str(),
                ev.names[i].as_str(),
                &fmt_num(ev.q[i]),
                &fmt_num(ev.var[i]),
                &fmt_num(ev.se[i]),
                &fmt_num(ev.ci[i].0),
                &fmt_num(ev.ci[i].1),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_method_csv(path: &Path, report: &MethodReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "predictor", "rb", "er", "mse", "cr", "ratio_se"])?;
    for om in &report.per_outcome {
        for i in 0..om.rb.len() {
            w.write_record([
                om.outcome.as_str(),
                om.predictor_names[i].as_str(),
                &fmt_num(om.rb[i]),
                &om.er[i].map(fmt_num).unwrap_or_default(),
                &fmt_num(om.mse[i]),
                &fmt_num(om.cr[i]),
                &fmt_num(om.ratio_se[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Odds/hazard-ratio table (exp scale) per outcome and method: the forest
/// plot data layout.
fn write_forest_csv(path: &Path, report: &MethodReport, outcome: &str) -> Result<()> {
    let om = report
        .per_outcome
        .iter()
        .find(|o| o.outcome == outcome)
        .ok_or_else(|| Error::Contract(format!("no metrics for outcome '{outcome}'")))?;
    let a = om.raw.len().max(1) as f64;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["predictor", "ratio", "ci_low", "ci_high"])?;
    for i in 0..om.predictor_names.len() {
        let qbar = om.raw.iter().map(|r| r.q[i]).sum::<f64>() / a;
        let lo = om.raw.iter().map(|r| r.ci[i].0).sum::<f64>() / a;
        let hi = om.raw.iter().map(|r| r.ci[i].1).sum::<f64>() / a;
        w.write_record([
            om.predictor_names[i].as_str(),
            &fmt_num(qbar.exp()),
            &fmt_num(lo.exp()),
            &fmt_num(hi.exp()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wtl_csv(path: &Path, grid: &WtlGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string()];
    header.extend(grid.method_ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in grid.method_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(grid.grid[i].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run the full experiment and write every artifact into `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    verbose: bool,
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut log = RunLog::new(&out_dir.join("run_log.jsonl"), verbose)?;
    let fingerprint = cfg.fingerprint();
    log.event("start", serde_json::json!({ "fingerprint": fingerprint }))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    // dataset
    let (source_ds, truth): (Dataset, Option<GroundTruth>) = match &cfg.dataset {
        DatasetSource::Synthetic(spec) => {
            let (ds, truth) = generate_cohort(spec)?;
            log.event(
                "synth",
                serde_json::json!({ "rows": ds.n_rows(), "cols": ds.n_cols() }),
            )?;
            (ds, Some(truth))
        }
        DatasetSource::Csv { data, schema } => {
            let schema = load_schema(schema)?;
            let ds = Dataset::load_csv(data, &schema)?;
            log.event(
                "load",
                serde_json::json!({ "rows": ds.n_rows(), "cols": ds.n_cols() }),
            )?;
            (ds, None)
        }
    };

    let complete = source_ds.listwise_delete()?;
    log.event(
        "listwise_delete",
        serde_json::json!({
            "complete_rows": complete.n_rows(),
            "source_rows": source_ds.n_rows()
        }),
    )?;

    let outcomes = match &cfg.outcomes {
        Some(o) => o.clone(),
        None => crate::design::outcomes_from_schema(&complete),
    };
    if outcomes.is_empty() {
        return Err(Error::Config("no outcomes declared or derivable".into()));
    }

    let m = cfg.resolve_m()?;
    let mut plan = cfg.plan.clone();
    if let Some(a) = cfg.a {
        plan.a = a;
    }
    plan.seed = rng::derive_path(cfg.seed, &[stream::AMPUTATION, 0x5eed]);
    log.event("plan", serde_json::json!({ "a": plan.a, "m": m }))?;

    let eval_opts = EvalOptions {
        binarize: cfg.binarize,
        fuzzy: cfg.fuzzy_mode,
        alpha: cfg.alpha,
    };

    let mut artifacts: Vec<String> = vec!["run_log.jsonl".into(), "manifest.json".into()];

    let gold =
        pool.install(|| gold_standard(&complete, &outcomes, cfg.binarize, cfg.fuzzy_mode))?;
    write_gold_csv(&out_dir.join("gold_standard.csv"), &gold)?;
    artifacts.push("gold_standard.csv".into());
    log.event(
        "gold_standard",
        serde_json::json!({ "outcomes": outcomes.len() }),
    )?;

    // expand methods in config order
    let mut expanded: Vec<(String, MethodConfig)> = Vec::new();
    for grid in &cfg.methods {
        expanded.extend(grid.expand());
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for (id, _) in &expanded {
            if !seen.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate method id '{id}'")));
            }
        }
    }

    let mut rows: Vec<(String, MethodConfig, MethodReport)> = Vec::new();
    let mut failed_methods = Vec::new();
    for (index, (id, method)) in expanded.iter().enumerate() {
        let method_seed = rng::derive_path(cfg.seed, &[stream::METHOD, index as u64]);
        let report = pool.install(|| {
            evaluate_method(
                &complete,
                &gold,
                id,
                method,
                &plan,
                m,
                &outcomes,
                &eval_opts,
                method_seed,
            )
        })?;
        log.event(
            "method",
            serde_json::json!({
                "id": id,
                "succeeded": report.a_succeeded,
                "planned": report.a_planned,
                "failed": report.failed,
                "failures": report.failures,
            }),
        )?;
        if report.failed {
            failed_methods.push(id.clone());
        } else {
            let json_path = out_dir.join(format!("report_{id}.json"));
            std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
            artifacts.push(format!("report_{id}.json"));
            let csv_path = out_dir.join(format!("report_{id}.csv"));
            write_method_csv(&csv_path, &report)?;
            artifacts.push(format!("report_{id}.csv"));
            for outcome in &outcomes {
                let name = outcome.name();
                let f = format!("forest_{name}_{id}.csv");
                write_forest_csv(&out_dir.join(&f), &report, name)?;
                artifacts.push(f);
            }
        }
        rows.push((id.clone(), method.clone(), report));
    }

    write_method_summary(&out_dir.join("method_reports.csv"), &rows)?;
    artifacts.push("method_reports.csv".into());

    let ok_reports: Vec<&MethodReport> = rows
        .iter()
        .filter(|(_, _, r)| !r.failed)
        .map(|(_, _, r)| r)
        .collect();
    if ok_reports.len() >= 2 {
        let outcome_names: Vec<String> =
            outcomes.iter().map(|o| o.name().to_string()).collect();
        for metric in Metric::all() {
            let grid = win_tie_loss(&ok_reports, metric, &outcome_names, cfg.alpha)?;
            for i in 0..grid.grid.len() {
                debug_assert_eq!(grid.grid[i][i], 0);
                for j in 0..grid.grid.len() {
                    debug_assert_eq!(grid.grid[i][j], -grid.grid[j][i]);
                }
            }
            let f = format!("wtl_{}.csv", metric.file_tag());
            write_wtl_csv(&out_dir.join(&f), &grid)?;
            artifacts.push(f);
        }
    }

    if let Some(truth) = &truth {
        std::fs::write(
            out_dir.join("ground_truth.json"),
            serde_json::to_string_pretty(truth)?,
        )?;
        artifacts.push("ground_truth.json".into());
    }

    artifacts.sort();
    let manifest = serde_json::json!({
        "tool": "mieval",
        "version": env!("CARGO_PKG_VERSION"),
        "fingerprint": fingerprint,
        "seed": cfg.seed,
        "a": plan.a,
        "m": m,
        "alpha": cfg.alpha,
        "nominal_coverage": cfg.nominal_coverage,
        "binarize": cfg.binarize,
        "methods": expanded.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>(),
        "failed_methods": failed_methods,
        "artifacts": artifacts,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    log.event("done", serde_json::json!({ "failed_methods": failed_methods }))?;

    Ok(ExperimentSummary {
        out_dir: out_dir.to_path_buf(),
        fingerprint,
        m,
        a: plan.a,
        method_ids: expanded.into_iter().map(|(id, _)| id).collect(),
        failed_methods,
        artifacts,
    })
}
