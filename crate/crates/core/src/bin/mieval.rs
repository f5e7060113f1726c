//! Batch front-end for the missing-data evaluation pipeline. Each stage is
//! also runnable standalone on prior-stage artifacts.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mieval::amputation::{ampute_batch, AmputationPlan};
use mieval::design::{FuzzyMode, OutcomeSpec};
use mieval::diagnostics::little_mcar_test;
use mieval::evaluation::MethodConfig;
use mieval::experiment::{run_experiment, ExperimentConfig};
use mieval::imputers::fcs::run_fcs;
use mieval::imputers::forest::run_forest_imputer;
use mieval::imputers::jm::run_jm_imputer;
use mieval::imputers::ImputedSet;
use mieval::synth::{default_cohort, generate_cohort, CohortSpec};
use mieval::tabular::{load_schema, save_schema, Dataset};
use std::path::{Path, PathBuf};

const EXIT_CONFIG: i32 = 2;
const EXIT_METHOD: i32 = 3;

#[derive(Parser)]
#[command(
    name = "mieval",
    version,
    about = "Numerically evaluate missing-data handling strategies: \
             amputation, multiple imputation, IPW, Rubin pooling, and metrics"
)]
struct Cli {
    /// Master seed, overriding any seed in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output format for stdout-style results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Verbose logging (adds timings to run logs).
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row; empty fields are missing values.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON (a list of column specs).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (CSV + schema + planted ground truth).
    Synth {
        /// Cohort spec JSON; omit to use the built-in default cohort.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Row count for the default cohort.
        #[arg(long, default_value_t = 4000)]
        n: usize,
        #[arg(long, default_value = "synth_out")]
        out_dir: PathBuf,
    },
    /// Produce A amputated copies of a complete dataset.
    Ampute {
        #[command(flatten)]
        data: DataArgs,
        /// Amputation plan JSON.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "ampute_out")]
        out_dir: PathBuf,
    },
    /// Missingness diagnostics: pattern table and Little's MCAR test.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Impute a dataset m times with one method config.
    Impute {
        #[command(flatten)]
        data: DataArgs,
        /// Method JSON ({"family": "fcs", ...} etc.).
        #[arg(long)]
        method: PathBuf,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value = "impute_out")]
        out_dir: PathBuf,
    },
    /// Fit the outcome estimators on a complete dataset.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        /// Restrict to one outcome by name (default: all in the schema).
        #[arg(long)]
        outcome: Option<String>,
        /// Binarize predictors before fitting.
        #[arg(long, default_value_t = true)]
        binarize: bool,
    },
    /// Run a full evaluation experiment from a config file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "eval_out")]
        out_dir: PathBuf,
    },
    /// Rebuild summary tables from per-method report JSON artifacts.
    Report {
        /// Directory holding report_*.json files.
        #[arg(long)]
        in_dir: PathBuf,
        /// Significance level for the win-tie-loss grids.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_config = e
                .downcast_ref::<mieval::Error>()
                .map(|err| err.is_config())
                .unwrap_or(false);
            if is_config {
                EXIT_CONFIG
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}

fn load_data(args: &DataArgs) -> anyhow::Result<Dataset> {
    let schema = load_schema(&args.schema).context("loading schema")?;
    let ds = Dataset::load_csv(&args.data, &schema).context("loading CSV")?;
    Ok(ds)
}

fn write_mask_sidecar(ds: &Dataset, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ds.specs().iter().map(|s| s.name.as_str()))?;
    for r in 0..ds.n_rows() {
        let row: Vec<&str> = (0..ds.n_cols())
            .map(|c| if ds.is_missing(r, c) { "1" } else { "0" })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_imputed_sets(sets: &[ImputedSet], out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    for set in sets {
        let path = out_dir.join(format!("imputed_{}.csv", set.index));
        set.dataset.write_csv(&path)?;
    }
    // the imputed representation may differ from the input schema
    if let Some(first) = sets.first() {
        save_schema(&out_dir.join("imputed_schema.json"), first.dataset.specs())?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Synth { spec, n, out_dir } => {
            let mut cohort: CohortSpec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).context("reading cohort spec")?;
                    CohortSpec::from_json(&text)?
                }
                None => default_cohort(n, cli.seed.unwrap_or(20260810)),
            };
            if let Some(seed) = cli.seed {
                cohort.seed = seed;
            }
            let (ds, truth) = generate_cohort(&cohort)?;
            std::fs::create_dir_all(&out_dir)?;
            ds.write_csv(&out_dir.join("cohort.csv"))?;
            save_schema(&out_dir.join("schema.json"), ds.specs())?;
            std::fs::write(
                out_dir.join("ground_truth.json"),
                serde_json::to_string_pretty(&truth)?,
            )?;
            std::fs::write(out_dir.join("cohort_spec.json"), cohort.to_json())?;
            println!(
                "wrote cohort.csv ({} rows, {} cols), schema.json, ground_truth.json to {}",
                ds.n_rows(),
                ds.n_cols(),
                out_dir.display()
            );
            Ok(0)
        }
        Command::Ampute {
            data,
            plan,
            out_dir,
        } => {
            let ds = load_data(&data)?;
            let text = std::fs::read_to_string(&plan).context("reading plan")?;
            let mut plan = AmputationPlan::from_json(&text)?;
            if let Some(seed) = cli.seed {
                plan.seed = seed;
            }
            let sets = ampute_batch(&ds, &plan)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut summary = Vec::new();
            for set in &sets {
                let csv_path = out_dir.join(format!("amputed_{}.csv", set.index));
                set.dataset.write_csv(&csv_path)?;
                write_mask_sidecar(
                    &set.dataset,
                    &out_dir.join(format!("amputed_{}.mask.csv", set.index)),
                )?;
                summary.push(serde_json::json!({
                    "index": set.index,
                    "realized_incomplete_fraction": set.realized_prop,
                }));
            }
            std::fs::write(
                out_dir.join("amputation_summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!("wrote {} amputed sets to {}", sets.len(), out_dir.display());
            Ok(0)
        }
        Command::Diagnose { data } => {
            let ds = load_data(&data)?;
            let patterns = ds.pattern_summary();
            let little = little_mcar_test(&ds)?;
            match cli.format {
                Format::Json => {
                    let out = serde_json::json!({
                        "patterns": patterns,
                        "little_mcar": little,
                    });
                    println!("{}", serde_json::to_string_pretty(&out)?);
                }
                Format::Csv => {
                    println!("pattern,count,percent");
                    for e in &patterns.entries {
                        println!(
                            "{},{},{:.4}",
                            if e.missing_vars.is_empty() {
                                "(complete)".to_string()
                            } else {
                                e.missing_vars.join("+")
                            },
                            e.count,
                            e.percent
                        );
                    }
                    println!(
                        "# little_mcar: d2={}, df={}, p={}",
                        little.d2, little.df, little.p_value
                    );
                }
            }
            Ok(0)
        }
        Command::Impute {
            data,
            method,
            m,
            out_dir,
        } => {
            let ds = load_data(&data)?;
            let text = std::fs::read_to_string(&method).context("reading method config")?;
            let mut method: MethodConfig = serde_json::from_str(&text)?;
            method.set_m(m);
            if let Some(seed) = cli.seed {
                method.set_seed(seed);
            }
            let sets = match &method {
                MethodConfig::Fcs(cfg) => run_fcs(&ds, cfg)?,
                MethodConfig::Forest(cfg) => run_forest_imputer(&ds, cfg)?,
                MethodConfig::Jm(cfg) => run_jm_imputer(&ds, cfg)?,
                MethodConfig::Ipw(_) => {
                    bail!("IPW is not an imputer; use `evaluate` or `estimate`")
                }
                MethodConfig::Oracle => bail!("the oracle imputer is evaluation-only"),
            };
            write_imputed_sets(&sets, &out_dir)?;
            println!("wrote {} imputed sets to {}", sets.len(), out_dir.display());
            Ok(0)
        }
        Command::Estimate {
            data,
            outcome,
            binarize,
        } => {
            let ds = load_data(&data)?;
            let complete = ds.listwise_delete()?;
            let prepared = mieval::design::prepare_for_estimation(
                &complete,
                binarize,
                FuzzyMode::Threshold,
            )?;
            let all = mieval::design::outcomes_from_schema(&prepared);
            let selected: Vec<OutcomeSpec> = match &outcome {
                Some(name) => all.into_iter().filter(|o| o.name() == name).collect(),
                None => all,
            };
            if selected.is_empty() {
                bail!("no matching outcome");
            }
            println!("outcome,predictor,q,var,se,ci_low,ci_high");
            for spec in &selected {
                let fit = mieval::design::fit_outcome(&prepared, spec, None)?;
                for i in 0..fit.q.len() {
                    println!(
                        "{},{},{},{},{},{},{}",
                        spec.name(),
                        fit.names[i],
                        fit.q[i],
                        fit.var[i],
                        fit.se[i],
                        fit.ci[i].0,
                        fit.ci[i].1
                    );
                }
            }
            Ok(0)
        }
        Command::Evaluate { config, out_dir } => {
            let text = std::fs::read_to_string(&config).context("reading experiment config")?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if cli.threads != 0 {
                cfg.threads = cli.threads;
            }
            let summary = run_experiment(&cfg, &out_dir, cli.verbose)?;
            println!(
                "experiment {} finished: {} methods, m={}, a={}",
                summary.fingerprint,
                summary.method_ids.len(),
                summary.m,
                summary.a
            );
            if !summary.failed_methods.is_empty() {
                eprintln!("failed methods: {:?}", summary.failed_methods);
                return Ok(EXIT_METHOD);
            }
            Ok(0)
        }
        Command::Report { in_dir, alpha } => {
            let mut reports = Vec::new();
            let mut entries: Vec<_> = std::fs::read_dir(&in_dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .map(|n| n.starts_with("report_") && n.ends_with(".json"))
                        .unwrap_or(false)
                })
                .collect();
            entries.sort();
            for path in &entries {
                let text = std::fs::read_to_string(path)?;
                let report: mieval::evaluation::MethodReport = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                reports.push(report);
            }
            if reports.len() < 2 {
                bail!(
                    "need at least two report_*.json files in {}",
                    in_dir.display()
                );
            }
            let outcome_names: Vec<String> = reports[0]
                .per_outcome
                .iter()
                .map(|o| o.outcome.clone())
                .collect();
            let refs: Vec<&mieval::evaluation::MethodReport> = reports.iter().collect();
            for metric in mieval::evaluation::Metric::all() {
                let grid =
                    mieval::evaluation::win_tie_loss(&refs, metric, &outcome_names, alpha)?;
                let f = in_dir.join(format!("wtl_{}.csv", metric.file_tag()));
                mieval::experiment::write_wtl_csv(&f, &grid)?;
            }
            println!(
                "summary rebuilt for {} methods in {}",
                reports.len(),
                in_dir.display()
            );
            Ok(0)
        }
    }
}
