use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dpkm_core::collab::{CollabConfig, Method, PathId, SplitSpec};
use dpkm_core::mechanisms::{PrivacyBudget, ProbL1};
use dpkm_core::metrics::{MetricReport, BOOTSTRAP_RESAMPLES};
use dpkm_core::surrogate::{generate, SurrogateConfig};
use dpkm_core::ProbMass;
use dpkm_cli::config::{load_resolved, parse_split, DatasetName, ReferenceKind, DEFAULT_K_FRACTION};
use dpkm_cli::experiment::{
    collab_once, non_private, release_once, run_experiment, ExperimentOutput, Prepared, Release, ReleaseSettings,
};
use dpkm_cli::ingest::{read_dataset, save_dataset};
use dpkm_cli::output::{render_table, write_file, write_json, write_plotdata, write_table_csv, TableRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "DPKM_OUT_DIR";
const DEFAULT_OUT: &str = "dpkm-out";

#[derive(Parser)]
#[command(name = "dpkm", version, about = "Differentially private Kaplan-Meier estimation and collaboration")]
struct Cli {
    /// Output directory [default: $DPKM_OUT_DIR or ./dpkm-out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Non-private KM curve and summary statistics.
    Km {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// One release of one mechanism on the whole dataset.
    Dp {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Surrogate dataset from a stored probability mass JSON.
    Surrogate {
        /// JSON file holding a probability mass (e.g. `dp_prob.json` from `dp`).
        #[arg(long)]
        prob: PathBuf,
        /// Number of records to generate.
        #[arg(long)]
        n: usize,
    },
    /// One run of one collaboration path.
    Collab {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_path)]
        path: PathId,
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 10)]
        clients: usize,
        /// `even` or `uneven:<minority fraction>`.
        #[arg(long, default_value = "even", value_parser = parse_split)]
        split: SplitSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo sweep described by a JSON config (or a previous results.json).
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render a stored results.json.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Print CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV with duration and event columns.
    #[arg(long)]
    input: PathBuf,
    /// Bin size; defaults per dataset when the file name identifies one.
    #[arg(long)]
    b: Option<f64>,
    /// Study horizon; defaults to the largest time in the data.
    #[arg(long)]
    t_max: Option<f64>,
    /// Keep censored records instead of using only the uncensored part.
    #[arg(long)]
    all_records: bool,
}

#[derive(Args, Clone)]
struct MechArgs {
    /// dp-surv, dp-prob or dp-matrix (implied by --path for `collab`).
    #[arg(long, value_parser = kebab::<Method>)]
    method: Option<Method>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_K_FRACTION)]
    k_fraction: f64,
    /// two-over-n or sqrt-two-over-n.
    #[arg(long, default_value = "two-over-n", value_parser = kebab::<ProbL1>)]
    prob_l1: ProbL1,
    /// Logrank reference: raw or discretized.
    #[arg(long, default_value = "raw", value_parser = kebab::<ReferenceKind>)]
    reference: ReferenceKind,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_path(s: &str) -> Result<PathId, String> {
    s.parse().map_err(|e: dpkm_core::Error| e.to_string())
}

impl DataArgs {
    fn bin_size(&self, method: Method) -> Result<f64> {
        match (self.b, DatasetName::infer(&self.input)) {
            (Some(b), _) => Ok(b),
            (None, Some(name)) => Ok(name.default_bin_size(method)),
            (None, None) => bail!("no default bin size for {}; pass --b", self.input.display()),
        }
    }

    fn prepare(&self, method: Method) -> Result<Prepared> {
        let raw = read_dataset(&self.input, !self.all_records)?;
        Prepared::new(raw, self.bin_size(method)?, self.t_max)
    }
}

/// Settings echoed into every JSON mirror.
#[derive(Serialize, Deserialize)]
struct RunInfo {
    input: PathBuf,
    uncensored_only: bool,
    bin_size: f64,
    t_max: f64,
    records: usize,
}

impl RunInfo {
    fn new(data: &DataArgs, prep: &Prepared) -> Self {
        Self {
            input: data.input.clone(),
            uncensored_only: !data.all_records,
            bin_size: prep.grid.bin_size(),
            t_max: prep.grid.t_max(),
            records: prep.n(),
        }
    }
}

#[derive(Serialize)]
struct KmOutput<'a> {
    settings: RunInfo,
    alpha: f64,
    row: &'a TableRow,
    report: &'a MetricReport,
}

#[derive(Serialize)]
struct DpOutput<'a> {
    settings: RunInfo,
    release_settings: &'a ReleaseSettings,
    row: &'a TableRow,
    report: &'a MetricReport,
    release: &'a Release,
}

#[derive(Serialize)]
struct CollabOutput<'a> {
    settings: RunInfo,
    path: PathId,
    collab: &'a CollabConfig,
    reference: ReferenceKind,
    row: &'a TableRow,
    report: &'a MetricReport,
    fallbacks: usize,
}

fn write_table(out: &Path, stem: &str, rows: &[TableRow]) -> Result<()> {
    write_file(&out.join(format!("{stem}.csv")), |buf| write_table_csv(rows, buf))?;
    print!("{}", render_table(rows));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    let out_or_default = || out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    match cli.command {
        Command::Km { data, alpha } => {
            let out = out_or_default();
            let prep = data.prepare(Method::DpSurv)?;
            let (curve, band, report) = non_private(&prep, alpha)?;
            let row = TableRow::from_report("non-dp", None, &report);
            write_table(&out, "km_table", std::slice::from_ref(&row))?;
            write_json(
                &out.join("km_table.json"),
                &KmOutput {
                    settings: RunInfo::new(&data, &prep),
                    alpha,
                    row: &row,
                    report: &report,
                },
            )?;
            write_file(&out.join("km_plot.csv"), |buf| write_plotdata(&curve, Some(&band), buf))?;
        }
        Command::Dp { data, mech, seed } => {
            let out = out_or_default();
            let method = mech.method.context("--method is required")?;
            let prep = data.prepare(method)?;
            let settings = ReleaseSettings {
                method,
                epsilon: mech.epsilon,
                k_fraction: mech.k_fraction,
                prob_l1: mech.prob_l1,
                seed,
                reference: mech.reference,
                alpha: mech.alpha,
            };
            let r = release_once(&prep, &settings)?;
            let row = TableRow::from_report(String::from(method_name(method)), Some(mech.epsilon), &r.report);
            write_table(&out, "dp_table", std::slice::from_ref(&row))?;
            write_json(
                &out.join("dp_table.json"),
                &DpOutput {
                    settings: RunInfo::new(&data, &prep),
                    release_settings: &settings,
                    row: &row,
                    report: &r.report,
                    release: &r.release,
                },
            )?;
            write_json(&out.join("dp_prob.json"), &r.mass)?;
            save_dataset(&r.surrogate, &out.join("dp_surrogate.csv"))?;
            write_file(&out.join("dp_plot.csv"), |buf| write_plotdata(&r.curve, Some(&r.band), buf))?;
        }
        Command::Surrogate { prob, n } => {
            let out = out_or_default();
            let text = std::fs::read_to_string(&prob).with_context(|| format!("reading {}", prob.display()))?;
            let mass: ProbMass = serde_json::from_str(&text).with_context(|| format!("parsing {}", prob.display()))?;
            let ds = generate(&mass, SurrogateConfig::new(n)?);
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_dataset(&ds, &out.join("surrogate.csv"))?;
            println!("{} records ({} censored)", ds.len(), ds.censored_count());
        }
        Command::Collab {
            data,
            path,
            mech,
            clients,
            split,
            seed,
        } => {
            let out = out_or_default();
            if let Some(m) = mech.method {
                if m != path.method() {
                    bail!("path {path} uses {}, not {}", method_name(path.method()), method_name(m));
                }
            }
            let prep = data.prepare(path.method())?;
            let cfg = CollabConfig {
                clients,
                epsilon: PrivacyBudget::new(mech.epsilon)?,
                k_fraction: mech.k_fraction,
                prob_l1: mech.prob_l1,
                split,
                runs: 1,
                master_seed: seed,
                resplit_per_run: false,
                alpha: mech.alpha,
                bootstrap_resamples: BOOTSTRAP_RESAMPLES,
            };
            cfg.validate()?;
            let r = collab_once(&prep, path, &cfg, mech.reference)?;
            let label = format!("{}/{path}", method_name(path.method()));
            let row = TableRow::from_report(label, Some(mech.epsilon), &r.report);
            write_table(&out, "collab_table", std::slice::from_ref(&row))?;
            write_json(
                &out.join("collab_table.json"),
                &CollabOutput {
                    settings: RunInfo::new(&data, &prep),
                    path,
                    collab: &cfg,
                    reference: mech.reference,
                    row: &row,
                    report: &r.report,
                    fallbacks: r.fallbacks,
                },
            )?;
            save_dataset(&r.surrogate, &out.join("collab_surrogate.csv"))?;
            write_file(&out.join("collab_plot.csv"), |buf| write_plotdata(&r.released, None, buf))?;
        }
        Command::Experiment { config } => {
            let (resolved, cfg_out) = load_resolved(&config)?;
            let out = out.or(cfg_out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let result = run_experiment(&resolved)?;
            write_experiment(&out, &result)?;
        }
        Command::Report { results, csv } => {
            let text = std::fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let stored: ExperimentOutput =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", results.display()))?;
            if csv {
                write_table_csv(&stored.rows, std::io::stdout().lock())?;
            } else {
                print!("{}", render_table(&stored.rows));
            }
        }
    }
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::DpSurv => "dp-surv",
        Method::DpProb => "dp-prob",
        Method::DpMatrix => "dp-matrix",
    }
}

/// Per-run metrics, one line per (epsilon, run).
fn write_runs_csv(result: &ExperimentOutput, buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "epsilon",
        "run",
        "seed",
        "p",
        "median",
        "median_lower",
        "median_upper",
        "s25",
        "s50",
        "s75",
        "fallbacks",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in &result.results {
        for r in &e.monte_carlo.runs {
            w.write_record([
                e.epsilon.to_string(),
                r.run.to_string(),
                r.seed.to_string(),
                opt(r.p_value),
                opt(r.median),
                opt(r.median_lower),
                opt(r.median_upper),
                r.s25.to_string(),
                r.s50.to_string(),
                r.s75.to_string(),
                r.fallbacks.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_experiment(out: &Path, result: &ExperimentOutput) -> Result<()> {
    write_table(out, "results", &result.rows)?;
    write_json(&out.join("results.json"), result)?;
    write_file(&out.join("runs.csv"), |buf| write_runs_csv(result, buf))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
