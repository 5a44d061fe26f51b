//! Command-line front end.
//!
//! Exit codes: `0` success, `2` invalid input or configuration, `3`
//! statistical degeneracy (an empty arm in some stratum, too few units for a
//! U-statistic). On failure a JSON object
//! `{"error": {"kind", "message", "exit_code"}}` is written to stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, Analysis, AnalysisOptions};
use crate::data::{index_labels, load_csv, ColumnSchema};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::gram::DEFAULT_RCOND;
use crate::randomization::{assign, RandomizationScheme, SchemeKind, DEFAULT_BLOCK_SIZE, DEFAULT_COIN_BIAS};
use crate::sim::{Scenario, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "caradj", version, about = "Covariate-adjusted treatment effects for stratified randomized trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the treatment effect of a trial stored as CSV.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo scenario file and write long-format result tables.
    Simulate(SimulateArgs),
    /// Append a treatment assignment column to a CSV of stratum labels.
    Randomize(RandomizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// Trial CSV with a header row.
    pub input: PathBuf,
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Treatment column, coded 0/1.
    #[arg(long, default_value = "arm")]
    pub arm: String,
    /// Stratum label column.
    #[arg(long, default_value = "stratum")]
    pub stratum: String,
    /// Comma-separated covariate columns [default: every other column].
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Comma-separated estimators: unadjusted, ols, feasible.
    #[arg(long, value_delimiter = ',', default_value = "unadjusted,ols,feasible")]
    pub estimators: Vec<EstimatorKind>,
    /// Two-sided level of the Wald intervals.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Relative eigenvalue cutoff below which a Gram matrix is pseudo-inverted.
    #[arg(long, default_value_t = DEFAULT_RCOND)]
    pub rcond: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    pub scenario: PathBuf,
    /// Override the number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory for `<name>.csv` and `<name>.json`.
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Simple,
    PermutedBlock,
    BiasedCoin,
}

#[derive(Debug, clap::Args)]
pub struct RandomizeArgs {
    /// CSV with a header row and a stratum column.
    pub input: PathBuf,
    /// Stratum label column.
    #[arg(long, default_value = "stratum")]
    pub column: String,
    #[arg(long, value_enum, default_value = "permuted-block")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block_size: usize,
    /// Probability of favouring the lagging arm (biased coin only).
    #[arg(long, default_value_t = DEFAULT_COIN_BIAS)]
    pub lambda: f64,
    /// Target treated proportion.
    #[arg(long, default_value_t = 0.5)]
    pub pi: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Name of the appended column.
    #[arg(long, default_value = "arm")]
    pub assignment_column: String,
    /// Write here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// JSON document written by `analyze --format json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDocument {
    pub schema_version: u32,
    pub alpha: f64,
    pub rcond: f64,
    #[serde(flatten)]
    pub analysis: Analysis,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(err) => {
            let code = err.exit_code();
            eprintln!("{}", error_json(&err));
            code
        }
    }
}

pub fn error_json(err: &Error) -> String {
    serde_json::json!({
        "error": {
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }
    })
    .to_string()
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Randomize(a) => cmd_randomize(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(output: Option<&Path>, body: &[u8]) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, body).map_err(io_err(path)),
        None => std::io::stdout().write_all(body).map_err(io_err(Path::new("<stdout>"))),
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let options = AnalysisOptions {
        kinds: args.estimators.clone(),
        alpha: args.alpha,
        rcond: args.rcond,
    };
    options.validate()?;
    if options.kinds.contains(&EstimatorKind::Oracle) {
        return Err(Error::InvalidParameter(
            "the oracle estimator needs the population Gram matrices and is only available in simulations".into(),
        ));
    }
    let schema = ColumnSchema {
        outcome: args.outcome.clone(),
        arm: args.arm.clone(),
        stratum: args.stratum.clone(),
        covariates: args.covariates.clone(),
    };
    let dataset = load_csv(&args.input, &schema)?;
    let analysis = analyze(&dataset, &options, None)?;
    let doc = AnalysisDocument {
        schema_version: SCHEMA_VERSION,
        alpha: options.alpha,
        rcond: options.rcond,
        analysis,
    };
    let body = match args.format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidData(e.to_string()))?;
            s.push('\n');
            s
        }
        OutputFormat::Csv => analysis_csv(&doc)?,
        OutputFormat::Text => analysis_text(&doc),
    };
    emit(args.output.as_deref(), body.as_bytes())
}

/// Long format: `schema_version,estimator,stratum,metric,value`; overall rows
/// leave `stratum` empty.
pub fn analysis_csv(doc: &AnalysisDocument) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["schema_version", "estimator", "stratum", "metric", "value"])?;
    let version = doc.schema_version.to_string();
    for r in &doc.analysis.reports {
        let name = r.kind.name();
        let mut overall = vec![("tau_hat", format!("{:?}", r.tau_hat))];
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        overall.push(("sigma2_hat", opt(r.sigma2_hat)));
        overall.push(("se", opt(r.se)));
        overall.push(("ci_lo", opt(r.ci.map(|c| c.0))));
        overall.push(("ci_hi", opt(r.ci.map(|c| c.1))));
        overall.push(("pseudo_inverse", u8::from(r.diagnostics.pseudo_inverse).to_string()));
        overall.push(("clamped", u8::from(r.diagnostics.clamped).to_string()));
        if let Some(b) = r.diagnostics.diagonal_bias {
            overall.push(("diagonal_bias", format!("{b:?}")));
        }
        for (metric, value) in overall {
            w.write_record([version.as_str(), name, "", metric, value.as_str()])?;
        }
        for s in &r.strata {
            for (metric, value) in [
                ("n", s.n.to_string()),
                ("weight", format!("{:?}", s.weight)),
                ("treated", format!("{:?}", s.treated)),
                ("control", format!("{:?}", s.control)),
                ("effect", format!("{:?}", s.effect)),
            ] {
                w.write_record([version.as_str(), name, s.label.as_str(), metric, value.as_str()])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn analysis_text(doc: &AnalysisDocument) -> String {
    let a = &doc.analysis;
    let level = 100.0 * (1.0 - doc.alpha);
    let mut out = String::new();
    let _ = writeln!(out, "n = {}, p = {}, {} strata", a.n, a.p, a.reports.first().map_or(0, |r| r.strata.len()));
    let _ = writeln!(
        out,
        "{:<11} {:>12} {:>12} {:>12} {:>27}  flags",
        "estimator",
        "tau_hat",
        "sigma2_hat",
        "se",
        format!("{level}% CI")
    );
    for r in &a.reports {
        let (lo, hi) = r.ci.unwrap_or((f64::NAN, f64::NAN));
        let mut flags = Vec::new();
        if r.diagnostics.pseudo_inverse {
            flags.push("pseudo-inverse");
        }
        if r.diagnostics.clamped {
            flags.push("clamped");
        }
        let _ = writeln!(
            out,
            "{:<11} {:>12.6} {:>12.6} {:>12.6} [{:>12.6}, {:>12.6}]  {}",
            r.kind.name(),
            r.tau_hat,
            r.sigma2_hat.unwrap_or(f64::NAN),
            r.se.unwrap_or(f64::NAN),
            lo,
            hi,
            flags.join(",")
        );
    }
    if let Some(b) = a.report(EstimatorKind::Ols).and_then(|r| r.diagnostics.diagonal_bias) {
        let _ = writeln!(out, "ols diagonal term: {b:.6}");
    }
    for r in &a.reports {
        let _ = writeln!(out, "\n{} by stratum", r.kind.name());
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>12} {:>12} {:>12}",
            "stratum", "n", "weight", "treated", "control", "effect"
        );
        for s in &r.strata {
            let _ = writeln!(
                out,
                "{:<12} {:>6} {:>8.4} {:>12.6} {:>12.6} {:>12.6}",
                s.label, s.n, s.weight, s.treated, s.control, s.effect
            );
        }
    }
    out
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(r) = args.replicates {
        scenario.run.replicates = r;
    }
    if let Some(s) = args.seed {
        scenario.run.seed = s;
    }
    if let Some(w) = args.workers {
        scenario.run.workers = w;
    }
    scenario.validate()?;
    let results = scenario.run()?;
    std::fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let csv_path = args.out_dir.join(format!("{}.csv", scenario.name));
    let json_path = args.out_dir.join(format!("{}.json", scenario.name));
    std::fs::write(&csv_path, results.to_csv()?).map_err(io_err(&csv_path))?;
    let mut json = results.to_json()?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(io_err(&json_path))?;
    Ok(())
}

pub fn cmd_randomize(args: &RandomizeArgs) -> Result<()> {
    let kind = match args.scheme {
        SchemeArg::Simple => SchemeKind::Simple,
        SchemeArg::PermutedBlock => SchemeKind::PermutedBlock {
            block_size: args.block_size,
        },
        SchemeArg::BiasedCoin => SchemeKind::BiasedCoin { bias: args.lambda },
    };
    let scheme = RandomizationScheme::new(kind, vec![args.pi])?;

    let file = std::fs::File::open(&args.input).map_err(io_err(&args.input))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == args.column)
        .ok_or_else(|| Error::MissingColumn(args.column.clone()))?;
    if headers.iter().any(|h| h.trim() == args.assignment_column) {
        return Err(Error::InvalidParameter(format!(
            "column `{}` already exists",
            args.assignment_column
        )));
    }
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }

    let mut labels = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let label = rec.get(col).unwrap_or("").trim();
        if label.is_empty() {
            return Err(Error::InvalidData(format!("missing stratum label at data row {}", r + 1)));
        }
        labels.push(label);
    }
    let strata: Vec<usize> = index_labels(&labels).1.into_iter().map(|k| k + 1).collect();
    let arms = assign(&scheme, &strata, args.seed)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = headers.clone();
    header.push_field(&args.assignment_column);
    w.write_record(&header)?;
    for (rec, a) in records.iter().zip(&arms) {
        let mut row = rec.clone();
        row.push_field(&a.to_string());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidData(e.to_string()))?;
    emit(args.output.as_deref(), &bytes)
}
