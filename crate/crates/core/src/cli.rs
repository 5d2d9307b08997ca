//! The `ambivis` command line: synthesize, solve, evaluate, stats, prefpairs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eval::{self, dataset_stats, evaluate_dataset, EvalConfig, EvalError};
use crate::pipeline::{run_synthesis, PipelineConfig, PipelineError};
use crate::reasoning::{build_preference_pairs, parse_step_tagged_output, StepPolicy};
use crate::rules::DesignRules;
use crate::solver::resolve_detailed;
use crate::table::TableStore;
use crate::vis::{vegalite, VisTree};

#[derive(Debug, Parser)]
#[command(name = "ambivis", version, about = "Ambiguous NL2VIS benchmark synthesis and scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a benchmark from seed charts.
    Synthesize(SynthesizeArgs),
    /// Print every valid chart of a tree, one Vega-Lite document per line.
    Solve(SolveArgs),
    /// Score predictions against a benchmark.
    Evaluate(EvaluateArgs),
    /// Summarize a benchmark.
    Stats(StatsArgs),
    /// Build step-wise preference pairs from model outputs.
    Prefpairs(PrefpairsArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set injection.target_level=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub tree: PathBuf,
    #[arg(long, default_value = "data/tables")]
    pub tables: PathBuf,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5])]
    pub k: Vec<usize>,
    /// Divide precision by K even when fewer charts were predicted.
    #[arg(long)]
    pub strict_k: bool,
    /// Allow cutoffs other than 1, 3 and 5.
    #[arg(long)]
    pub any_k: bool,
    /// Directory for `report.json` and `report.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub bench: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PrefpairsArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// JSON lines of `{"id": ..., "output": "<step_1>..."}`.
    #[arg(long)]
    pub outputs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rows that could not be used; defaults to `<out>.errors.jsonl`.
    #[arg(long)]
    pub errors: Option<PathBuf>,
    #[arg(long)]
    pub subset_tolerant: bool,
    /// Table directory, to include the schema in each pair's input.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.exit_code() {
            1 => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidK(_) | EvalError::BadRatios(_) => CliError::Config(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn input(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(input(path))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(input(path))
}

pub fn synthesize(args: &SynthesizeArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&args.config, &args.overrides)?;
    let run = run_synthesis(cfg)?;
    let s = &run.summary;
    let _ = writeln!(
        out,
        "{} samples from {} seeds -> {}",
        s.samples,
        s.seeds,
        run.benchmark.display()
    );
    for (status, n) in &s.counts {
        let _ = writeln!(out, "  {status:<20}{n:>6}");
    }
    Ok(())
}

pub fn solve(args: &SolveArgs, out: &mut impl Write) -> Result<(), CliError> {
    let rules = match &args.rules {
        Some(p) => DesignRules::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => DesignRules::default(),
    };
    let tree = VisTree::from_json(&read(&args.tree)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.tree.display())))?;
    let tables = TableStore::load_dir(&args.tables).map_err(|e| CliError::Input(e.to_string()))?;
    let table = tables
        .get(&tree.table_ref)
        .ok_or_else(|| CliError::Input(format!("unknown table `{}`", tree.table_ref)))?;
    let res = resolve_detailed(&tree, &rules, table).map_err(|e| CliError::Input(e.to_string()))?;
    for r in res {
        let _ = writeln!(out, "{}", vegalite::to_vegalite_value(&r.spec, &table.name));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg = EvalConfig {
        ks: args.k.clone(),
        strict_k: args.strict_k,
        any_k: args.any_k,
    };
    cfg.validate()?;
    let bench = eval::read_benchmark(&args.bench)?;
    let preds = eval::read_predictions(&args.preds)?;
    let report = evaluate_dataset(&preds, &bench, &cfg)?;
    for id in &report.missing {
        eprintln!("warning: no prediction for `{id}`, scored as zero");
    }
    let text = report.to_text();
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(input(dir))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&dir.join("report.json"), &(json + "\n"))?;
        write_file(&dir.join("report.txt"), &text)?;
    }
    let _ = write!(out, "{text}");
    Ok(())
}

pub fn stats(args: &StatsArgs, out: &mut impl Write) -> Result<(), CliError> {
    let bench = eval::read_benchmark(&args.bench)?;
    let st = dataset_stats(&bench);
    if args.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&st).expect("stats serialize"));
    } else {
        let _ = write!(out, "{}", st.to_text());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct OutputRow {
    id: String,
    output: String,
}

#[derive(Debug, Serialize)]
struct ErrorRow {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    error: String,
}

pub fn prefpairs(args: &PrefpairsArgs, out: &mut impl Write) -> Result<(), CliError> {
    let bench = eval::read_benchmark(&args.bench)?;
    let by_id: BTreeMap<&str, &eval::BenchmarkSample> =
        bench.iter().map(|s| (s.id.as_str(), s)).collect();
    let tables = match &args.tables {
        Some(d) => Some(TableStore::load_dir(d).map_err(|e| CliError::Input(e.to_string()))?),
        None => None,
    };
    let mut samples = Vec::new();
    let mut paths = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in read(&args.outputs)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |id: Option<String>, error: String| ErrorRow {
            line: i + 1,
            id,
            error,
        };
        let row: OutputRow = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(err(None, e.to_string()));
                continue;
            }
        };
        let Some(sample) = by_id.get(row.id.as_str()) else {
            errors.push(err(Some(row.id), "id not in benchmark".into()));
            continue;
        };
        match parse_step_tagged_output(&row.output) {
            Ok(p) => {
                samples.push((*sample).clone());
                paths.push(p);
            }
            Err(e) => errors.push(err(Some(row.id), e.to_string())),
        }
    }
    let policy = if args.subset_tolerant {
        StepPolicy::SubsetTolerant
    } else {
        StepPolicy::Exact
    };
    let pairs = build_preference_pairs(&samples, &paths, policy, tables.as_ref())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = String::new();
    for p in &pairs {
        text.push_str(&serde_json::to_string(p).expect("pair serializes"));
        text.push('\n');
    }
    write_file(&args.out, &text)?;
    let err_path = args.errors.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".errors.jsonl");
        PathBuf::from(p)
    });
    let mut etext = String::new();
    for e in &errors {
        etext.push_str(&serde_json::to_string(e).expect("row serializes"));
        etext.push('\n');
    }
    write_file(&err_path, &etext)?;
    let _ = writeln!(
        out,
        "{} pairs from {} outputs; {} rows with errors",
        pairs.len(),
        paths.len(),
        errors.len()
    );
    Ok(())
}

pub fn dispatch(cli: &Cli, out: &mut impl Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synthesize(a) => synthesize(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Stats(a) => stats(a, out),
        Command::Prefpairs(a) => prefpairs(a, out),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match dispatch(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
