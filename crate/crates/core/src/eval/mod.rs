//! Benchmark samples, multi-answer scoring, dataset statistics and splits.

mod metrics;
mod split;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::nl::NlStyle;
use crate::reasoning::ReasoningPath;
use crate::rules::DesignRules;
use crate::solver::{resolve_canonical, SolverError};
use crate::table::Table;
use crate::vis::{pattern_label, AmbiguityCategory, CanonicalSpec, VisTree};

pub use metrics::{
    evaluate_dataset, match_canonical, match_specs, precision_recall_f1_at_k, prf_at, Aggregate,
    EvalConfig, EvalReport, Prf, SampleScore, DEFAULT_KS,
};
pub use split::{split_by_manifest, split_dataset, SplitManifest};
pub use stats::{dataset_stats, DatasetStats, WordStats};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("K must be one of 1, 3, 5 (got {0})")]
    InvalidK(usize),
    #[error("ratios must be nonnegative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("split manifest: {0}")]
    Manifest(String),
    #[error("sample `{id}`: {message}")]
    Inconsistent { id: String, message: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One benchmark entry: an ambiguous query and every chart that answers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub id: String,
    #[serde(rename = "table")]
    pub table_ref: String,
    pub nl_query: String,
    pub style: NlStyle,
    pub ambiguous_tree: VisTree,
    pub gold_specs: BTreeSet<CanonicalSpec>,
    /// Gold charts as Vega-Lite documents, in the same order as `gold_specs`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_charts: Vec<Value>,
    pub ambiguity_level: usize,
    pub ambiguity_pattern: BTreeSet<AmbiguityCategory>,
    pub reasoning_path: ReasoningPath,
}

impl BenchmarkSample {
    pub fn pattern_label(&self) -> String {
        let cats: Vec<AmbiguityCategory> = self.ambiguity_pattern.iter().copied().collect();
        pattern_label(&cats)
    }

    /// Internal consistency, and agreement with the solver when a table is given.
    pub fn check(&self, table: Option<(&Table, &DesignRules)>) -> Result<(), EvalError> {
        let bad = |message: String| EvalError::Inconsistent {
            id: self.id.clone(),
            message,
        };
        if self.gold_specs.is_empty() {
            return Err(bad("empty gold set".into()));
        }
        if self.ambiguity_level != self.gold_specs.len() {
            return Err(bad(format!(
                "level {} but {} gold specs",
                self.ambiguity_level,
                self.gold_specs.len()
            )));
        }
        if let Some((t, rules)) = table {
            let solved = resolve_canonical(&self.ambiguous_tree, rules, t)?;
            if solved != self.gold_specs {
                return Err(bad("gold set differs from the tree's resolutions".into()));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parse JSON lines, skipping blank lines; errors carry 1-based line numbers.
fn parse_lines<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Line {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn parse_benchmark(text: &str) -> Result<Vec<BenchmarkSample>, EvalError> {
    let samples: Vec<BenchmarkSample> = parse_lines(text)?;
    let mut seen = BTreeSet::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            return Err(EvalError::DuplicateId(s.id.clone()));
        }
    }
    Ok(samples)
}

pub fn read_benchmark(path: &Path) -> Result<Vec<BenchmarkSample>, EvalError> {
    parse_benchmark(&read_text(path)?)
}

pub fn write_benchmark(samples: &[BenchmarkSample], out: &mut impl Write) -> std::io::Result<()> {
    for s in samples {
        writeln!(out, "{}", s.to_json_line())?;
    }
    Ok(())
}

pub fn benchmark_to_string(samples: &[BenchmarkSample]) -> String {
    let mut buf = Vec::new();
    write_benchmark(samples, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// A system's ranked charts for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub charts: Vec<Value>,
}

pub fn parse_predictions(text: &str) -> Result<BTreeMap<String, Vec<Value>>, EvalError> {
    let mut out = BTreeMap::new();
    for p in parse_lines::<Prediction>(text)? {
        if out.insert(p.id.clone(), p.charts).is_some() {
            return Err(EvalError::DuplicateId(p.id));
        }
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, Vec<Value>>, EvalError> {
    parse_predictions(&read_text(path)?)
}

/// Gold charts of every sample, as a predictions map.
pub fn gold_as_predictions(bench: &[BenchmarkSample]) -> BTreeMap<String, Vec<Value>> {
    bench
        .iter()
        .map(|s| (s.id.clone(), s.gold_charts.clone()))
        .collect()
}
