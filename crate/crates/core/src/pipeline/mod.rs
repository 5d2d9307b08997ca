//! End-to-end synthesis: seed chart, injected tree, gold set, verified
//! query, reasoning path, benchmark sample.

mod config;
mod sink;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::eval::BenchmarkSample;
use crate::injector::{inject_to_level, InjectorError};
use crate::llm::{Client, LlmError};
use crate::metadata::{build_metadata, builtin_kb, AliasKb, AmbiguityMetadata};
use crate::nl::{synthesize_nl, Exemplars, NlContext, NlError, NlStyle};
use crate::reasoning::derive_gold_path;
use crate::rules::DesignRules;
use crate::solver::resolve_detailed;
use crate::table::{Table, TableStore};
use crate::vis::{build_seed_tree, vegalite, AmbiguityCategory};

pub use config::{apply_override, PipelineConfig, StyleWeights};
pub use sink::OrderedSink;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("backend: {0}")]
    Backend(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 1 for configuration problems, 2 for bad input data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Backend(_) => 1,
            PipelineError::Input(_) | PipelineError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One seed chart to synthesize from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: String,
    pub table: String,
    /// Vega-Lite document of the seed chart.
    pub chart: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<AmbiguityCategory>>,
}

pub fn parse_seeds(text: &str) -> Result<Vec<Seed>, PipelineError> {
    let mut out: Vec<Seed> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s: Seed = serde_json::from_str(line)
            .map_err(|e| PipelineError::Input(format!("seeds line {}: {e}", i + 1)))?;
        if out.iter().any(|o| o.id == s.id) {
            return Err(PipelineError::Input(format!("duplicate seed id `{}`", s.id)));
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedStatus {
    Ok,
    RetriesExhausted,
    TargetUnreachable,
    InvalidSeed,
    BackendError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed_id: String,
    pub status: SeedStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_attempts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seeds: usize,
    pub samples: usize,
    pub counts: BTreeMap<String, usize>,
    pub entries: Vec<ManifestEntry>,
}

/// Everything shared by the per-seed workers.
pub struct Synthesizer {
    pub tables: TableStore,
    pub metadata: BTreeMap<String, AmbiguityMetadata>,
    pub rules: DesignRules,
    pub exemplars: Exemplars,
    pub client: Client,
    pub config: PipelineConfig,
}

fn seed_rng(global: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(global ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Synthesizer {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let tables = TableStore::load_dir(&config.tables_dir)
            .map_err(|e| PipelineError::Input(e.to_string()))?;
        let rules = match &config.design_rules {
            Some(p) => DesignRules::load(p).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => DesignRules::default(),
        };
        let exemplars = match &config.exemplars {
            Some(p) => Exemplars::load(p).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => Exemplars::builtin().clone(),
        };
        let kb_owned;
        let kb: &AliasKb = match &config.alias_kb {
            Some(p) => {
                kb_owned = AliasKb::load(p).map_err(|e| PipelineError::Config(e.to_string()))?;
                &kb_owned
            }
            None => builtin_kb(),
        };
        let client = Client::from_config(&config.llm)?;
        let mut metadata = BTreeMap::new();
        for t in tables.iter() {
            let stored = config
                .metadata_dir
                .as_ref()
                .map(|d| d.join(format!("{}.json", t.name)))
                .filter(|p| p.exists());
            let m = match stored {
                Some(p) => AmbiguityMetadata::load(&p, t),
                None => build_metadata(t, kb, None),
            }
            .map_err(|e| PipelineError::Input(format!("metadata for `{}`: {e}", t.name)))?;
            metadata.insert(t.name.clone(), m);
        }
        Ok(Self {
            tables,
            metadata,
            rules,
            exemplars,
            client,
            config,
        })
    }

    fn table(&self, name: &str) -> Result<&Table, String> {
        self.tables
            .get(name)
            .ok_or_else(|| format!("unknown table `{name}`"))
    }

    /// Run every step for one seed. Failures are reported in the manifest entry.
    pub fn synthesize_seed(&self, index: usize, seed: &Seed) -> (ManifestEntry, Option<BenchmarkSample>) {
        let mut entry = ManifestEntry {
            index,
            seed_id: seed.id.clone(),
            status: SeedStatus::Ok,
            level: None,
            nl_attempts: None,
            detail: None,
        };
        let fail = |mut e: ManifestEntry, status, detail: String| {
            log::warn!("seed `{}`: {detail}", e.seed_id);
            e.status = status;
            e.detail = Some(detail);
            (e, None)
        };
        let cfg = &self.config;
        let prepared = (|| {
            let table = self.table(&seed.table)?;
            let spec = vegalite::from_vegalite(&seed.chart).map_err(|e| e.to_string())?;
            let tree = build_seed_tree(&spec, table, &self.rules).map_err(|e| e.to_string())?;
            Ok::<_, String>((table, tree))
        })();
        let (table, seed_tree) = match prepared {
            Ok(x) => x,
            Err(d) => return fail(entry, SeedStatus::InvalidSeed, d),
        };
        let meta = &self.metadata[&table.name];
        let mut icfg = cfg.injection.clone();
        icfg.rng_seed = cfg.rng_seed.wrapping_add(index as u64);
        if let Some(k) = seed.target_level {
            icfg.target_level = k;
        }
        if let Some(c) = &seed.categories {
            icfg.enabled_categories = c.clone();
        }
        let injected = match inject_to_level(&seed_tree, table, meta, &self.rules, &icfg) {
            Ok(i) => i,
            Err(e @ InjectorError::TargetUnreachable { .. }) => {
                return fail(entry, SeedStatus::TargetUnreachable, e.to_string())
            }
            Err(e) => return fail(entry, SeedStatus::InvalidSeed, e.to_string()),
        };
        entry.level = Some(injected.level);
        let resolutions = match resolve_detailed(&injected.tree, &self.rules, table) {
            Ok(r) => r,
            Err(e) => return fail(entry, SeedStatus::InvalidSeed, e.to_string()),
        };

        let mut rng = seed_rng(cfg.rng_seed, index);
        let weights: Vec<f64> = cfg.styles.pairs().iter().map(|(_, w)| *w).collect();
        let style = match WeightedIndex::new(&weights) {
            Ok(d) => cfg.styles.pairs()[d.sample(&mut rng)].0,
            Err(_) => NlStyle::Command,
        };
        let examples = self.exemplars.sample(style, cfg.exemplar_count, &mut rng);
        let ctx = NlContext {
            table,
            metadata: Some(meta),
            chat: self.client.model.as_ref(),
            temperature: self.client.temperature,
        };
        let nl = match synthesize_nl(&injected.tree, &ctx, style, &examples, cfg.max_nl_attempts) {
            Ok(s) => s,
            Err(NlError::RetriesExhausted { attempts, .. }) => {
                entry.nl_attempts = Some(attempts);
                return fail(
                    entry,
                    SeedStatus::RetriesExhausted,
                    format!("query rejected {attempts} times"),
                );
            }
            Err(e) => return fail(entry, SeedStatus::BackendError, e.to_string()),
        };
        entry.nl_attempts = Some(nl.attempts);

        let prose_model = cfg
            .model_prose
            .then(|| (self.client.model.as_ref(), self.client.temperature));
        let path = match derive_gold_path(&resolutions, &nl.query.text, prose_model) {
            Ok(p) => p,
            Err(e) => return fail(entry, SeedStatus::BackendError, e.to_string()),
        };
        let mut ordered: Vec<_> = resolutions.iter().collect();
        ordered.sort_by(|a, b| a.canonical.cmp(&b.canonical));
        let sample = BenchmarkSample {
            id: seed.id.clone(),
            table_ref: table.name.clone(),
            nl_query: nl.query.text,
            style,
            gold_specs: ordered.iter().map(|r| r.canonical.clone()).collect(),
            gold_charts: ordered
                .iter()
                .map(|r| vegalite::to_vegalite_value(&r.spec, &table.name))
                .collect(),
            ambiguity_level: resolutions.len(),
            ambiguity_pattern: injected.tree.categories().into_iter().collect(),
            ambiguous_tree: injected.tree,
            reasoning_path: path,
        };
        (entry, Some(sample))
    }

    /// Process every seed on a pool of `workers` threads; the benchmark is
    /// written in seed order.
    pub fn run(&self, seeds: &[Seed], out: impl Write + Send) -> Result<RunManifest, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let sink = Mutex::new(OrderedSink::new(out));
        let entries: Vec<ManifestEntry> = pool.install(|| {
            seeds
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let (entry, sample) = self.synthesize_seed(i, s);
                    let line = sample.map(|x| x.to_json_line());
                    sink.lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .push(i, line)
                        .map(|_| entry)
                })
                .collect::<std::io::Result<Vec<_>>>()
        })
        .map_err(|source| PipelineError::Io {
            path: "benchmark".into(),
            source,
        })?;
        sink.into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .finish()
            .map_err(|source| PipelineError::Io {
                path: "benchmark".into(),
                source,
            })?;
        let mut counts = BTreeMap::new();
        for e in &entries {
            let k = serde_json::to_value(e.status).expect("status serializes");
            *counts.entry(k.as_str().unwrap_or_default().to_string()).or_default() += 1;
        }
        Ok(RunManifest {
            seeds: seeds.len(),
            samples: entries.iter().filter(|e| e.status == SeedStatus::Ok).count(),
            counts,
            entries,
        })
    }
}

/// Paths written by a synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub benchmark: PathBuf,
    pub manifest: PathBuf,
    pub summary: RunManifest,
}

/// Load the config's seeds, synthesize, and write `benchmark.jsonl` and
/// `manifest.json` under the output directory.
pub fn run_synthesis(config: PipelineConfig) -> Result<RunOutput, PipelineError> {
    let seeds_path = config.seeds.clone();
    let text = std::fs::read_to_string(&seeds_path).map_err(io_err(&seeds_path))?;
    let seeds = parse_seeds(&text)?;
    let out_dir = config.output_dir.clone();
    let llm_cfg = config.llm.clone();
    let synth = Synthesizer::new(config)?;
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let bench_path = out_dir.join("benchmark.jsonl");
    let file = std::fs::File::create(&bench_path).map_err(io_err(&bench_path))?;
    let summary = synth.run(&seeds, std::io::BufWriter::new(file))?;
    let manifest_path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&summary).expect("manifest serializes");
    std::fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    synth.client.save_recording(&llm_cfg)?;
    log::info!(
        "{} of {} seeds produced samples; benchmark at {}",
        summary.samples,
        summary.seeds,
        bench_path.display()
    );
    Ok(RunOutput {
        benchmark: bench_path,
        manifest: manifest_path,
        summary,
    })
}
