use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::injector::InjectionConfig;
use crate::llm::LlmConfig;
use crate::nl::NlStyle;

/// Relative mix of query styles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StyleWeights {
    pub question: f64,
    pub command: f64,
    pub caption: f64,
}

impl Default for StyleWeights {
    fn default() -> Self {
        Self {
            question: 1.0,
            command: 1.0,
            caption: 1.0,
        }
    }
}

impl StyleWeights {
    pub fn pairs(&self) -> [(NlStyle, f64); 3] {
        [
            (NlStyle::Question, self.question),
            (NlStyle::Command, self.command),
            (NlStyle::Caption, self.caption),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub tables_dir: PathBuf,
    pub seeds: PathBuf,
    /// Alias knowledge base; the bundled one when absent.
    #[serde(default)]
    pub alias_kb: Option<PathBuf>,
    /// Precomputed `<table>.json` metadata files; built on the fly when absent.
    #[serde(default)]
    pub metadata_dir: Option<PathBuf>,
    #[serde(default)]
    pub design_rules: Option<PathBuf>,
    #[serde(default)]
    pub exemplars: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_attempts")]
    pub max_nl_attempts: usize,
    #[serde(default = "default_exemplar_count")]
    pub exemplar_count: usize,
    /// Ask the model for reasoning prose instead of using templates.
    #[serde(default = "default_true")]
    pub model_prose: bool,
    #[serde(default)]
    pub injection: InjectionConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub styles: StyleWeights,
}

fn default_workers() -> usize {
    4
}

fn default_attempts() -> usize {
    3
}

fn default_exemplar_count() -> usize {
    5
}

fn default_true() -> bool {
    true
}

/// Set `dotted.key` in a TOML tree. The value is read as TOML when it
/// parses, otherwise taken as a plain string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl PipelineConfig {
    /// Parse TOML or JSON text, apply overrides, and resolve relative paths
    /// against `base`.
    pub fn parse(text: &str, json: bool, base: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let mut root: toml::Table = if json {
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, json, base, overrides)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.tables_dir);
        fix(&mut self.seeds);
        fix(&mut self.output_dir);
        for p in [
            &mut self.alias_kb,
            &mut self.metadata_dir,
            &mut self.design_rules,
            &mut self.exemplars,
            &mut self.llm.replay_file,
            &mut self.llm.record_file,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        must_exist("tables_dir", &self.tables_dir)?;
        must_exist("seeds", &self.seeds)?;
        for (what, p) in [
            ("alias_kb", &self.alias_kb),
            ("metadata_dir", &self.metadata_dir),
            ("design_rules", &self.design_rules),
            ("exemplars", &self.exemplars),
            ("llm.replay_file", &self.llm.replay_file),
        ] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        let w = self.styles.pairs();
        if w.iter().any(|(_, x)| !x.is_finite() || *x < 0.0) || w.iter().map(|(_, x)| x).sum::<f64>() <= 0.0 {
            return Err(PipelineError::Config(
                "style weights must be nonnegative with a positive sum".into(),
            ));
        }
        if self.workers == 0 || self.max_nl_attempts == 0 {
            return Err(PipelineError::Config(
                "workers and max_nl_attempts must be positive".into(),
            ));
        }
        self.injection
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}
