//! Per-table ambiguity metadata: column pairs whose names mean nearly the
//! same thing.
//!
//! Built in three stages: descriptive names for every column, alias lookup
//! in a knowledge base to flag overlapping pairs, then a refinement pass that
//! keeps or drops each flag.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::llm::{self, prompts, ChatMessage, ChatModel, ChatRequest, LlmError, TaskKind};
use crate::table::Table;

const BUILTIN_KB: &str = include_str!("../data/alias_kb.json");

#[derive(Debug, Error)]
pub enum MetadataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("backend: {0}")]
    Backend(#[from] LlmError),
    #[error("malformed model output: {0}")]
    Malformed(String),
    #[error("metadata for `{table}` names unknown column `{column}`")]
    UnknownColumn { table: String, column: String },
    #[error("metadata refers to table `{found}`, expected `{expected}`")]
    WrongTable { expected: String, found: String },
    #[error("pair ({0}, {0}) joins a column with itself")]
    SelfPair(String),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(String),
}

/// Words ignored when splitting a phrase into alias-lookup tokens.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "at", "by", "for", "in", "of", "on", "or", "per", "the", "to", "with",
];

/// Term to related-terms map, stored symmetrically closed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AliasKb {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl AliasKb {
    pub fn from_map(raw: BTreeMap<String, Vec<String>>) -> Self {
        let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (term, aliases) in raw {
            let term = term.trim().to_lowercase();
            for a in aliases {
                let a = a.trim().to_lowercase();
                entries.entry(term.clone()).or_default().insert(a.clone());
                if a != term {
                    entries.entry(a).or_default().insert(term.clone());
                }
            }
            entries.entry(term).or_default();
        }
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, MetadataError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| MetadataError::Json(e.to_string()))?;
        Ok(Self::from_map(raw))
    }

    pub fn load(path: &Path) -> Result<Self, MetadataError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetadataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn aliases(&self, term: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(term)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Aliases of the whole phrase plus those of each content token.
    pub fn alias_set(&self, phrase: &str) -> BTreeSet<String> {
        let phrase = phrase.trim().to_lowercase();
        let mut out = BTreeSet::new();
        if let Some(a) = self.entries.get(&phrase) {
            out.extend(a.iter().cloned());
        }
        for tok in content_tokens(&phrase) {
            if let Some(a) = self.entries.get(&tok) {
                out.extend(a.iter().cloned());
            }
        }
        out
    }
}

/// The knowledge base shipped with the crate.
pub fn builtin_kb() -> &'static AliasKb {
    static KB: std::sync::OnceLock<AliasKb> = std::sync::OnceLock::new();
    KB.get_or_init(|| AliasKb::from_json(BUILTIN_KB).expect("shipped alias KB parses"))
}

pub fn content_tokens(phrase: &str) -> Vec<String> {
    phrase
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

const ABBREVIATIONS: &[(&str, &str)] = &[
    ("amt", "amount"),
    ("avg", "average"),
    ("cnt", "count"),
    ("ctry", "country"),
    ("cntry", "country"),
    ("dept", "department"),
    ("desc", "description"),
    ("max", "maximum"),
    ("min", "minimum"),
    ("num", "number"),
    ("pct", "percent"),
    ("qty", "quantity"),
    ("temp", "temperature"),
    ("yr", "year"),
];

/// Split a raw column name into lower-case words with common abbreviations expanded.
pub fn rule_standardize(name: &str) -> Result<String, MetadataError> {
    let mut words: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut prev: Option<char> = None;
    for c in name.trim().chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            prev = None;
            continue;
        }
        let boundary = match prev {
            Some(p) => (p.is_lowercase() && c.is_uppercase()) || (p.is_alphabetic() != c.is_alphabetic()),
            None => false,
        };
        if boundary && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        cur.extend(c.to_lowercase());
        prev = Some(c);
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    if words.is_empty() {
        return Err(MetadataError::InvalidSchema(format!(
            "column name {name:?} has no letters or digits"
        )));
    }
    let words: Vec<&str> = words
        .iter()
        .map(|w| {
            ABBREVIATIONS
                .iter()
                .find(|(a, _)| a == w)
                .map(|(_, full)| *full)
                .unwrap_or(w)
        })
        .collect();
    Ok(words.join(" "))
}

/// Where descriptive column names come from.
#[derive(Clone, Copy)]
pub enum Standardizer<'a> {
    Rules,
    Model {
        chat: &'a dyn ChatModel,
        temperature: f32,
    },
}

pub fn standardize_schema(
    table: &Table,
    how: Standardizer<'_>,
) -> Result<BTreeMap<String, String>, MetadataError> {
    for c in &table.columns {
        if c.name.trim().is_empty() {
            return Err(MetadataError::InvalidSchema("empty column name".into()));
        }
    }
    match how {
        Standardizer::Rules => table
            .columns
            .iter()
            .map(|c| Ok((c.name.clone(), rule_standardize(&c.name)?)))
            .collect(),
        Standardizer::Model { chat, temperature } => {
            let columns: Vec<&str> = table.column_names().collect();
            let vars = BTreeMap::from([
                ("table", table.name.clone()),
                ("columns", columns.join(", ")),
            ]);
            let prompt = llm::with_payload(
                &prompts::render(prompts::SCHEMA_STANDARDIZATION, &vars),
                &json!({ "table": table.name, "columns": columns }),
            );
            let text = chat.complete(&ChatRequest {
                task: TaskKind::SchemaStandardization,
                messages: vec![ChatMessage::user(prompt)],
                temperature,
            })?;
            let v = llm::extract_json(&text)?;
            let obj = v
                .as_object()
                .ok_or_else(|| MetadataError::Malformed("expected an object".into()))?;
            columns
                .iter()
                .map(|c| {
                    let phrase = obj
                        .get(*c)
                        .and_then(Value::as_str)
                        .map(|s| s.trim().to_lowercase())
                        .filter(|s| !s.is_empty())
                        .ok_or_else(|| MetadataError::Malformed(format!("no phrase for `{c}`")))?;
                    Ok((c.to_string(), phrase))
                })
                .collect()
        }
    }
}

/// Offline answer to a standardization prompt.
pub fn offline_standardize(payload: &Value) -> Result<String, LlmError> {
    let cols = payload["columns"]
        .as_array()
        .ok_or_else(|| LlmError::Malformed("payload without columns".into()))?;
    let mut out = serde_json::Map::new();
    for c in cols {
        let c = c.as_str().unwrap_or_default();
        let phrase = rule_standardize(c).map_err(|e| LlmError::Malformed(e.to_string()))?;
        out.insert(c.to_string(), json!(phrase));
    }
    Ok(Value::Object(out).to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub column_a: String,
    pub column_b: String,
    pub shared_alias: String,
}

/// A shared alias that is neither column's own phrase, preferring a word
/// both phrases contain.
fn pick_alias(shared: &BTreeSet<String>, a: &str, b: &str) -> String {
    let (ta, tb) = (content_tokens(a), content_tokens(b));
    let neutral: Vec<&String> = shared.iter().filter(|s| *s != a && *s != b).collect();
    neutral
        .iter()
        .find(|s| ta.contains(s) && tb.contains(s))
        .or_else(|| neutral.first())
        .copied()
        .or_else(|| shared.iter().next())
        .cloned()
        .unwrap_or_default()
}

/// Flag every column pair whose alias sets intersect. Pairs come out in
/// table column order, `column_a` first.
pub fn discover_aliases(std_names: &[(String, String)], kb: &AliasKb) -> Vec<FlaggedPair> {
    let sets: Vec<BTreeSet<String>> = std_names.iter().map(|(_, p)| kb.alias_set(p)).collect();
    let mut out = Vec::new();
    for i in 0..std_names.len() {
        for j in i + 1..std_names.len() {
            let shared: BTreeSet<String> = sets[i].intersection(&sets[j]).cloned().collect();
            if !shared.is_empty() {
                out.push(FlaggedPair {
                    column_a: std_names[i].0.clone(),
                    column_b: std_names[j].0.clone(),
                    shared_alias: pick_alias(&shared, &std_names[i].1, &std_names[j].1),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguousPair {
    pub column_a: String,
    pub column_b: String,
    pub shared_alias: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityMetadata {
    #[serde(rename = "table")]
    pub table_ref: String,
    pub standardized_names: BTreeMap<String, String>,
    pub ambiguous_pairs: Vec<AmbiguousPair>,
}

impl AmbiguityMetadata {
    pub fn validate(&self, table: &Table) -> Result<(), MetadataError> {
        if self.table_ref != table.name {
            return Err(MetadataError::WrongTable {
                expected: table.name.clone(),
                found: self.table_ref.clone(),
            });
        }
        let check = |c: &str| {
            if table.column(c).is_none() {
                return Err(MetadataError::UnknownColumn {
                    table: table.name.clone(),
                    column: c.to_string(),
                });
            }
            Ok(())
        };
        for c in self.standardized_names.keys() {
            check(c)?;
        }
        for p in &self.ambiguous_pairs {
            check(&p.column_a)?;
            check(&p.column_b)?;
            if p.column_a == p.column_b {
                return Err(MetadataError::SelfPair(p.column_a.clone()));
            }
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(MetadataError::Confidence(p.confidence));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, table: &Table) -> Result<Self, MetadataError> {
        let m: Self = serde_json::from_str(text).map_err(|e| MetadataError::Json(e.to_string()))?;
        m.validate(table)?;
        Ok(m)
    }

    pub fn load(path: &Path, table: &Table) -> Result<Self, MetadataError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetadataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, table)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    /// Columns paired with `column` at or above `min_confidence`, in pair order.
    pub fn partners(&self, column: &str, min_confidence: f64) -> Vec<&str> {
        let mut out = Vec::new();
        for p in &self.ambiguous_pairs {
            if p.confidence < min_confidence {
                continue;
            }
            let other = if p.column_a == column {
                &p.column_b
            } else if p.column_b == column {
                &p.column_a
            } else {
                continue;
            };
            if !out.contains(&other.as_str()) {
                out.push(other.as_str());
            }
        }
        out
    }

    /// The descriptive phrase for a column, falling back to the rule table.
    pub fn phrase(&self, column: &str) -> String {
        self.standardized_names
            .get(column)
            .cloned()
            .or_else(|| rule_standardize(column).ok())
            .unwrap_or_else(|| column.to_lowercase())
    }

    /// A term that fits every column in `columns`: the shared alias most
    /// pairs among them agree on, ties broken alphabetically.
    pub fn shared_term(&self, columns: &[&str]) -> Option<String> {
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &self.ambiguous_pairs {
            if columns.contains(&p.column_a.as_str()) && columns.contains(&p.column_b.as_str()) {
                *votes.entry(p.shared_alias.as_str()).or_default() += 1;
            }
        }
        let best = votes.values().copied().max()?;
        votes
            .into_iter()
            .find(|(_, n)| *n == best)
            .map(|(a, _)| a.to_string())
    }
}

fn pairs_prompt(table: &Table, flags: &[FlaggedPair]) -> String {
    let lines: Vec<String> = flags
        .iter()
        .map(|f| format!("- {} / {} (shared term: {})", f.column_a, f.column_b, f.shared_alias))
        .collect();
    let samples: Vec<String> = table
        .sample_rows(3)
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| c.as_deref().unwrap_or(""))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    let vars = BTreeMap::from([
        ("table", table.name.clone()),
        ("pairs", lines.join("\n")),
        ("samples", samples.join("\n")),
    ]);
    llm::with_payload(
        &prompts::render(prompts::PAIR_REFINEMENT, &vars),
        &json!({ "table": table.name, "pairs": flags }),
    )
}

/// Keep or drop each flagged pair. Without a model every flag is kept at confidence 0.5.
pub fn refine_pairs(
    table: &Table,
    std_names: BTreeMap<String, String>,
    flags: &[FlaggedPair],
    chat: Option<(&dyn ChatModel, f32)>,
) -> Result<AmbiguityMetadata, MetadataError> {
    let verdicts: BTreeMap<(String, String), (bool, f64)> = match chat {
        Some((chat, temperature)) if !flags.is_empty() => {
            let text = chat.complete(&ChatRequest {
                task: TaskKind::PairRefinement,
                messages: vec![ChatMessage::user(pairs_prompt(table, flags))],
                temperature,
            })?;
            parse_refinement(&text)?
        }
        _ => flags
            .iter()
            .map(|f| ((f.column_a.clone(), f.column_b.clone()), (true, 0.5)))
            .collect(),
    };
    let ambiguous_pairs = flags
        .iter()
        .filter_map(|f| {
            let key = (f.column_a.clone(), f.column_b.clone());
            let rev = (f.column_b.clone(), f.column_a.clone());
            let (keep, confidence) = verdicts.get(&key).or_else(|| verdicts.get(&rev))?;
            keep.then(|| AmbiguousPair {
                column_a: f.column_a.clone(),
                column_b: f.column_b.clone(),
                shared_alias: f.shared_alias.clone(),
                confidence: confidence.clamp(0.0, 1.0),
            })
        })
        .collect();
    let meta = AmbiguityMetadata {
        table_ref: table.name.clone(),
        standardized_names: std_names,
        ambiguous_pairs,
    };
    meta.validate(table)?;
    Ok(meta)
}

#[derive(Deserialize)]
struct RefinementVerdict {
    column_a: String,
    column_b: String,
    keep: bool,
    #[serde(default = "half")]
    confidence: f64,
}

fn half() -> f64 {
    0.5
}

fn parse_refinement(text: &str) -> Result<BTreeMap<(String, String), (bool, f64)>, MetadataError> {
    let v = llm::extract_json(text)?;
    let verdicts: Vec<RefinementVerdict> =
        serde_json::from_value(v).map_err(|e| MetadataError::Malformed(e.to_string()))?;
    Ok(verdicts
        .into_iter()
        .map(|r| ((r.column_a, r.column_b), (r.keep, r.confidence)))
        .collect())
}

/// Offline answer to a refinement prompt: keep everything at 0.5.
pub fn offline_refine(payload: &Value) -> Result<String, LlmError> {
    let pairs = payload["pairs"]
        .as_array()
        .ok_or_else(|| LlmError::Malformed("payload without pairs".into()))?;
    let out: Vec<Value> = pairs
        .iter()
        .map(|p| {
            json!({
                "column_a": p["column_a"],
                "column_b": p["column_b"],
                "keep": true,
                "confidence": 0.5,
            })
        })
        .collect();
    Ok(Value::Array(out).to_string())
}

/// All three stages for one table.
pub fn build_metadata(
    table: &Table,
    kb: &AliasKb,
    chat: Option<(&dyn ChatModel, f32)>,
) -> Result<AmbiguityMetadata, MetadataError> {
    let how = match chat {
        Some((chat, temperature)) => Standardizer::Model { chat, temperature },
        None => Standardizer::Rules,
    };
    let names = standardize_schema(table, how)?;
    let ordered: Vec<(String, String)> = table
        .columns
        .iter()
        .map(|c| (c.name.clone(), names[&c.name].clone()))
        .collect();
    let flags = discover_aliases(&ordered, kb);
    refine_pairs(table, names, &flags, chat)
}
