//! Ambiguous query generation with a generate, verify, retry loop.

pub mod phrases;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::llm::{self, prompts, ChatMessage, ChatModel, ChatRequest, LlmError, TaskKind};
use crate::metadata::AmbiguityMetadata;
use crate::table::Table;
use crate::vis::{AmbiguityTag, OperationKind, VisTree};
use phrases::{column_surfaces, names_param, occurrences, words, Slot};

pub use phrases::suggest_reference;

#[derive(Debug, Error)]
pub enum NlError {
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error("malformed model output: {0}")]
    Malformed(String),
    #[error("query rejected after {attempts} attempts")]
    RetriesExhausted {
        attempts: usize,
        last: Option<Box<VerificationResult>>,
    },
    #[error("unknown style `{0}`")]
    UnknownStyle(String),
    #[error("exemplars: {0}")]
    Exemplars(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NlStyle {
    Question,
    Command,
    Caption,
}

impl NlStyle {
    pub const ALL: [NlStyle; 3] = [NlStyle::Question, NlStyle::Command, NlStyle::Caption];

    pub fn as_str(self) -> &'static str {
        match self {
            NlStyle::Question => "Question",
            NlStyle::Command => "Command",
            NlStyle::Caption => "Caption",
        }
    }
}

impl fmt::Display for NlStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NlStyle {
    type Err = NlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NlStyle::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| NlError::UnknownStyle(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReference {
    pub node: usize,
    pub nl_reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub text: String,
    pub style: NlStyle,
    pub reference_tree: Vec<NodeReference>,
}

impl GeneratedQuery {
    /// Nodes whose reference is missing, empty, or not found in the text.
    pub fn structural_problems(&self, tree: &VisTree) -> Vec<Mapping> {
        let text = self.text.to_lowercase();
        (0..tree.nodes.len())
            .filter_map(|i| {
                let r = self.reference(i);
                let reason = match r {
                    None => "no reference",
                    Some(r) if r.trim().is_empty() => "empty reference",
                    Some(r) if !text.contains(&r.to_lowercase()) => "reference not in query",
                    Some(_) => return None,
                };
                Some(Mapping::wrong(r.unwrap_or(""), Some(i), reason))
            })
            .collect()
    }

    pub fn reference(&self, node: usize) -> Option<&str> {
        self.reference_tree
            .iter()
            .find(|r| r.node == node)
            .map(|r| r.nl_reference.as_str())
    }
}

/// A phrase of the query and the node it was mapped to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub phrase: String,
    /// `None` when the phrase maps to nothing in the tree.
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Mapping {
    pub fn correct(phrase: &str, node: usize) -> Self {
        Self {
            phrase: phrase.to_string(),
            node: Some(node),
            reason: None,
        }
    }

    pub fn wrong(phrase: &str, node: Option<usize>, reason: impl Into<String>) -> Self {
        Self {
            phrase: phrase.to_string(),
            node,
            reason: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub l1: Vec<Mapping>,
    pub l2: Vec<Mapping>,
    pub verdict: Verdict,
}

impl VerificationResult {
    /// Accept iff `l1` maps onto every one of `node_count` nodes and `l2` is empty.
    pub fn decide(l1: Vec<Mapping>, l2: Vec<Mapping>, node_count: usize) -> Self {
        let covered: BTreeSet<usize> = l1.iter().filter_map(|m| m.node).collect();
        let total = (0..node_count).all(|i| covered.contains(&i));
        let verdict = if total && l2.is_empty() {
            Verdict::Accept
        } else {
            Verdict::Reject
        };
        Self { l1, l2, verdict }
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    fn feedback(&self) -> String {
        self.l2
            .iter()
            .map(|m| {
                let at = m.node.map(|n| format!("node {n}")).unwrap_or("no node".into());
                let why = m.reason.as_deref().unwrap_or("incorrect mapping");
                format!("- \"{}\" ({at}): {why}", m.phrase)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Style-tagged example queries shown to the generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplars {
    pub question: Vec<String>,
    pub command: Vec<String>,
    pub caption: Vec<String>,
}

impl Exemplars {
    pub fn from_json(text: &str) -> Result<Self, NlError> {
        serde_json::from_str(text).map_err(|e| NlError::Exemplars(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NlError::Exemplars(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn builtin() -> &'static Exemplars {
        static CELL: OnceLock<Exemplars> = OnceLock::new();
        CELL.get_or_init(|| {
            Exemplars::from_json(include_str!("../../data/exemplars.json"))
                .expect("bundled exemplars parse")
        })
    }

    pub fn of(&self, style: NlStyle) -> &[String] {
        match style {
            NlStyle::Question => &self.question,
            NlStyle::Command => &self.command,
            NlStyle::Caption => &self.caption,
        }
    }

    pub fn sample(&self, style: NlStyle, n: usize, rng: &mut impl rand::Rng) -> Vec<String> {
        self.of(style).choose_multiple(rng, n).cloned().collect()
    }
}

/// Everything the generator and verifier need besides the tree.
pub struct NlContext<'a> {
    pub table: &'a Table,
    pub metadata: Option<&'a AmbiguityMetadata>,
    pub chat: &'a dyn ChatModel,
    pub temperature: f32,
}

fn schema_text(table: &Table) -> String {
    table
        .columns
        .iter()
        .map(|c| format!("{} ({})", c.name, c.dtype))
        .collect::<Vec<_>>()
        .join(", ")
}

fn samples_text(table: &Table) -> String {
    table
        .sample_rows(3)
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| c.as_deref().unwrap_or(""))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Prompt for one generation attempt. `feedback` lists the problems of the
/// previous attempt, so a retry is a different request.
pub fn generation_prompt(
    tree: &VisTree,
    ctx: &NlContext<'_>,
    style: NlStyle,
    exemplars: &[String],
    attempt: usize,
    feedback: Option<&str>,
) -> String {
    let quoted: Vec<String> = exemplars.iter().map(|e| format!("\"{e}\"")).collect();
    let vars = BTreeMap::from([
        ("schema", schema_text(ctx.table)),
        ("samples", samples_text(ctx.table)),
        ("tree", pretty(&tree.prompt_view())),
        ("style", style.to_string()),
        ("exemplars", quoted.join("\n")),
    ]);
    let mut prompt = prompts::render(prompts::NL_GENERATION, &vars);
    if let Some(fb) = feedback {
        prompt.push_str(&format!(
            "\n\nAttempt {attempt}. The previous query was rejected for these mappings:\n{fb}\n"
        ));
    }
    let nodes: Vec<Value> = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            json!({
                "index": i,
                "op": n.op,
                "tag": n.tag,
                "reference": suggest_reference(n, ctx.table, ctx.metadata),
            })
        })
        .collect();
    llm::with_payload(&prompt, &json!({ "style": style, "attempt": attempt, "nodes": nodes }))
}

fn parse_generation(text: &str, tree: &VisTree, style: NlStyle) -> Result<GeneratedQuery, NlError> {
    let v = llm::extract_json(text).map_err(|e| NlError::Malformed(e.to_string()))?;
    let nl = v
        .get("NL")
        .and_then(Value::as_str)
        .ok_or_else(|| NlError::Malformed("missing `NL`".into()))?;
    let refs = v
        .get("Reference Tree")
        .and_then(Value::as_array)
        .ok_or_else(|| NlError::Malformed("missing `Reference Tree`".into()))?;
    if refs.len() != tree.nodes.len() {
        return Err(NlError::Malformed(format!(
            "reference tree has {} nodes, expected {}",
            refs.len(),
            tree.nodes.len()
        )));
    }
    let reference_tree = refs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let nl_reference = r
                .get("nl_reference")
                .and_then(Value::as_str)
                .ok_or_else(|| NlError::Malformed(format!("node {i} has no `nl_reference`")))?;
            let node = r
                .get("index")
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .unwrap_or(i);
            Ok(NodeReference {
                node,
                nl_reference: nl_reference.to_string(),
            })
        })
        .collect::<Result<Vec<_>, NlError>>()?;
    Ok(GeneratedQuery {
        text: nl.trim().to_string(),
        style,
        reference_tree,
    })
}

pub fn generate_query(
    tree: &VisTree,
    ctx: &NlContext<'_>,
    style: NlStyle,
    exemplars: &[String],
) -> Result<GeneratedQuery, NlError> {
    generate_attempt(tree, ctx, style, exemplars, 1, None)
}

fn generate_attempt(
    tree: &VisTree,
    ctx: &NlContext<'_>,
    style: NlStyle,
    exemplars: &[String],
    attempt: usize,
    feedback: Option<&str>,
) -> Result<GeneratedQuery, NlError> {
    let req = ChatRequest {
        task: TaskKind::NlGeneration,
        messages: vec![ChatMessage::user(generation_prompt(
            tree, ctx, style, exemplars, attempt, feedback,
        ))],
        temperature: ctx.temperature,
    };
    parse_generation(&ctx.chat.complete(&req)?, tree, style)
}

fn verification_prompt(q: &GeneratedQuery, tree: &VisTree) -> String {
    let refs: Vec<String> = q
        .reference_tree
        .iter()
        .map(|r| format!("{}: {}", r.node, r.nl_reference))
        .collect();
    let vars = BTreeMap::from([
        ("tree", pretty(&tree.prompt_view())),
        ("nl", q.text.clone()),
        ("references", refs.join("\n")),
    ]);
    let nodes: Vec<Value> = q
        .reference_tree
        .iter()
        .map(|r| json!({ "index": r.node, "reference": r.nl_reference }))
        .collect();
    llm::with_payload(
        &prompts::render(prompts::NL_VERIFICATION, &vars),
        &json!({ "nl": q.text, "nodes": nodes }),
    )
}

fn parse_mappings(v: &Value, key: &str) -> Result<Vec<Mapping>, NlError> {
    let Some(items) = v.get(key) else {
        return Ok(Vec::new());
    };
    let items = items
        .as_array()
        .ok_or_else(|| NlError::Malformed(format!("`{key}` is not a list")))?;
    items
        .iter()
        .map(|it| {
            let arr = it
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| NlError::Malformed(format!("bad `{key}` entry {it}")))?;
            let phrase = arr[0]
                .as_str()
                .ok_or_else(|| NlError::Malformed(format!("bad phrase in {it}")))?;
            let node = arr[1].as_u64().map(|x| x as usize);
            let reason = arr.get(2).and_then(Value::as_str).map(str::to_string);
            Ok(Mapping {
                phrase: phrase.to_string(),
                node,
                reason,
            })
        })
        .collect()
}

/// Spans of `needle` in the word list of the query.
fn spans(hay: &[String], needle: &str) -> Vec<(usize, usize)> {
    let n = words(needle);
    occurrences(hay, &n)
        .into_iter()
        .map(|s| (s, s + n.len()))
        .collect()
}

/// Local checks that do not need a model: completeness of the references,
/// preservation of each node's ambiguity type, and no actions beyond the tree.
pub fn local_checks(q: &GeneratedQuery, tree: &VisTree, ctx: &NlContext<'_>) -> Vec<Mapping> {
    let mut bad = q.structural_problems(tree);
    let meta = ctx.metadata;
    for (i, n) in tree.nodes.iter().enumerate() {
        let Some(r) = q.reference(i) else { continue };
        match n.tag {
            AmbiguityTag::Ambiguous => {
                for p in &n.params {
                    if names_param(r, p, meta) {
                        bad.push(Mapping::wrong(
                            r,
                            Some(i),
                            format!("ambiguous reference names the single reading `{}`", p.surface()),
                        ));
                    }
                }
            }
            AmbiguityTag::Implicit => {
                for p in &n.params {
                    if names_param(r, p, meta) {
                        bad.push(Mapping::wrong(
                            r,
                            Some(i),
                            format!("implicit reference names the hidden value `{}`", p.surface()),
                        ));
                    }
                }
            }
            AmbiguityTag::Explicit => {}
        }
    }

    let text_words = words(&q.text);
    let in_tree: BTreeSet<&str> = tree.nodes.iter().flat_map(|n| n.columns()).collect();
    let mut covered: Vec<(usize, usize)> = Vec::new();
    for c in &in_tree {
        for s in column_surfaces(c, meta) {
            covered.extend(spans(&text_words, &s));
        }
    }
    for (i, n) in tree.nodes.iter().enumerate() {
        let wording = matches!(
            n.op,
            OperationKind::Mark
                | OperationKind::Task
                | OperationKind::Aggregate(_)
                | OperationKind::Bin(_)
                | OperationKind::Sort(_)
        );
        if let (true, Some(r)) = (wording, q.reference(i)) {
            covered.extend(spans(&text_words, r));
        }
    }
    let inside = |(a, b): (usize, usize)| covered.iter().any(|&(x, y)| x <= a && b <= y);
    for col in ctx.table.column_names() {
        if in_tree.contains(col) {
            continue;
        }
        for s in column_surfaces(col, meta) {
            if spans(&text_words, &s).into_iter().any(|sp| !inside(sp)) {
                bad.push(Mapping::wrong(
                    &s,
                    None,
                    format!("mentions column `{col}` which is not in the tree"),
                ));
                break;
            }
        }
    }
    bad
}

pub fn verify_query(
    q: &GeneratedQuery,
    tree: &VisTree,
    ctx: &NlContext<'_>,
) -> Result<VerificationResult, NlError> {
    let req = ChatRequest {
        task: TaskKind::NlVerification,
        messages: vec![ChatMessage::user(verification_prompt(q, tree))],
        temperature: 0.0,
    };
    let v = llm::extract_json(&ctx.chat.complete(&req)?)
        .map_err(|e| NlError::Malformed(e.to_string()))?;
    let text = q.text.to_lowercase();
    let mut l1 = Vec::new();
    let mut l2 = parse_mappings(&v, "L2")?;
    for m in parse_mappings(&v, "L1")? {
        match m.node {
            Some(n) if n < tree.nodes.len() && text.contains(&m.phrase.to_lowercase()) => l1.push(m),
            _ => l2.push(Mapping::wrong(&m.phrase, m.node, "mapping does not fit the query")),
        }
    }
    l2.extend(local_checks(q, tree, ctx));
    Ok(VerificationResult::decide(l1, l2, tree.nodes.len()))
}

/// A query the verifier accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesized {
    pub query: GeneratedQuery,
    pub verification: VerificationResult,
    pub attempts: usize,
}

/// Generate and verify up to `max_attempts` times in total.
pub fn synthesize_nl(
    tree: &VisTree,
    ctx: &NlContext<'_>,
    style: NlStyle,
    exemplars: &[String],
    max_attempts: usize,
) -> Result<Synthesized, NlError> {
    let mut last: Option<VerificationResult> = None;
    for attempt in 1..=max_attempts {
        let feedback = last.as_ref().map(VerificationResult::feedback);
        let q = match generate_attempt(tree, ctx, style, exemplars, attempt, feedback.as_deref()) {
            Ok(q) => q,
            Err(NlError::Malformed(m)) => {
                log::debug!("attempt {attempt}: unusable generation: {m}");
                last = Some(VerificationResult::decide(
                    Vec::new(),
                    vec![Mapping::wrong("", None, m)],
                    tree.nodes.len(),
                ));
                continue;
            }
            Err(e) => return Err(e),
        };
        let problems = q.structural_problems(tree);
        let result = if problems.is_empty() {
            match verify_query(&q, tree, ctx) {
                Ok(r) => r,
                Err(NlError::Malformed(m)) => {
                    VerificationResult::decide(Vec::new(), vec![Mapping::wrong("", None, m)], 0)
                }
                Err(e) => return Err(e),
            }
        } else {
            VerificationResult::decide(Vec::new(), problems, tree.nodes.len())
        };
        if result.accepted() {
            return Ok(Synthesized {
                query: q,
                verification: result,
                attempts: attempt,
            });
        }
        log::debug!("attempt {attempt} rejected:\n{}", result.feedback());
        last = Some(result);
    }
    Err(NlError::RetriesExhausted {
        attempts: max_attempts,
        last: last.map(Box::new),
    })
}

#[derive(Deserialize)]
struct GenNode {
    index: usize,
    op: OperationKind,
    reference: String,
}

#[derive(Deserialize)]
struct GenPayload {
    style: NlStyle,
    nodes: Vec<GenNode>,
}

/// Templated generation used by the offline backend.
pub fn offline_generate(payload: &Value) -> Result<String, LlmError> {
    let p: GenPayload = serde_json::from_value(payload.clone())
        .map_err(|e| LlmError::Malformed(format!("generation payload: {e}")))?;
    let slots: Vec<Slot<'_>> = p
        .nodes
        .iter()
        .map(|n| Slot {
            op: n.op,
            reference: &n.reference,
        })
        .collect();
    let mut text = phrases::compose(p.style, &slots);
    let missing: Vec<&str> = p
        .nodes
        .iter()
        .map(|n| n.reference.as_str())
        .filter(|r| !text.to_lowercase().contains(&r.to_lowercase()))
        .collect();
    if !missing.is_empty() {
        let end = text.pop().unwrap_or('.');
        text = format!("{text} with {}{end}", missing.join(" and "));
    }
    let refs: Vec<Value> = p
        .nodes
        .iter()
        .map(|n| json!({ "index": n.index, "nl_reference": n.reference }))
        .collect();
    Ok(json!({ "NL": text, "Reference Tree": refs }).to_string())
}

#[derive(Deserialize)]
struct VerNode {
    index: usize,
    reference: String,
}

#[derive(Deserialize)]
struct VerPayload {
    nl: String,
    nodes: Vec<VerNode>,
}

/// Verification used by the offline backend: a reference found in the query
/// is a correct mapping.
pub fn offline_verify(payload: &Value) -> Result<String, LlmError> {
    let p: VerPayload = serde_json::from_value(payload.clone())
        .map_err(|e| LlmError::Malformed(format!("verification payload: {e}")))?;
    let text = p.nl.to_lowercase();
    let l1: Vec<Value> = p
        .nodes
        .iter()
        .filter(|n| !n.reference.is_empty() && text.contains(&n.reference.to_lowercase()))
        .map(|n| json!([n.reference, n.index]))
        .collect();
    Ok(json!({ "L1": l1, "L2": [] }).to_string())
}
