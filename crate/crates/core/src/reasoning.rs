//! Step-wise disambiguation paths and preference pairs built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::eval::BenchmarkSample;
use crate::llm::{self, prompts, ChatMessage, ChatModel, ChatRequest, LlmError, TaskKind};
use crate::solver::Resolution;
use crate::table::TableStore;
use crate::vis::{canonicalize, vegalite, CanonicalSpec, ChartType, Filter};

pub const STEP_COUNT: usize = 5;

pub const STEP_NAMES: [&str; STEP_COUNT] = [
    "Data Selection Reasoning",
    "Chart Type Reasoning",
    "Channel Mapping Reasoning",
    "Data Transformation Reasoning",
    "Visualization Synthesis Reasoning",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasoningError {
    #[error("malformed path: {0}")]
    MalformedPath(String),
    #[error("tag error: {0}")]
    TagError(String),
    #[error("{samples} samples but {predictions} predictions")]
    Alignment { samples: usize, predictions: usize },
}

/// One step's decisions. Steps 1 to 4 hold cumulative action sets; step 5
/// holds the final canonical specs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAnswer {
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub actions: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub specs: BTreeSet<CanonicalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prose: Option<String>,
}

impl StepAnswer {
    /// Whether the structured content of `self` counts as correct against `gold`.
    pub fn agrees_with(&self, gold: &StepAnswer, policy: StepPolicy) -> bool {
        match policy {
            StepPolicy::Exact => self.actions == gold.actions && self.specs == gold.specs,
            StepPolicy::SubsetTolerant => {
                let nonempty = !(self.actions.is_empty() && self.specs.is_empty())
                    || (gold.actions.is_empty() && gold.specs.is_empty());
                nonempty
                    && self.actions.is_subset(&gold.actions)
                    && self.specs.is_subset(&gold.specs)
            }
        }
    }
}

/// How strictly a predicted step is compared with the gold step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPolicy {
    /// Any difference is an error.
    #[default]
    Exact,
    /// A nonempty subset of the gold options is accepted.
    SubsetTolerant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReasoningPath {
    pub steps: Vec<StepAnswer>,
}

impl ReasoningPath {
    pub fn validate(&self) -> Result<(), ReasoningError> {
        if self.steps.len() != STEP_COUNT {
            return Err(ReasoningError::MalformedPath(format!(
                "{} steps, expected {STEP_COUNT}",
                self.steps.len()
            )));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.step_index != i + 1 {
                return Err(ReasoningError::MalformedPath(format!(
                    "step {} found at position {}",
                    s.step_index,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self, k: usize) -> &StepAnswer {
        &self.steps[k - 1]
    }

    /// Whether steps 1 to 4 only ever add actions.
    pub fn is_cumulative(&self) -> bool {
        self.steps
            .windows(2)
            .take(3)
            .all(|w| w[0].actions.is_subset(&w[1].actions))
    }
}

fn filter_action(f: &crate::vis::CanonicalFilter) -> String {
    let shown = Filter {
        column: f.column.clone(),
        predicate: f.predicate.clone(),
    };
    format!("filter:{shown}")
}

/// The structured steps for a set of interpretations, without prose.
pub fn gold_structure(resolutions: &[Resolution]) -> ReasoningPath {
    let mut s1 = BTreeSet::new();
    let mut s2 = BTreeSet::new();
    let mut s3 = BTreeSet::new();
    let mut s4 = BTreeSet::new();
    let mut s5 = BTreeSet::new();
    for r in resolutions {
        let c = &r.canonical;
        for e in &c.encodings {
            s1.insert(format!("column:{}", e.field));
            s3.insert(format!("encode:{}={}", e.channel, e.field));
            if let Some(a) = e.aggregate {
                s4.insert(format!("aggregate:{}={a}", e.channel));
            }
            if let Some(b) = e.bin {
                s4.insert(format!("bin:{}={b}", e.channel));
            }
        }
        for f in &c.filters {
            s1.insert(filter_action(f));
        }
        if let Some(t) = r.spec.task {
            s2.insert(format!("task:{t}"));
        }
        s2.insert(format!("chart:{}", c.mark));
        if let Some(s) = c.sort {
            s4.insert(format!("sort:{}={}", s.channel, s.order));
        }
        s5.insert(c.clone());
    }
    s2.extend(s1.iter().cloned());
    s3.extend(s2.iter().cloned());
    s4.extend(s3.iter().cloned());
    let step = |i: usize, actions: BTreeSet<String>| StepAnswer {
        step_index: i,
        actions,
        specs: BTreeSet::new(),
        prose: None,
    };
    ReasoningPath {
        steps: vec![
            step(1, s1),
            step(2, s2),
            step(3, s3),
            step(4, s4),
            StepAnswer {
                step_index: 5,
                actions: BTreeSet::new(),
                specs: s5,
                prose: None,
            },
        ],
    }
}

fn join_or(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [rest @ .., last] => format!("{} or {last}", rest.join(", ")),
    }
}

fn chart_plural(c: &str) -> String {
    match c.parse::<ChartType>() {
        Ok(ChartType::Bar) => "bar charts".into(),
        Ok(ChartType::Line) => "line charts".into(),
        Ok(ChartType::Pie) => "pie charts".into(),
        Ok(ChartType::Scatter) => "scatter plots".into(),
        Ok(ChartType::Heatmap) => "heatmaps".into(),
        Ok(ChartType::Boxplot) => "box plots".into(),
        Err(_) => format!("{c} charts"),
    }
}

fn with_prefix<'a>(actions: &'a BTreeSet<String>, prefix: &str) -> Vec<&'a str> {
    actions
        .iter()
        .filter_map(|a| a.strip_prefix(prefix))
        .collect()
}

/// Template rendering of one step.
pub fn template_prose(step: &StepAnswer) -> String {
    let a = &step.actions;
    let mut out = String::new();
    match step.step_index {
        1 => {
            let cols = with_prefix(a, "column:");
            let _ = write!(out, "The query draws on {}.", cols.join(" and "));
            if cols.len() > 2 {
                out.push_str(" Some of these are alternative readings of one phrase.");
            }
            for f in with_prefix(a, "filter:") {
                let _ = write!(out, " Rows are kept where {f}.");
            }
        }
        2 => {
            let charts: Vec<String> = with_prefix(a, "chart:").into_iter().map(chart_plural).collect();
            let purpose = match with_prefix(a, "task:").first() {
                Some(t) => format!("to show the {t}"),
                None => "for this data".into(),
            };
            if charts.len() > 1 {
                let _ = write!(out, "Either {} would be appropriate {purpose}.", join_or(&charts));
            } else {
                let _ = write!(out, "Only {} fit {purpose}.", join_or(&charts));
            }
        }
        3 => {
            let maps = with_prefix(a, "encode:");
            let _ = write!(out, "Channel mappings in play: {}.", maps.join("; "));
        }
        4 => {
            let mut t: Vec<&str> = Vec::new();
            for p in ["aggregate:", "bin:", "sort:"] {
                t.extend(a.iter().filter(|x| x.starts_with(p)).map(String::as_str));
            }
            if t.is_empty() {
                out.push_str("No transformation is needed.");
            } else {
                let _ = write!(out, "Transformations applied: {}.", t.join("; "));
            }
        }
        _ => {
            let n = step.specs.len();
            let noun = if n == 1 { "visualization" } else { "visualizations" };
            let _ = write!(out, "Combining the choices gives {n} valid {noun}.");
        }
    }
    out
}

fn prose_prompt(step: &StepAnswer, nl: &str) -> String {
    let mut decisions: Vec<String> = step.actions.iter().cloned().collect();
    decisions.extend(step.specs.iter().map(|s| s.to_string()));
    let vars = BTreeMap::from([
        ("step", step.step_index.to_string()),
        ("step_name", STEP_NAMES[step.step_index - 1].to_string()),
        ("nl", nl.to_string()),
        ("decisions", decisions.join("\n")),
    ]);
    llm::with_payload(
        &prompts::render(prompts::REASONING_STEP, &vars),
        &json!({ "nl": nl, "step": step }),
    )
}

/// Offline prose: the step template.
pub fn offline_prose(payload: &Value) -> Result<String, LlmError> {
    let step: StepAnswer = serde_json::from_value(payload.get("step").cloned().unwrap_or(Value::Null))
        .map_err(|e| LlmError::Malformed(format!("reasoning payload: {e}")))?;
    if !(1..=STEP_COUNT).contains(&step.step_index) {
        return Err(LlmError::Malformed(format!("no step {}", step.step_index)));
    }
    Ok(template_prose(&step))
}

/// The gold path of a sample. Structure comes from the interpretations; prose
/// from `chat` when given, else from templates.
pub fn derive_gold_path(
    resolutions: &[Resolution],
    nl: &str,
    chat: Option<(&dyn ChatModel, f32)>,
) -> Result<ReasoningPath, LlmError> {
    let mut path = gold_structure(resolutions);
    for step in &mut path.steps {
        let prose = match chat {
            Some((model, temperature)) => {
                let req = ChatRequest {
                    task: TaskKind::ReasoningStep,
                    messages: vec![ChatMessage::user(prose_prompt(step, nl))],
                    temperature,
                };
                model.complete(&req)?.trim().to_string()
            }
            None => template_prose(step),
        };
        step.prose = Some(prose);
    }
    Ok(path)
}

/// Smallest step whose structure differs from gold, or `None` when all agree.
pub fn first_error_step(
    pred: &ReasoningPath,
    gold: &ReasoningPath,
    policy: StepPolicy,
) -> Result<Option<usize>, ReasoningError> {
    pred.validate()?;
    gold.validate()?;
    Ok((1..=STEP_COUNT).find(|&k| !pred.step(k).agrees_with(gold.step(k), policy)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInput {
    pub table: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schema: Vec<String>,
    pub nl_query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub sample_id: String,
    pub input: PairInput,
    pub prefix: Vec<StepAnswer>,
    pub s_win: StepAnswer,
    pub s_lose: StepAnswer,
    pub first_error_index: usize,
}

/// One pair per prediction that goes wrong somewhere, taken at its first error.
pub fn build_preference_pairs(
    samples: &[BenchmarkSample],
    predictions: &[ReasoningPath],
    policy: StepPolicy,
    tables: Option<&TableStore>,
) -> Result<Vec<PreferencePair>, ReasoningError> {
    if samples.len() != predictions.len() {
        return Err(ReasoningError::Alignment {
            samples: samples.len(),
            predictions: predictions.len(),
        });
    }
    let mut out = Vec::new();
    for (s, pred) in samples.iter().zip(predictions) {
        let Some(k) = first_error_step(pred, &s.reasoning_path, policy)? else {
            continue;
        };
        let schema = tables
            .and_then(|t| t.get(&s.table_ref))
            .map(|t| {
                t.columns
                    .iter()
                    .map(|c| format!("{} ({})", c.name, c.dtype))
                    .collect()
            })
            .unwrap_or_default();
        out.push(PreferencePair {
            sample_id: s.id.clone(),
            input: PairInput {
                table: s.table_ref.clone(),
                schema,
                nl_query: s.nl_query.clone(),
            },
            prefix: pred.steps[..k - 1].to_vec(),
            s_win: s.reasoning_path.step(k).clone(),
            s_lose: pred.step(k).clone(),
            first_error_index: k,
        });
    }
    Ok(out)
}

/// Render a path in the step-tagged format fine-tuned models emit.
pub fn render_step_tagged(path: &ReasoningPath) -> String {
    let mut out = String::new();
    for s in &path.steps {
        let answer = if s.step_index == STEP_COUNT {
            serde_json::to_string(&s.specs).expect("specs serialize")
        } else {
            serde_json::to_string(&s.actions).expect("actions serialize")
        };
        let i = s.step_index;
        let _ = writeln!(
            out,
            "<step_{i}><thinking>{}</thinking><answer>{answer}</answer></step_{i}>",
            s.prose.as_deref().unwrap_or("")
        );
    }
    out
}

/// Text strictly between `open` and the matching `close`, starting at `from`.
fn tagged<'a>(text: &'a str, from: usize, tag: &str) -> Result<(&'a str, usize), ReasoningError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let rel = text[from..]
        .find(&open)
        .ok_or_else(|| ReasoningError::TagError(format!("missing {open}")))?;
    let start = from + rel + open.len();
    let end = text[start..]
        .find(&close)
        .map(|e| start + e)
        .ok_or_else(|| ReasoningError::TagError(format!("missing {close}")))?;
    Ok((&text[start..end], end + close.len()))
}

fn parse_spec(v: &Value) -> Result<CanonicalSpec, ReasoningError> {
    if v.get("encoding").is_some() {
        let spec = vegalite::from_vegalite(v)
            .map_err(|e| ReasoningError::TagError(format!("step 5 chart: {e}")))?;
        return Ok(canonicalize(&spec));
    }
    serde_json::from_value(v.clone())
        .map_err(|e| ReasoningError::TagError(format!("step 5 spec: {e}")))
}

/// Parse step-tagged model output. Text around the step blocks is ignored;
/// each step must close before the next opens.
pub fn parse_step_tagged_output(text: &str) -> Result<ReasoningPath, ReasoningError> {
    let mut pos = 0;
    let mut steps = Vec::with_capacity(STEP_COUNT);
    for i in 1..=STEP_COUNT {
        let tag = format!("step_{i}");
        let (body, next) = tagged(text, pos, &tag)?;
        if let Some(j) = (1..=STEP_COUNT).find(|j| *j != i && body.contains(&format!("<step_{j}>"))) {
            return Err(ReasoningError::TagError(format!("<step_{j}> nested inside <{tag}>")));
        }
        let (thinking, after) = tagged(body, 0, "thinking")?;
        let (answer, _) = tagged(body, after, "answer")?;
        let v: Value = serde_json::from_str(answer.trim())
            .map_err(|e| ReasoningError::TagError(format!("step {i} answer: {e}")))?;
        let list = v
            .as_array()
            .ok_or_else(|| ReasoningError::TagError(format!("step {i} answer is not a list")))?;
        let mut step = StepAnswer {
            step_index: i,
            actions: BTreeSet::new(),
            specs: BTreeSet::new(),
            prose: Some(thinking.trim().to_string()).filter(|p| !p.is_empty()),
        };
        if i == STEP_COUNT {
            for x in list {
                step.specs.insert(parse_spec(x)?);
            }
        } else {
            for x in list {
                let a = x
                    .as_str()
                    .ok_or_else(|| ReasoningError::TagError(format!("step {i} action {x}")))?;
                step.actions.insert(a.trim().to_string());
            }
        }
        steps.push(step);
        pos = next;
    }
    Ok(ReasoningPath { steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::DesignRules;
    use crate::solver::resolve_detailed;
    use crate::test_support::{movies_tree, movies};
    use crate::vis::{
        ActionNode, Channel, OperationKind, Param, VisTree,
    };


    fn movies_path() -> ReasoningPath {
        let t = movies();
        let res = resolve_detailed(&movies_tree(), &DesignRules::default(), &t).unwrap();
        derive_gold_path(&res, "Show the gross trends of comedy and action movies", None).unwrap()
    }

    #[test]
    fn fig1_path_keeps_both_charts_open() {
        let p = movies_path();
        p.validate().unwrap();
        assert!(p.is_cumulative());
        let s2 = p.step(2).prose.as_deref().unwrap();
        assert!(s2.contains("bar charts") && s2.contains("line charts"), "{s2}");
        assert!(s2.starts_with("Either"));
        assert_eq!(p.step(5).specs.len(), 4);
        assert!(p.step(1).actions.contains("column:local_gross"));
        assert!(p.step(1).actions.contains("column:world_gross"));
    }

    #[test]
    fn explicit_seed_has_single_options() {
        let t = movies();
        let tree = VisTree::new(
            "movies",
            vec![
                ActionNode::explicit(OperationKind::Mark, Param::Chart(ChartType::Bar)),
                ActionNode::explicit(OperationKind::ChannelMap(Channel::X), Param::Column("Genre".into())),
                ActionNode::explicit(OperationKind::ChannelMap(Channel::Y), Param::Column("Budget".into())),
                ActionNode::explicit(
                    OperationKind::Aggregate(Channel::Y),
                    Param::Aggregate(crate::vis::AggregateOp::Sum),
                ),
            ],
        );
        let res = resolve_detailed(&tree, &DesignRules::default(), &t).unwrap();
        let p = derive_gold_path(&res, "q", None).unwrap();
        assert_eq!(with_prefix(&p.step(2).actions, "chart:"), ["bar"]);
        assert_eq!(p.step(5).specs.len(), 1);
    }

    #[test]
    fn first_error_is_located() {
        let gold = movies_path();
        assert_eq!(first_error_step(&gold, &gold, StepPolicy::Exact).unwrap(), None);

        let mut p = gold.clone();
        p.steps[2].actions.insert("encode:color=genre".into());
        assert_eq!(first_error_step(&p, &gold, StepPolicy::Exact).unwrap(), Some(3));

        let mut p = gold.clone();
        let first = p.steps[4].specs.iter().next().unwrap().clone();
        p.steps[4].specs.remove(&first);
        assert_eq!(first_error_step(&p, &gold, StepPolicy::Exact).unwrap(), Some(5));
        assert_eq!(first_error_step(&p, &gold, StepPolicy::SubsetTolerant).unwrap(), None);

        let mut p = gold.clone();
        p.steps.pop();
        assert!(matches!(
            first_error_step(&p, &gold, StepPolicy::Exact),
            Err(ReasoningError::MalformedPath(_))
        ));
    }

    #[test]
    fn prose_does_not_affect_step_equality() {
        let gold = movies_path();
        let mut p = gold.clone();
        for s in &mut p.steps {
            s.prose = Some("different words".into());
        }
        assert_eq!(first_error_step(&p, &gold, StepPolicy::Exact).unwrap(), None);
    }

    #[test]
    fn tagged_format_round_trips() {
        let gold = movies_path();
        let text = format!("Here is my answer.\n{}\nDone.", render_step_tagged(&gold));
        let back = parse_step_tagged_output(&text).unwrap();
        assert_eq!(back, gold);
    }

    #[test]
    fn tagged_vegalite_answers_are_canonicalized() {
        let t = movies();
        let res = resolve_detailed(&movies_tree(), &DesignRules::default(), &t).unwrap();
        let gold = gold_structure(&res);
        let charts: Vec<Value> = res
            .iter()
            .map(|r| vegalite::to_vegalite_value(&r.spec, "movies"))
            .collect();
        let mut text = String::new();
        for s in &gold.steps[..4] {
            let i = s.step_index;
            let a = serde_json::to_string(&s.actions).unwrap();
            text.push_str(&format!("<step_{i}>\n <thinking> x </thinking>\n <answer> {a} </answer>\n</step_{i}>\n"));
        }
        text.push_str(&format!(
            "<step_5><thinking></thinking><answer>{}</answer></step_5>",
            serde_json::to_string(&charts).unwrap()
        ));
        let back = parse_step_tagged_output(&text).unwrap();
        assert_eq!(first_error_step(&back, &gold, StepPolicy::Exact).unwrap(), None);
    }

    #[test]
    fn broken_tags_are_rejected() {
        let text = render_step_tagged(&movies_path()).replace("</step_3>", "");
        assert!(matches!(parse_step_tagged_output(&text), Err(ReasoningError::TagError(_))));
        let text = render_step_tagged(&movies_path()).replace("<answer>", "");
        assert!(parse_step_tagged_output(&text).is_err());
    }

    #[test]
    fn offline_prose_matches_template() {
        let gold = movies_path();
        let s = gold.step(2);
        let v = json!({ "nl": "q", "step": s });
        assert_eq!(offline_prose(&v).unwrap(), template_prose(s));
        let with_model =
            derive_gold_path(&resolve_detailed(&movies_tree(), &DesignRules::default(), &movies()).unwrap(), "q", Some((&crate::llm::NullChat, 0.0)))
                .unwrap();
        assert_eq!(with_model.step(2).prose, gold.step(2).prose);
    }
}
