//! Surface wording of nodes and word-level matching.

use crate::metadata::{content_tokens, rule_standardize, AmbiguityMetadata};
use crate::table::{DataType, Table};
use crate::vis::{
    ActionNode, AggregateOp, AmbiguityTag, BinUnit, Channel, ChartType, Filter,
    OperationKind, Param, Predicate, SortOrder,
};

/// Lower-case alphanumeric words of `s`.
pub fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Start indices of every occurrence of `needle` as a contiguous word run in `hay`.
pub fn occurrences(hay: &[String], needle: &[String]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i..i + needle.len()] == *needle)
        .collect()
}

pub fn contains_words(hay: &str, needle: &str) -> bool {
    !occurrences(&words(hay), &words(needle)).is_empty()
}

/// Ways a reader might write a column name: the raw name with separators
/// as spaces, and its descriptive phrase.
pub fn column_surfaces(col: &str, meta: Option<&AmbiguityMetadata>) -> Vec<String> {
    let mut out = vec![col.replace(['_', '-'], " ").to_lowercase()];
    let phrase = match meta {
        Some(m) => m.phrase(col),
        None => rule_standardize(col).unwrap_or_else(|_| col.to_lowercase()),
    };
    if !out.contains(&phrase) {
        out.push(phrase);
    }
    out
}

pub fn chart_phrase(c: ChartType) -> &'static str {
    match c {
        ChartType::Bar => "bar chart",
        ChartType::Line => "line chart",
        ChartType::Pie => "pie chart",
        ChartType::Scatter => "scatter plot",
        ChartType::Heatmap => "heatmap",
        ChartType::Boxplot => "box plot",
    }
}

fn chart_words(c: ChartType) -> &'static [&'static str] {
    match c {
        ChartType::Bar => &["bar"],
        ChartType::Line => &["line"],
        ChartType::Pie => &["pie", "arc"],
        ChartType::Scatter => &["scatter", "point"],
        ChartType::Heatmap => &["heatmap", "heat map"],
        ChartType::Boxplot => &["boxplot", "box plot"],
    }
}

pub fn aggregate_phrase(a: AggregateOp) -> &'static str {
    match a {
        AggregateOp::Mean => "average",
        AggregateOp::Sum => "total",
        AggregateOp::Count => "number of",
        AggregateOp::Min => "minimum",
        AggregateOp::Max => "maximum",
    }
}

fn aggregate_words(a: AggregateOp) -> &'static [&'static str] {
    match a {
        AggregateOp::Mean => &["average", "mean"],
        AggregateOp::Sum => &["total", "sum"],
        AggregateOp::Count => &["number of", "count"],
        AggregateOp::Min => &["minimum", "min", "lowest"],
        AggregateOp::Max => &["maximum", "max", "highest"],
    }
}

fn bin_phrase(b: BinUnit) -> &'static str {
    match b {
        BinUnit::Year => "by year",
        BinUnit::Month => "by month",
    }
}

fn order_phrase(o: SortOrder) -> &'static str {
    match o {
        SortOrder::Ascending => "in ascending order",
        SortOrder::Descending => "in descending order",
    }
}

fn predicate_phrase(f: &Filter, temporal: bool) -> String {
    let (before, after) = if temporal {
        ("before", "after")
    } else {
        ("below", "above")
    };
    match &f.predicate {
        Predicate::OneOf(v) => v.join(" or "),
        Predicate::Equal(x) => x.clone(),
        Predicate::Gt(x) => format!("{after} {x}"),
        Predicate::Gte(x) => format!("from {x} on"),
        Predicate::Lt(x) => format!("{before} {x}"),
        Predicate::Lte(x) => format!("up to {x}"),
    }
}

/// Whether `phrase` names the value `p` outright.
pub fn names_param(phrase: &str, p: &Param, meta: Option<&AmbiguityMetadata>) -> bool {
    let any = |cands: &[&str]| cands.iter().any(|c| contains_words(phrase, c));
    match p {
        Param::Column(c) => column_surfaces(c, meta)
            .iter()
            .any(|s| contains_words(phrase, s)),
        Param::Filter(f) => column_surfaces(&f.column, meta)
            .iter()
            .any(|s| contains_words(phrase, s)),
        Param::Chart(c) => any(chart_words(*c)),
        Param::Task(t) => contains_words(phrase, t.as_str()),
        Param::Aggregate(a) => any(aggregate_words(*a)),
        Param::Bin(b) => contains_words(phrase, b.as_str()),
        Param::Order(o) => contains_words(phrase, o.as_str()),
    }
}

fn vague_column(dtype: Option<DataType>) -> &'static str {
    match dtype {
        Some(DataType::Temporal) => "over time",
        Some(DataType::Quantitative) => "amount",
        Some(DataType::Categorical) => "group",
        None => "breakdown",
    }
}

/// A term close to every alternative column without naming any of them.
pub fn shared_term(cols: &[&str], meta: Option<&AmbiguityMetadata>) -> String {
    if let Some(t) = meta.and_then(|m| m.shared_term(cols)) {
        return t;
    }
    let phrases: Vec<Vec<String>> = cols
        .iter()
        .map(|c| content_tokens(&column_surfaces(c, meta).pop().unwrap_or_default()))
        .collect();
    phrases
        .first()
        .and_then(|first| {
            first
                .iter()
                .find(|w| phrases.iter().all(|p| p.contains(w)))
                .cloned()
        })
        .unwrap_or_else(|| "value".into())
}

/// The phrase a node should be referred to by, respecting its ambiguity type.
pub fn suggest_reference(n: &ActionNode, table: &Table, meta: Option<&AmbiguityMetadata>) -> String {
    let gold = n.params.first();
    let dtype = |c: &str| table.column(c).map(|c| c.dtype);
    match (n.op, n.tag) {
        (OperationKind::Mark, AmbiguityTag::Explicit) => match gold {
            Some(Param::Chart(c)) => chart_phrase(*c).into(),
            _ => "chart".into(),
        },
        (OperationKind::Mark, _) => "chart".into(),
        (OperationKind::Task, AmbiguityTag::Explicit) => match gold {
            Some(Param::Task(t)) => t.as_str().into(),
            _ => "pattern".into(),
        },
        (OperationKind::Task, _) => "pattern".into(),
        (OperationKind::ChannelMap(_) | OperationKind::DataColumnSelect, tag) => {
            let cols: Vec<&str> = n.params.iter().filter_map(Param::as_column).collect();
            match (tag, cols.as_slice()) {
                (AmbiguityTag::Explicit, [c]) => column_surfaces(c, meta).pop().unwrap_or_default(),
                (AmbiguityTag::Ambiguous, cs) => shared_term(cs, meta),
                (_, [c, ..]) => vague_column(dtype(c)).into(),
                _ => vague_column(None).into(),
            }
        }
        (OperationKind::Aggregate(_), AmbiguityTag::Explicit) => match gold {
            Some(Param::Aggregate(a)) => aggregate_phrase(*a).into(),
            _ => "overall".into(),
        },
        (OperationKind::Aggregate(_), _) => "overall".into(),
        (OperationKind::Bin(_), AmbiguityTag::Explicit) => match gold {
            Some(Param::Bin(b)) => bin_phrase(*b).into(),
            _ => "over the period".into(),
        },
        (OperationKind::Bin(_), _) => "over the period".into(),
        (OperationKind::Sort(_), AmbiguityTag::Explicit) => match gold {
            Some(Param::Order(o)) => order_phrase(*o).into(),
            _ => "ranked".into(),
        },
        (OperationKind::Sort(_), _) => "ranked".into(),
        (OperationKind::DataValueFilter, tag) => match gold {
            Some(Param::Filter(f)) => {
                let temporal = dtype(&f.column) == Some(DataType::Temporal);
                let pred = predicate_phrase(f, temporal);
                if tag == AmbiguityTag::Explicit {
                    let col = column_surfaces(&f.column, meta).pop().unwrap_or_default();
                    format!("{col} {pred}")
                } else {
                    pred
                }
            }
            _ => "selected records".into(),
        },
    }
}

/// Words that open a query of each style.
pub fn style_frame(style: super::NlStyle) -> (&'static str, &'static str) {
    match style {
        super::NlStyle::Question => ("Can you plot a ", "?"),
        super::NlStyle::Command => ("Show a ", "."),
        super::NlStyle::Caption => ("A ", "."),
    }
}

/// One referenced node as the composer sees it.
pub struct Slot<'a> {
    pub op: OperationKind,
    pub reference: &'a str,
}

/// Assemble a query that contains every reference verbatim.
pub fn compose(style: super::NlStyle, slots: &[Slot<'_>]) -> String {
    let find = |pred: &dyn Fn(OperationKind) -> bool| -> Vec<&Slot<'_>> {
        slots.iter().filter(|s| pred(s.op)).collect()
    };
    let mut parts: Vec<String> = Vec::new();
    let marks = find(&|op| op == OperationKind::Mark);
    match marks.first() {
        Some(m) => parts.push(m.reference.to_string()),
        None => parts.push("chart".into()),
    }
    for t in find(&|op| op == OperationKind::Task) {
        parts.push(format!("showing the {}", t.reference));
    }
    let of_channel = |ch: Channel, mk: fn(Channel) -> OperationKind| -> Option<&str> {
        slots.iter().find(|s| s.op == mk(ch)).map(|s| s.reference)
    };
    let column_segment = |ch: Channel, col: &str| -> String {
        let mut seg = String::new();
        if let Some(a) = of_channel(ch, OperationKind::Aggregate) {
            seg.push_str(a);
            seg.push(' ');
        }
        seg.push_str(col);
        if let Some(b) = of_channel(ch, OperationKind::Bin) {
            seg.push(' ');
            seg.push_str(b);
        }
        seg
    };
    let mut first_measure = true;
    for ch in [Channel::Y, Channel::Theta, Channel::Size, Channel::X, Channel::Color] {
        if let Some(col) = of_channel(ch, OperationKind::ChannelMap) {
            let lead = match ch {
                Channel::X if col.starts_with("over ") || col.starts_with("by ") => "",
                Channel::X => "across",
                Channel::Color => "split by",
                _ if first_measure => "of",
                _ => "and",
            };
            if !matches!(ch, Channel::X | Channel::Color) {
                first_measure = false;
            }
            let seg = column_segment(ch, col);
            parts.push(if lead.is_empty() { seg } else { format!("{lead} {seg}") });
        }
    }
    for s in find(&|op| op == OperationKind::DataColumnSelect) {
        parts.push(format!("with {}", s.reference));
    }
    for s in find(&|op| op == OperationKind::DataValueFilter) {
        parts.push(format!("for {}", s.reference));
    }
    for s in find(&|op| matches!(op, OperationKind::Sort(_))) {
        parts.push(s.reference.to_string());
    }
    let (open, close) = style_frame(style);
    format!("{open}{}{close}", parts.join(" "))
}
