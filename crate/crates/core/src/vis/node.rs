//! Action nodes and visualization trees.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{
    AggregateOp, AmbiguityCategory, AnalyticTask, BinUnit, Channel, ChartType, Filter, SortOrder,
    VisError,
};
use crate::table::Table;

/// How a node's value is conveyed by the natural-language query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityTag {
    Explicit,
    Ambiguous,
    Implicit,
}

impl fmt::Display for AmbiguityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AmbiguityTag::Explicit => "explicit",
            AmbiguityTag::Ambiguous => "ambiguous",
            AmbiguityTag::Implicit => "implicit",
        })
    }
}

/// The construction action a node performs.
///
/// Transform operations carry the channel they apply to. On the wire this is a
/// short string: `select`, `filter`, `task`, `mark`, `encode:x`, `aggregate:y`,
/// `bin:x`, `sort:y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperationKind {
    /// A column the chart must show, on a channel the design rules pick.
    DataColumnSelect,
    DataValueFilter,
    Task,
    Mark,
    ChannelMap(Channel),
    Aggregate(Channel),
    Bin(Channel),
    Sort(Channel),
}

impl OperationKind {
    pub fn channel(self) -> Option<Channel> {
        match self {
            OperationKind::ChannelMap(c)
            | OperationKind::Aggregate(c)
            | OperationKind::Bin(c)
            | OperationKind::Sort(c) => Some(c),
            _ => None,
        }
    }

    /// Whether the node's params are column names.
    pub fn selects_column(self) -> bool {
        matches!(
            self,
            OperationKind::DataColumnSelect | OperationKind::ChannelMap(_)
        )
    }

    fn accepts(self, p: &Param) -> bool {
        matches!(
            (self, p),
            (OperationKind::DataColumnSelect, Param::Column(_))
                | (OperationKind::ChannelMap(_), Param::Column(_))
                | (OperationKind::DataValueFilter, Param::Filter(_))
                | (OperationKind::Task, Param::Task(_))
                | (OperationKind::Mark, Param::Chart(_))
                | (OperationKind::Aggregate(_), Param::Aggregate(_))
                | (OperationKind::Bin(_), Param::Bin(_))
                | (OperationKind::Sort(_), Param::Order(_))
        )
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperationKind::DataColumnSelect => f.write_str("select"),
            OperationKind::DataValueFilter => f.write_str("filter"),
            OperationKind::Task => f.write_str("task"),
            OperationKind::Mark => f.write_str("mark"),
            OperationKind::ChannelMap(c) => write!(f, "encode:{c}"),
            OperationKind::Aggregate(c) => write!(f, "aggregate:{c}"),
            OperationKind::Bin(c) => write!(f, "bin:{c}"),
            OperationKind::Sort(c) => write!(f, "sort:{c}"),
        }
    }
}

impl FromStr for OperationKind {
    type Err = VisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || VisError::UnknownOperation(s.to_string());
        let op = match s {
            "select" => OperationKind::DataColumnSelect,
            "filter" => OperationKind::DataValueFilter,
            "task" => OperationKind::Task,
            "mark" => OperationKind::Mark,
            _ => {
                let (head, ch) = s.split_once(':').ok_or_else(unknown)?;
                let ch: Channel = ch.parse().map_err(|_| unknown())?;
                match head {
                    "encode" => OperationKind::ChannelMap(ch),
                    "aggregate" => OperationKind::Aggregate(ch),
                    "bin" => OperationKind::Bin(ch),
                    "sort" => OperationKind::Sort(ch),
                    _ => return Err(unknown()),
                }
            }
        };
        Ok(op)
    }
}

impl Serialize for OperationKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OperationKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One parameter value; which variant is legal depends on the node's operation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Column(String),
    Filter(Filter),
    Task(AnalyticTask),
    Chart(ChartType),
    Aggregate(AggregateOp),
    Bin(BinUnit),
    Order(SortOrder),
}

impl Param {
    pub fn as_column(&self) -> Option<&str> {
        match self {
            Param::Column(c) => Some(c),
            _ => None,
        }
    }

    /// Surface text of the value, as a reader of the chart would name it.
    pub fn surface(&self) -> String {
        match self {
            Param::Column(c) => c.clone(),
            Param::Filter(f) => f.to_string(),
            Param::Task(t) => t.to_string(),
            Param::Chart(c) => c.to_string(),
            Param::Aggregate(a) => a.to_string(),
            Param::Bin(b) => b.to_string(),
            Param::Order(o) => o.to_string(),
        }
    }
}

/// A construction action `(tag, op, params)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionNode {
    pub tag: AmbiguityTag,
    pub op: OperationKind,
    #[serde(default)]
    pub params: Vec<Param>,
    /// Set on nodes produced by ambiguity injection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<AmbiguityCategory>,
}

impl ActionNode {
    pub fn explicit(op: OperationKind, param: Param) -> Self {
        Self {
            tag: AmbiguityTag::Explicit,
            op,
            params: vec![param],
            category: None,
        }
    }

    pub fn ambiguous(op: OperationKind, params: Vec<Param>) -> Self {
        Self {
            tag: AmbiguityTag::Ambiguous,
            op,
            params,
            category: None,
        }
    }

    pub fn implicit(op: OperationKind, params: Vec<Param>) -> Self {
        Self {
            tag: AmbiguityTag::Implicit,
            op,
            params,
            category: None,
        }
    }

    pub fn with_category(mut self, c: AmbiguityCategory) -> Self {
        self.category = Some(c);
        self
    }

    /// The single value of an explicit node.
    pub fn value(&self) -> Option<&Param> {
        match (self.tag, self.params.as_slice()) {
            (AmbiguityTag::Explicit, [p]) => Some(p),
            _ => None,
        }
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.params.iter().filter_map(|p| match p {
            Param::Column(c) => Some(c.as_str()),
            Param::Filter(f) => Some(f.column.as_str()),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<(), VisError> {
        if let Some(p) = self.params.iter().find(|p| !self.op.accepts(p)) {
            return Err(VisError::InvalidNode(format!(
                "operation `{}` does not take parameter {:?}",
                self.op, p
            )));
        }
        let distinct: BTreeSet<&Param> = self.params.iter().collect();
        match self.tag {
            AmbiguityTag::Explicit if self.params.len() != 1 => Err(VisError::InvalidNode(
                format!("explicit `{}` node needs exactly one parameter", self.op),
            )),
            AmbiguityTag::Ambiguous if distinct.len() < 2 || distinct.len() != self.params.len() => {
                Err(VisError::InvalidNode(format!(
                    "ambiguous `{}` node needs at least two distinct alternatives",
                    self.op
                )))
            }
            _ => Ok(()),
        }
    }
}

/// An ambiguity-aware visualization tree: an ordered list of action nodes over one table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisTree {
    #[serde(rename = "table")]
    pub table_ref: String,
    pub nodes: Vec<ActionNode>,
}

impl VisTree {
    pub fn new(table_ref: impl Into<String>, nodes: Vec<ActionNode>) -> Self {
        Self {
            table_ref: table_ref.into(),
            nodes,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, VisError> {
        serde_json::from_str(text).map_err(|e| VisError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serializes")
    }

    pub fn is_all_explicit(&self) -> bool {
        self.nodes.iter().all(|n| n.tag == AmbiguityTag::Explicit)
    }

    pub fn find(&self, op: OperationKind) -> Option<(usize, &ActionNode)> {
        self.nodes.iter().enumerate().find(|(_, n)| n.op == op)
    }

    pub fn mark_node(&self) -> Option<(usize, &ActionNode)> {
        self.find(OperationKind::Mark)
    }

    /// Structural invariants, independent of any table.
    pub fn validate(&self) -> Result<(), VisError> {
        let mut singletons = BTreeSet::new();
        for n in &self.nodes {
            n.validate()?;
            let unique = match n.op {
                OperationKind::DataColumnSelect | OperationKind::DataValueFilter => false,
                _ => true,
            };
            if unique && !singletons.insert(n.op) {
                return Err(VisError::InvalidTree(format!(
                    "more than one `{}` node",
                    n.op
                )));
            }
        }
        Ok(())
    }

    /// Invariants plus: every referenced column exists in `table`.
    pub fn validate_against(&self, table: &Table) -> Result<(), VisError> {
        self.validate()?;
        if self.table_ref != table.name {
            return Err(VisError::InvalidTree(format!(
                "tree refers to table `{}`, got `{}`",
                self.table_ref, table.name
            )));
        }
        for n in &self.nodes {
            for c in n.columns() {
                if table.column(c).is_none() {
                    return Err(VisError::UnknownColumn(c.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Categories of the injected nodes, sorted and deduplicated.
    pub fn categories(&self) -> Vec<AmbiguityCategory> {
        self.nodes
            .iter()
            .filter_map(|n| n.category)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The prompt-facing view of the tree: one object per node keyed by an
    /// operation label plus `ambiguity_type`.
    pub fn prompt_view(&self) -> serde_json::Value {
        use serde_json::{json, Value};
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                let label = match n.op {
                    OperationKind::DataColumnSelect | OperationKind::ChannelMap(_) => "Select",
                    OperationKind::DataValueFilter => "Filter",
                    OperationKind::Task => "Task",
                    OperationKind::Mark => "Mark",
                    OperationKind::Aggregate(_) => "Aggregate",
                    OperationKind::Bin(_) => "Bin",
                    OperationKind::Sort(_) => "Sort",
                };
                let vals: Vec<Value> = n.params.iter().map(|p| json!(p.surface())).collect();
                let value = match vals.len() {
                    0 => Value::Null,
                    1 => vals.into_iter().next().unwrap(),
                    _ => Value::Array(vals),
                };
                let mut obj = serde_json::Map::new();
                obj.insert(label.to_string(), value);
                if let Some(c) = n.op.channel() {
                    obj.insert("Channel".into(), json!(c.to_string()));
                }
                obj.insert("ambiguity_type".into(), json!(n.tag.to_string()));
                Value::Object(obj)
            })
            .collect();
        Value::Array(nodes)
    }
}

/// A fully determined tree: every node explicit, no column selections left
/// without a channel. Only the solver constructs these for ambiguous input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedTree {
    #[serde(rename = "table")]
    pub table_ref: String,
    pub nodes: Vec<ActionNode>,
}

impl ResolvedTree {
    /// Checks the structural part of the invariant; hard constraints are the solver's job.
    pub fn new(table_ref: impl Into<String>, nodes: Vec<ActionNode>) -> Result<Self, VisError> {
        for n in &nodes {
            n.validate()?;
            if n.tag != AmbiguityTag::Explicit {
                return Err(VisError::Unresolved(format!("node `{}` is {}", n.op, n.tag)));
            }
            if n.op == OperationKind::DataColumnSelect {
                return Err(VisError::Unresolved(
                    "column selection without a channel".into(),
                ));
            }
        }
        Ok(Self {
            table_ref: table_ref.into(),
            nodes,
        })
    }

    pub fn as_tree(&self) -> VisTree {
        VisTree::new(self.table_ref.clone(), self.nodes.clone())
    }
}
