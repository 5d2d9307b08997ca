use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use super::constraints::{builtin_constraints, Candidate, Ctx, HardConstraint, Violation};
use super::SolverError;
use crate::rules::DesignRules;
use crate::table::{DataType, Table};
use crate::vis::{
    ActionNode, AggregateOp, AmbiguityTag, AnalyticTask, Channel, OperationKind, Param, SortOrder,
};

/// One value an attribute slot can take.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrValue {
    /// The slot is left empty and its node dropped.
    None,
    Param(Param),
    Channel(Channel),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::None => f.write_str("none"),
            AttrValue::Param(p) => write!(f, "{:?}", p.surface()),
            AttrValue::Channel(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub kind: String,
    pub parent: Option<String>,
    pub id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    Value,
    /// The channel a column selection lands on.
    Channel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub key: (String, String),
    pub entity: String,
    pub domain: Vec<AttrValue>,
    pub node: usize,
    pub role: SlotRole,
}

/// Pick between `lo` and `hi` values from the attribute's domain (`none` counts as zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChoiceRule {
    pub attribute: usize,
    pub lo: usize,
    pub hi: usize,
}

/// A complete assignment: one value per attribute, indexed like `attributes`.
pub type Assignment = Vec<AttrValue>;

/// A finite constraint program compiled from one tree.
#[derive(Clone)]
pub struct ConstraintProgram {
    pub table_ref: String,
    pub entities: Vec<Entity>,
    pub attributes: Vec<Attribute>,
    pub choice_rules: Vec<ChoiceRule>,
    pub hard_constraints: Vec<HardConstraint>,
    pub dtypes: BTreeMap<String, DataType>,
    pub rules: DesignRules,
    nodes: Vec<ActionNode>,
    order: Vec<usize>,
}

fn entity_for(op: OperationKind, i: usize) -> String {
    match op {
        OperationKind::Mark => "m0".into(),
        OperationKind::Task => "task".into(),
        OperationKind::ChannelMap(ch)
        | OperationKind::Aggregate(ch)
        | OperationKind::Bin(ch)
        | OperationKind::Sort(ch) => format!("enc_{ch}"),
        OperationKind::DataColumnSelect => format!("sel_{i}"),
        OperationKind::DataValueFilter => format!("filter_{i}"),
    }
}

fn attr_key(op: OperationKind, role: SlotRole) -> (String, String) {
    let (a, b) = match (op, role) {
        (OperationKind::Mark, _) => ("mark", "type"),
        (OperationKind::Task, _) => ("task", "type"),
        (OperationKind::ChannelMap(_), _) => ("encoding", "field"),
        (OperationKind::DataColumnSelect, SlotRole::Value) => ("encoding", "field"),
        (OperationKind::DataColumnSelect, SlotRole::Channel) => ("encoding", "channel"),
        (OperationKind::Aggregate(_), _) => ("encoding", "aggregate"),
        (OperationKind::Bin(_), _) => ("encoding", "bin"),
        (OperationKind::Sort(_), _) => ("encoding", "sort"),
        (OperationKind::DataValueFilter, _) => ("filter", "predicate"),
    };
    (a.to_string(), b.to_string())
}

/// Enumeration precedence: mark, task, encodings by channel, free selections, transforms.
fn precedence(op: OperationKind) -> usize {
    match op {
        OperationKind::Mark => 0,
        OperationKind::Task => 1,
        OperationKind::ChannelMap(ch) => 2 + Channel::ALL.iter().position(|c| *c == ch).unwrap(),
        OperationKind::DataColumnSelect => 7,
        OperationKind::Aggregate(_) => 8,
        OperationKind::Bin(_) => 9,
        OperationKind::Sort(_) => 10,
        OperationKind::DataValueFilter => 11,
    }
}

fn push_unique(v: &mut Vec<AttrValue>, x: AttrValue) {
    if !v.contains(&x) {
        v.push(x);
    }
}

impl ConstraintProgram {
    /// Translate a tree into attribute slots, choice rules and the grammar's hard constraints.
    pub fn compile(tree: &crate::vis::VisTree, rules: &DesignRules, table: &Table) -> Result<Self, SolverError> {
        tree.validate_against(table).map_err(SolverError::from)?;

        let columns: Vec<AttrValue> = table
            .columns
            .iter()
            .map(|c| AttrValue::Param(Param::Column(c.name.clone())))
            .collect();
        let channels: Vec<AttrValue> = Channel::ALL.iter().map(|c| AttrValue::Channel(*c)).collect();
        let stated_task = tree.nodes.iter().find_map(|n| match (n.op, n.value()) {
            (OperationKind::Task, Some(Param::Task(t))) => Some(*t),
            _ => None,
        });

        let mut entities = vec![
            Entity {
                kind: "view".into(),
                parent: None,
                id: "root".into(),
            },
            Entity {
                kind: "mark".into(),
                parent: Some("root".into()),
                id: "m0".into(),
            },
        ];
        let mut attributes = Vec::new();
        for (i, n) in tree.nodes.iter().enumerate() {
            let entity = entity_for(n.op, i);
            if !entities.iter().any(|e| e.id == entity) {
                let (kind, parent) = match n.op {
                    OperationKind::Task => ("task", "root"),
                    OperationKind::DataValueFilter => ("transform", "root"),
                    _ => ("encoding", "m0"),
                };
                entities.push(Entity {
                    kind: kind.into(),
                    parent: Some(parent.into()),
                    id: entity.clone(),
                });
            }
            let stated: Vec<AttrValue> = n.params.iter().cloned().map(AttrValue::Param).collect();
            let domain = match n.tag {
                AmbiguityTag::Explicit | AmbiguityTag::Ambiguous => stated,
                AmbiguityTag::Implicit => implicit_domain(n, rules, stated_task, &columns),
            };
            attributes.push(Attribute {
                key: attr_key(n.op, SlotRole::Value),
                entity: entity.clone(),
                domain,
                node: i,
                role: SlotRole::Value,
            });
            if n.op == OperationKind::DataColumnSelect {
                attributes.push(Attribute {
                    key: attr_key(n.op, SlotRole::Channel),
                    entity,
                    domain: channels.clone(),
                    node: i,
                    role: SlotRole::Channel,
                });
            }
        }

        let choice_rules = attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.domain.len() > 1)
            .map(|(i, a)| ChoiceRule {
                attribute: i,
                lo: usize::from(!a.domain.contains(&AttrValue::None)),
                hi: 1,
            })
            .collect();

        let mut order: Vec<usize> = (0..attributes.len()).collect();
        order.sort_by_key(|&i| {
            let a = &attributes[i];
            (precedence(tree.nodes[a.node].op), a.node, a.role == SlotRole::Channel)
        });

        Ok(Self {
            table_ref: tree.table_ref.clone(),
            entities,
            attributes,
            choice_rules,
            hard_constraints: builtin_constraints(rules),
            dtypes: table
                .columns
                .iter()
                .map(|c| (c.name.clone(), c.dtype))
                .collect(),
            rules: rules.clone(),
            nodes: tree.nodes.clone(),
            order,
        })
    }

    /// Add a named hard constraint; names must stay unique.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        check: impl Fn(&Candidate) -> Option<String> + Send + Sync + 'static,
    ) -> Result<(), SolverError> {
        let name = name.into();
        if self.hard_constraints.iter().any(|c| c.name() == name) {
            return Err(SolverError::DuplicateConstraint(name));
        }
        self.hard_constraints.push(HardConstraint::Custom {
            name,
            check: Arc::new(check),
        });
        Ok(())
    }

    pub fn nodes(&self) -> &[ActionNode] {
        &self.nodes
    }

    /// Attribute indices in enumeration order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of raw combinations before any constraint.
    pub fn cross_product(&self) -> u128 {
        self.attributes
            .iter()
            .map(|a| a.domain.len() as u128)
            .product()
    }

    /// Explicit nodes for the given slot values. Slots absent from `values`
    /// leave their node out, which is how partial assignments are read.
    pub(crate) fn reify_partial(&self, values: &[Option<&AttrValue>]) -> Vec<ActionNode> {
        let mut value_of: Vec<Option<&AttrValue>> = vec![None; self.nodes.len()];
        let mut channel_of: Vec<Option<Channel>> = vec![None; self.nodes.len()];
        let mut complete = vec![true; self.nodes.len()];
        for (a, v) in self.attributes.iter().zip(values) {
            match (a.role, v) {
                (_, None) => complete[a.node] = false,
                (SlotRole::Value, Some(v)) => value_of[a.node] = Some(*v),
                (SlotRole::Channel, Some(AttrValue::Channel(c))) => channel_of[a.node] = Some(*c),
                (SlotRole::Channel, Some(_)) => complete[a.node] = false,
            }
        }
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !complete[i] {
                continue;
            }
            let Some(AttrValue::Param(p)) = value_of[i] else {
                continue;
            };
            let op = match n.op {
                OperationKind::DataColumnSelect => match channel_of[i] {
                    Some(ch) => OperationKind::ChannelMap(ch),
                    None => continue,
                },
                op => op,
            };
            out.push(ActionNode::explicit(op, p.clone()));
        }
        out
    }

    /// The resolved nodes of a complete assignment, in tree order.
    pub fn reify(&self, assignment: &[AttrValue]) -> Vec<ActionNode> {
        let values: Vec<Option<&AttrValue>> = assignment.iter().map(Some).collect();
        self.reify_partial(&values)
    }

    pub(crate) fn ctx(&self) -> Ctx<'_> {
        Ctx {
            rules: &self.rules,
            dtypes: &self.dtypes,
        }
    }

    /// Every violated hard constraint of a complete assignment.
    pub fn violations(&self, assignment: &[AttrValue]) -> Vec<Violation> {
        let cand = Candidate::from_nodes(&self.reify(assignment));
        let ctx = self.ctx();
        self.hard_constraints
            .iter()
            .filter_map(|hc| ctx.eval(hc, &cand))
            .collect()
    }

    /// The program in an answer-set-like text syntax, for inspection.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "% table {}", self.table_ref);
        for e in &self.entities {
            let _ = writeln!(
                s,
                "entity({},{},{}).",
                e.kind,
                e.parent.as_deref().unwrap_or("none"),
                e.id
            );
        }
        for a in &self.attributes {
            let atom = |v: &AttrValue| {
                format!("attribute(({},{}),{},{})", a.key.0, a.key.1, a.entity, v)
            };
            match a.domain.as_slice() {
                [v] => {
                    let _ = writeln!(s, "{}.", atom(v));
                }
                vals => {
                    let lo = usize::from(!vals.contains(&AttrValue::None));
                    let body: Vec<String> = vals
                        .iter()
                        .filter(|v| **v != AttrValue::None)
                        .map(atom)
                        .collect();
                    let _ = writeln!(s, "{lo} {{ {} }} 1.", body.join("; "));
                }
            }
        }
        for hc in &self.hard_constraints {
            let desc = self
                .rules
                .constraints
                .iter()
                .find(|c| c.name == hc.name())
                .map(|c| c.description.as_str())
                .unwrap_or("custom");
            let _ = writeln!(s, ":- violation({}). % {desc}", hc.name());
        }
        s
    }
}

fn implicit_domain(
    n: &ActionNode,
    rules: &DesignRules,
    stated_task: Option<AnalyticTask>,
    columns: &[AttrValue],
) -> Vec<AttrValue> {
    let param = |p: Param| AttrValue::Param(p);
    match n.op {
        OperationKind::Mark => {
            let allowed = stated_task.map(|t| rules.charts_for_task(t));
            rules
                .charts
                .iter()
                .filter(|c| allowed.is_none_or(|a| a.contains(c)))
                .map(|c| param(Param::Chart(*c)))
                .collect()
        }
        OperationKind::Task => AnalyticTask::ALL
            .iter()
            .map(|t| param(Param::Task(*t)))
            .collect(),
        OperationKind::ChannelMap(_) => {
            let mut d = vec![AttrValue::None];
            d.extend(columns.iter().cloned());
            d
        }
        OperationKind::DataColumnSelect => {
            if n.params.is_empty() {
                columns.to_vec()
            } else {
                n.params.iter().cloned().map(param).collect()
            }
        }
        OperationKind::Aggregate(_) => {
            let mut d: Vec<AttrValue> = rules
                .implicit_aggregates
                .iter()
                .map(|a| param(Param::Aggregate(*a)))
                .collect();
            for p in &n.params {
                push_unique(&mut d, param(p.clone()));
            }
            if d.is_empty() {
                d.push(param(Param::Aggregate(AggregateOp::Mean)));
            }
            d
        }
        OperationKind::Bin(_) => {
            let mut d: Vec<AttrValue> = rules
                .bin_units
                .iter()
                .map(|b| param(Param::Bin(*b)))
                .collect();
            for p in &n.params {
                push_unique(&mut d, param(p.clone()));
            }
            d
        }
        OperationKind::Sort(_) => SortOrder::ALL
            .iter()
            .map(|o| param(Param::Order(*o)))
            .collect(),
        // the values stay the stated intent; only the query leaves them unsaid
        OperationKind::DataValueFilter => {
            if n.params.is_empty() {
                vec![AttrValue::None]
            } else {
                n.params.iter().cloned().map(param).collect()
            }
        }
    }
}
