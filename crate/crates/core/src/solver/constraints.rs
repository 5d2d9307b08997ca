use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::rules::DesignRules;
use crate::table::{DataType, Table};
use crate::vis::{
    ActionNode, AggregateOp, AnalyticTask, BinUnit, Channel, ChartType, Filter, OperationKind,
    Param, SortOrder,
};

/// The facts of a (possibly partial) assignment, grouped by kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidate {
    pub marks: Vec<ChartType>,
    pub tasks: Vec<AnalyticTask>,
    pub fields: Vec<(Channel, String)>,
    pub aggregates: Vec<(Channel, AggregateOp)>,
    pub bins: Vec<(Channel, BinUnit)>,
    pub sorts: Vec<(Channel, SortOrder)>,
    pub filters: Vec<Filter>,
}

impl Candidate {
    /// Collects explicit nodes. Column selections without a channel carry no fact.
    pub fn from_nodes<'a>(nodes: impl IntoIterator<Item = &'a ActionNode>) -> Self {
        let mut c = Candidate::default();
        for n in nodes {
            let Some(p) = n.value() else { continue };
            c.push(n.op, p);
        }
        c
    }

    pub(crate) fn push(&mut self, op: OperationKind, p: &Param) {
        match (op, p) {
            (OperationKind::Mark, Param::Chart(m)) => self.marks.push(*m),
            (OperationKind::Task, Param::Task(t)) => self.tasks.push(*t),
            (OperationKind::ChannelMap(ch), Param::Column(col)) => {
                self.fields.push((ch, col.clone()))
            }
            (OperationKind::Aggregate(ch), Param::Aggregate(a)) => self.aggregates.push((ch, *a)),
            (OperationKind::Bin(ch), Param::Bin(b)) => self.bins.push((ch, *b)),
            (OperationKind::Sort(ch), Param::Order(o)) => self.sorts.push((ch, *o)),
            (OperationKind::DataValueFilter, Param::Filter(f)) => self.filters.push(f.clone()),
            _ => {}
        }
    }

    pub fn mark(&self) -> Option<ChartType> {
        self.marks.first().copied()
    }

    pub fn field(&self, ch: Channel) -> Option<&str> {
        self.fields
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, f)| f.as_str())
    }

    pub fn aggregate(&self, ch: Channel) -> Option<AggregateOp> {
        self.aggregates
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, a)| *a)
    }

    pub fn bin(&self, ch: Channel) -> Option<BinUnit> {
        self.bins.iter().find(|(c, _)| *c == ch).map(|(_, b)| *b)
    }
}

/// A named hard-constraint violation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Violation {
    pub name: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.name, self.detail)
    }
}

/// Kinds of fact a constraint reads; used to decide when a partial assignment
/// already decides it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Deps {
    pub mark: bool,
    pub task: bool,
    pub fields: bool,
    pub aggregate: bool,
    pub bin: bool,
    pub sort: bool,
    /// Adding more fields can only add violations, never remove them.
    pub monotone_in_fields: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Builtin {
    NoEncodings,
    TemporalUnbinned,
    ChannelIncompat,
    MultipleFields,
    MissingAggregate,
    MissingMark,
    MissingRequiredChannel,
    DuplicateField,
    BinInvalid,
    AggregateInvalid,
    DanglingTransform,
    TaskMarkMismatch,
}

impl Builtin {
    pub const ALL: [Builtin; 12] = [
        Builtin::NoEncodings,
        Builtin::TemporalUnbinned,
        Builtin::ChannelIncompat,
        Builtin::MultipleFields,
        Builtin::MissingAggregate,
        Builtin::MissingMark,
        Builtin::MissingRequiredChannel,
        Builtin::DuplicateField,
        Builtin::BinInvalid,
        Builtin::AggregateInvalid,
        Builtin::DanglingTransform,
        Builtin::TaskMarkMismatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::NoEncodings => "no_encodings",
            Builtin::TemporalUnbinned => "temporal_unbinned",
            Builtin::ChannelIncompat => "channel_incompat",
            Builtin::MultipleFields => "multiple_fields",
            Builtin::MissingAggregate => "missing_aggregate",
            Builtin::MissingMark => "missing_mark",
            Builtin::MissingRequiredChannel => "missing_required_channel",
            Builtin::DuplicateField => "duplicate_field",
            Builtin::BinInvalid => "bin_invalid",
            Builtin::AggregateInvalid => "aggregate_invalid",
            Builtin::DanglingTransform => "dangling_transform",
            Builtin::TaskMarkMismatch => "task_mark_mismatch",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn deps(self) -> Deps {
        let d = Deps::default();
        match self {
            Builtin::NoEncodings => Deps { fields: true, ..d },
            Builtin::MultipleFields => Deps {
                fields: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::ChannelIncompat => Deps {
                mark: true,
                fields: true,
                aggregate: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::MissingRequiredChannel => Deps {
                mark: true,
                fields: true,
                ..d
            },
            Builtin::DuplicateField => Deps {
                fields: true,
                aggregate: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::TemporalUnbinned => Deps {
                fields: true,
                aggregate: true,
                bin: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::BinInvalid => Deps {
                fields: true,
                bin: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::AggregateInvalid => Deps {
                mark: true,
                fields: true,
                aggregate: true,
                monotone_in_fields: true,
                ..d
            },
            Builtin::DanglingTransform => Deps {
                fields: true,
                aggregate: true,
                bin: true,
                sort: true,
                ..d
            },
            Builtin::MissingAggregate => Deps {
                mark: true,
                fields: true,
                aggregate: true,
                bin: true,
                ..d
            },
            Builtin::MissingMark => Deps { mark: true, ..d },
            Builtin::TaskMarkMismatch => Deps {
                mark: true,
                task: true,
                ..d
            },
        }
    }
}

pub type CustomCheck = Arc<dyn Fn(&Candidate) -> Option<String> + Send + Sync>;

/// A hard constraint: either one of the grammar's rules or a caller-supplied
/// predicate returning a violation detail.
#[derive(Clone)]
pub enum HardConstraint {
    Builtin(Builtin),
    Custom { name: String, check: CustomCheck },
}

impl HardConstraint {
    pub fn name(&self) -> &str {
        match self {
            HardConstraint::Builtin(b) => b.name(),
            HardConstraint::Custom { name, .. } => name,
        }
    }

    /// `None` for custom constraints, which are only checked on complete assignments.
    pub fn deps(&self) -> Option<Deps> {
        match self {
            HardConstraint::Builtin(b) => Some(b.deps()),
            HardConstraint::Custom { .. } => None,
        }
    }
}

impl fmt::Debug for HardConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardConstraint::Builtin(b) => write!(f, "Builtin({})", b.name()),
            HardConstraint::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

pub(crate) struct Ctx<'a> {
    pub rules: &'a DesignRules,
    pub dtypes: &'a BTreeMap<String, DataType>,
}

impl Ctx<'_> {
    fn dtype(&self, col: &str) -> Option<DataType> {
        self.dtypes.get(col).copied()
    }

    /// Type of what the channel shows: counting anything yields a quantity.
    fn effective(&self, c: &Candidate, ch: Channel, col: &str) -> Option<DataType> {
        if c.aggregate(ch) == Some(AggregateOp::Count) {
            return Some(DataType::Quantitative);
        }
        self.dtype(col)
    }

    pub fn eval(&self, hc: &HardConstraint, c: &Candidate) -> Option<Violation> {
        let detail = match hc {
            HardConstraint::Builtin(b) => self.builtin(*b, c),
            HardConstraint::Custom { check, .. } => check(c),
        };
        detail.map(|detail| Violation {
            name: hc.name().to_string(),
            detail,
        })
    }

    fn builtin(&self, b: Builtin, c: &Candidate) -> Option<String> {
        let mark = c.mark();
        match b {
            Builtin::MissingMark => c.marks.is_empty().then(|| "no chart type".to_string()),
            Builtin::NoEncodings => c.fields.is_empty().then(|| "no encoded channel".to_string()),
            Builtin::MultipleFields => Channel::ALL.iter().find_map(|ch| {
                let n = c.fields.iter().filter(|(x, _)| x == ch).count();
                (n > 1).then(|| format!("{n} fields on {ch}"))
            }),
            Builtin::ChannelIncompat => {
                let mark = mark?;
                c.fields.iter().find_map(|(ch, col)| match self.effective(c, *ch, col) {
                    Some(t) if self.rules.channel_allows(mark, *ch, t) => None,
                    Some(t) => Some(format!("{mark} does not accept {t} `{col}` on {ch}")),
                    None => Some(format!("unknown column `{col}` on {ch}")),
                })
            }
            Builtin::MissingRequiredChannel => {
                let mark = mark?;
                self.rules
                    .required(mark)
                    .iter()
                    .find(|ch| c.field(**ch).is_none())
                    .map(|ch| format!("{mark} needs a field on {ch}"))
            }
            Builtin::DuplicateField => {
                let counted = |ch: Channel| c.aggregate(ch) == Some(AggregateOp::Count);
                c.fields.iter().enumerate().find_map(|(i, (ch_a, a))| {
                    c.fields[i + 1..].iter().find_map(|(ch_b, b)| {
                        (ch_a != ch_b
                            && a.eq_ignore_ascii_case(b)
                            && !counted(*ch_a)
                            && !counted(*ch_b))
                        .then(|| format!("`{a}` on both {ch_a} and {ch_b}"))
                    })
                })
            }
            Builtin::TemporalUnbinned => c.fields.iter().find_map(|(ch, col)| {
                (ch.is_positional()
                    && self.dtype(col) == Some(DataType::Temporal)
                    && c.bin(*ch).is_none()
                    && c.aggregate(*ch).is_none())
                .then(|| format!("temporal `{col}` on {ch} is not binned"))
            }),
            Builtin::BinInvalid => c.bins.iter().find_map(|(ch, unit)| {
                if !ch.is_positional() {
                    return Some(format!("bin {unit} on non-positional {ch}"));
                }
                c.fields
                    .iter()
                    .filter(|(x, _)| x == ch)
                    .find(|(_, col)| self.dtype(col) != Some(DataType::Temporal))
                    .map(|(_, col)| format!("bin {unit} on non-temporal `{col}`"))
            }),
            Builtin::AggregateInvalid => c.aggregates.iter().find_map(|(ch, op)| {
                if *ch == Channel::X {
                    return Some(format!("{op} on x"));
                }
                if mark == Some(ChartType::Boxplot) {
                    return Some(format!("{op} on a boxplot, which summarizes raw values"));
                }
                if *op == AggregateOp::Count {
                    return None;
                }
                c.fields
                    .iter()
                    .filter(|(x, _)| x == ch)
                    .find(|(_, col)| self.dtype(col) != Some(DataType::Quantitative))
                    .map(|(_, col)| format!("{op} of non-quantitative `{col}`"))
            }),
            Builtin::DanglingTransform => {
                let bare = |ch: &Channel| c.field(*ch).is_none();
                let agg = c.aggregates.iter().map(|(ch, _)| ("aggregate", ch));
                let bin = c.bins.iter().map(|(ch, _)| ("bin", ch));
                let sort = c.sorts.iter().map(|(ch, _)| ("sort", ch));
                agg.chain(bin)
                    .chain(sort)
                    .find(|(_, ch)| bare(ch))
                    .map(|(what, ch)| format!("{what} on unencoded {ch}"))
            }
            Builtin::MissingAggregate => {
                let mark = mark?;
                let measure = match mark {
                    ChartType::Bar | ChartType::Line => {
                        let key = c.field(Channel::X)?;
                        let discrete = self.dtype(key) == Some(DataType::Categorical)
                            || c.bin(Channel::X).is_some();
                        discrete.then_some(Channel::Y)
                    }
                    ChartType::Pie => c.field(Channel::Color).map(|_| Channel::Theta),
                    ChartType::Heatmap => Some(Channel::Color),
                    _ => None,
                }?;
                let col = c.field(measure)?;
                (self.dtype(col) == Some(DataType::Quantitative) && c.aggregate(measure).is_none())
                    .then(|| format!("`{col}` on {measure} needs an aggregate"))
            }
            Builtin::TaskMarkMismatch => {
                let mark = mark?;
                c.tasks
                    .iter()
                    .find(|t| !self.rules.charts_for_task(**t).contains(&mark))
                    .map(|t| format!("{mark} does not serve {t}"))
            }
        }
    }
}

/// The grammar constraints enabled by `rules`, in declaration order.
pub fn builtin_constraints(rules: &DesignRules) -> Vec<HardConstraint> {
    rules
        .constraints
        .iter()
        .filter_map(|c| Builtin::from_name(&c.name))
        .map(HardConstraint::Builtin)
        .collect()
}

/// Every violated hard constraint of an assignment, given as explicit nodes.
pub fn check_hard_constraints(
    assignment: &[ActionNode],
    rules: &DesignRules,
    table: &Table,
) -> Vec<Violation> {
    let dtypes: BTreeMap<String, DataType> = table
        .columns
        .iter()
        .map(|c| (c.name.clone(), c.dtype))
        .collect();
    let ctx = Ctx {
        rules,
        dtypes: &dtypes,
    };
    let cand = Candidate::from_nodes(assignment);
    builtin_constraints(rules)
        .iter()
        .filter_map(|hc| ctx.eval(hc, &cand))
        .collect()
}
