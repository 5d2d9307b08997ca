use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AggregateOp, AnalyticTask, BinUnit, Channel, ChartType, Filter, Predicate, SortOrder};
use crate::table::DataType;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Encoding {
    pub field: String,
    pub dtype: DataType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<BinUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateOp>,
}

impl Encoding {
    pub fn new(field: impl Into<String>, dtype: DataType) -> Self {
        Self {
            field: field.into(),
            dtype,
            bin: None,
            aggregate: None,
        }
    }

    pub fn binned(mut self, unit: BinUnit) -> Self {
        self.bin = Some(unit);
        self
    }

    pub fn aggregated(mut self, op: AggregateOp) -> Self {
        self.aggregate = Some(op);
        self
    }
}

/// Sort the chart by the field on `channel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SortSpec {
    pub channel: Channel,
    pub order: SortOrder,
}

/// One concrete visualization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisSpec {
    pub mark: ChartType,
    pub encodings: BTreeMap<Channel, Encoding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<Filter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<AnalyticTask>,
}

impl VisSpec {
    pub fn new(mark: ChartType) -> Self {
        Self {
            mark,
            encodings: BTreeMap::new(),
            filters: Vec::new(),
            sort: None,
            task: None,
        }
    }

    pub fn encode(mut self, channel: Channel, enc: Encoding) -> Self {
        self.encodings.insert(channel, enc);
        self
    }

    pub fn filter(mut self, f: Filter) -> Self {
        self.filters.push(f);
        self
    }

    pub fn sorted(mut self, channel: Channel, order: SortOrder) -> Self {
        self.sort = Some(SortSpec { channel, order });
        self
    }

    pub fn with_task(mut self, task: AnalyticTask) -> Self {
        self.task = Some(task);
        self
    }
}

/// Defaults made explicit during canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalDefaults {
    pub aggregate: AggregateOp,
    pub bin: BinUnit,
}

impl Default for CanonicalDefaults {
    fn default() -> Self {
        Self {
            aggregate: AggregateOp::Mean,
            bin: BinUnit::Year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalEncoding {
    pub channel: Channel,
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<BinUnit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<AggregateOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalFilter {
    pub column: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

/// Normalized, totally ordered form of a [`VisSpec`]. Two specs render the
/// same chart iff their canonical forms are equal. The analytic task is not
/// part of the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalSpec {
    pub mark: ChartType,
    pub encodings: Vec<CanonicalEncoding>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub filters: Vec<CanonicalFilter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<SortSpec>,
}

fn norm_ident(s: &str) -> String {
    s.trim().to_lowercase()
}

fn norm_value(s: &str) -> String {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(x) if x.is_finite() => format!("{x}"),
        _ => t.to_lowercase(),
    }
}

fn canonical_filter(f: &Filter) -> CanonicalFilter {
    let predicate = match &f.predicate {
        Predicate::OneOf(vals) => {
            let mut v: Vec<String> = vals.iter().map(|x| norm_value(x)).collect();
            v.sort();
            v.dedup();
            if v.len() == 1 {
                Predicate::Equal(v.pop().unwrap())
            } else {
                Predicate::OneOf(v)
            }
        }
        Predicate::Equal(x) => Predicate::Equal(norm_value(x)),
        Predicate::Gt(x) => Predicate::Gt(norm_value(x)),
        Predicate::Gte(x) => Predicate::Gte(norm_value(x)),
        Predicate::Lt(x) => Predicate::Lt(norm_value(x)),
        Predicate::Lte(x) => Predicate::Lte(norm_value(x)),
    };
    CanonicalFilter {
        column: norm_ident(&f.column),
        predicate,
    }
}

pub fn canonicalize(spec: &VisSpec) -> CanonicalSpec {
    canonicalize_with(spec, &CanonicalDefaults::default())
}

pub fn canonicalize_with(spec: &VisSpec, defaults: &CanonicalDefaults) -> CanonicalSpec {
    let mut encs: BTreeMap<Channel, Encoding> = spec.encodings.clone();

    for (ch, e) in encs.iter_mut() {
        if ch.is_positional() && e.dtype == DataType::Temporal && e.bin.is_none() {
            e.bin = Some(defaults.bin);
        }
    }

    let discrete = |e: Option<&Encoding>| {
        e.is_some_and(|e| e.dtype == DataType::Categorical || e.bin.is_some())
    };
    let measure = match spec.mark {
        ChartType::Bar | ChartType::Line if discrete(encs.get(&Channel::X)) => Some(Channel::Y),
        ChartType::Pie if encs.contains_key(&Channel::Color) => Some(Channel::Theta),
        ChartType::Heatmap => Some(Channel::Color),
        _ => None,
    };
    if let Some(e) = measure.and_then(|ch| encs.get_mut(&ch)) {
        if e.dtype == DataType::Quantitative && e.aggregate.is_none() {
            e.aggregate = Some(defaults.aggregate);
        }
    }

    let encodings = encs
        .into_iter()
        .map(|(channel, e)| CanonicalEncoding {
            channel,
            field: norm_ident(&e.field),
            bin: e.bin,
            aggregate: e.aggregate,
        })
        .collect();

    let mut filters: Vec<CanonicalFilter> = spec.filters.iter().map(canonical_filter).collect();
    filters.sort();
    filters.dedup();

    CanonicalSpec {
        mark: spec.mark,
        encodings,
        filters,
        sort: spec.sort,
    }
}

impl fmt::Display for CanonicalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mark)?;
        for e in &self.encodings {
            write!(f, " {}={}", e.channel, e.field)?;
            if let Some(b) = e.bin {
                write!(f, "/bin:{b}")?;
            }
            if let Some(a) = e.aggregate {
                write!(f, "/{a}")?;
            }
        }
        for flt in &self.filters {
            let shown = Filter {
                column: flt.column.clone(),
                predicate: flt.predicate.clone(),
            };
            write!(f, " where {shown}")?;
        }
        if let Some(s) = self.sort {
            write!(f, " sort {} {}", s.channel, s.order)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> VisSpec {
        VisSpec::new(ChartType::Bar)
            .encode(
                Channel::X,
                Encoding::new("Date", DataType::Temporal).binned(BinUnit::Year),
            )
            .encode(
                Channel::Y,
                Encoding::new("Local_Gross", DataType::Quantitative).aggregated(AggregateOp::Mean),
            )
    }

    #[test]
    fn filter_order_is_irrelevant() {
        let a = base()
            .filter(Filter::one_of("Genre", &["Action"]))
            .filter(Filter::one_of("Genre", &["Comedy"]));
        let b = base()
            .filter(Filter::one_of("Genre", &["Comedy"]))
            .filter(Filter::one_of("Genre", &["Action"]));
        assert_eq!(canonicalize(&a), canonicalize(&b));
        let c = base().filter(Filter::one_of("Genre", &["Comedy", "Action"]));
        let d = base().filter(Filter::one_of("genre", &["action", "Comedy"]));
        assert_eq!(canonicalize(&c), canonicalize(&d));
    }

    #[test]
    fn identifier_case_is_folded() {
        let mut a = base();
        a.encodings.get_mut(&Channel::Y).unwrap().field = "local_gross".into();
        assert_eq!(canonicalize(&a), canonicalize(&base()));
    }

    #[test]
    fn mark_is_semantic() {
        let mut a = base();
        a.mark = ChartType::Line;
        assert_ne!(canonicalize(&a), canonicalize(&base()));
    }

    #[test]
    fn defaults_are_made_explicit() {
        let bare = VisSpec::new(ChartType::Bar)
            .encode(Channel::X, Encoding::new("Date", DataType::Temporal))
            .encode(Channel::Y, Encoding::new("Local_Gross", DataType::Quantitative));
        assert_eq!(canonicalize(&bare), canonicalize(&base()));
    }

    #[test]
    fn task_does_not_change_identity() {
        let a = base().with_task(AnalyticTask::Trend);
        assert_eq!(canonicalize(&a), canonicalize(&base()));
    }

    #[test]
    fn numeric_filter_values_normalize() {
        let gt = |v: &str| {
            base().filter(Filter {
                column: "Date".into(),
                predicate: Predicate::Gt(v.into()),
            })
        };
        assert_eq!(canonicalize(&gt("2000")), canonicalize(&gt("2000.0")));
    }
}
