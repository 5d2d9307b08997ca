//! Visualization vocabulary: action-node trees, concrete chart specs, and
//! their canonical form for equivalence checks.

mod convert;
mod node;
mod spec;
pub mod vegalite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convert::{build_seed_tree, flatten};
pub use node::{ActionNode, AmbiguityTag, OperationKind, Param, ResolvedTree, VisTree};
pub use spec::{
    canonicalize, canonicalize_with, CanonicalDefaults, CanonicalEncoding, CanonicalFilter,
    CanonicalSpec, Encoding, SortSpec, VisSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisError {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("invalid node: {0}")]
    InvalidNode(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("tree is not resolved: {0}")]
    Unresolved(String),
    #[error("tree has no mark node")]
    MissingMark,
    #[error("spec violates design rules: {0}")]
    IncompatibleSpec(String),
    #[error("invalid chart document: {0}")]
    ChartDocument(String),
    #[error("json: {0}")]
    Json(String),
}

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $var),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$var => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = VisError;
            fn from_str(s: &str) -> Result<Self, VisError> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($name::$var),)+
                    _ => Err(VisError::InvalidNode(format!(
                        concat!("unknown ", stringify!($name), " `{}`"), s
                    ))),
                }
            }
        }
    };
}

string_enum!(
    /// Encoding channels, in enumeration order.
    Channel { X => "x", Y => "y", Color => "color", Size => "size", Theta => "theta" }
);

string_enum!(
    ChartType {
        Bar => "bar",
        Line => "line",
        Pie => "pie",
        Scatter => "scatter",
        Heatmap => "heatmap",
        Boxplot => "boxplot",
    }
);

string_enum!(
    AnalyticTask { Trend => "trend", Distribution => "distribution", Correlation => "correlation" }
);

string_enum!(
    AggregateOp { Mean => "mean", Sum => "sum", Count => "count", Min => "min", Max => "max" }
);

string_enum!(
    /// Temporal binning units.
    BinUnit { Year => "year", Month => "month" }
);

string_enum!(
    SortOrder { Ascending => "ascending", Descending => "descending" }
);

impl Channel {
    pub fn is_positional(self) -> bool {
        matches!(self, Channel::X | Channel::Y)
    }
}

/// Which reasoning step an injected ambiguity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AmbiguityCategory {
    /// Channel encoding.
    CE,
    /// Chart type.
    CT,
    /// Data selection.
    DS,
    /// Data transformation.
    DT,
}

impl AmbiguityCategory {
    pub const ALL: [AmbiguityCategory; 4] = [
        AmbiguityCategory::CE,
        AmbiguityCategory::CT,
        AmbiguityCategory::DS,
        AmbiguityCategory::DT,
    ];
}

impl fmt::Display for AmbiguityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for AmbiguityCategory {
    type Err = VisError;
    fn from_str(s: &str) -> Result<Self, VisError> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(AmbiguityCategory::CE),
            "CT" => Ok(AmbiguityCategory::CT),
            "DS" => Ok(AmbiguityCategory::DS),
            "DT" => Ok(AmbiguityCategory::DT),
            _ => Err(VisError::InvalidNode(format!("unknown category `{s}`"))),
        }
    }
}

/// `CE+DT`-style label for a set of categories; `none` when empty.
pub fn pattern_label(cats: &[AmbiguityCategory]) -> String {
    let mut cats = cats.to_vec();
    cats.sort();
    cats.dedup();
    if cats.is_empty() {
        return "none".into();
    }
    cats.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    OneOf(Vec<String>),
    Equal(String),
    Gt(String),
    Gte(String),
    Lt(String),
    Lte(String),
}

/// A row filter on one column. Nulls never match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl Filter {
    pub fn one_of(column: impl Into<String>, values: &[&str]) -> Self {
        Self {
            column: column.into(),
            predicate: Predicate::OneOf(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    pub fn matches(&self, cell: Option<&str>) -> bool {
        use std::cmp::Ordering;
        let Some(v) = cell.map(str::trim).filter(|v| !v.is_empty()) else {
            return false;
        };
        let cmp = |rhs: &str| -> Ordering {
            match (v.parse::<f64>(), rhs.trim().parse::<f64>()) {
                (Ok(a), Ok(b)) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
                // ISO dates compare correctly as strings; a bare year compares by prefix
                _ if rhs.len() == 4 && v.len() > 4 => v[..4].cmp(rhs),
                _ => v.cmp(rhs.trim()),
            }
        };
        match &self.predicate {
            Predicate::OneOf(vals) => vals.iter().any(|x| x == v),
            Predicate::Equal(x) => cmp(x) == Ordering::Equal,
            Predicate::Gt(x) => cmp(x) == Ordering::Greater,
            Predicate::Gte(x) => cmp(x) != Ordering::Less,
            Predicate::Lt(x) => cmp(x) == Ordering::Less,
            Predicate::Lte(x) => cmp(x) != Ordering::Greater,
        }
    }

    /// Values the filter names, for natural-language rendering.
    pub fn values(&self) -> Vec<&str> {
        match &self.predicate {
            Predicate::OneOf(v) => v.iter().map(String::as_str).collect(),
            Predicate::Equal(x)
            | Predicate::Gt(x)
            | Predicate::Gte(x)
            | Predicate::Lt(x)
            | Predicate::Lte(x) => vec![x.as_str()],
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.predicate {
            Predicate::OneOf(v) => write!(f, "{} in [{}]", self.column, v.join(", ")),
            Predicate::Equal(x) => write!(f, "{} = {x}", self.column),
            Predicate::Gt(x) => write!(f, "{} > {x}", self.column),
            Predicate::Gte(x) => write!(f, "{} >= {x}", self.column),
            Predicate::Lt(x) => write!(f, "{} < {x}", self.column),
            Predicate::Lte(x) => write!(f, "{} <= {x}", self.column),
        }
    }
}
