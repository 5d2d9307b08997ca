//! Chart, channel and task compatibility tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::table::DataType;
use crate::vis::{AggregateOp, AnalyticTask, BinUnit, Channel, ChartType};

const BUILTIN: &str = include_str!("../data/design_rules.toml");

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("rules file: {0}")]
    Parse(String),
    #[error("rules file: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintInfo {
    pub name: String,
    pub description: String,
    pub reconstructed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignRules {
    pub charts: Vec<ChartType>,
    pub channel_compat: BTreeMap<ChartType, BTreeMap<Channel, Vec<DataType>>>,
    pub task_charts: BTreeMap<AnalyticTask, Vec<ChartType>>,
    pub required_channels: BTreeMap<ChartType, Vec<Channel>>,
    pub bin_units: Vec<BinUnit>,
    /// Aggregates offered for an implicit aggregate node, besides the gold one.
    pub implicit_aggregates: Vec<AggregateOp>,
    pub constraints: Vec<ConstraintInfo>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRules {
    charts: Vec<String>,
    bin_units: Vec<String>,
    implicit_aggregates: Vec<String>,
    tasks: BTreeMap<String, Vec<String>>,
    channels: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    required: BTreeMap<String, Vec<String>>,
    constraint: Vec<RawConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    name: String,
    description: String,
    #[serde(default)]
    reconstructed: bool,
}

fn parse_all<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>, RulesError>
where
    T::Err: std::fmt::Display,
{
    items
        .iter()
        .map(|s| s.parse().map_err(|e: T::Err| RulesError::Invalid(e.to_string())))
        .collect()
}

fn parse_dtype(s: &str) -> Result<DataType, RulesError> {
    match s {
        "C" => Ok(DataType::Categorical),
        "Q" => Ok(DataType::Quantitative),
        "T" => Ok(DataType::Temporal),
        _ => Err(RulesError::Invalid(format!("unknown data type `{s}`"))),
    }
}

impl DesignRules {
    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let raw: RawRules = toml::from_str(text).map_err(|e| RulesError::Parse(e.to_string()))?;

        let charts: Vec<ChartType> = parse_all(&raw.charts)?;
        let mut task_charts = BTreeMap::new();
        for (task, cs) in &raw.tasks {
            let task: AnalyticTask = task
                .parse()
                .map_err(|e: crate::vis::VisError| RulesError::Invalid(e.to_string()))?;
            task_charts.insert(task, parse_all(cs)?);
        }
        let mut channel_compat = BTreeMap::new();
        for (chart, chans) in &raw.channels {
            let chart: ChartType = chart
                .parse()
                .map_err(|e: crate::vis::VisError| RulesError::Invalid(e.to_string()))?;
            let mut m = BTreeMap::new();
            for (ch, types) in chans {
                let ch: Channel = ch
                    .parse()
                    .map_err(|e: crate::vis::VisError| RulesError::Invalid(e.to_string()))?;
                let types = types
                    .iter()
                    .map(|t| parse_dtype(t))
                    .collect::<Result<Vec<_>, _>>()?;
                m.insert(ch, types);
            }
            channel_compat.insert(chart, m);
        }
        let mut required_channels = BTreeMap::new();
        for (chart, chans) in &raw.required {
            let chart: ChartType = chart
                .parse()
                .map_err(|e: crate::vis::VisError| RulesError::Invalid(e.to_string()))?;
            required_channels.insert(chart, parse_all(chans)?);
        }

        let mut seen = std::collections::BTreeSet::new();
        let mut constraints = Vec::new();
        for c in raw.constraint {
            if !seen.insert(c.name.clone()) {
                return Err(RulesError::Invalid(format!(
                    "constraint `{}` listed twice",
                    c.name
                )));
            }
            constraints.push(ConstraintInfo {
                name: c.name,
                description: c.description,
                reconstructed: c.reconstructed,
            });
        }

        let rules = Self {
            charts,
            channel_compat,
            task_charts,
            required_channels,
            bin_units: parse_all(&raw.bin_units)?,
            implicit_aggregates: parse_all(&raw.implicit_aggregates)?,
            constraints,
        };
        rules.check()?;
        Ok(rules)
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        let text = std::fs::read_to_string(path).map_err(|source| RulesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<(), RulesError> {
        if self.charts.is_empty() {
            return Err(RulesError::Invalid("empty chart domain".into()));
        }
        if self.bin_units.is_empty() {
            return Err(RulesError::Invalid("empty bin-unit domain".into()));
        }
        for c in self.task_charts.values().flatten() {
            if !self.charts.contains(c) {
                return Err(RulesError::Invalid(format!("task maps to unknown chart `{c}`")));
            }
        }
        for (chart, req) in &self.required_channels {
            for ch in req {
                if self.allowed(*chart, *ch).is_empty() {
                    return Err(RulesError::Invalid(format!(
                        "{chart} requires {ch} but allows no type on it"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Data types `channel` accepts on `chart`; empty when the channel is forbidden.
    pub fn allowed(&self, chart: ChartType, channel: Channel) -> &[DataType] {
        self.channel_compat
            .get(&chart)
            .and_then(|m| m.get(&channel))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn channel_allows(&self, chart: ChartType, channel: Channel, dtype: DataType) -> bool {
        self.allowed(chart, channel).contains(&dtype)
    }

    pub fn charts_for_task(&self, task: AnalyticTask) -> &[ChartType] {
        self.task_charts.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Tasks served by `chart`, in declaration order.
    pub fn tasks_for_chart(&self, chart: ChartType) -> Vec<AnalyticTask> {
        AnalyticTask::ALL
            .iter()
            .copied()
            .filter(|t| self.charts_for_task(*t).contains(&chart))
            .collect()
    }

    pub fn required(&self, chart: ChartType) -> &[Channel] {
        self.required_channels
            .get(&chart)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn constraint_enabled(&self, name: &str) -> bool {
        self.constraints.iter().any(|c| c.name == name)
    }
}

impl Default for DesignRules {
    fn default() -> Self {
        Self::from_toml(BUILTIN).expect("bundled design rules parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DataType::{Categorical as C, Quantitative as Q, Temporal as T};

    #[test]
    fn compatibility_table_contents() {
        let r = DesignRules::default();
        let row = |chart| {
            Channel::ALL
                .iter()
                .map(|ch| r.allowed(chart, *ch).to_vec())
                .collect::<Vec<_>>()
        };
        assert_eq!(row(ChartType::Bar), vec![vec![C, Q, T], vec![Q], vec![C], vec![], vec![]]);
        assert_eq!(row(ChartType::Line), row(ChartType::Bar));
        assert_eq!(row(ChartType::Pie), vec![vec![], vec![], vec![C], vec![], vec![Q]]);
        assert_eq!(row(ChartType::Scatter), vec![vec![Q], vec![Q], vec![C], vec![Q], vec![]]);
        assert_eq!(row(ChartType::Heatmap), vec![vec![C, Q, T], vec![C, Q], vec![Q], vec![], vec![]]);
        assert_eq!(row(ChartType::Boxplot), vec![vec![C], vec![Q], vec![C], vec![], vec![]]);
    }

    #[test]
    fn task_mapping() {
        let r = DesignRules::default();
        assert_eq!(
            r.charts_for_task(AnalyticTask::Trend),
            &[ChartType::Bar, ChartType::Line]
        );
        assert_eq!(
            r.charts_for_task(AnalyticTask::Distribution),
            &[ChartType::Bar, ChartType::Line, ChartType::Pie, ChartType::Boxplot]
        );
        assert_eq!(
            r.charts_for_task(AnalyticTask::Correlation),
            &[ChartType::Scatter, ChartType::Heatmap]
        );
        assert_eq!(
            r.tasks_for_chart(ChartType::Scatter),
            vec![AnalyticTask::Correlation]
        );
    }

    #[test]
    fn duplicate_constraint_names_rejected() {
        let text = BUILTIN.to_string()
            + "\n[[constraint]]\nname = \"no_encodings\"\ndescription = \"again\"\n";
        assert!(matches!(
            DesignRules::from_toml(&text),
            Err(RulesError::Invalid(_))
        ));
    }

    #[test]
    fn reconstructed_rules_are_flagged() {
        let r = DesignRules::default();
        let quoted: Vec<_> = r
            .constraints
            .iter()
            .filter(|c| !c.reconstructed)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(
            quoted,
            [
                "no_encodings",
                "temporal_unbinned",
                "channel_incompat",
                "multiple_fields",
                "missing_aggregate"
            ]
        );
    }
}
