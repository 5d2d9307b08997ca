use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BenchmarkSample;
use crate::nl::NlStyle;
use crate::vis::ChartType;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WordStats {
    pub min: usize,
    pub max: usize,
    pub total: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub samples: usize,
    pub by_level: BTreeMap<usize, usize>,
    /// A sample counts once for every chart type in its gold set.
    pub by_chart: BTreeMap<ChartType, usize>,
    pub by_style: BTreeMap<NlStyle, usize>,
    pub by_pattern: BTreeMap<String, usize>,
    pub words: WordStats,
}

pub fn dataset_stats(bench: &[BenchmarkSample]) -> DatasetStats {
    let mut st = DatasetStats {
        samples: bench.len(),
        ..Default::default()
    };
    let mut counts = Vec::with_capacity(bench.len());
    for s in bench {
        *st.by_level.entry(s.ambiguity_level).or_default() += 1;
        *st.by_style.entry(s.style).or_default() += 1;
        *st.by_pattern.entry(s.pattern_label()).or_default() += 1;
        let charts: BTreeSet<ChartType> = s.gold_specs.iter().map(|g| g.mark).collect();
        for c in charts {
            *st.by_chart.entry(c).or_default() += 1;
        }
        counts.push(s.nl_query.split_whitespace().count());
    }
    if !counts.is_empty() {
        let total: usize = counts.iter().sum();
        st.words = WordStats {
            min: *counts.iter().min().unwrap(),
            max: *counts.iter().max().unwrap(),
            total,
            mean: total as f64 / counts.len() as f64,
        };
    }
    st
}

impl DatasetStats {
    pub fn to_text(&self) -> String {
        let mut out = format!("samples {}\n", self.samples);
        let mut section = |title: &str, rows: Vec<(String, usize)>| {
            out.push_str(title);
            out.push('\n');
            for (k, v) in rows {
                out.push_str(&format!("  {k:<14}{v:>7}\n"));
            }
        };
        section(
            "ambiguity level",
            self.by_level.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        );
        section(
            "chart type",
            self.by_chart.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        );
        section(
            "style",
            self.by_style.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        );
        section(
            "pattern",
            self.by_pattern.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        );
        out.push_str(&format!(
            "words min {} avg {:.2} max {}\n",
            self.words.min, self.words.mean, self.words.max
        ));
        out
    }
}
