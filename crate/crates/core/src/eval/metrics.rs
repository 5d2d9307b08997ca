use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BenchmarkSample, EvalError};
use crate::nl::NlStyle;
use crate::vis::{canonicalize, vegalite, CanonicalSpec, ChartType, VisSpec};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Match flags per rank; each gold spec is credited at most once, to its
/// earliest rank. `None` entries are predictions that could not be read.
pub fn match_canonical(pred: &[Option<CanonicalSpec>], gold: &BTreeSet<CanonicalSpec>) -> Vec<bool> {
    let mut credited = BTreeSet::new();
    pred.iter()
        .map(|p| match p {
            Some(p) if gold.contains(p) => credited.insert(p.clone()),
            _ => false,
        })
        .collect()
}

pub fn match_specs(pred: &[VisSpec], gold: &BTreeSet<CanonicalSpec>) -> Vec<bool> {
    let c: Vec<Option<CanonicalSpec>> = pred.iter().map(|s| Some(canonicalize(s))).collect();
    match_canonical(&c, gold)
}

/// Metrics at any cutoff `k >= 1`. With `strict_k` the precision denominator
/// is `k`, otherwise `min(k, |pred|)`.
pub fn prf_at(flags: &[bool], gold_len: usize, k: usize, strict_k: bool) -> Result<Prf, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK(k));
    }
    let top = &flags[..flags.len().min(k)];
    let hits = top.iter().filter(|f| **f).count() as f64;
    let denom = if strict_k { k } else { top.len() };
    let p = if denom == 0 { 0.0 } else { hits / denom as f64 };
    let r = if gold_len == 0 {
        0.0
    } else {
        hits / gold_len as f64
    };
    Ok(Prf::from_pr(p, r))
}

/// Metrics at one of the reported cutoffs 1, 3 and 5.
pub fn precision_recall_f1_at_k(flags: &[bool], gold_len: usize, k: usize) -> Result<Prf, EvalError> {
    if !DEFAULT_KS.contains(&k) {
        return Err(EvalError::InvalidK(k));
    }
    prf_at(flags, gold_len, k, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub strict_k: bool,
    /// Permit cutoffs outside 1, 3, 5.
    pub any_k: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            strict_k: false,
            any_k: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        for &k in &self.ks {
            if k == 0 || (!self.any_k && !DEFAULT_KS.contains(&k)) {
                return Err(EvalError::InvalidK(k));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub ambiguity_level: usize,
    pub flags: Vec<bool>,
    pub matched: usize,
    pub at_k: BTreeMap<usize, Prf>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing_prediction: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub unreadable_charts: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Mean metrics over a group of samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub at_k: BTreeMap<usize, Prf>,
}

impl Aggregate {
    fn of<'a>(scores: impl Iterator<Item = &'a SampleScore>, ks: &[usize]) -> Self {
        let mut agg = Aggregate::default();
        let mut sums: BTreeMap<usize, (f64, f64, f64)> = ks.iter().map(|k| (*k, (0.0, 0.0, 0.0))).collect();
        for s in scores {
            agg.count += 1;
            for (k, m) in &s.at_k {
                let e = sums.entry(*k).or_default();
                e.0 += m.precision;
                e.1 += m.recall;
                e.2 += m.f1;
            }
        }
        let n = agg.count.max(1) as f64;
        agg.at_k = sums
            .into_iter()
            .map(|(k, (p, r, f))| {
                (
                    k,
                    Prf {
                        precision: p / n,
                        recall: r / n,
                        f1: f / n,
                    },
                )
            })
            .collect();
        agg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub strict_k: bool,
    pub overall: Aggregate,
    pub by_level: BTreeMap<usize, Aggregate>,
    pub by_chart: BTreeMap<ChartType, Aggregate>,
    pub by_style: BTreeMap<NlStyle, Aggregate>,
    pub missing: Vec<String>,
    pub samples: Vec<SampleScore>,
}

impl EvalReport {
    /// Aligned text table: one row per group, P/R/F1 columns per cutoff.
    pub fn to_text(&self) -> String {
        let mut header = format!("{:<16}{:>7}", "group", "n");
        for k in &self.ks {
            let _ = write!(header, "{:>9}{:>9}{:>9}", format!("P@{k}"), format!("R@{k}"), format!("F1@{k}"));
        }
        let mut out = header;
        out.push('\n');
        let mut row = |name: String, a: &Aggregate| {
            let _ = write!(out, "{name:<16}{:>7}", a.count);
            for k in &self.ks {
                let m = a.at_k.get(k).copied().unwrap_or_default();
                let _ = write!(
                    out,
                    "{:>9.4}{:>9.4}{:>9.4}",
                    m.precision, m.recall, m.f1
                );
            }
            out.push('\n');
        };
        row("overall".into(), &self.overall);
        for (l, a) in &self.by_level {
            row(format!("level {l}"), a);
        }
        for (c, a) in &self.by_chart {
            row(format!("chart {c}"), a);
        }
        for (s, a) in &self.by_style {
            row(format!("style {s}"), a);
        }
        if !self.missing.is_empty() {
            let _ = writeln!(out, "missing predictions: {}", self.missing.len());
        }
        out
    }
}

fn read_chart(doc: &Value) -> Option<CanonicalSpec> {
    vegalite::from_vegalite(doc).ok().map(|s| canonicalize(&s))
}

/// Score every sample. Samples without a prediction score zero and are listed
/// in `missing`.
pub fn evaluate_dataset(
    preds: &BTreeMap<String, Vec<Value>>,
    bench: &[BenchmarkSample],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let samples: Vec<SampleScore> = bench
        .par_iter()
        .map(|s| {
            let docs = preds.get(&s.id);
            let parsed: Vec<Option<CanonicalSpec>> =
                docs.map(|d| d.iter().map(read_chart).collect()).unwrap_or_default();
            let flags = match_canonical(&parsed, &s.gold_specs);
            let at_k = cfg
                .ks
                .iter()
                .map(|&k| Ok((k, prf_at(&flags, s.gold_specs.len(), k, cfg.strict_k)?)))
                .collect::<Result<BTreeMap<_, _>, EvalError>>()?;
            Ok(SampleScore {
                id: s.id.clone(),
                ambiguity_level: s.ambiguity_level,
                matched: flags.iter().filter(|f| **f).count(),
                flags,
                at_k,
                missing_prediction: docs.is_none(),
                unreadable_charts: parsed.iter().filter(|p| p.is_none()).count(),
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let ks = &cfg.ks;
    let mut by_level: BTreeMap<usize, Vec<&SampleScore>> = BTreeMap::new();
    let mut by_chart: BTreeMap<ChartType, Vec<&SampleScore>> = BTreeMap::new();
    let mut by_style: BTreeMap<NlStyle, Vec<&SampleScore>> = BTreeMap::new();
    for (b, s) in bench.iter().zip(&samples) {
        by_level.entry(b.ambiguity_level).or_default().push(s);
        by_style.entry(b.style).or_default().push(s);
        let charts: BTreeSet<ChartType> = b.gold_specs.iter().map(|g| g.mark).collect();
        for c in charts {
            by_chart.entry(c).or_default().push(s);
        }
    }
    let group = |v: &Vec<&SampleScore>| Aggregate::of(v.iter().copied(), ks);
    let missing: Vec<String> = samples
        .iter()
        .filter(|s| s.missing_prediction)
        .map(|s| s.id.clone())
        .collect();
    for id in &missing {
        log::warn!("no prediction for sample `{id}`; scored as zero");
    }
    Ok(EvalReport {
        ks: ks.clone(),
        strict_k: cfg.strict_k,
        overall: Aggregate::of(samples.iter(), ks),
        by_level: by_level.iter().map(|(k, v)| (*k, group(v))).collect(),
        by_chart: by_chart.iter().map(|(k, v)| (*k, group(v))).collect(),
        by_style: by_style.iter().map(|(k, v)| (*k, group(v))).collect(),
        missing,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::DataType;
    use crate::vis::{Channel, Encoding};

    fn spec(field: &str) -> VisSpec {
        VisSpec::new(ChartType::Bar)
            .encode(Channel::X, Encoding::new("Genre", DataType::Categorical))
            .encode(Channel::Y, Encoding::new(field, DataType::Quantitative))
    }

    #[test]
    fn worked_example() {
        // Four gold charts, two of the top three predictions are valid.
        let m = precision_recall_f1_at_k(&[true, false, true, true], 4, 3).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall, 0.5);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn cutoffs_outside_the_reported_set_are_rejected() {
        assert!(matches!(precision_recall_f1_at_k(&[], 1, 2), Err(EvalError::InvalidK(2))));
        assert!(prf_at(&[true], 1, 2, false).is_ok());
        assert!(prf_at(&[true], 1, 0, false).is_err());
    }

    #[test]
    fn duplicates_are_credited_once() {
        let gold: BTreeSet<_> = [canonicalize(&spec("Budget"))].into();
        let flags = match_specs(&[spec("Budget"), spec("Budget")], &gold);
        assert_eq!(flags, [true, false]);
        assert!(match_specs(&[], &gold).is_empty());
    }

    #[test]
    fn gold_in_any_order_matches_fully() {
        let gold: BTreeSet<_> = ["A", "B", "C"].iter().map(|f| canonicalize(&spec(f))).collect();
        let flags = match_specs(&[spec("C"), spec("A"), spec("B")], &gold);
        assert_eq!(flags, [true, true, true]);
        let m = prf_at(&flags, 3, 3, false).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn short_lists_and_strict_denominator() {
        let m = prf_at(&[true], 2, 3, false).unwrap();
        assert_eq!(m.precision, 1.0);
        let m = prf_at(&[true], 2, 3, true).unwrap();
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-12);
        let m = prf_at(&[], 2, 3, false).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }
}
