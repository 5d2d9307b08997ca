//! Controlled ambiguity injection: widen an all-explicit seed tree until the
//! solver finds a target number of readings.

use std::collections::{BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metadata::AmbiguityMetadata;
use crate::rules::DesignRules;
use crate::solver::{resolve_detailed, SolverError};
use crate::table::Table;
use crate::vis::{
    ActionNode, AmbiguityCategory, AmbiguityTag, AnalyticTask, Channel, ChartType, OperationKind,
    Param, VisTree,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InjectorError {
    #[error("invalid injection config: {0}")]
    InvalidConfig(String),
    #[error("tree has no explicit mark to relax")]
    NoMark,
    #[error("seed must be all-explicit with exactly one reading, it has {0}")]
    BadSeed(usize),
    #[error("level {target} not reachable; highest reachable level is {max_level}")]
    TargetUnreachable { target: usize, max_level: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionConfig {
    pub target_level: usize,
    pub enabled_categories: Vec<AmbiguityCategory>,
    pub rng_seed: u64,
    /// Randomized operation sequences tried before exhaustive search.
    pub attempt_budget: usize,
    /// Largest target accepted by validation.
    pub max_target: usize,
    /// Metadata pairs below this confidence are ignored.
    pub min_confidence: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            target_level: 4,
            enabled_categories: vec![AmbiguityCategory::CT, AmbiguityCategory::DS],
            rng_seed: 0,
            attempt_budget: 64,
            max_target: 5,
            min_confidence: 0.0,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<(), InjectorError> {
        if self.target_level < 2 || self.target_level > self.max_target {
            return Err(InjectorError::InvalidConfig(format!(
                "target level {} outside [2, {}]",
                self.target_level, self.max_target
            )));
        }
        if self.enabled_categories.is_empty() {
            return Err(InjectorError::InvalidConfig(
                "no ambiguity category enabled".into(),
            ));
        }
        Ok(())
    }

    fn enabled(&self, c: AmbiguityCategory) -> bool {
        self.enabled_categories.contains(&c)
    }
}

/// One widening step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Injection {
    /// An explicit column choice becomes a choice among paired columns.
    Ambiguate { node: usize, alternatives: Vec<String> },
    /// An explicit node keeps its value as gold intent but leaves it unstated.
    Hide { node: usize },
    /// A channel the query never mentions, left for the solver to fill or drop.
    InsertChannel { channel: Channel },
    /// The chart type is replaced by the analytic task it serves.
    RelaxMark,
}

impl Injection {
    pub fn category(&self, tree: &VisTree) -> AmbiguityCategory {
        match self {
            Injection::Ambiguate { .. } => AmbiguityCategory::DS,
            Injection::RelaxMark => AmbiguityCategory::CT,
            Injection::InsertChannel { .. } => AmbiguityCategory::CE,
            Injection::Hide { node } => match tree.nodes[*node].op {
                OperationKind::DataValueFilter | OperationKind::DataColumnSelect => {
                    AmbiguityCategory::DS
                }
                OperationKind::ChannelMap(_) => AmbiguityCategory::CE,
                OperationKind::Mark | OperationKind::Task => AmbiguityCategory::CT,
                _ => AmbiguityCategory::DT,
            },
        }
    }
}

/// Result of a single operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Applied(VisTree),
    NoOp,
}

fn task_for(mark: ChartType, rules: &DesignRules, stated: Option<AnalyticTask>) -> Option<AnalyticTask> {
    stated
        .filter(|t| rules.charts_for_task(*t).contains(&mark))
        .or_else(|| rules.tasks_for_chart(mark).into_iter().next())
}

fn explicit_mark(tree: &VisTree) -> Option<(usize, ChartType)> {
    tree.nodes.iter().enumerate().find_map(|(i, n)| match (n.op, n.value()) {
        (OperationKind::Mark, Some(Param::Chart(c))) => Some((i, *c)),
        _ => None,
    })
}

fn ambiguate_candidates(tree: &VisTree, meta: &AmbiguityMetadata, min_conf: f64) -> Vec<Injection> {
    tree.nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.tag == AmbiguityTag::Explicit && n.op.selects_column())
        .filter_map(|(i, n)| {
            let col = n.value()?.as_column()?;
            let partners = meta.partners(col, min_conf);
            (!partners.is_empty()).then(|| Injection::Ambiguate {
                node: i,
                alternatives: std::iter::once(col)
                    .chain(partners)
                    .map(str::to_string)
                    .collect(),
            })
        })
        .collect()
}

fn hide_candidates(tree: &VisTree, wanted: impl Fn(OperationKind) -> bool) -> Vec<Injection> {
    tree.nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.tag == AmbiguityTag::Explicit && n.op != OperationKind::Mark && wanted(n.op))
        .map(|(node, _)| Injection::Hide { node })
        .collect()
}

fn insert_channel_candidates(tree: &VisTree, rules: &DesignRules) -> Vec<Injection> {
    let has = |ch| tree.nodes.iter().any(|n| n.op == OperationKind::ChannelMap(ch));
    let allows = match explicit_mark(tree) {
        Some((_, m)) => !rules.allowed(m, Channel::Color).is_empty(),
        None => true,
    };
    if allows && !has(Channel::Color) {
        vec![Injection::InsertChannel {
            channel: Channel::Color,
        }]
    } else {
        Vec::new()
    }
}

/// Every step applicable to `tree` under the enabled categories, in a fixed order.
pub fn candidates(
    tree: &VisTree,
    meta: &AmbiguityMetadata,
    rules: &DesignRules,
    cfg: &InjectionConfig,
) -> Vec<Injection> {
    let mut out = Vec::new();
    if cfg.enabled(AmbiguityCategory::DS) {
        out.extend(ambiguate_candidates(tree, meta, cfg.min_confidence));
        out.extend(hide_candidates(tree, |op| op == OperationKind::DataValueFilter));
    }
    if cfg.enabled(AmbiguityCategory::CT) && explicit_mark(tree).is_some() {
        out.push(Injection::RelaxMark);
    }
    if cfg.enabled(AmbiguityCategory::CE) {
        out.extend(insert_channel_candidates(tree, rules));
        out.extend(hide_candidates(tree, |op| matches!(op, OperationKind::ChannelMap(_))));
    }
    if cfg.enabled(AmbiguityCategory::DT) {
        out.extend(hide_candidates(tree, |op| {
            matches!(
                op,
                OperationKind::Aggregate(_) | OperationKind::Bin(_) | OperationKind::Sort(_)
            )
        }));
    }
    out
}

/// Apply one step. Nodes touched by the step are labelled with its category.
pub fn apply(tree: &VisTree, inj: &Injection, rules: &DesignRules) -> Result<VisTree, InjectorError> {
    let cat = inj.category(tree);
    let mut out = tree.clone();
    match inj {
        Injection::Ambiguate { node, alternatives } => {
            let n = &tree.nodes[*node];
            out.nodes[*node] = ActionNode::ambiguous(
                n.op,
                alternatives.iter().cloned().map(Param::Column).collect(),
            )
            .with_category(cat);
        }
        Injection::Hide { node } => {
            let n = &tree.nodes[*node];
            out.nodes[*node] = ActionNode::implicit(n.op, n.params.clone()).with_category(cat);
        }
        Injection::InsertChannel { channel } => {
            out.nodes
                .push(ActionNode::implicit(OperationKind::ChannelMap(*channel), vec![]).with_category(cat));
        }
        Injection::RelaxMark => return relax_explicit(tree, rules),
    }
    Ok(out)
}

/// Make one paired column choice ambiguous among all its partners.
pub fn inject_ambiguous(
    tree: &VisTree,
    meta: &AmbiguityMetadata,
    rules: &DesignRules,
    rng: &mut impl rand::Rng,
) -> Outcome {
    let c = ambiguate_candidates(tree, meta, 0.0);
    match c.choose(rng) {
        Some(inj) => Outcome::Applied(apply(tree, inj, rules).expect("ambiguation cannot fail")),
        None => Outcome::NoOp,
    }
}

/// Leave one stated component unstated, or add an unstated color channel.
pub fn add_implicit(tree: &VisTree, rules: &DesignRules, rng: &mut impl rand::Rng) -> Outcome {
    let mut c = hide_candidates(tree, |op| op != OperationKind::Task);
    c.extend(insert_channel_candidates(tree, rules));
    let all_open = tree.nodes.iter().all(|n| n.tag != AmbiguityTag::Explicit);
    if all_open {
        return Outcome::NoOp;
    }
    match c.choose(rng) {
        Some(inj) => Outcome::Applied(apply(tree, inj, rules).expect("hiding cannot fail")),
        None => Outcome::NoOp,
    }
}

/// Replace the stated chart type by its analytic task; the mark becomes implicit.
pub fn relax_explicit(tree: &VisTree, rules: &DesignRules) -> Result<VisTree, InjectorError> {
    let (mi, mark) = explicit_mark(tree).ok_or(InjectorError::NoMark)?;
    let stated = tree.nodes.iter().find_map(|n| match (n.op, n.value()) {
        (OperationKind::Task, Some(Param::Task(t))) => Some(*t),
        _ => None,
    });
    let task = task_for(mark, rules, stated).ok_or(InjectorError::NoMark)?;
    let mut out = tree.clone();
    out.nodes[mi] = ActionNode::implicit(OperationKind::Mark, vec![Param::Chart(mark)])
        .with_category(AmbiguityCategory::CT);
    if stated.is_none() {
        out.nodes.insert(
            mi + 1,
            ActionNode::explicit(OperationKind::Task, Param::Task(task))
                .with_category(AmbiguityCategory::CT),
        );
    }
    Ok(out)
}

/// An injected tree and its ambiguity level.
#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub tree: VisTree,
    pub level: usize,
    pub steps: Vec<Injection>,
}

struct Levels<'a> {
    table: &'a Table,
    rules: &'a DesignRules,
    memo: HashMap<VisTree, usize>,
}

impl Levels<'_> {
    fn of(&mut self, t: &VisTree) -> Result<usize, InjectorError> {
        if let Some(k) = self.memo.get(t) {
            return Ok(*k);
        }
        let k = resolve_detailed(t, self.rules, self.table)?.len();
        self.memo.insert(t.clone(), k);
        Ok(k)
    }
}

/// Widen `seed` until exactly `cfg.target_level` readings remain valid.
///
/// Tries `attempt_budget` random operation sequences, then searches every
/// reachable tree. On failure the error carries the highest level reachable
/// with the enabled categories.
pub fn inject_to_level(
    seed: &VisTree,
    table: &Table,
    meta: &AmbiguityMetadata,
    rules: &DesignRules,
    cfg: &InjectionConfig,
) -> Result<Injected, InjectorError> {
    cfg.validate()?;
    let mut levels = Levels {
        table,
        rules,
        memo: HashMap::new(),
    };
    let base = levels.of(seed)?;
    if !seed.is_all_explicit() || base != 1 {
        return Err(InjectorError::BadSeed(base));
    }
    let k = cfg.target_level;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    for _ in 0..cfg.attempt_budget {
        let mut tree = seed.clone();
        let mut steps = Vec::new();
        loop {
            let c = candidates(&tree, meta, rules, cfg);
            let Some(inj) = c.choose(&mut rng) else { break };
            tree = apply(&tree, inj, rules)?;
            steps.push(inj.clone());
            let level = levels.of(&tree)?;
            if level == k {
                return Ok(Injected { tree, level, steps });
            }
            if level > k {
                break;
            }
        }
    }

    // exhaustive fallback, depth-first in candidate order
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut stack = vec![(seed.clone(), Vec::new())];
    let mut max_level = base;
    while let Some((tree, steps)) = stack.pop() {
        if !seen.insert(tree.to_json()) {
            continue;
        }
        let level = levels.of(&tree)?;
        max_level = max_level.max(level);
        if level == k {
            return Ok(Injected { tree, level, steps });
        }
        for inj in candidates(&tree, meta, rules, cfg).into_iter().rev() {
            let next = apply(&tree, &inj, rules)?;
            let mut s = steps.clone();
            s.push(inj);
            stack.push((next, s));
        }
    }
    Err(InjectorError::TargetUnreachable {
        target: k,
        max_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::{build_metadata, builtin_kb, AmbiguousPair};
    use crate::solver::resolve_canonical;
    use crate::table::DataType;
    use crate::test_support::movies;
    use crate::vis::{
        build_seed_tree, canonicalize, AggregateOp, BinUnit, Encoding, Filter, VisSpec,
    };

    fn movies_seed() -> VisSpec {
        VisSpec::new(ChartType::Bar)
            .encode(
                Channel::X,
                Encoding::new("Date", DataType::Temporal).binned(BinUnit::Year),
            )
            .encode(
                Channel::Y,
                Encoding::new("Local_Gross", DataType::Quantitative).aggregated(AggregateOp::Mean),
            )
            .filter(Filter::one_of("Genre", &["Comedy", "Action"]))
    }

    fn setup() -> (Table, AmbiguityMetadata, DesignRules, VisTree) {
        let t = movies();
        let rules = DesignRules::default();
        let meta = build_metadata(&t, builtin_kb(), None).unwrap();
        let seed = build_seed_tree(&movies_seed(), &t, &rules).unwrap();
        (t, meta, rules, seed)
    }

    #[test]
    fn ambiguates_paired_column() {
        let (_, meta, rules, seed) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let Outcome::Applied(t) = inject_ambiguous(&seed, &meta, &rules, &mut rng) else {
            panic!("expected an injection");
        };
        let n = t.nodes.iter().find(|n| n.tag == AmbiguityTag::Ambiguous).unwrap();
        assert_eq!(
            n.params,
            vec![
                Param::Column("Local_Gross".into()),
                Param::Column("World_Gross".into())
            ]
        );
        assert_eq!(n.category, Some(AmbiguityCategory::DS));
    }

    #[test]
    fn no_pairs_is_noop() {
        let (t, _, rules, seed) = setup();
        let empty = AmbiguityMetadata {
            table_ref: t.name.clone(),
            standardized_names: Default::default(),
            ambiguous_pairs: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inject_ambiguous(&seed, &empty, &rules, &mut rng), Outcome::NoOp);
    }

    #[test]
    fn three_way_partners() {
        let (t, mut meta, rules, seed) = setup();
        meta.ambiguous_pairs.push(AmbiguousPair {
            column_a: "Local_Gross".into(),
            column_b: "Budget".into(),
            shared_alias: "money".into(),
            confidence: 0.5,
        });
        meta.validate(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let Outcome::Applied(tree) = inject_ambiguous(&seed, &meta, &rules, &mut rng) else {
            panic!()
        };
        let n = tree.nodes.iter().find(|n| n.tag == AmbiguityTag::Ambiguous).unwrap();
        assert_eq!(n.params.len(), 3);
    }

    #[test]
    fn filter_values_become_implicit() {
        let (_, _, rules, seed) = setup();
        let (fi, _) = seed.find(OperationKind::DataValueFilter).unwrap();
        let t = apply(&seed, &Injection::Hide { node: fi }, &rules).unwrap();
        assert_eq!(t.nodes[fi].tag, AmbiguityTag::Implicit);
        assert_eq!(t.nodes[fi].params, seed.nodes[fi].params);
        assert_eq!(t.nodes[fi].category, Some(AmbiguityCategory::DS));
    }

    #[test]
    fn color_channel_is_inserted() {
        let (_, _, rules, seed) = setup();
        let c = insert_channel_candidates(&seed, &rules);
        let t = apply(&seed, &c[0], &rules).unwrap();
        let last = t.nodes.last().unwrap();
        assert_eq!(last.op, OperationKind::ChannelMap(Channel::Color));
        assert_eq!(last.tag, AmbiguityTag::Implicit);
    }

    #[test]
    fn fully_open_tree_is_noop() {
        let (_, _, rules, _) = setup();
        let t = VisTree::new(
            "movies",
            vec![
                ActionNode::implicit(OperationKind::Mark, vec![]),
                ActionNode::implicit(OperationKind::ChannelMap(Channel::Color), vec![]),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(add_implicit(&t, &rules, &mut rng), Outcome::NoOp);
    }

    #[test]
    fn relaxing_marks() {
        let (t, _, rules, seed) = setup();
        let r = relax_explicit(&seed, &rules).unwrap();
        assert_eq!(r.nodes[0].tag, AmbiguityTag::Implicit);
        assert_eq!(r.nodes[1].value(), Some(&Param::Task(AnalyticTask::Trend)));

        let scatter = VisSpec::new(ChartType::Scatter)
            .encode(Channel::X, Encoding::new("Budget", DataType::Quantitative))
            .encode(Channel::Y, Encoding::new("World_Gross", DataType::Quantitative));
        let s = build_seed_tree(&scatter, &t, &rules).unwrap();
        let r = relax_explicit(&s, &rules).unwrap();
        assert_eq!(r.nodes[1].value(), Some(&Param::Task(AnalyticTask::Correlation)));

        let markless = VisTree::new("movies", vec![]);
        assert_eq!(relax_explicit(&markless, &rules), Err(InjectorError::NoMark));
    }

    #[test]
    fn reaches_four_with_ds_and_ct() {
        let (t, meta, rules, seed) = setup();
        let cfg = InjectionConfig {
            target_level: 4,
            ..InjectionConfig::default()
        };
        let got = inject_to_level(&seed, &t, &meta, &rules, &cfg).unwrap();
        assert_eq!(got.level, 4);
        let gold = resolve_canonical(&got.tree, &rules, &t).unwrap();
        assert!(gold.contains(&canonicalize(&movies_seed())));
    }

    #[test]
    fn reaches_two_with_ds_only() {
        let (t, meta, rules, seed) = setup();
        let cfg = InjectionConfig {
            target_level: 2,
            enabled_categories: vec![AmbiguityCategory::DS],
            ..InjectionConfig::default()
        };
        let got = inject_to_level(&seed, &t, &meta, &rules, &cfg).unwrap();
        assert_eq!(got.level, 2);
        assert!(got.steps.iter().any(|s| matches!(s, Injection::Ambiguate { .. })));
    }

    #[test]
    fn unreachable_target_reports_maximum() {
        let (t, meta, rules, seed) = setup();
        let cfg = InjectionConfig {
            target_level: 7,
            max_target: 8,
            ..InjectionConfig::default()
        };
        assert_eq!(
            inject_to_level(&seed, &t, &meta, &rules, &cfg),
            Err(InjectorError::TargetUnreachable {
                target: 7,
                max_level: 4
            })
        );
    }

    #[test]
    fn same_seed_same_tree() {
        let (t, meta, rules, seed) = setup();
        let cfg = InjectionConfig {
            target_level: 2,
            enabled_categories: AmbiguityCategory::ALL.to_vec(),
            rng_seed: 11,
            ..InjectionConfig::default()
        };
        let a = inject_to_level(&seed, &t, &meta, &rules, &cfg).unwrap();
        let b = inject_to_level(&seed, &t, &meta, &rules, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let mut c = InjectionConfig::default();
        c.target_level = 1;
        assert!(c.validate().is_err());
        c.target_level = 3;
        c.enabled_categories.clear();
        assert!(c.validate().is_err());
    }
}
