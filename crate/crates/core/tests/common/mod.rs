//! Shared fixtures for the integration tests: bundled tables, a random tree
//! generator, and a brute-force oracle written against the grammar rules
//! independently of the solver.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ambivis::metadata::AmbiguityMetadata;
use ambivis::pipeline::{parse_seeds, Seed};
use ambivis::reasoning::{ReasoningPath, STEP_COUNT};
use ambivis::rules::DesignRules;
use ambivis::table::{DataType, Table, TableStore};
use ambivis::vis::{
    canonicalize, flatten, ActionNode, AggregateOp, AmbiguityTag, AnalyticTask, BinUnit,
    CanonicalSpec, Channel, ChartType, Filter, OperationKind, Param, ResolvedTree, SortOrder,
    VisTree,
};

pub fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn data(rel: &str) -> PathBuf {
    root().join("data").join(rel)
}

pub fn fixture(rel: &str) -> PathBuf {
    root().join("tests/fixtures").join(rel)
}

pub fn tables() -> TableStore {
    TableStore::load_dir(&data("tables")).expect("bundled tables load")
}

pub fn seeds() -> Vec<Seed> {
    parse_seeds(&std::fs::read_to_string(data("seeds.jsonl")).unwrap()).unwrap()
}

pub fn col(c: &str) -> Param {
    Param::Column(c.into())
}

/// The movies tree with an unnamed chart type, two candidate gross columns
/// and unstated genre values.
pub fn movies_tree() -> VisTree {
    VisTree::new(
        "movies",
        vec![
            ActionNode::implicit(OperationKind::Mark, vec![Param::Chart(ChartType::Bar)]),
            ActionNode::explicit(OperationKind::Task, Param::Task(AnalyticTask::Trend)),
            ActionNode::explicit(OperationKind::ChannelMap(Channel::X), col("Date")),
            ActionNode::ambiguous(
                OperationKind::ChannelMap(Channel::Y),
                vec![col("Local_Gross"), col("World_Gross")],
            ),
            ActionNode::explicit(OperationKind::Bin(Channel::X), Param::Bin(BinUnit::Year)),
            ActionNode::explicit(
                OperationKind::Aggregate(Channel::Y),
                Param::Aggregate(AggregateOp::Mean),
            ),
            ActionNode::implicit(
                OperationKind::DataValueFilter,
                vec![Param::Filter(Filter::one_of("Genre", &["Comedy", "Action"]))],
            ),
        ],
    )
}

fn columns_of(table: &Table, t: DataType) -> Vec<&str> {
    table
        .columns
        .iter()
        .filter(|c| c.dtype == t)
        .map(|c| c.name.as_str())
        .collect()
}

fn pick_distinct<T: Clone + PartialEq>(rng: &mut ChaCha8Rng, from: &[T], n: usize) -> Vec<T> {
    from.choose_multiple(rng, n).cloned().collect()
}

/// Wrap a choice in a random tag. `alts` supplies the alternatives of an
/// ambiguous node; implicit nodes keep `stated` as their hint.
fn tagged(
    op: OperationKind,
    stated: Param,
    alts: Vec<Param>,
    p_ambiguous: f64,
    p_implicit: f64,
    rng: &mut ChaCha8Rng,
) -> ActionNode {
    let r: f64 = rng.random();
    if r < p_ambiguous && alts.len() >= 2 {
        ActionNode::ambiguous(op, alts)
    } else if r < p_ambiguous + p_implicit {
        ActionNode::implicit(op, vec![stated])
    } else {
        ActionNode::explicit(op, stated)
    }
}

/// A random tree over one of the bundled tables. About half start from a
/// plausible chart, the rest from arbitrary channel choices.
pub fn random_tree(store: &TableStore, rng: &mut ChaCha8Rng) -> VisTree {
    let names: Vec<&Table> = store.iter().collect();
    let table = *names.choose(rng).unwrap();
    let all: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    let cats = columns_of(table, DataType::Categorical);
    let quants = columns_of(table, DataType::Quantitative);
    let temps = columns_of(table, DataType::Temporal);
    let mut nodes = Vec::new();

    let marks: Vec<Param> = ChartType::ALL.iter().map(|c| Param::Chart(*c)).collect();
    let plausible = rng.random_bool(0.5);
    let mark = if plausible {
        *[ChartType::Bar, ChartType::Line].choose(rng).unwrap()
    } else {
        *ChartType::ALL.choose(rng).unwrap()
    };
    let n_alt = rng.random_range(2..=3);
    nodes.push(tagged(
        OperationKind::Mark,
        Param::Chart(mark),
        pick_distinct(rng, &marks, n_alt),
        0.25,
        0.3,
        rng,
    ));
    if rng.random_bool(0.5) {
        let task = *AnalyticTask::ALL.choose(rng).unwrap();
        let node = if rng.random_bool(0.2) {
            ActionNode::implicit(OperationKind::Task, vec![])
        } else {
            ActionNode::explicit(OperationKind::Task, Param::Task(task))
        };
        nodes.push(node);
    }

    let column_choice = |rng: &mut ChaCha8Rng, pool: &[&str]| -> (Param, Vec<Param>) {
        let pool = if pool.is_empty() { &all[..] } else { pool };
        let first = *pool.choose(rng).unwrap();
        let n = rng.random_range(2..=3).min(pool.len());
        let mut alts: Vec<Param> = pick_distinct(rng, pool, n).into_iter().map(col).collect();
        if !alts.contains(&col(first)) {
            alts[0] = col(first);
        }
        (col(first), alts)
    };

    let mut encoded = Vec::new();
    if plausible {
        let x_pool = if !temps.is_empty() && rng.random_bool(0.5) { &temps } else { &cats };
        let (x, xa) = column_choice(rng, x_pool);
        nodes.push(tagged(OperationKind::ChannelMap(Channel::X), x.clone(), xa, 0.2, 0.05, rng));
        let (y, ya) = column_choice(rng, &quants);
        nodes.push(tagged(OperationKind::ChannelMap(Channel::Y), y, ya, 0.4, 0.05, rng));
        encoded.push(Channel::X);
        encoded.push(Channel::Y);
        if x.as_column().is_some_and(|c| temps.contains(&c)) {
            nodes.push(tagged(
                OperationKind::Bin(Channel::X),
                Param::Bin(BinUnit::Year),
                vec![Param::Bin(BinUnit::Year), Param::Bin(BinUnit::Month)],
                0.2,
                0.2,
                rng,
            ));
        }
        let ops: Vec<Param> = AggregateOp::ALL.iter().map(|a| Param::Aggregate(*a)).collect();
        let n = rng.random_range(2..=3);
        nodes.push(tagged(
            OperationKind::Aggregate(Channel::Y),
            Param::Aggregate(*AggregateOp::ALL.choose(rng).unwrap()),
            pick_distinct(rng, &ops, n),
            0.2,
            0.2,
            rng,
        ));
        if rng.random_bool(0.3) {
            let (c, ca) = column_choice(rng, &cats);
            nodes.push(tagged(OperationKind::ChannelMap(Channel::Color), c, ca, 0.3, 0.1, rng));
            encoded.push(Channel::Color);
        }
    } else {
        let n = rng.random_range(1..=3);
        for ch in pick_distinct(rng, &Channel::ALL, n) {
            let (c, ca) = column_choice(rng, &all);
            nodes.push(tagged(OperationKind::ChannelMap(ch), c, ca, 0.3, 0.1, rng));
            encoded.push(ch);
        }
        if rng.random_bool(0.4) {
            let ch = *Channel::ALL.choose(rng).unwrap();
            nodes.push(tagged(
                OperationKind::Aggregate(ch),
                Param::Aggregate(*AggregateOp::ALL.choose(rng).unwrap()),
                vec![Param::Aggregate(AggregateOp::Sum), Param::Aggregate(AggregateOp::Count)],
                0.3,
                0.3,
                rng,
            ));
        }
        if rng.random_bool(0.3) {
            let ch = *[Channel::X, Channel::Y, Channel::Color].choose(rng).unwrap();
            nodes.push(tagged(
                OperationKind::Bin(ch),
                Param::Bin(BinUnit::Year),
                vec![Param::Bin(BinUnit::Year), Param::Bin(BinUnit::Month)],
                0.3,
                0.3,
                rng,
            ));
        }
    }
    if rng.random_bool(0.15) {
        let params = if rng.random_bool(0.5) {
            vec![]
        } else {
            pick_distinct(rng, &all, 2).into_iter().map(col).collect()
        };
        nodes.push(ActionNode::implicit(OperationKind::DataColumnSelect, params));
    }
    if rng.random_bool(0.2) && !encoded.is_empty() {
        let ch = *encoded.choose(rng).unwrap();
        nodes.push(tagged(
            OperationKind::Sort(ch),
            Param::Order(SortOrder::Descending),
            vec![Param::Order(SortOrder::Ascending), Param::Order(SortOrder::Descending)],
            0.3,
            0.3,
            rng,
        ));
    }
    if rng.random_bool(0.3) && !cats.is_empty() {
        let c = *cats.choose(rng).unwrap();
        let values: Vec<String> = table
            .column(c)
            .and_then(|c| c.distinct_values.clone())
            .unwrap_or_default()
            .into_iter()
            .take(2)
            .collect();
        if !values.is_empty() {
            let refs: Vec<&str> = values.iter().map(String::as_str).collect();
            let f = Param::Filter(Filter::one_of(c, &refs));
            let node = if rng.random_bool(0.5) {
                ActionNode::implicit(OperationKind::DataValueFilter, vec![f])
            } else {
                ActionNode::explicit(OperationKind::DataValueFilter, f)
            };
            nodes.push(node);
        }
    }
    VisTree::new(table.name.clone(), nodes)
}

/// One slot value of the oracle's cross product.
#[derive(Debug, Clone)]
enum Pick {
    Drop,
    Value(Param),
    Select(Param, Channel),
}

/// The alternatives of one node, read straight from the tag semantics.
fn alternatives(n: &ActionNode, tree: &VisTree, table: &Table, rules: &DesignRules) -> Vec<Pick> {
    let columns: Vec<Param> = table.columns.iter().map(|c| col(&c.name)).collect();
    let v = |ps: Vec<Param>| ps.into_iter().map(Pick::Value).collect::<Vec<_>>();
    match n.tag {
        AmbiguityTag::Explicit | AmbiguityTag::Ambiguous => {
            if n.op == OperationKind::DataColumnSelect {
                let mut out = Vec::new();
                for p in &n.params {
                    for &ch in Channel::ALL {
                        out.push(Pick::Select(p.clone(), ch));
                    }
                }
                return out;
            }
            v(n.params.clone())
        }
        AmbiguityTag::Implicit => match n.op {
            OperationKind::Mark => {
                let task = tree.nodes.iter().find_map(|m| match (m.op, m.tag, m.params.as_slice()) {
                    (OperationKind::Task, AmbiguityTag::Explicit, [Param::Task(t)]) => Some(*t),
                    _ => None,
                });
                v(rules
                    .charts
                    .iter()
                    .filter(|c| task.is_none_or(|t| rules.charts_for_task(t).contains(c)))
                    .map(|c| Param::Chart(*c))
                    .collect())
            }
            OperationKind::Task => v(AnalyticTask::ALL.iter().map(|t| Param::Task(*t)).collect()),
            OperationKind::ChannelMap(_) => {
                let mut out = vec![Pick::Drop];
                out.extend(v(columns));
                out
            }
            OperationKind::DataColumnSelect => {
                let pool = if n.params.is_empty() { columns } else { n.params.clone() };
                let mut out = Vec::new();
                for p in pool {
                    for &ch in Channel::ALL {
                        out.push(Pick::Select(p.clone(), ch));
                    }
                }
                out
            }
            OperationKind::Aggregate(_) => {
                let mut d: Vec<Param> =
                    rules.implicit_aggregates.iter().map(|a| Param::Aggregate(*a)).collect();
                for p in &n.params {
                    if !d.contains(p) {
                        d.push(p.clone());
                    }
                }
                if d.is_empty() {
                    d.push(Param::Aggregate(AggregateOp::Mean));
                }
                v(d)
            }
            OperationKind::Bin(_) => {
                let mut d: Vec<Param> = rules.bin_units.iter().map(|b| Param::Bin(*b)).collect();
                for p in &n.params {
                    if !d.contains(p) {
                        d.push(p.clone());
                    }
                }
                v(d)
            }
            OperationKind::Sort(_) => v(SortOrder::ALL.iter().map(|o| Param::Order(*o)).collect()),
            OperationKind::DataValueFilter => {
                if n.params.is_empty() {
                    vec![Pick::Drop]
                } else {
                    v(n.params.clone())
                }
            }
        },
    }
}

/// Size of the raw cross product the oracle walks.
pub fn raw_cross_product(tree: &VisTree, table: &Table, rules: &DesignRules) -> u128 {
    tree.nodes
        .iter()
        .map(|n| alternatives(n, tree, table, rules).len() as u128)
        .product()
}

/// Every complete assignment of the tree as a list of explicit nodes.
pub fn all_assignments(tree: &VisTree, table: &Table, rules: &DesignRules) -> Vec<Vec<ActionNode>> {
    let alts: Vec<Vec<Pick>> = tree
        .nodes
        .iter()
        .map(|n| alternatives(n, tree, table, rules))
        .collect();
    let mut out = vec![Vec::new()];
    for (n, choices) in tree.nodes.iter().zip(&alts) {
        let mut next = Vec::with_capacity(out.len() * choices.len());
        for partial in &out {
            for c in choices {
                let mut p: Vec<ActionNode> = partial.clone();
                match c {
                    Pick::Drop => {}
                    Pick::Value(v) => p.push(ActionNode::explicit(n.op, v.clone())),
                    Pick::Select(v, ch) => {
                        p.push(ActionNode::explicit(OperationKind::ChannelMap(*ch), v.clone()))
                    }
                }
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Names of the grammar rules an assignment breaks, evaluated without the solver.
pub fn oracle_violations(nodes: &[ActionNode], table: &Table, rules: &DesignRules) -> Vec<&'static str> {
    let dtype = |c: &str| table.column(c).map(|c| c.dtype);
    let mut marks = Vec::new();
    let mut tasks = Vec::new();
    let mut fields: Vec<(Channel, String)> = Vec::new();
    let mut aggs: Vec<(Channel, AggregateOp)> = Vec::new();
    let mut bins: Vec<(Channel, BinUnit)> = Vec::new();
    let mut sorts: Vec<Channel> = Vec::new();
    for n in nodes {
        match (n.op, &n.params[0]) {
            (OperationKind::Mark, Param::Chart(m)) => marks.push(*m),
            (OperationKind::Task, Param::Task(t)) => tasks.push(*t),
            (OperationKind::ChannelMap(ch), Param::Column(c)) => fields.push((ch, c.clone())),
            (OperationKind::Aggregate(ch), Param::Aggregate(a)) => aggs.push((ch, *a)),
            (OperationKind::Bin(ch), Param::Bin(b)) => bins.push((ch, *b)),
            (OperationKind::Sort(ch), _) => sorts.push(ch),
            _ => {}
        }
    }
    let field = |ch: Channel| fields.iter().find(|(c, _)| *c == ch).map(|(_, f)| f.as_str());
    let agg = |ch: Channel| aggs.iter().find(|(c, _)| *c == ch).map(|(_, a)| *a);
    let bin = |ch: Channel| bins.iter().find(|(c, _)| *c == ch).map(|(_, b)| *b);
    let counted = |ch: Channel| agg(ch) == Some(AggregateOp::Count);
    let mark = marks.first().copied();
    let mut v = Vec::new();

    if fields.is_empty() {
        v.push("no_encodings");
    }
    if mark.is_none() {
        v.push("missing_mark");
    }
    if Channel::ALL
        .iter()
        .any(|ch| fields.iter().filter(|(c, _)| c == ch).count() > 1)
    {
        v.push("multiple_fields");
    }
    if let Some(m) = mark {
        let bad = fields.iter().any(|(ch, c)| {
            let t = if counted(*ch) { Some(DataType::Quantitative) } else { dtype(c) };
            !t.is_some_and(|t| rules.allowed(m, *ch).contains(&t))
        });
        if bad {
            v.push("channel_incompat");
        }
        if rules.required(m).iter().any(|ch| field(*ch).is_none()) {
            v.push("missing_required_channel");
        }
        if tasks.iter().any(|t| !rules.charts_for_task(*t).contains(&m)) {
            v.push("task_mark_mismatch");
        }
        let measure = match m {
            ChartType::Bar | ChartType::Line => field(Channel::X)
                .filter(|x| dtype(x) == Some(DataType::Categorical) || bin(Channel::X).is_some())
                .map(|_| Channel::Y),
            ChartType::Pie => field(Channel::Color).map(|_| Channel::Theta),
            ChartType::Heatmap => Some(Channel::Color),
            _ => None,
        };
        if let Some(ch) = measure {
            if field(ch).is_some_and(|c| dtype(c) == Some(DataType::Quantitative)) && agg(ch).is_none() {
                v.push("missing_aggregate");
            }
        }
    }
    let dup = fields.iter().enumerate().any(|(i, (ca, a))| {
        fields[i + 1..].iter().any(|(cb, b)| {
            ca != cb && a.eq_ignore_ascii_case(b) && !counted(*ca) && !counted(*cb)
        })
    });
    if dup {
        v.push("duplicate_field");
    }
    let unbinned = fields.iter().any(|(ch, c)| {
        matches!(ch, Channel::X | Channel::Y)
            && dtype(c) == Some(DataType::Temporal)
            && bin(*ch).is_none()
            && agg(*ch).is_none()
    });
    if unbinned {
        v.push("temporal_unbinned");
    }
    let bad_bin = bins.iter().any(|(ch, _)| {
        !matches!(ch, Channel::X | Channel::Y)
            || fields
                .iter()
                .any(|(c, f)| c == ch && dtype(f) != Some(DataType::Temporal))
    });
    if bad_bin {
        v.push("bin_invalid");
    }
    let bad_agg = aggs.iter().any(|(ch, op)| {
        *ch == Channel::X
            || mark == Some(ChartType::Boxplot)
            || (*op != AggregateOp::Count
                && fields
                    .iter()
                    .any(|(c, f)| c == ch && dtype(f) != Some(DataType::Quantitative)))
    });
    if bad_agg {
        v.push("aggregate_invalid");
    }
    let dangling = aggs.iter().map(|(c, _)| *c)
        .chain(bins.iter().map(|(c, _)| *c))
        .chain(sorts.iter().copied())
        .any(|ch| field(ch).is_none());
    if dangling {
        v.push("dangling_transform");
    }
    v.sort();
    v
}

/// Enumerate every assignment, keep the rule-abiding ones, and collect
/// their canonical charts.
pub fn brute_force(tree: &VisTree, table: &Table, rules: &DesignRules) -> BTreeSet<CanonicalSpec> {
    all_assignments(tree, table, rules)
        .into_iter()
        .filter(|a| oracle_violations(a, table, rules).is_empty())
        .map(|a| {
            let t = ResolvedTree::new(tree.table_ref.clone(), a).expect("explicit nodes");
            canonicalize(&flatten(&t, table).expect("valid assignment flattens"))
        })
        .collect()
}

/// Random trees whose raw cross product stays within `limit`.
pub fn bounded_trees(seed: u64, count: usize, limit: u128) -> Vec<VisTree> {
    let store = tables();
    let rules = DesignRules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let t = random_tree(&store, &mut rng);
        let table = store.get(&t.table_ref).unwrap();
        if t.validate_against(table).is_ok() && raw_cross_product(&t, table, &rules) <= limit {
            out.push(t);
        }
    }
    out
}

/// Levels of every tree reachable from `seed` by widening any subset of
/// its paired columns, its filters and its chart type.
pub fn reachable_levels(seed: &VisTree, table: &Table, meta: &AmbiguityMetadata) -> BTreeSet<usize> {
    let rules = DesignRules::default();
    let mut ops: Vec<(usize, &'static str)> = Vec::new();
    for (i, n) in seed.nodes.iter().enumerate() {
        match (n.op, &n.params[0]) {
            (OperationKind::ChannelMap(_) | OperationKind::DataColumnSelect, Param::Column(c))
                if !meta.partners(c, 0.0).is_empty() =>
            {
                ops.push((i, "ambiguate"))
            }
            (OperationKind::DataValueFilter, _) => ops.push((i, "hide")),
            (OperationKind::Mark, _) => ops.push((i, "relax")),
            _ => {}
        }
    }
    let mut levels = BTreeSet::new();
    for mask in 0u32..(1 << ops.len()) {
        let mut nodes = seed.nodes.clone();
        let mut extra = Vec::new();
        for (bit, (i, what)) in ops.iter().enumerate() {
            if mask & (1 << bit) == 0 {
                continue;
            }
            let n = &seed.nodes[*i];
            nodes[*i] = match *what {
                "ambiguate" => {
                    let c = n.params[0].as_column().unwrap();
                    let mut alts = vec![col(c)];
                    alts.extend(meta.partners(c, 0.0).into_iter().map(col));
                    ActionNode::ambiguous(n.op, alts)
                }
                "hide" => ActionNode::implicit(n.op, n.params.clone()),
                _ => {
                    let Param::Chart(m) = n.params[0] else { unreachable!() };
                    if !seed.nodes.iter().any(|x| x.op == OperationKind::Task) {
                        let t = rules.tasks_for_chart(m)[0];
                        extra.push(ActionNode::explicit(OperationKind::Task, Param::Task(t)));
                    }
                    ActionNode::implicit(n.op, n.params.clone())
                }
            };
        }
        nodes.extend(extra);
        levels.insert(brute_force(&VisTree::new(seed.table_ref.clone(), nodes), table, &rules).len());
    }
    levels
}

/// Copy `gold` and corrupt it from step `k` on, keeping later steps cumulative.
pub fn plant_error(gold: &ReasoningPath, k: usize, variant: usize) -> ReasoningPath {
    let mut p = gold.clone();
    for step in k..=STEP_COUNT {
        let s = &mut p.steps[step - 1];
        if step < STEP_COUNT {
            s.actions.insert(format!("column:not_a_column_{variant}"));
        } else if variant % 2 == 0 && s.specs.len() > 1 {
            let first = s.specs.iter().next().unwrap().clone();
            s.specs.remove(&first);
        } else {
            let mut extra = s.specs.iter().next().unwrap().clone();
            extra.encodings[0].field = format!("bogus_{variant}");
            s.specs.insert(extra);
        }
    }
    p
}
