use std::collections::BTreeMap;

use super::{
    ActionNode, Encoding, OperationKind, Param, ResolvedTree, SortSpec, VisError, VisSpec, VisTree,
};
use crate::rules::DesignRules;
use crate::solver::check_hard_constraints;
use crate::table::Table;

/// The all-explicit tree of a concrete chart.
///
/// Nodes come out as: mark, task, one encoding per channel, bins, aggregates,
/// filters, sort.
pub fn build_seed_tree(
    spec: &VisSpec,
    table: &Table,
    rules: &DesignRules,
) -> Result<VisTree, VisError> {
    for (ch, enc) in &spec.encodings {
        let col = table
            .column(&enc.field)
            .ok_or_else(|| VisError::UnknownColumn(enc.field.clone()))?;
        if col.dtype != enc.dtype {
            return Err(VisError::IncompatibleSpec(format!(
                "`{}` on {ch} is declared {} but the table holds {}",
                enc.field, enc.dtype, col.dtype
            )));
        }
    }

    let mut nodes = vec![ActionNode::explicit(
        OperationKind::Mark,
        Param::Chart(spec.mark),
    )];
    if let Some(t) = spec.task {
        nodes.push(ActionNode::explicit(OperationKind::Task, Param::Task(t)));
    }
    for (ch, enc) in &spec.encodings {
        nodes.push(ActionNode::explicit(
            OperationKind::ChannelMap(*ch),
            Param::Column(enc.field.clone()),
        ));
    }
    for (ch, enc) in &spec.encodings {
        if let Some(b) = enc.bin {
            nodes.push(ActionNode::explicit(OperationKind::Bin(*ch), Param::Bin(b)));
        }
    }
    for (ch, enc) in &spec.encodings {
        if let Some(a) = enc.aggregate {
            nodes.push(ActionNode::explicit(
                OperationKind::Aggregate(*ch),
                Param::Aggregate(a),
            ));
        }
    }
    for f in &spec.filters {
        nodes.push(ActionNode::explicit(
            OperationKind::DataValueFilter,
            Param::Filter(f.clone()),
        ));
    }
    if let Some(s) = spec.sort {
        nodes.push(ActionNode::explicit(
            OperationKind::Sort(s.channel),
            Param::Order(s.order),
        ));
    }

    let violations = check_hard_constraints(&nodes, rules, table);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(VisError::IncompatibleSpec(msg.join("; ")));
    }
    let tree = VisTree::new(table.name.clone(), nodes);
    tree.validate_against(table)?;
    Ok(tree)
}

/// Project a resolved tree onto the concrete chart it describes.
pub fn flatten(tree: &ResolvedTree, table: &Table) -> Result<VisSpec, VisError> {
    let value = |n: &ActionNode| -> Result<Param, VisError> {
        n.value()
            .cloned()
            .ok_or_else(|| VisError::Unresolved(format!("node `{}`", n.op)))
    };

    let mark = tree
        .nodes
        .iter()
        .find(|n| n.op == OperationKind::Mark)
        .ok_or(VisError::MissingMark)?;
    let Param::Chart(mark) = value(mark)? else {
        unreachable!("validated mark node holds a chart");
    };
    let mut spec = VisSpec::new(mark);
    let mut encodings = BTreeMap::new();

    for n in &tree.nodes {
        if let (OperationKind::ChannelMap(ch), Param::Column(col)) = (n.op, value(n)?) {
            let dtype = table
                .column(&col)
                .ok_or_else(|| VisError::UnknownColumn(col.clone()))?
                .dtype;
            if encodings.insert(ch, Encoding::new(col, dtype)).is_some() {
                return Err(VisError::InvalidTree(format!("two fields on {ch}")));
            }
        }
    }
    for n in &tree.nodes {
        let p = value(n)?;
        let dangling = |ch| VisError::InvalidTree(format!("`{}` on unencoded {ch}", n.op));
        match (n.op, p) {
            (OperationKind::Bin(ch), Param::Bin(b)) => {
                let e: &mut Encoding = encodings.get_mut(&ch).ok_or_else(|| dangling(ch))?;
                e.bin = Some(b);
            }
            (OperationKind::Aggregate(ch), Param::Aggregate(a)) => {
                let e: &mut Encoding = encodings.get_mut(&ch).ok_or_else(|| dangling(ch))?;
                e.aggregate = Some(a);
            }
            (OperationKind::Sort(ch), Param::Order(order)) => {
                spec.sort = Some(SortSpec { channel: ch, order });
            }
            (OperationKind::Task, Param::Task(t)) => spec.task = Some(t),
            (OperationKind::DataValueFilter, Param::Filter(f)) => spec.filters.push(f),
            _ => {}
        }
    }
    spec.encodings = encodings;
    Ok(spec)
}
