//! Resolution of ambiguity-aware trees: compile a tree and the design rules
//! into a finite constraint program, then enumerate every valid model.

mod constraints;
mod enumerate;
mod program;

use std::collections::BTreeSet;

use thiserror::Error;

pub use constraints::{
    builtin_constraints, check_hard_constraints, Builtin, Candidate, CustomCheck, Deps,
    HardConstraint, Violation,
};
pub use enumerate::{enumerate_models, Enumeration};
pub use program::{
    Assignment, AttrValue, Attribute, ChoiceRule, ConstraintProgram, Entity, SlotRole,
};

use crate::rules::DesignRules;
use crate::table::Table;
use crate::vis::{canonicalize, flatten, CanonicalSpec, ResolvedTree, VisError, VisSpec, VisTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("constraint `{0}` already defined")]
    DuplicateConstraint(String),
    #[error(transparent)]
    Vis(VisError),
}

impl From<VisError> for SolverError {
    fn from(e: VisError) -> Self {
        match e {
            VisError::UnknownColumn(c) => SolverError::UnknownColumn(c),
            VisError::UnknownOperation(o) => SolverError::UnknownOperation(o),
            VisError::InvalidTree(m) | VisError::InvalidNode(m) => SolverError::InvalidTree(m),
            other => SolverError::Vis(other),
        }
    }
}

/// One interpretation of a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub tree: ResolvedTree,
    pub spec: VisSpec,
    pub canonical: CanonicalSpec,
}

/// Models of a compiled program, reified and deduplicated by canonical spec.
/// The first model of each equivalence class in enumeration order is kept.
pub fn resolve_program(
    prog: &ConstraintProgram,
    table: &Table,
) -> Result<Vec<Resolution>, SolverError> {
    let models = enumerate_models(prog);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in &models.models {
        let tree = ResolvedTree::new(prog.table_ref.clone(), prog.reify(m))?;
        let spec = flatten(&tree, table)?;
        let canonical = canonicalize(&spec);
        if seen.insert(canonical.clone()) {
            out.push(Resolution {
                tree,
                spec,
                canonical,
            });
        }
    }
    Ok(out)
}

/// Every distinct valid interpretation of `tree`, in enumeration order.
pub fn resolve_detailed(
    tree: &VisTree,
    rules: &DesignRules,
    table: &Table,
) -> Result<Vec<Resolution>, SolverError> {
    let prog = ConstraintProgram::compile(tree, rules, table)?;
    resolve_program(&prog, table)
}

pub fn resolve(
    tree: &VisTree,
    rules: &DesignRules,
    table: &Table,
) -> Result<Vec<ResolvedTree>, SolverError> {
    Ok(resolve_detailed(tree, rules, table)?
        .into_iter()
        .map(|r| r.tree)
        .collect())
}

/// The canonical gold set of a tree.
pub fn resolve_canonical(
    tree: &VisTree,
    rules: &DesignRules,
    table: &Table,
) -> Result<BTreeSet<CanonicalSpec>, SolverError> {
    Ok(resolve_detailed(tree, rules, table)?
        .into_iter()
        .map(|r| r.canonical)
        .collect())
}

/// Number of distinct valid interpretations.
pub fn ambiguity_level(tree: &VisTree, rules: &DesignRules, table: &Table) -> Result<usize, SolverError> {
    Ok(resolve_detailed(tree, rules, table)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::DataType;
    use crate::test_support::movies;
    use crate::vis::{
        build_seed_tree, ActionNode, AggregateOp, AnalyticTask, BinUnit, Channel, ChartType,
        Encoding, Filter, OperationKind, Param,
    };

    fn col(c: &str) -> Param {
        Param::Column(c.into())
    }

    fn movies_tree() -> VisTree {
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

    #[test]
    fn movies_has_four_readings() {
        let r = resolve_detailed(&movies_tree(), &DesignRules::default(), &movies()).unwrap();
        let got: Vec<(ChartType, String)> = r
            .iter()
            .map(|x| (x.spec.mark, x.spec.encodings[&Channel::Y].field.clone()))
            .collect();
        assert_eq!(
            got,
            vec![
                (ChartType::Bar, "Local_Gross".into()),
                (ChartType::Bar, "World_Gross".into()),
                (ChartType::Line, "Local_Gross".into()),
                (ChartType::Line, "World_Gross".into()),
            ]
        );
    }

    #[test]
    fn implicit_mark_domain_follows_task() {
        let prog =
            ConstraintProgram::compile(&movies_tree(), &DesignRules::default(), &movies()).unwrap();
        let mark = prog
            .attributes
            .iter()
            .find(|a| a.key.0 == "mark")
            .unwrap();
        assert_eq!(
            mark.domain,
            vec![
                AttrValue::Param(Param::Chart(ChartType::Bar)),
                AttrValue::Param(Param::Chart(ChartType::Line))
            ]
        );
        let dump = prog.dump();
        assert!(dump.contains("1 { attribute((encoding,field),enc_y,\"Local_Gross\")"));
        assert!(dump.contains(":- violation(no_encodings)."));
    }

    #[test]
    fn seed_has_exactly_itself() {
        let spec = VisSpec::new(ChartType::Scatter)
            .encode(Channel::X, Encoding::new("Budget", DataType::Quantitative))
            .encode(Channel::Y, Encoding::new("World_Gross", DataType::Quantitative));
        let rules = DesignRules::default();
        let t = build_seed_tree(&spec, &movies(), &rules).unwrap();
        let r = resolve_detailed(&t, &rules, &movies()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].canonical, canonicalize(&spec));
    }

    #[test]
    fn three_columns_by_two_marks() {
        let mut t = movies_tree();
        t.nodes[0] = ActionNode::ambiguous(
            OperationKind::Mark,
            vec![Param::Chart(ChartType::Bar), Param::Chart(ChartType::Line)],
        );
        t.nodes[3] = ActionNode::ambiguous(
            OperationKind::ChannelMap(Channel::Y),
            vec![col("Local_Gross"), col("World_Gross"), col("Budget")],
        );
        let r = resolve(&t, &DesignRules::default(), &movies()).unwrap();
        assert_eq!(r.len(), 6);
    }

    #[test]
    fn contradictory_program_is_empty() {
        let t = VisTree::new(
            "movies",
            vec![
                ActionNode::explicit(OperationKind::Mark, Param::Chart(ChartType::Pie)),
                ActionNode::explicit(OperationKind::ChannelMap(Channel::X), col("Genre")),
            ],
        );
        let prog = ConstraintProgram::compile(&t, &DesignRules::default(), &movies()).unwrap();
        assert!(enumerate_models(&prog).is_unsatisfiable());
    }

    #[test]
    fn unknown_column_is_reported() {
        let mut t = movies_tree();
        t.nodes[2] = ActionNode::explicit(OperationKind::ChannelMap(Channel::X), col("Year"));
        assert_eq!(
            resolve(&t, &DesignRules::default(), &movies()),
            Err(SolverError::UnknownColumn("Year".into()))
        );
    }

    #[test]
    fn extra_constraint_only_shrinks() {
        let rules = DesignRules::default();
        let mut prog = ConstraintProgram::compile(&movies_tree(), &rules, &movies()).unwrap();
        let before = enumerate_models(&prog).models;
        prog.add_constraint("no_lines", |c: &Candidate| {
            (c.mark() == Some(ChartType::Line)).then(|| "line".to_string())
        })
        .unwrap();
        let after = enumerate_models(&prog).models;
        assert_eq!(after.len(), 2);
        assert!(after.iter().all(|m| before.contains(m)));
        assert!(prog.add_constraint("no_lines", |_: &Candidate| None).is_err());
    }
}
