//! Resolve an ambiguous movies request into every valid chart.
//!
//! "Show the trend of comedy and action movie gross over the years": the gross
//! column is ambiguous, the mark is left implicit, and the genre filter is
//! implied. `cargo run --example solve_movies` prints one Vega-Lite chart per
//! reading.

use std::path::Path;

use ambivis::rules::DesignRules;
use ambivis::solver::resolve_detailed;
use ambivis::table::TableStore;
use ambivis::vis::{
    vegalite, ActionNode, AggregateOp, AnalyticTask, BinUnit, Channel, ChartType, Filter,
    OperationKind, Param, VisTree,
};

fn col(c: &str) -> Param {
    Param::Column(c.into())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let store = TableStore::load_dir(&root.join("data/tables"))?;
    let table = store.get("movies").ok_or("movies table missing")?;
    let tree = VisTree::new(
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
    );
    println!("tree:\n{}\n", tree.to_json());
    let readings = resolve_detailed(&tree, &DesignRules::default(), table)?;
    println!("{} readings", readings.len());
    for (i, r) in readings.iter().enumerate() {
        println!("\n#{}\n{}", i + 1, vegalite::to_vegalite(&r.spec, &table.name));
    }
    Ok(())
}
