//! Score predictions against multi-answer gold sets at K = 1, 3, 5.
//!
//! The "system" here answers with only the first gold chart of each sample,
//! so precision stays high while recall drops with ambiguity level.

use std::path::Path;

use ambivis::eval::{evaluate_dataset, gold_as_predictions, read_benchmark, EvalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let bench = read_benchmark(&root.join("tests/fixtures/bench20.jsonl"))?;
    let mut preds = gold_as_predictions(&bench);
    for charts in preds.values_mut() {
        charts.truncate(1);
    }
    let report = evaluate_dataset(&preds, &bench, &EvalConfig::default())?;
    print!("{}", report.to_text());
    Ok(())
}
