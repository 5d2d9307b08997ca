//! Gold reasoning paths and the preference pair a wrong step produces.
//!
//! `cargo run --example reasoning_path` derives the five-step path for the
//! first bundled sample, renders it in the step-tagged format, damages step 3
//! and shows the resulting pair.

use std::path::Path;

use ambivis::eval::read_benchmark;
use ambivis::reasoning::{
    build_preference_pairs, parse_step_tagged_output, render_step_tagged, StepPolicy,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let bench = read_benchmark(&root.join("tests/fixtures/bench20.jsonl"))?;
    let sample = &bench[0];
    println!("{}\n", sample.nl_query);
    let tagged = render_step_tagged(&sample.reasoning_path);
    println!("{tagged}\n");

    let mut pred = parse_step_tagged_output(&tagged)?;
    for step in &mut pred.steps[2..] {
        step.actions.insert("chart:pie".into());
    }
    let pairs = build_preference_pairs(&bench[..1], &[pred], StepPolicy::Exact, None)?;
    for p in &pairs {
        println!("first error at step {}", p.first_error_index);
        println!("win:  {}", serde_json::to_string(&p.s_win)?);
        println!("lose: {}", serde_json::to_string(&p.s_lose)?);
    }
    Ok(())
}
