//! Run the whole synthesis pipeline on the bundled seeds.
//!
//! `cargo run --example synthesize [-- <out_dir>]` uses `data/demo.toml` with
//! the offline backend and writes `benchmark.jsonl` and `manifest.json`.

use std::path::Path;

use ambivis::eval::{dataset_stats, read_benchmark};
use ambivis::pipeline::{run_synthesis, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut overrides = Vec::new();
    if let Some(out) = std::env::args().nth(1) {
        overrides.push(format!("output_dir={out:?}"));
    }
    let cfg = PipelineConfig::load(&root.join("data/demo.toml"), &overrides)?;
    let run = run_synthesis(cfg)?;
    println!("{} samples from {} seeds", run.summary.samples, run.summary.seeds);
    for (outcome, n) in &run.summary.counts {
        println!("  {outcome}: {n}");
    }
    let stats = dataset_stats(&read_benchmark(&run.benchmark)?);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    println!("wrote {}", run.benchmark.display());
    Ok(())
}
