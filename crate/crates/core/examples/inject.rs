//! Widen every bundled seed chart to a target number of readings.
//!
//! `cargo run --example inject [-- <k>...]` (default targets 2 3 4) prints the
//! injected tree level or the highest level the seed can reach.

use std::path::Path;

use ambivis::injector::{inject_to_level, InjectionConfig};
use ambivis::metadata::{build_metadata, builtin_kb};
use ambivis::pipeline::parse_seeds;
use ambivis::rules::DesignRules;
use ambivis::table::TableStore;
use ambivis::vis::{build_seed_tree, pattern_label, vegalite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let store = TableStore::load_dir(&root.join("data/tables"))?;
    let seeds = parse_seeds(&std::fs::read_to_string(root.join("data/seeds.jsonl"))?)?;
    let rules = DesignRules::default();
    let mut targets: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if targets.is_empty() {
        targets = vec![2, 3, 4];
    }
    for k in targets {
        let mut hits = 0;
        for s in &seeds {
            let table = store.get(&s.table).ok_or("unknown table")?;
            let meta = build_metadata(table, builtin_kb(), None)?;
            let spec = vegalite::from_vegalite(&s.chart)?;
            let seed = build_seed_tree(&spec, table, &rules)?;
            let cfg = InjectionConfig {
                target_level: k,
                ..Default::default()
            };
            match inject_to_level(&seed, table, &meta, &rules, &cfg) {
                Ok(inj) => {
                    hits += 1;
                    println!("k={k} {:<14} ok   {}", s.id, pattern_label(&inj.tree.categories()));
                }
                Err(e) => println!("k={k} {:<14} fail {e}", s.id),
            }
        }
        println!("k={k}: {hits}/{} seeds reached the target", seeds.len());
    }
    Ok(())
}
