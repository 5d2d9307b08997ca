//! Phrase an ambiguous tree as a query, then check the phrasing against it.
//!
//! Runs offline with the deterministic backend; build a `Client` from an
//! `LlmConfig` with the http backend to use a live model.

use std::path::Path;

use ambivis::injector::{inject_to_level, InjectionConfig};
use ambivis::llm::Client;
use ambivis::metadata::{build_metadata, builtin_kb};
use ambivis::nl::{generate_query, verify_query, Exemplars, NlContext, NlStyle};
use ambivis::pipeline::parse_seeds;
use ambivis::rules::DesignRules;
use ambivis::table::TableStore;
use ambivis::vis::{build_seed_tree, vegalite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let store = TableStore::load_dir(&root.join("data/tables"))?;
    let seeds = parse_seeds(&std::fs::read_to_string(root.join("data/seeds.jsonl"))?)?;
    let rules = DesignRules::default();
    let client = Client::offline();
    for s in seeds.iter().take(4) {
        let table = store.get(&s.table).ok_or("unknown table")?;
        let meta = build_metadata(table, builtin_kb(), None)?;
        let seed = build_seed_tree(&vegalite::from_vegalite(&s.chart)?, table, &rules)?;
        let cfg = InjectionConfig { target_level: 2, ..Default::default() };
        let tree = inject_to_level(&seed, table, &meta, &rules, &cfg)?.tree;
        let ctx = NlContext {
            table,
            metadata: Some(&meta),
            chat: client.model.as_ref(),
            temperature: client.temperature,
        };
        for style in [NlStyle::Question, NlStyle::Command, NlStyle::Caption] {
            let q = generate_query(&tree, &ctx, style, Exemplars::builtin().of(style))?;
            let v = verify_query(&q, &tree, &ctx)?;
            println!("{:<14} {:<8} {:?}  {}", s.id, style.as_str(), v.verdict, q.text);
        }
    }
    Ok(())
}
