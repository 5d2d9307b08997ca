//! Standardize column names and find ambiguous column pairs for every table.
//!
//! `cargo run --example build_metadata [-- <out_dir>]` prints each table's
//! pairs and, with an output directory, writes one `<table>.json` per table.

use std::path::{Path, PathBuf};

use ambivis::metadata::{build_metadata, builtin_kb};
use ambivis::table::TableStore;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tables");
    let out: Option<PathBuf> = std::env::args().nth(1).map(PathBuf::from);
    let store = TableStore::load_dir(&dir)?;
    for table in store.iter() {
        let meta = build_metadata(table, builtin_kb(), None)?;
        println!("{} ({} columns)", table.name, table.columns.len());
        for p in &meta.ambiguous_pairs {
            println!("  {} ~ {}  via \"{}\"", p.column_a, p.column_b, p.shared_alias);
        }
        if let Some(o) = &out {
            std::fs::create_dir_all(o)?;
            std::fs::write(o.join(format!("{}.json", table.name)), meta.to_json() + "\n")?;
        }
    }
    Ok(())
}
