mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ambivis::eval::{benchmark_to_string, parse_benchmark, read_benchmark};
use ambivis::reasoning::{parse_step_tagged_output, render_step_tagged};
use ambivis::rules::DesignRules;
use ambivis::vis::VisTree;

use common::*;

#[test]
fn benchmark_lines_survive_write_read_write() {
    let text = std::fs::read_to_string(fixture("bench20.jsonl")).unwrap();
    let once = benchmark_to_string(&parse_benchmark(&text).unwrap());
    let twice = benchmark_to_string(&parse_benchmark(&once).unwrap());
    assert_eq!(once, twice);
    assert_eq!(once, text);
}

#[test]
fn fixture_samples_are_self_consistent() {
    let store = tables();
    let rules = DesignRules::default();
    for s in read_benchmark(&fixture("bench20.jsonl")).unwrap() {
        s.check(Some((store.get(&s.table_ref).unwrap(), &rules)))
            .unwrap_or_else(|e| panic!("{}: {e}", s.id));
    }
}

#[test]
fn reasoning_paths_survive_the_tagged_format() {
    for s in read_benchmark(&fixture("bench20.jsonl")).unwrap() {
        let text = render_step_tagged(&s.reasoning_path);
        let back = parse_step_tagged_output(&text).unwrap();
        assert_eq!(back, s.reasoning_path, "{}", s.id);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn trees_survive_json(seed in any::<u64>()) {
        let store = tables();
        let tree = random_tree(&store, &mut ChaCha8Rng::seed_from_u64(seed));
        let text = tree.to_json();
        let back = VisTree::from_json(&text).unwrap();
        prop_assert_eq!(&back, &tree);
        prop_assert_eq!(back.to_json(), text);
    }
}
