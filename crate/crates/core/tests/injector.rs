mod common;

use proptest::prelude::*;

use ambivis::injector::{inject_to_level, InjectionConfig, InjectorError};
use ambivis::metadata::{build_metadata, builtin_kb};
use ambivis::rules::DesignRules;
use ambivis::solver::resolve_canonical;
use ambivis::vis::{
    build_seed_tree, canonicalize, vegalite, ActionNode, AmbiguityCategory, AmbiguityTag,
    OperationKind,
};

use common::*;

#[test]
fn targets_are_met_or_the_true_maximum_is_reported() {
    let store = tables();
    let rules = DesignRules::default();
    for s in seeds() {
        let table = store.get(&s.table).unwrap();
        let meta = build_metadata(table, builtin_kb(), None).unwrap();
        let spec = vegalite::from_vegalite(&s.chart).unwrap();
        let seed = build_seed_tree(&spec, table, &rules).unwrap();
        let levels = reachable_levels(&seed, table, &meta);
        for k in [2, 3, 4] {
            let cfg = InjectionConfig { target_level: k, ..Default::default() };
            match inject_to_level(&seed, table, &meta, &rules, &cfg) {
                Ok(inj) => {
                    assert_eq!(inj.level, k, "{}", s.id);
                    let gold = resolve_canonical(&inj.tree, &rules, table).unwrap();
                    assert_eq!(gold, brute_force(&inj.tree, table, &rules), "{}", s.id);
                    assert_eq!(gold.len(), k);
                    assert!(gold.contains(&canonicalize(&spec)), "{} lost its own chart", s.id);
                    assert!(levels.contains(&k));
                }
                Err(InjectorError::TargetUnreachable { target, max_level }) => {
                    assert_eq!(target, k);
                    assert!(!levels.contains(&k), "{}: {k} was reachable", s.id);
                    assert_eq!(Some(&max_level), levels.iter().next_back(), "{}", s.id);
                }
                Err(e) => panic!("{}: {e}", s.id),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn injection_only_uses_enabled_categories(
        idx in 0usize..24,
        k in 2usize..=4,
        rng_seed in any::<u64>(),
        ct in any::<bool>(),
    ) {
        let store = tables();
        let rules = DesignRules::default();
        let all = seeds();
        let s = &all[idx % all.len()];
        let table = store.get(&s.table).unwrap();
        let meta = build_metadata(table, builtin_kb(), None).unwrap();
        let spec = vegalite::from_vegalite(&s.chart).unwrap();
        let seed = build_seed_tree(&spec, table, &rules).unwrap();
        let mut enabled = vec![AmbiguityCategory::DS];
        if ct {
            enabled.push(AmbiguityCategory::CT);
        }
        let cfg = InjectionConfig {
            target_level: k,
            enabled_categories: enabled.clone(),
            rng_seed,
            ..Default::default()
        };
        let Ok(inj) = inject_to_level(&seed, table, &meta, &rules, &cfg) else { return Ok(()) };
        for c in inj.tree.categories() {
            prop_assert!(enabled.contains(&c));
        }
        let added_task = |n: &ActionNode| {
            n.op == OperationKind::Task && seed.find(OperationKind::Task).is_none()
        };
        for n in &inj.tree.nodes {
            prop_assert_eq!(n.category.is_some(), n.tag != AmbiguityTag::Explicit || added_task(n));
        }
        let again = inject_to_level(&seed, table, &meta, &rules, &cfg).unwrap();
        prop_assert_eq!(again.tree, inj.tree);
    }
}

#[test]
fn bad_targets_and_seeds_are_refused() {
    let store = tables();
    let rules = DesignRules::default();
    let table = store.get("movies").unwrap();
    let meta = build_metadata(table, builtin_kb(), None).unwrap();
    let cfg = InjectionConfig { target_level: 1, ..Default::default() };
    let seed = &seeds()[0];
    let tree = build_seed_tree(&vegalite::from_vegalite(&seed.chart).unwrap(), table, &rules).unwrap();
    assert!(matches!(
        inject_to_level(&tree, table, &meta, &rules, &cfg),
        Err(InjectorError::InvalidConfig(_))
    ));
    let cfg = InjectionConfig::default();
    assert!(matches!(
        inject_to_level(&movies_tree(), table, &meta, &rules, &cfg),
        Err(InjectorError::BadSeed(_))
    ));
}
