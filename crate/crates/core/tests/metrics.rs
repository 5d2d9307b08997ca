use std::collections::BTreeSet;

use proptest::prelude::*;

use ambivis::eval::{match_canonical, precision_recall_f1_at_k, prf_at};
use ambivis::table::DataType;
use ambivis::vis::{canonicalize, CanonicalSpec, Channel, ChartType, Encoding, VisSpec};

const FIELDS: [&str; 4] = ["Sales", "Profit", "Cost", "Units"];

/// Eight distinct charts to draw gold sets and predictions from.
fn pool() -> Vec<CanonicalSpec> {
    let mut out = Vec::new();
    for mark in [ChartType::Bar, ChartType::Line] {
        for f in FIELDS {
            let s = VisSpec::new(mark)
                .encode(Channel::X, Encoding::new("Region", DataType::Categorical))
                .encode(Channel::Y, Encoding::new(f, DataType::Quantitative));
            out.push(canonicalize(&s));
        }
    }
    out
}

fn case() -> impl Strategy<Value = (BTreeSet<usize>, Vec<Option<usize>>)> {
    (
        prop::collection::btree_set(0..8usize, 1..=6),
        prop::collection::vec(prop::option::weighted(0.9, 0..8usize), 0..=8),
    )
}

fn flags_for(gold: &BTreeSet<usize>, pred: &[Option<usize>]) -> Vec<bool> {
    let p = pool();
    let g: BTreeSet<CanonicalSpec> = gold.iter().map(|&i| p[i].clone()).collect();
    let pr: Vec<Option<CanonicalSpec>> = pred.iter().map(|o| o.map(|i| p[i].clone())).collect();
    match_canonical(&pr, &g)
}

#[test]
fn worked_example_at_three() {
    let p = pool();
    let gold: BTreeSet<CanonicalSpec> = p[..4].iter().cloned().collect();
    let pred = vec![Some(p[0].clone()), Some(p[6].clone()), Some(p[2].clone())];
    let m = precision_recall_f1_at_k(&match_canonical(&pred, &gold), gold.len(), 3).unwrap();
    // two hits out of three shown, two of four gold found
    let (pn, pd, rn, rd) = (2.0, 3.0, 2.0, 4.0);
    let f1 = 2.0 * pn * rn / (pn * rd + rn * pd);
    assert!((m.precision - pn / pd).abs() < 1e-9);
    assert!((m.recall - rn / rd).abs() < 1e-12);
    assert!((m.f1 - f1).abs() < 1e-9);
    assert!((m.f1 - 4.0 / 7.0).abs() < 1e-9);
}

#[test]
fn only_listed_cutoffs_are_accepted() {
    for k in [1, 3, 5] {
        assert!(precision_recall_f1_at_k(&[true], 1, k).is_ok());
    }
    for k in [0, 2, 4, 10] {
        assert!(precision_recall_f1_at_k(&[true], 1, k).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn recall_never_drops_as_k_grows((gold, pred) in case()) {
        let flags = flags_for(&gold, &pred);
        let mut last = 0.0;
        for k in 1..=10 {
            let r = prf_at(&flags, gold.len(), k, false).unwrap().recall;
            prop_assert!(r + 1e-12 >= last);
            last = r;
        }
    }

    #[test]
    fn f1_is_the_harmonic_mean((gold, pred) in case(), k in 1usize..=8, strict in any::<bool>()) {
        let m = prf_at(&flags_for(&gold, &pred), gold.len(), k, strict).unwrap();
        let (p, r) = (m.precision, m.recall);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        if p + r == 0.0 {
            prop_assert_eq!(m.f1, 0.0);
        } else {
            prop_assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            prop_assert!(m.f1 >= p.min(r) - 1e-12 && m.f1 <= p.max(r) + 1e-12);
            prop_assert!(m.f1 <= (p + r) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn each_gold_chart_earns_credit_once((gold, pred) in case(), k in 1usize..=8) {
        let flags = flags_for(&gold, &pred);
        let top: Vec<usize> = pred.iter().take(k).flatten().copied().collect();
        let distinct_hits = top.iter().filter(|i| gold.contains(i)).collect::<BTreeSet<_>>().len();
        let m = prf_at(&flags, gold.len(), k, false).unwrap();
        prop_assert!((m.recall - distinct_hits as f64 / gold.len() as f64).abs() < 1e-12);
        let shown = pred.len().min(k);
        let p = if shown == 0 { 0.0 } else { distinct_hits as f64 / shown as f64 };
        prop_assert!((m.precision - p).abs() < 1e-12);
        let strict = prf_at(&flags, gold.len(), k, true).unwrap();
        prop_assert!((strict.precision - distinct_hits as f64 / k as f64).abs() < 1e-12);
    }

    #[test]
    fn repeating_a_hit_adds_nothing((gold, pred) in case()) {
        let first = *gold.iter().next().unwrap();
        let doubled: Vec<Option<usize>> = [Some(first), Some(first)].into_iter().chain(pred).collect();
        let flags = flags_for(&gold, &doubled);
        prop_assert!(flags[0]);
        prop_assert!(!flags[1]);
    }
}
