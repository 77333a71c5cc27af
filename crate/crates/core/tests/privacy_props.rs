use mrf_core::privacy::{
    allocate_budget, audit_feature_mechanism, audit_label_mechanism, audit_value_mechanism, compose_budget,
    NeighborGrid,
};
use mrf_core::{ClassCounts, Criterion, Dataset};
use proptest::prelude::*;

fn micro() -> impl Strategy<Value = Dataset> {
    (1usize..=2, 2usize..=3, 2usize..=8).prop_flat_map(|(d, k, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(0u8..4, d), n),
            proptest::collection::vec(0..k, n),
        )
            .prop_map(move |(rows, labels)| {
                let rows = rows
                    .into_iter()
                    .map(|r| r.into_iter().map(f64::from).collect())
                    .collect();
                Dataset::new(rows, labels, k).unwrap()
            })
    })
}

const GRID: [f64; 5] = [0.0, 0.1, 1.0, 2.0, 5.0];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_audit_is_bounded_and_monotone(ds in micro()) {
        let grid = NeighborGrid::from_dataset(&ds);
        let mut last = 1.0;
        for b in GRID {
            let r = audit_feature_mechanism(&ds, b, &grid, Criterion::Gini).unwrap();
            prop_assert!(r.worst_ratio >= 1.0);
            prop_assert!(r.pass);
            prop_assert!(r.worst_ratio >= last * (1.0 - 1e-12));
            last = r.worst_ratio;
        }
    }

    #[test]
    fn value_audit_is_bounded_and_monotone(ds in micro()) {
        let grid = NeighborGrid::from_dataset(&ds);
        let mut last = 1.0;
        for b in GRID {
            match audit_value_mechanism(&ds, 0, b, &grid, Criterion::Entropy) {
                Ok(r) => {
                    prop_assert!(r.worst_ratio >= 1.0 && r.pass);
                    prop_assert!(r.worst_ratio >= last * (1.0 - 1e-12));
                    last = r.worst_ratio;
                }
                Err(e) => prop_assert!(matches!(e, mrf_core::Error::NoChoices)),
            }
        }
    }

    #[test]
    fn label_audit_is_bounded_and_monotone(counts in proptest::collection::vec(0u64..6, 1..4)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let leaf = ClassCounts::from_counts(counts);
        let mut last = 1.0;
        for b in GRID {
            let r = audit_label_mechanism(&leaf, b).unwrap();
            prop_assert!(r.worst_ratio >= 1.0 && r.pass);
            prop_assert!(r.worst_ratio >= last * (1.0 - 1e-12));
            last = r.worst_ratio;
        }
    }

    #[test]
    fn budget_round_trip(eps in 0.001f64..1000.0, t in 1usize..1000, e in 1usize..100_000, k in 1usize..100, split in 0.01f64..0.99) {
        let b = allocate_budget(eps, t, e, k, split).unwrap();
        prop_assert!(b.b1 > 0.0 && b.b2 > 0.0 && b.b3 > 0.0);
        prop_assert!(((b.b1 + b.b2) * b.depth as f64 * t as f64 - eps).abs() <= 1e-9 * eps.max(1.0));
        prop_assert!((compose_budget(b.b1 + b.b2, b.depth, b.b3, b.trees) - eps).abs() <= 1e-9 * eps.max(1.0));
    }
}
