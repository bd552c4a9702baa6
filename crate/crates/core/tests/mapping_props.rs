use fermap::baseline::{majorana_table, weight_stats, MappingKind};
use fermap::ternary_tree::{optimal_max_weight, verify_operators, weight_lower_bound, TernaryTreeMapping};
use proptest::prelude::*;

/// Independent count of `ceil(log3(2n + 1))` by repeated multiplication.
fn ceil_log3(x: usize) -> usize {
    let mut h = 0;
    let mut p = 1;
    while p < x {
        p *= 3;
        h += 1;
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ternary_tree_invariants(n in 1usize..=64) {
        let m = TernaryTreeMapping::build(n).unwrap();
        prop_assert_eq!(m.table().len(), 2 * n);
        prop_assert_eq!(m.path_operators().len(), 2 * n + 1);
        let report = m.verify();
        prop_assert!(report.passed());
        let max = m.table().iter().map(|p| p.weight()).max().unwrap();
        prop_assert_eq!(max, ceil_log3(2 * n + 1));
        prop_assert_eq!(optimal_max_weight(n), ceil_log3(2 * n + 1));
        // every qubit is used
        let used: std::collections::BTreeSet<usize> =
            m.table().iter().flat_map(|p| p.letters().keys().copied()).collect();
        prop_assert_eq!(used.len(), n);
    }

    #[test]
    fn baselines_verify(n in 1usize..=40) {
        for kind in [MappingKind::JordanWigner, MappingKind::BravyiKitaev] {
            let table = majorana_table(kind, n).unwrap();
            prop_assert!(verify_operators(&table).passed());
        }
    }
}

#[test]
fn mean_weight_respects_lower_bound() {
    for n in 1..=64 {
        for kind in MappingKind::ALL {
            let stats = weight_stats(&majorana_table(kind, n).unwrap()).unwrap();
            assert!(stats.mean >= weight_lower_bound(n) - 1e-12, "{kind} n={n}");
        }
    }
}

#[test]
fn bravyi_kitaev_max_weight_is_logarithmic() {
    for n in 1..=128usize {
        let stats = weight_stats(&majorana_table(MappingKind::BravyiKitaev, n).unwrap()).unwrap();
        let log2 = (usize::BITS - (n - 1).leading_zeros()) as usize;
        assert!(stats.max <= log2 + 1, "n={n} max={}", stats.max);
    }
}

#[test]
fn ternary_never_heavier_than_baselines() {
    for n in 1..=64 {
        let tt = weight_stats(&majorana_table(MappingKind::TernaryTree, n).unwrap()).unwrap();
        let jw = weight_stats(&majorana_table(MappingKind::JordanWigner, n).unwrap()).unwrap();
        let bk = weight_stats(&majorana_table(MappingKind::BravyiKitaev, n).unwrap()).unwrap();
        assert!(tt.max <= jw.max && tt.max <= bk.max, "n={n}");
    }
}
