//! Metric arithmetic against reference values and a naive tally.

use ensemble_slu::metrics::{f1_from, ConfusionCounts, MetricsReport};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (recall %, precision %, printed F1 %)
const REFERENCE_ROWS: [(f64, f64, f64); 3] = [(60.43, 77.75, 68.00), (65.45, 88.19, 75.14), (68.68, 89.52, 77.73)];

#[test]
fn reference_f1_values_reproduce() {
    for (r, p, f) in REFERENCE_ROWS {
        let got = 100.0 * f1_from(r / 100.0, p / 100.0);
        assert!((got - f).abs() <= 0.01, "({r}, {p}) -> {got:.4}, printed {f}");
    }
    let pct = |r: f64, p: f64| (10_000.0 * f1_from(r, p)).round() / 100.0;
    let delta = pct(0.6868, 0.8952) - pct(0.6043, 0.7775);
    assert!((delta - 9.73).abs() < 1e-9, "{delta}");
}

#[test]
fn counts_match_a_naive_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let pairs: Vec<(usize, usize)> = (0..1000).map(|_| (rng.gen_range(0..2), rng.gen_range(0..2))).collect();
    let c = ConfusionCounts::from_pairs(pairs.iter().copied());
    let count = |p: usize, a: usize| pairs.iter().filter(|&&x| x == (p, a)).count() as f64;
    let (tp, fp, fn_, tn) = (count(1, 1), count(1, 0), count(0, 1), count(0, 0));
    assert_eq!(c.total(), 1000);
    assert_eq!(c.recall(), tp / (tp + fn_));
    assert_eq!(c.precision(), tp / (tp + fp));
    assert_eq!(c.accuracy(), (tp + tn) / 1000.0);
    let (r, p) = (tp / (tp + fn_), tp / (tp + fp));
    assert!((c.f1() - 2.0 * r * p / (r + p)).abs() < 1e-15);
    assert!((c.f1() - 2.0 * tp / (2.0 * tp + fp + fn_)).abs() < 1e-12);
}

#[test]
fn degenerate_cases_are_flagged_not_nan() {
    let all_neg = ConfusionCounts::from_pairs([(0, 0), (0, 0)]).report();
    assert_eq!((all_neg.recall, all_neg.precision, all_neg.f1), (0.0, 0.0, 0.0));
    assert!(all_neg.degenerate_flags.contains(&"recall_undefined".to_string()));
    assert!(all_neg.degenerate_flags.contains(&"f1_undefined".to_string()));
    let empty = ConfusionCounts::default().report();
    assert!(empty.degenerate_flags.contains(&"accuracy_undefined".to_string()));
    let table = MetricsReport::table(&[("x", &empty)]);
    assert!(!table.contains("NaN"));
}

#[test]
fn table_prints_percentages() {
    let c = ConfusionCounts { n_tp: 3, n_fp: 1, n_fn: 1, n_tn: 5 };
    let t = MetricsReport::table(&[("maxpool", &c.report())]);
    let row = t.lines().nth(1).unwrap();
    assert!(row.starts_with("maxpool"));
    assert!(row.contains("75.00"), "{row}");
    assert!(t.lines().last().unwrap().starts_with("* Recall = TP/(TP+FN)"));
    let back: MetricsReport = serde_json::from_str(&c.report().to_json()).unwrap();
    assert_eq!(back, c.report());
}

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..500, 0u64..500, 0u64..500, 0u64..500)
        .prop_map(|(n_tp, n_fp, n_fn, n_tn)| ConfusionCounts { n_tp, n_fp, n_fn, n_tn })
}

proptest! {
    #[test]
    fn merge_equals_tally_of_concatenation(
        a in prop::collection::vec((0usize..2, 0usize..2), 0..200),
        b in prop::collection::vec((0usize..2, 0usize..2), 0..200),
    ) {
        let merged = ConfusionCounts::from_pairs(a.iter().copied()) + ConfusionCounts::from_pairs(b.iter().copied());
        let joint = ConfusionCounts::from_pairs(a.iter().chain(&b).copied());
        prop_assert_eq!(merged, joint);
        let mut acc = ConfusionCounts::from_pairs(b.iter().copied());
        acc += ConfusionCounts::from_pairs(a.iter().copied());
        prop_assert_eq!(acc, joint);
    }

    #[test]
    fn scores_are_bounded(c in counts()) {
        for v in [c.recall(), c.precision(), c.f1(), c.accuracy()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(c.f1() <= c.recall().max(c.precision()) + 1e-15);
        prop_assert!(c.f1() + 1e-15 >= c.recall().min(c.precision()) || c.f1() == 0.0);
    }

    #[test]
    fn f1_symmetric_in_recall_and_precision(r in 0.0f64..=1.0, p in 0.0f64..=1.0) {
        prop_assert_eq!(f1_from(r, p), f1_from(p, r));
    }

    #[test]
    fn swapping_fp_and_fn_swaps_recall_and_precision(c in counts()) {
        let s = ConfusionCounts { n_fp: c.n_fn, n_fn: c.n_fp, ..c };
        prop_assert_eq!(s.recall(), c.precision());
        prop_assert_eq!(s.precision(), c.recall());
        prop_assert_eq!(s.f1(), c.f1());
    }
}
