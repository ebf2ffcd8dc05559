//! Confusion counts, the metrics table and its JSON form.

use ensemble_slu::metrics::{f1_from, ConfusionCounts, MetricsReport};

fn main() {
    let maxpool = ConfusionCounts { n_tp: 41, n_fp: 3, n_fn: 7, n_tn: 69 };
    let attention = ConfusionCounts { n_tp: 35, n_fp: 9, n_fn: 13, n_tn: 63 };
    let (m, a) = (maxpool.report(), attention.report());
    print!("{}", MetricsReport::table(&[("max-pooling", &m), ("attention", &a)]));
    println!("\nF1 from (R, P) = (68.68%, 89.52%): {:.2}%", 100.0 * f1_from(0.6868, 0.8952));
    println!("\n{}", m.to_json());
}
