//! The synthetic task is solvable: a matched filter that knows the event
//! shape separates the classes almost perfectly.

mod common;

use ensemble_slu::metrics::ConfusionCounts;
use ensemble_slu::synth::{generate_clip, Preset, SynthSpec};

use common::matched_filter_score;

fn scores(spec: &SynthSpec, seeds: std::ops::Range<u64>) -> Vec<(f64, usize)> {
    let durations: Vec<f64> = (0..=12).map(|k| 0.5 + 0.125 * k as f64).collect();
    seeds
        .map(|s| {
            let label = (s % 2) as u8;
            let (w, _) = generate_clip(s, label, spec).unwrap();
            (matched_filter_score(w.samples(), &durations), label as usize)
        })
        .collect()
}

/// Threshold with the best F1 on the calibration scores.
fn calibrate(cal: &[(f64, usize)]) -> f64 {
    let mut sorted: Vec<f64> = cal.iter().map(|s| s.0).collect();
    sorted.sort_by(f64::total_cmp);
    let f1_at = |th: f64| ConfusionCounts::from_pairs(cal.iter().map(|&(s, y)| ((s > th) as usize, y))).f1();
    sorted
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .max_by(|a, b| f1_at(*a).total_cmp(&f1_at(*b)))
        .unwrap()
}

fn oracle_f1(preset: Preset) -> f64 {
    let spec = SynthSpec::preset(preset).with_clip_seconds(5.0);
    let th = calibrate(&scores(&spec, 5000..5050));
    let test = scores(&spec, 0..100);
    ConfusionCounts::from_pairs(test.iter().map(|&(s, y)| ((s > th) as usize, y))).f1()
}

#[test]
fn matched_filter_solves_easy_preset() {
    let f1 = oracle_f1(Preset::Easy);
    assert!(f1 >= 0.99, "{f1}");
}

#[test]
fn matched_filter_solves_hard_preset() {
    let f1 = oracle_f1(Preset::Hard);
    assert!(f1 >= 0.99, "{f1}");
}
