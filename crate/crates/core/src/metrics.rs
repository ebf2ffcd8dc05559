//! Binary confusion counts and the recall / precision / F1 report.
//!
//! Class 1 (abnormal) is the positive class.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_tp: u64,
    pub n_fp: u64,
    pub n_fn: u64,
    pub n_tn: u64,
}

impl ConfusionCounts {
    /// Counts one prediction. Any nonzero label counts as positive.
    pub fn accumulate(&mut self, predicted: usize, actual: usize) {
        match (predicted != 0, actual != 0) {
            (true, true) => self.n_tp += 1,
            (true, false) => self.n_fp += 1,
            (false, true) => self.n_fn += 1,
            (false, false) => self.n_tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Self::default();
        for (p, a) in pairs {
            c.accumulate(p, a);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.n_tp + self.n_fp + self.n_fn + self.n_tn
    }

    pub fn recall(&self) -> f64 {
        ratio(self.n_tp, self.n_tp + self.n_fn).unwrap_or(0.0)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.n_tp, self.n_tp + self.n_fp).unwrap_or(0.0)
    }

    pub fn f1(&self) -> f64 {
        f1_from(self.recall(), self.precision())
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.n_tp + self.n_tn, self.total()).unwrap_or(0.0)
    }

    pub fn report(&self) -> MetricsReport {
        let (r, p) = (self.recall(), self.precision());
        let mut flags = Vec::new();
        if self.n_tp + self.n_fn == 0 {
            flags.push("recall_undefined".to_string());
        }
        if self.n_tp + self.n_fp == 0 {
            flags.push("precision_undefined".to_string());
        }
        if r + p == 0.0 {
            flags.push("f1_undefined".to_string());
        }
        if self.total() == 0 {
            flags.push("accuracy_undefined".to_string());
        }
        MetricsReport {
            recall: r,
            precision: p,
            f1: f1_from(r, p),
            accuracy: self.accuracy(),
            counts: *self,
            degenerate_flags: flags,
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            n_tp: self.n_tp + o.n_tp,
            n_fp: self.n_fp + o.n_fp,
            n_fn: self.n_fn + o.n_fn,
            n_tn: self.n_tn + o.n_tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean `2RP / (R + P)`, 0 when both are 0.
pub fn f1_from(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

pub const ORIENTATION_NOTE: &str = "Recall = TP/(TP+FN), Precision = TP/(TP+FP). \
Some published tables print these two formulas with the denominators interchanged; \
F1 is symmetric in (R, P) and unaffected.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
    pub degenerate_flags: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per named report, percentages with two decimals, followed by
    /// the orientation footnote.
    pub fn table(rows: &[(&str, &MetricsReport)]) -> String {
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}", "Model", "Recall", "Precision", "F1");
        for (name, r) in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}",
                name,
                100.0 * r.recall,
                100.0 * r.precision,
                100.0 * r.f1
            );
        }
        for (name, r) in rows {
            if !r.degenerate_flags.is_empty() {
                let _ = writeln!(out, "* {name}: {}", r.degenerate_flags.join(", "));
            }
        }
        let _ = writeln!(out, "* {ORIENTATION_NOTE}");
        out
    }
}
