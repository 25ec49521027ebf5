//! Accuracy against labels under additive thresholds on the probability scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::LoadedRecord;
use super::export::{heatmap_from_pairs, Heatmap};
use crate::nn::model::{predict, ModelParams};
use crate::par::{map_slice, Execution};

pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.02, 0.05, 0.10, 0.15];

/// One scored record: label and prediction as probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub n: usize,
    pub width: usize,
    pub label: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub count: usize,
    /// Percentage of records within each threshold.
    pub overall: Vec<f64>,
    pub by_n: BTreeMap<usize, Vec<f64>>,
    pub by_width: BTreeMap<usize, Vec<f64>>,
    pub heatmap: Heatmap,
}

impl EvalReport {
    /// Accuracy at `threshold`, if it was evaluated.
    pub fn accuracy_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-12)
            .map(|i| self.overall[i])
    }

    pub fn is_monotone(&self) -> bool {
        let rows = std::iter::once(&self.overall)
            .chain(self.by_n.values())
            .chain(self.by_width.values());
        let mut order: Vec<usize> = (0..self.thresholds.len()).collect();
        order.sort_by(|&a, &b| self.thresholds[a].total_cmp(&self.thresholds[b]));
        rows.into_iter().all(|row| order.windows(2).all(|w| row[w[0]] <= row[w[1]]))
    }

    /// Rows of `group,key,t1,t2,…` for the overall, per-n and per-width tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,key");
        for t in &self.thresholds {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        let mut row = |group: &str, key: String, values: &[f64]| {
            out.push_str(&format!("{group},{key}"));
            for v in values {
                out.push_str(&format!(",{v:.2}"));
            }
            out.push('\n');
        };
        row("overall", "all".into(), &self.overall);
        for (n, v) in &self.by_n {
            row("n", n.to_string(), v);
        }
        for (w, v) in &self.by_width {
            row("w", w.to_string(), v);
        }
        out
    }
}

fn accuracies(items: &[&Scored], thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| {
            if items.is_empty() {
                return 0.0;
            }
            let hits = items.iter().filter(|s| (s.predicted - s.label).abs() <= t).count();
            100.0 * hits as f64 / items.len() as f64
        })
        .collect()
}

/// Builds a report from already-scored records.
pub fn report_from_scores(scores: &[Scored], thresholds: &[f64], bins: usize) -> EvalReport {
    let all: Vec<&Scored> = scores.iter().collect();
    let mut by_n: BTreeMap<usize, Vec<&Scored>> = BTreeMap::new();
    let mut by_width: BTreeMap<usize, Vec<&Scored>> = BTreeMap::new();
    for s in scores {
        by_n.entry(s.n).or_default().push(s);
        by_width.entry(s.width).or_default().push(s);
    }
    let pairs: Vec<(f64, f64)> = scores.iter().map(|s| (s.label, s.predicted)).collect();
    EvalReport {
        thresholds: thresholds.to_vec(),
        count: scores.len(),
        overall: accuracies(&all, thresholds),
        by_n: by_n.into_iter().map(|(k, v)| (k, accuracies(&v, thresholds))).collect(),
        by_width: by_width.into_iter().map(|(k, v)| (k, accuracies(&v, thresholds))).collect(),
        heatmap: heatmap_from_pairs(&pairs, bins),
    }
}

/// Predicts every record and scores it against its label.
pub fn score(params: &ModelParams, records: &[LoadedRecord], exec: Execution) -> Vec<Scored> {
    map_slice(exec, records, |r| Scored {
        n: r.n(),
        width: r.width_key(),
        label: r.record.label_probability(),
        predicted: predict(&r.formula, &r.weights, params).probability(),
    })
}

pub fn evaluate(params: &ModelParams, records: &[LoadedRecord], thresholds: &[f64], exec: Execution) -> EvalReport {
    report_from_scores(&score(params, records, exec), thresholds, 10)
}

/// The constant prediction with the highest accuracy at `threshold`, and
/// that accuracy in percent.
///
/// A constant `c` is correct on label `y` when `|c − y| ≤ t`, so the best
/// constant covers the most labels with a window of width `2t`.
pub fn best_constant_baseline(labels: &[f64], threshold: f64) -> (f64, f64) {
    if labels.is_empty() {
        return (0.0, 0.0);
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut best, mut best_lo) = (0, 0);
    let mut hi = 0;
    for lo in 0..sorted.len() {
        while hi < sorted.len() && sorted[hi] - sorted[lo] <= 2.0 * threshold {
            hi += 1;
        }
        if hi - lo > best {
            best = hi - lo;
            best_lo = lo;
        }
    }
    let c = 0.5 * (sorted[best_lo] + sorted[best_lo + best - 1]);
    (c, 100.0 * best as f64 / labels.len() as f64)
}
