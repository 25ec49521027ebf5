//! Figure data: prediction-vs-label heatmaps and per-iteration traces.

use serde::{Deserialize, Serialize};

use super::dataset::LoadedRecord;
use super::eval::score;
use crate::formula::{DnfFormula, WeightAssignment};
use crate::nn::model::{forward, ModelParams};
use crate::par::{map_slice, Execution};

/// 2-D histogram over (label probability, predicted probability) in [0,1]².
/// `counts[i][j]` holds records whose label falls in bin `i` and prediction
/// in bin `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub bins: usize,
    pub counts: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        self.counts
            .iter()
            .map(|row| row.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

fn bin_of(p: f64, bins: usize) -> usize {
    ((p.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

pub fn heatmap_from_pairs(pairs: &[(f64, f64)], bins: usize) -> Heatmap {
    let bins = bins.max(1);
    let mut counts = vec![vec![0u64; bins]; bins];
    for &(label, predicted) in pairs {
        counts[bin_of(label, bins)][bin_of(predicted, bins)] += 1;
    }
    Heatmap { bins, counts }
}

pub fn heatmap(params: &ModelParams, records: &[LoadedRecord], bins: usize, exec: Execution) -> Heatmap {
    let pairs: Vec<(f64, f64)> = score(params, records, exec)
        .iter()
        .map(|s| (s.label, s.predicted))
        .collect();
    heatmap_from_pairs(&pairs, bins)
}

/// Predicted probability after every message-passing iteration, one row per
/// formula.
pub fn trace_table(
    params: &ModelParams,
    instances: &[(DnfFormula, WeightAssignment)],
    exec: Execution,
) -> Vec<Vec<f64>> {
    map_slice(exec, instances, |(f, w)| {
        forward(f, w, params, params.config.iterations)
            .trace
            .iter()
            .map(|p| p.probability())
            .collect()
    })
}

/// CSV with a header `formula,t1,…,tT`.
pub fn trace_csv(rows: &[Vec<f64>]) -> String {
    let iters = rows.first().map_or(0, Vec::len);
    let mut out = String::from("formula");
    for t in 1..=iters {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&(i + 1).to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
