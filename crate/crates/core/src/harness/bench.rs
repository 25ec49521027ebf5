//! Runtime scaling of KLM and the GNN over a fixed-width size sweep.
//!
//! Times are the best of `repeats` runs measured with a monotonic clock,
//! after one untimed warm-up run. Runs are sequential so timings are not
//! skewed by other work on the pool.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::formula::{DnfFormula, WeightAssignment};
use crate::generator::{generate_formula, sample_base_distribution, GeneratorConfig};
use crate::klm::{klm_estimate, KlmParams};
use crate::nn::graph::encode_graph;
use crate::nn::model::{forward_graph, ModelParams};
use crate::rng::{derive_seed, stream, StreamTag};
use crate::stats::{linear_fit, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    pub width: usize,
    pub m_ratio: f64,
    pub repeats: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ns: vec![100, 200, 400, 800, 1600, 3200],
            width: 5,
            m_ratio: 0.75,
            repeats: 3,
            epsilon: 0.1,
            delta: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub edges: usize,
    pub klm_seconds: f64,
    pub gnn_seconds: f64,
    pub messages_per_iteration: usize,
    pub expected_messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlmRatio {
    pub n: usize,
    pub doubled: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cells: Vec<BenchCell>,
    /// GNN seconds against edge count.
    pub gnn_fit: Option<LinearFit>,
    /// `time(2n)/time(n)` for every size whose double is also in the sweep.
    pub klm_ratios: Vec<KlmRatio>,
    pub messages_match: bool,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,w,edges,klm_seconds,gnn_seconds,messages,expected_messages\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{},{}\n",
                c.n, c.m, c.width, c.edges, c.klm_seconds, c.gnn_seconds, c.messages_per_iteration, c.expected_messages
            ));
        }
        out
    }
}

/// Best of `repeats` timed runs after one warm-up. Scheduling noise only adds
/// time, so the minimum is the steadiest estimate.
fn best_time(repeats: usize, mut f: impl FnMut(usize)) -> f64 {
    f(usize::MAX);
    (0..repeats)
        .map(|i| {
            let start = Instant::now();
            f(i);
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Times one formula under both estimators.
pub fn bench_formula(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    params: &ModelParams,
    klm: &KlmParams,
    repeats: usize,
) -> BenchCell {
    let graph = encode_graph(formula);
    let features = graph.literal_features(weights);
    let t = params.config.iterations;
    let mut messages = Vec::new();
    let gnn_seconds = best_time(repeats, |_| {
        messages = forward_graph(&graph, &features, params, t, false).messages;
    });
    let klm_seconds = best_time(repeats, |i| {
        let p = klm.with_seed(derive_seed(klm.seed, StreamTag::Label, i as u64));
        let _ = std::hint::black_box(klm_estimate(formula, weights, &p));
    });
    BenchCell {
        n: formula.num_vars(),
        m: formula.num_clauses(),
        width: formula.width_stats().map_or(0, |s| s.max),
        edges: graph.num_edges(),
        klm_seconds,
        gnn_seconds,
        messages_per_iteration: messages.first().copied().unwrap_or(0),
        expected_messages: graph.expected_messages_per_iteration(),
    }
}

pub fn run_bench(params: &ModelParams, cfg: &BenchConfig) -> Result<BenchReport, HarnessError> {
    if cfg.repeats == 0 {
        return Err(HarnessError::Config("repeats must be at least 1".into()));
    }
    let klm = KlmParams::new(cfg.epsilon, cfg.delta, cfg.seed)?;
    let mut cells = Vec::with_capacity(cfg.ns.len());
    for (i, &n) in cfg.ns.iter().enumerate() {
        let m = ((cfg.m_ratio * n as f64).round() as usize).max(1);
        let gen = GeneratorConfig::fixed_width(n, m, cfg.width, derive_seed(cfg.seed, StreamTag::Generate, i as u64));
        let formula = generate_formula(&gen).map_err(|source| HarnessError::Generate {
            cell: format!("n={n} m={m} w={}", cfg.width),
            source,
        })?;
        let weights = sample_base_distribution(n, &mut stream(cfg.seed, StreamTag::Distribution, i as u64));
        let cell = bench_formula(&formula, &weights, params, &klm, cfg.repeats);
        log::info!(
            "n={n}: klm {:.4}s gnn {:.4}s ({} edges)",
            cell.klm_seconds,
            cell.gnn_seconds,
            cell.edges
        );
        cells.push(cell);
    }
    let xs: Vec<f64> = cells.iter().map(|c| c.edges as f64).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.gnn_seconds).collect();
    let klm_ratios = cells
        .iter()
        .filter_map(|a| {
            let b = cells.iter().find(|b| b.n == 2 * a.n)?;
            Some(KlmRatio {
                n: a.n,
                doubled: b.n,
                ratio: b.klm_seconds / a.klm_seconds,
            })
        })
        .collect();
    let messages_match = params.config.iterations == 0
        || cells.iter().all(|c| c.messages_per_iteration == c.expected_messages);
    Ok(BenchReport {
        config: cfg.clone(),
        gnn_fit: linear_fit(&xs, &ys),
        klm_ratios,
        messages_match,
        cells,
    })
}
