//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (bypassing output capture) and then asserts.
//!
//! A shared lock runs the checks one at a time so the timing-based check is
//! not disturbed by the others.

use std::io::Write;
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use dnfcount_core::exact::{exact_wmc_enumeration, exact_wmc_inclusion_exclusion};
use dnfcount_core::formula::{parse_formula, serialize_formula};
use dnfcount_core::generator::{
    four_distributions, generate_with_plan, quarter_increments, sample_base_distribution, sample_experiment_q_r,
    GeneratorConfig,
};
use dnfcount_core::harness::bench::{run_bench, BenchConfig};
use dnfcount_core::harness::dataset::{build_dataset, DatasetConfig};
use dnfcount_core::harness::eval::{best_constant_baseline, evaluate, score, DEFAULT_THRESHOLDS};
use dnfcount_core::klm::{compute_trials, fit_gaussian_label, klm_estimate, GaussianLabel, KlmParams};
use dnfcount_core::nn::graph::encode_graph;
use dnfcount_core::nn::model::{forward, loss, loss_and_gradients, predict, ModelConfig, ModelParams};
use dnfcount_core::nn::train::{train_with, Control, TrainConfig, TrainExample};
use dnfcount_core::par::{map_range, Execution};
use dnfcount_core::rng::{derive_seed, rng_from_seed, stream, Rng, StreamTag};
use dnfcount_core::{Clause, DnfFormula, Literal, VariableId, WeightAssignment};

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance {id:>2}] {verdict} {name}: {detail}");
}

/// Random formula with clause widths drawn from `1..=max_width`.
fn random_instance(rng: &mut Rng, n: usize, m: usize, max_width: usize) -> (DnfFormula, WeightAssignment) {
    let clauses = (0..m)
        .map(|_| {
            let w = rng.gen_range(1..=max_width.min(n));
            let vars = rand::seq::index::sample(rng, n, w);
            Clause::new(
                vars.iter()
                    .map(|v| Literal::new(VariableId::new(v as u32 + 1).unwrap(), rng.gen_bool(0.5)))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let probs = (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen(),
        })
        .collect();
    (DnfFormula::new(n, clauses).unwrap(), WeightAssignment::new(probs).unwrap())
}

fn exact(f: &DnfFormula, w: &WeightAssignment) -> f64 {
    exact_wmc_enumeration(f, w).unwrap()
}

#[test]
fn criterion_01_oracle_agreement() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = rng_from_seed(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=15);
        let m = rng.gen_range(1..=8);
        let (f, w) = random_instance(&mut rng, n, m, 6);
        let a = exact_wmc_enumeration(&f, &w).unwrap();
        let b = exact_wmc_inclusion_exclusion(&f, &w).unwrap();
        worst = worst.max((a - b).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-9 && secs < 10.0;
    report(1, "oracle agreement", pass, &format!("200 instances, max |enum − ie| = {worst:.3e}, {secs:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_02_fpras_coverage() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (eps, delta) = (0.2, 0.1);
    let mut rng = rng_from_seed(202);
    let mut instances = Vec::new();
    while instances.len() < 20 {
        let n = rng.gen_range(4..=14);
        let m = rng.gen_range(1..=8);
        let (f, w) = random_instance(&mut rng, n, m, 5);
        let mu = exact(&f, &w);
        if mu >= 0.05 {
            instances.push((f, w, mu));
        }
    }
    let coverage: Vec<f64> = instances
        .iter()
        .enumerate()
        .map(|(i, (f, w, mu))| {
            let ok = map_range(Execution::Parallel, 200, |s| {
                let seed = derive_seed(202, StreamTag::Coverage, (i * 1000 + s) as u64);
                let est = klm_estimate(f, w, &KlmParams::new(eps, delta, seed).unwrap()).unwrap().estimate;
                est >= mu * (1.0 - eps) && est <= mu * (1.0 + eps)
            });
            ok.iter().filter(|&&b| b).count() as f64 / 200.0
        })
        .collect();
    let min = coverage.iter().cloned().fold(1.0, f64::min);
    let secs = start.elapsed().as_secs_f64();
    let pass = min >= 0.85 && secs < 300.0;
    report(
        2,
        "FPRAS coverage",
        pass,
        &format!("20 instances × 200 seeds at ε=0.2 δ=0.1, min coverage {min:.3}, {secs:.1}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_trial_count() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let tau = compute_trials(0.1, 0.05, 4);
    let pass = tau == 12985;
    report(3, "trial formula", pass, &format!("compute_trials(0.1, 0.05, 4) = {tau}"));
    assert!(pass);
}

#[test]
fn criterion_04_label_sigma() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let f = DnfFormula::from_dimacs(2, &[&[1, 2], &[-1, -2]]).unwrap();
    let w = WeightAssignment::uniform(2, 0.5).unwrap();
    let params = KlmParams::new(0.1, 0.05, 4).unwrap();
    let label = fit_gaussian_label(&klm_estimate(&f, &w, &params).unwrap(), &params).unwrap();
    let pass = (label.sigma - 0.0486285).abs() <= 1e-5;
    report(4, "label sigma", pass, &format!("sigma = {:.7}", label.sigma));
    assert!(pass);
}

#[test]
fn criterion_05_generator_invariants() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut cells = Vec::new();
    for n in [20usize, 50] {
        for w in [3usize, 5] {
            for m in [n / 2, 3 * n / 4] {
                for paper_rule in [false, true] {
                    cells.push((n, w, m, paper_rule));
                }
            }
        }
    }
    let mut failures = Vec::new();
    let mut privileged_formulas = 0;
    for i in 0..1000u64 {
        let (n, w, m, paper_rule) = cells[i as usize % cells.len()];
        let (q, r) = if paper_rule {
            sample_experiment_q_r(n, m, w, w, &mut stream(505, StreamTag::QrRule, i))
        } else {
            (0.0, 0.0)
        };
        let cfg = GeneratorConfig {
            q,
            r,
            ..GeneratorConfig::fixed_width(n, m, w, derive_seed(505, StreamTag::Generate, i))
        };
        let g = generate_with_plan(&cfg).unwrap();
        let f = &g.formula;
        let mut seen = vec![false; n];
        let mut ok = f.num_clauses() == m;
        for c in f.clauses() {
            ok &= c.width() == w;
            let mut vars: Vec<u32> = c.literals().iter().map(|l| l.variable.index()).collect();
            vars.dedup();
            ok &= vars.len() == c.width();
            for l in c.literals() {
                seen[l.variable.offset()] = true;
            }
        }
        ok &= seen.iter().all(|&s| s);
        if !g.plan.privileged.is_empty() {
            privileged_formulas += 1;
        }
        for &v in &g.plan.privileged {
            let signs: Vec<bool> = f
                .clauses()
                .iter()
                .flat_map(|c| c.literals())
                .filter(|l| l.variable.index() == v)
                .map(|l| l.positive)
                .collect();
            ok &= signs.windows(2).all(|s| s[0] == s[1]);
        }
        ok &= generate_with_plan(&cfg).unwrap().formula == g.formula;
        if !ok {
            failures.push(i);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0 && privileged_formulas > 0;
    report(
        5,
        "generator invariants",
        pass,
        &format!(
            "1000 formulas over 16 cells, {} violations, {privileged_formulas} with privileged variables, {secs:.2}s",
            failures.len()
        ),
    );
    assert!(pass, "failing formula indices: {failures:?}");
}

#[test]
fn criterion_06_quarter_increments() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let w = WeightAssignment::new(vec![0.1]).unwrap();
    let got: Vec<f64> = quarter_increments(&w).iter().map(|d| d.probs()[0]).collect();
    let pass = got.iter().zip([0.35, 0.6, 0.85]).all(|(a, b)| (a - b).abs() < 1e-12);
    report(6, "quarter increments", pass, &format!("p=0.1 -> {got:?}"));
    assert!(pass);
}

#[test]
fn criterion_07_gradient_check() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let h = 1e-4;
    let mut worst_rel = 0.0f64;
    let mut worst_name = String::new();
    let mut worst_entry = 0.0f64;
    let mut tensors_checked = 0;
    let mut rng = rng_from_seed(707);
    for inst in 0..5u64 {
        let params = ModelParams::init(ModelConfig::with_dim(8, 2), &mut rng_from_seed(7000 + inst));
        let (f, w) = loop {
            let (f, w) = random_instance(&mut rng, 3, 2, 3);
            if w.probs().iter().all(|&p| p > 0.0 && p < 1.0) {
                break (f, w);
            }
        };
        let graph = encode_graph(&f);
        let feats = graph.literal_features(&w);
        let (mean, sigma) = (rng.gen_range(-3.0..-0.1), rng.gen_range(0.03..0.5));
        let (_, grads) = loss_and_gradients(&graph, &feats, &params, mean, sigma);
        let per_tensor = map_range(Execution::Parallel, params.tensors.len(), |t| {
            let mut p = params.clone();
            let mut fd = vec![0.0; p.tensors[t].len()];
            for (j, slot) in fd.iter_mut().enumerate() {
                let x = params.tensors[t].data[j];
                p.tensors[t].data[j] = x + h;
                let up = loss(&graph, &feats, &p, mean, sigma);
                p.tensors[t].data[j] = x - h;
                let down = loss(&graph, &feats, &p, mean, sigma);
                p.tensors[t].data[j] = x;
                *slot = (up - down) / (2.0 * h);
            }
            fd
        });
        for (t, fd) in per_tensor.iter().enumerate() {
            let an = &grads[t].data;
            let diff: f64 = an.iter().zip(fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|b| b * b).sum::<f64>().sqrt());
            let rel = diff / scale.max(1e-8);
            let entry = an.iter().zip(fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_entry = worst_entry.max(entry);
            if rel > worst_rel {
                worst_rel = rel;
                worst_name = params.names[t].clone();
            }
            tensors_checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_rel < 1e-3 && secs < 120.0;
    report(
        7,
        "gradient correctness",
        pass,
        &format!(
            "{tensors_checked} tensor checks over 5 instances, worst relative error {worst_rel:.2e} ({worst_name}), \
             worst entry abs error {worst_entry:.2e}, {secs:.1}s"
        ),
    );
    assert!(pass);
}

fn permute_clauses(f: &DnfFormula, rng: &mut Rng) -> DnfFormula {
    let mut clauses = f.clauses().to_vec();
    clauses.shuffle(rng);
    DnfFormula::new(f.num_vars(), clauses).unwrap()
}

fn rename_variables(f: &DnfFormula, w: &WeightAssignment, rng: &mut Rng) -> (DnfFormula, WeightAssignment) {
    let mut perm: Vec<usize> = (0..f.num_vars()).collect();
    perm.shuffle(rng);
    let clauses = f
        .clauses()
        .iter()
        .map(|c| {
            Clause::new(
                c.literals()
                    .iter()
                    .map(|l| Literal::new(VariableId::new(perm[l.variable.offset()] as u32 + 1).unwrap(), l.positive))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let mut probs = vec![0.0; f.num_vars()];
    for (old, &new) in perm.iter().enumerate() {
        probs[new] = w.probs()[old];
    }
    (DnfFormula::new(f.num_vars(), clauses).unwrap(), WeightAssignment::new(probs).unwrap())
}

#[test]
fn criterion_08_signs_and_invariance() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let results = map_range(Execution::Parallel, 1000, |i| {
        let mut rng = stream(808, StreamTag::Coverage, i as u64);
        let dim = [8, 16][i % 2];
        let iters = 1 + i % 4;
        let mut params = ModelParams::init(ModelConfig::with_dim(dim, iters), &mut rng);
        // Spread parameter draws beyond the initialization scale.
        let spread = rng.gen_range(0.5..3.0);
        for t in &mut params.tensors {
            t.scale(spread);
        }
        let n = rng.gen_range(1..=12);
        let m = rng.gen_range(1..=8);
        let (f, w) = random_instance(&mut rng, n, m, 5);
        let base = predict(&f, &w, &params);
        let permuted = predict(&permute_clauses(&f, &mut rng), &w, &params);
        let (g, v) = rename_variables(&f, &w, &mut rng);
        let renamed = predict(&g, &v, &params);
        let signs = base.mean < 0.0 && base.sigma > 0.0;
        let dev = [
            (base.mean - permuted.mean).abs(),
            (base.sigma - permuted.sigma).abs(),
            (base.mean - renamed.mean).abs(),
            (base.sigma - renamed.sigma).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        (signs, dev)
    });
    let sign_failures = results.iter().filter(|r| !r.0).count();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let pass = sign_failures == 0 && worst <= 1e-6;
    report(
        8,
        "sign and invariance",
        pass,
        &format!(
            "1000 draws, {sign_failures} sign violations, max permutation/renaming deviation {worst:.2e}, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

fn within(params: &ModelParams, examples: &[(DnfFormula, WeightAssignment, GaussianLabel)], t: f64) -> f64 {
    let hits = examples
        .iter()
        .filter(|(f, w, l)| (predict(f, w, params).probability() - l.mean.exp()).abs() <= t)
        .count();
    hits as f64 / examples.len() as f64
}

#[test]
fn criterion_09_overfit_sanity() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = rng_from_seed(909);
    let klm = KlmParams::new(0.1, 0.05, 0).unwrap();
    let mut labeled = Vec::new();
    while labeled.len() < 50 {
        let n = rng.gen_range(3..=6);
        let m = rng.gen_range(1..=4);
        let (f, _) = random_instance(&mut rng, n, m, 3);
        let w = sample_base_distribution(n, &mut rng);
        let params = klm.with_seed(derive_seed(909, StreamTag::Label, labeled.len() as u64));
        if let Ok(label) = klm_estimate(&f, &w, &params).and_then(|r| fit_gaussian_label(&r, &params)) {
            labeled.push((f, w, label));
        }
    }
    let examples: Vec<TrainExample> = labeled
        .iter()
        .enumerate()
        .map(|(i, (f, w, l))| TrainExample::new(format!("tiny-{i}"), f, w, *l))
        .collect();
    let mut params = ModelParams::init(ModelConfig::with_dim(32, 4), &mut rng_from_seed(910));
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        clip: 0.5,
        epochs: 400,
        batch_size: 10,
        seed: 911,
        max_steps: Some(2000),
        ..TrainConfig::default()
    };
    let mut accuracy = within(&params, &labeled, 0.1);
    let initial = accuracy;
    let train_report = train_with(&examples, &mut params, &cfg, Execution::Parallel, |_, p| {
        accuracy = within(p, &labeled, 0.1);
        if accuracy >= 0.9 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = accuracy >= 0.9 && train_report.steps <= 2000 && secs < 600.0;
    report(
        9,
        "overfit sanity",
        pass,
        &format!(
            "k=32 T=4, 50 formulas: {:.0}% -> {:.0}% within 0.1 after {} steps, {secs:.1}s",
            100.0 * initial,
            100.0 * accuracy,
            train_report.steps
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_structure_generalization() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    // 18 valid cells × 28 formulas × 4 distributions ≈ 2,000 training records.
    let train_cfg = DatasetConfig {
        formulas_per_cell: 28,
        seed: 1010,
        ..DatasetConfig::default()
    };
    let test_cfg = DatasetConfig {
        index_offset: 1 << 32,
        ..train_cfg.clone()
    };
    let train_set = build_dataset(&train_cfg, Execution::Parallel).unwrap();
    let test_set = build_dataset(&test_cfg, Execution::Parallel).unwrap();
    let train_formulas: std::collections::HashSet<_> =
        train_set.records.iter().map(|r| serialize_formula(&r.formula, &r.weights).unwrap()).collect();
    let overlap = test_set
        .records
        .iter()
        .filter(|r| train_formulas.contains(&serialize_formula(&r.formula, &r.weights).unwrap()))
        .count();
    let examples: Vec<TrainExample> = train_set.records.iter().map(|r| r.to_example()).collect();

    let mut params = ModelParams::init(ModelConfig::with_dim(32, 8), &mut rng_from_seed(1011));
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        clip: 0.5,
        epochs: EPOCHS_C10,
        batch_size: 8,
        seed: 1012,
        ..TrainConfig::default()
    };
    // Model selection on a held-out validation grid; the test grid is only scored once.
    let val_cfg = DatasetConfig {
        formulas_per_cell: 7,
        seed: 1013,
        index_offset: 2 << 32,
        ..train_cfg.clone()
    };
    let val_set = build_dataset(&val_cfg, Execution::Parallel).unwrap();
    let mut best = (f64::NEG_INFINITY, params.clone());
    train_with(&examples, &mut params, &cfg, Execution::Parallel, |s, p| {
        let val = evaluate(p, &val_set.records, &[0.15], Execution::Parallel).overall[0];
        let _ = writeln!(
            std::io::stderr(),
            "    epoch {:>2}: mean KL {:.4}, validation @0.15 {val:.1}%",
            s.epoch + 1,
            s.mean_loss
        );
        if val > best.0 {
            best = (val, p.clone());
        }
        Control::Continue
    })
    .unwrap();
    let params = best.1;

    let eval = evaluate(&params, &test_set.records, &DEFAULT_THRESHOLDS, Execution::Parallel);
    let labels: Vec<f64> = score(&params, &test_set.records, Execution::Sequential)
        .iter()
        .map(|s| s.label)
        .collect();
    let (constant, baseline) = best_constant_baseline(&labels, 0.15);
    let gnn = eval.accuracy_at(0.15).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = gnn >= baseline + 15.0 && eval.is_monotone() && overlap == 0;
    report(
        10,
        "structure generalization",
        pass,
        &format!(
            "{} train / {} test records ({} test formulas), accuracy {:?} at {:?}; \
             @0.15 GNN {gnn:.1}% vs best constant {constant:.3} {baseline:.1}%, {secs:.0}s",
            train_set.records.len(),
            test_set.records.len(),
            test_set.manifest.formulas,
            eval.overall.iter().map(|a| (a * 10.0).round() / 10.0).collect::<Vec<_>>(),
            eval.thresholds
        ),
    );
    assert!(pass);
}

const EPOCHS_C10: usize = 10;

#[test]
fn criterion_11_messages_and_scaling() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let params = ModelParams::init(ModelConfig::with_dim(128, 8), &mut rng_from_seed(1111));
    let mut rng = rng_from_seed(1112);
    let mut mismatches = 0;
    let mut checked = 0;
    let fig2 = DnfFormula::from_dimacs(4, &[&[1, -2, 4], &[1, 2, -3]]).unwrap();
    let fig2_messages = forward(&fig2, &WeightAssignment::uniform(4, 0.5).unwrap(), &params, 8).messages;
    for i in 0..200 {
        let n = rng.gen_range(1..=30);
        let m = rng.gen_range(1..=20);
        let (f, w) = random_instance(&mut rng, n, m, 6);
        let small = ModelParams::init(ModelConfig::with_dim(8, 1 + i % 3), &mut rng);
        let expected = encode_graph(&f).expected_messages_per_iteration();
        let expected_formula = 2 * f.total_slots() + 2 * n + 2 * m;
        let got = forward(&f, &w, &small, small.config.iterations).messages;
        checked += 1;
        if got.iter().any(|&g| g != expected || g != expected_formula) {
            mismatches += 1;
        }
    }
    let bench = run_bench(
        &params,
        &BenchConfig {
            ns: vec![100, 200, 400, 800, 1600, 3200],
            width: 5,
            m_ratio: 0.75,
            repeats: 5,
            epsilon: 0.1,
            delta: 0.05,
            seed: 1113,
        },
    )
    .unwrap();
    let r2 = bench.gnn_fit.map_or(0.0, |f| f.r_squared);
    let min_ratio = bench.klm_ratios.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let fig2_ok = fig2_messages.iter().all(|&m| m == 24);
    let pass = mismatches == 0 && fig2_ok && bench.messages_match && r2 > 0.95 && min_ratio > 1.8;
    let _ = writeln!(std::io::stderr(), "{}", bench.to_csv().trim_end());
    report(
        11,
        "message accounting and scaling",
        pass,
        &format!(
            "{checked} formulas + Fig. 2 (24/iter) tally-exact: {}; GNN time vs edges R² = {r2:.4}; \
             KLM doubling ratios {:?}; {:.0}s",
            mismatches == 0 && fig2_ok && bench.messages_match,
            bench.klm_ratios.iter().map(|r| (r.ratio * 100.0).round() / 100.0).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_12_file_round_trip() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut corpus: Vec<(DnfFormula, WeightAssignment)> = Vec::new();
    // The labeled grid used for training and evaluation.
    let built = build_dataset(
        &DatasetConfig {
            formulas_per_cell: 10,
            seed: 1212,
            ..DatasetConfig::default()
        },
        Execution::Parallel,
    )
    .unwrap();
    corpus.extend(built.records.into_iter().map(|r| (r.formula, r.weights)));
    // Generator grid, mixed widths and large formulas that a dataset stores out of line.
    let mut i = 0u64;
    for &(n, m, lo, hi) in &[(20, 10, 3, 3), (50, 37, 5, 5), (30, 20, 1, 8), (1500, 1125, 5, 5), (3000, 2250, 3, 13)] {
        for _ in 0..5 {
            let (q, r) = sample_experiment_q_r(n, m, lo, hi, &mut stream(1212, StreamTag::QrRule, i));
            let cfg = GeneratorConfig {
                min_width: lo,
                max_width: hi,
                q,
                r,
                ..GeneratorConfig::fixed_width(n, m, lo, derive_seed(1212, StreamTag::Generate, i))
            };
            let f = generate_with_plan(&cfg).unwrap().formula;
            for w in four_distributions(n, &mut stream(1212, StreamTag::Distribution, i)) {
                corpus.push((f.clone(), w));
            }
            i += 1;
        }
    }
    let failures = corpus
        .iter()
        .filter(|(f, w)| {
            let text = serialize_formula(f, w).unwrap();
            match parse_formula(&text) {
                Ok((g, v)) => g != *f || v.probs() != w.probs() || serialize_formula(&g, &v).unwrap() != text,
                Err(_) => true,
            }
        })
        .count();
    let pass = failures == 0;
    report(
        12,
        "file-format round trip",
        pass,
        &format!("{} formula/weight pairs, {failures} mismatches, {:.1}s", corpus.len(), start.elapsed().as_secs_f64()),
    );
    assert!(pass);
}
