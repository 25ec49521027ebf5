use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dnfcount_core::exact::{exact_wmc, ExactLimit, ExactMethod};
use dnfcount_core::formula::{parse_formula, serialize_formula, DnfFormula, WeightAssignment};
use dnfcount_core::generator::{
    generate_with_plan, sample_base_distribution, sample_experiment_q_r, GeneratorConfig, GeneratorMode,
};
use dnfcount_core::harness::bench::{run_bench, BenchConfig};
use dnfcount_core::harness::dataset::{build_dataset, load_dataset, write_dataset, DatasetConfig, PAPER_M_RATIOS};
use dnfcount_core::harness::eval::{evaluate, DEFAULT_THRESHOLDS};
use dnfcount_core::harness::export::{heatmap, trace_csv, trace_table};
use dnfcount_core::klm::{fit_gaussian_label, klm_estimate, KlmError, KlmParams};
use dnfcount_core::nn::checkpoint::{load_model, save_model};
use dnfcount_core::nn::model::{forward, ModelConfig, ModelParams};
use dnfcount_core::nn::train::{train_with, Control, TrainConfig};
use dnfcount_core::nn::EluVariant;
use dnfcount_core::par::{init_threads, Execution};
use dnfcount_core::rng::{derive_seed, rng_from_seed, stream, StreamTag};

#[derive(Parser)]
#[command(name = "dnfcount", version, about = "Weighted #DNF: exact counts, KLM estimates and a GNN estimator")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Output file or directory; stdout when omitted where that makes sense.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random formulas as .wdnf files plus a manifest.
    Generate(GenerateArgs),
    /// Build a labeled JSONL dataset over a size grid.
    Label(LabelArgs),
    /// Exact weighted count.
    Exact(ExactArgs),
    /// KLM estimate.
    Klm(KlmArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Predict the weighted count of a formula.
    Predict(ModelInput),
    /// Accuracy report of a model on a dataset.
    Eval(EvalArgs),
    /// Label-vs-prediction histogram as CSV.
    Heatmap(HeatmapArgs),
    /// KLM and GNN runtimes over a size sweep.
    Bench(BenchArgs),
    /// Predicted probability after every iteration.
    Trace(TraceArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    min_width: usize,
    #[arg(long)]
    max_width: usize,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    /// Sample q and r per formula with the experiment rule.
    #[arg(long, conflicts_with_all = ["q", "r"])]
    paper_qr: bool,
    /// Place variables uniformly instead of by slot planning.
    #[arg(long)]
    uniform: bool,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![20usize, 30])]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![3usize, 5])]
    widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = PAPER_M_RATIOS.to_vec())]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    per_cell: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Disable privileged variables.
    #[arg(long)]
    no_privileged: bool,
    #[arg(long, default_value_t = 0)]
    index_offset: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Enum,
    Ie,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Enum)]
    method: MethodArg,
}

#[derive(Args)]
struct KlmArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Independent runs, each with its own derived seed.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    clip: f64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Use e^{−x} on the negative branch of ELU+1.
    #[arg(long)]
    neg_exp_elu: bool,
}

#[derive(Args)]
struct ModelInput {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<f64>,
    /// Write CSV tables instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Trained model; a freshly initialized one of --dim/--iters otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    iters: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 200, 400, 800, 1600, 3200])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    width: usize,
    #[arg(long, default_value_t = 0.75)]
    ratio: f64,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    model: PathBuf,
    /// One or more formulas; several produce a CSV table.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        init_threads(cli.threads);
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        exec,
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Label(a) => label(&ctx, a),
        Command::Exact(a) => exact(&ctx, a),
        Command::Klm(a) => klm(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Heatmap(a) => heatmap_cmd(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Trace(a) => trace(&ctx, a),
    }
}

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    exec: Execution,
}

impl Ctx {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }

    fn require_out(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .with_context(|| format!("--out is required for {what}"))
    }
}

fn read_wdnf(path: &Path) -> Result<(DnfFormula, WeightAssignment)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_formula(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `x` with 12 significant digits.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = (11 - x.abs().log10().floor() as i64).max(0) as usize;
    format!("{x:.decimals$}")
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let dir = ctx.require_out("generate")?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for i in 0..a.count {
        let (q, r) = if a.paper_qr {
            sample_experiment_q_r(
                a.n,
                a.m,
                a.min_width,
                a.max_width,
                &mut stream(ctx.seed, StreamTag::QrRule, i as u64),
            )
        } else {
            (a.q, a.r)
        };
        let seed = derive_seed(ctx.seed, StreamTag::Generate, i as u64);
        let cfg = GeneratorConfig {
            n: a.n,
            m: a.m,
            min_width: a.min_width,
            max_width: a.max_width,
            q,
            r,
            seed,
            mode: if a.uniform {
                GeneratorMode::Uniform
            } else {
                GeneratorMode::SlotPlanned
            },
            ..GeneratorConfig::fixed_width(a.n, a.m, a.min_width, seed)
        };
        let generated = generate_with_plan(&cfg).with_context(|| format!("formula {i}"))?;
        let weights = sample_base_distribution(a.n, &mut stream(ctx.seed, StreamTag::Distribution, i as u64));
        let name = format!("formula-{i:05}.wdnf");
        fs::write(dir.join(&name), serialize_formula(&generated.formula, &weights)?)?;
        entries.push(json!({
            "file": name,
            "seed": seed,
            "q": q,
            "r": r,
            "attempts": generated.attempts,
            "privileged": generated.plan.privileged,
        }));
    }
    let manifest = json!({
        "n": a.n, "m": a.m, "min_width": a.min_width, "max_width": a.max_width,
        "master_seed": ctx.seed, "uniform": a.uniform, "formulas": entries,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn label(ctx: &Ctx, a: LabelArgs) -> Result<()> {
    let path = ctx.require_out("label")?;
    let cfg = DatasetConfig {
        ns: a.ns,
        widths: a.widths,
        m_ratios: a.ratios,
        formulas_per_cell: a.per_cell,
        privileged: !a.no_privileged,
        epsilon: a.epsilon,
        delta: a.delta,
        seed: ctx.seed,
        index_offset: a.index_offset,
        ..DatasetConfig::default()
    };
    let built = build_dataset(&cfg, ctx.exec)?;
    write_dataset(path, &built)?;
    eprintln!(
        "{} records written, {} dropped",
        built.records.len(),
        built.manifest.dropped.len()
    );
    Ok(())
}

fn exact(ctx: &Ctx, a: ExactArgs) -> Result<()> {
    let (f, w) = read_wdnf(&a.input)?;
    let method = match a.method {
        MethodArg::Enum => ExactMethod::Enumeration,
        MethodArg::Ie => ExactMethod::InclusionExclusion,
    };
    let value = exact_wmc(&f, &w, method, ExactLimit::default())?;
    ctx.emit(&format!("{}\n", sig12(value)))
}

fn klm(ctx: &Ctx, a: KlmArgs) -> Result<()> {
    let (f, w) = read_wdnf(&a.input)?;
    let mut out = String::new();
    for i in 0..a.repeat {
        let params = KlmParams::new(a.epsilon, a.delta, derive_seed(ctx.seed, StreamTag::Label, i as u64))?;
        let line = match klm_estimate(&f, &w, &params) {
            Ok(r) => {
                let label = fit_gaussian_label(&r, &params).ok();
                json!({
                    "run": i, "seed": params.seed, "estimate": r.estimate, "trials": r.trials,
                    "hits": r.hits, "label_mean": label.map(|l| l.mean), "label_sigma": label.map(|l| l.sigma),
                })
            }
            Err(KlmError::ZeroSum) => json!({"run": i, "seed": params.seed, "estimate": 0.0}),
            Err(e) => bail!(e),
        };
        out.push_str(&line.to_string());
        out.push('\n');
    }
    ctx.emit(&out)
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let path = ctx.require_out("train")?.to_path_buf();
    let records = load_dataset(&a.dataset)?;
    let examples: Vec<_> = records.iter().map(|r| r.to_example()).collect();
    let config = ModelConfig {
        elu: if a.neg_exp_elu {
            EluVariant::NegExp
        } else {
            EluVariant::Exp
        },
        ..ModelConfig::with_dim(a.dim, a.iters)
    };
    config.validate().map_err(anyhow::Error::msg)?;
    let init_seed = derive_seed(ctx.seed, StreamTag::Init, 0);
    let mut params = ModelParams::init(config, &mut rng_from_seed(init_seed));
    let cfg = TrainConfig {
        learning_rate: a.lr,
        clip: a.clip,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: ctx.seed,
        max_steps: a.max_steps,
        ..TrainConfig::default()
    };
    let mut failure = None;
    let report = train_with(&examples, &mut params, &cfg, ctx.exec, |stats, p| {
        eprintln!("epoch {}: mean loss {:.6} ({} steps)", stats.epoch + 1, stats.mean_loss, stats.steps);
        if let Err(e) = save_model(&path, p, init_seed, Some(cfg.clone())) {
            failure = Some(e);
            return Control::Stop;
        }
        Control::Continue
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if report.epochs.is_empty() {
        save_model(&path, &params, init_seed, Some(cfg))?;
    }
    Ok(())
}

fn predict(ctx: &Ctx, a: ModelInput) -> Result<()> {
    let params = load_model(&a.model)?;
    let (f, w) = read_wdnf(&a.input)?;
    let p = forward(&f, &w, &params, params.config.iterations).prediction;
    let out = json!({"probability": p.probability(), "mean": p.mean, "sigma": p.sigma});
    ctx.emit(&format!("{out}\n"))
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let params = load_model(&a.model)?;
    let records = load_dataset(&a.dataset)?;
    let report = evaluate(&params, &records, &a.thresholds, ctx.exec);
    if a.csv {
        ctx.emit(&report.to_csv())
    } else {
        ctx.emit(&(serde_json::to_string_pretty(&report)? + "\n"))
    }
}

fn heatmap_cmd(ctx: &Ctx, a: HeatmapArgs) -> Result<()> {
    if a.bins < 2 {
        bail!("--bins must be at least 2");
    }
    let params = load_model(&a.model)?;
    let records = load_dataset(&a.dataset)?;
    ctx.emit(&heatmap(&params, &records, a.bins, ctx.exec).to_csv())
}

fn bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    let params = match &a.model {
        Some(p) => load_model(p)?,
        None => ModelParams::init(
            ModelConfig::with_dim(a.dim, a.iters),
            &mut rng_from_seed(derive_seed(ctx.seed, StreamTag::Init, 0)),
        ),
    };
    let cfg = BenchConfig {
        ns: a.ns,
        width: a.width,
        m_ratio: a.ratio,
        repeats: a.repeats,
        epsilon: a.epsilon,
        delta: a.delta,
        seed: ctx.seed,
    };
    let report = run_bench(&params, &cfg)?;
    if a.csv {
        ctx.emit(&report.to_csv())
    } else {
        ctx.emit(&(serde_json::to_string_pretty(&report)? + "\n"))
    }
}

fn trace(ctx: &Ctx, a: TraceArgs) -> Result<()> {
    let params = load_model(&a.model)?;
    if let [single] = a.input.as_slice() {
        let (f, w) = read_wdnf(single)?;
        let run = forward(&f, &w, &params, params.config.iterations);
        let mut out = String::new();
        for (t, p) in run.trace.iter().enumerate() {
            out.push_str(&format!("{} {} {}\n", t + 1, p.probability(), p.sigma));
        }
        return ctx.emit(&out);
    }
    let instances = a.input.iter().map(|p| read_wdnf(p)).collect::<Result<Vec<_>>>()?;
    ctx.emit(&trace_csv(&trace_table(&params, &instances, ctx.exec)))
}
