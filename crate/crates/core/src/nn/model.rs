//! The message-passing estimator.
//!
//! Literal nodes start from an encoding of their probability, conjunction and
//! disjunction nodes from two learned vectors. Each iteration runs four
//! steps:
//!
//! 1. literals send `M_l` messages to their conjunctions, which sum them and
//!    update with `L_c1`;
//! 2. conjunctions send `M_c` messages to the disjunction, updated with `L_d`;
//! 3. the disjunction sends one `M_d` message back to every conjunction,
//!    updated with `L_c2`;
//! 4. conjunctions send `M_c` messages to their literals, which concatenate
//!    the sum with an `M_l` message from their negation and update with `L_l`.
//!
//! The final disjunction state goes through `f_out`, whose two outputs become
//! a Gaussian over the log count: mean `−ELU+1(a)`, sigma `ELU+1(b)`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::autodiff::{elu_plus_one_with, Eager, EluVariant, Exec, ParamId, Tape};
use super::graph::{encode_graph, DnfGraph};
use super::tensor::Matrix;
use crate::formula::{DnfFormula, WeightAssignment};
use crate::rng::Rng;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of every node representation.
    pub dim: usize,
    /// Message-passing iterations.
    pub iterations: usize,
    /// Hidden layer sizes of the literal encoder; its output layer has `dim` units.
    pub encoder_hidden: Vec<usize>,
    /// Number of `dim`-wide layers in each message MLP.
    pub message_layers: usize,
    /// Hidden layer sizes of the output head; its output layer has 2 units.
    pub output_hidden: Vec<usize>,
    #[serde(default)]
    pub elu: EluVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            iterations: 8,
            encoder_hidden: vec![8, 32],
            message_layers: 4,
            output_hidden: vec![32, 8],
            elu: EluVariant::Exp,
        }
    }
}

impl ModelConfig {
    pub fn with_dim(dim: usize, iterations: usize) -> Self {
        Self {
            dim,
            iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 || self.message_layers == 0 {
            return Err("dim and message_layers must be positive".into());
        }
        if self.encoder_hidden.contains(&0) || self.output_hidden.contains(&0) {
            return Err("layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// Parameter handles of a multi-layer perceptron: ReLU between layers,
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn forward<E: Exec>(&self, e: &mut E, x: &E::T) -> E::T {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let w = e.param(*w);
            let b = e.param(*b);
            let z = e.matmul(&h, &w);
            h = e.add_row(&z, &b);
            if i + 1 < self.layers.len() {
                h = e.relu(&h);
            }
        }
        h
    }
}

/// Layer-normalized LSTM cell.
///
/// Gate pre-activations are `LN(x·W_x)·g_x + b_x + LN(h·W_h)·g_h + b_h`, with
/// the normalization taken separately over each of the four gate blocks
/// (input, forget, output, candidate). The new hidden state is
/// `o ⊙ tanh(LN(c′)·g_c + b_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LnLstm {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub gain_input: ParamId,
    pub bias_input: ParamId,
    pub gain_hidden: ParamId,
    pub bias_hidden: ParamId,
    pub gain_cell: ParamId,
    pub bias_cell: ParamId,
    pub dim: usize,
}

impl LnLstm {
    /// Input contribution to the gates; may be a single row to broadcast.
    pub fn input_gates<E: Exec>(&self, e: &mut E, x: &E::T) -> E::T {
        let w = e.param(self.w_input);
        let g = e.param(self.gain_input);
        let b = e.param(self.bias_input);
        let z = e.matmul(x, &w);
        let z = e.normalize_blocks(&z, self.dim, LAYER_NORM_EPS);
        let z = e.mul_row(&z, &g);
        e.add_row(&z, &b)
    }

    /// One update; `input_gates` comes from [`Self::input_gates`] and must
    /// have as many rows as `hidden`.
    pub fn step<E: Exec>(
        &self,
        e: &mut E,
        input_gates: &E::T,
        hidden: &E::T,
        cell: &E::T,
    ) -> (E::T, E::T) {
        let k = self.dim;
        let w = e.param(self.w_hidden);
        let g = e.param(self.gain_hidden);
        let b = e.param(self.bias_hidden);
        let z = e.matmul(hidden, &w);
        let z = e.normalize_blocks(&z, k, LAYER_NORM_EPS);
        let z = e.mul_row(&z, &g);
        let z = e.add_row(&z, &b);
        let gates = e.add(input_gates, &z);

        let i = e.slice_cols(&gates, 0, k);
        let i = e.sigmoid(&i);
        let f = e.slice_cols(&gates, k, k);
        let f = e.sigmoid(&f);
        let o = e.slice_cols(&gates, 2 * k, k);
        let o = e.sigmoid(&o);
        let u = e.slice_cols(&gates, 3 * k, k);
        let u = e.tanh(&u);

        let keep = e.mul(&f, cell);
        let write = e.mul(&i, &u);
        let new_cell = e.add(&keep, &write);

        let gc = e.param(self.gain_cell);
        let bc = e.param(self.bias_cell);
        let c = e.normalize_blocks(&new_cell, k, LAYER_NORM_EPS);
        let c = e.mul_row(&c, &gc);
        let c = e.add_row(&c, &bc);
        let c = e.tanh(&c);
        let new_hidden = e.mul(&o, &c);
        (new_hidden, new_cell)
    }
}

/// Handles for every learned tensor, in a fixed construction order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub encoder: Mlp,
    pub msg_literal: Mlp,
    pub msg_conjunction: Mlp,
    pub msg_disjunction: Mlp,
    pub lstm_conj_literal: LnLstm,
    pub lstm_conj_disjunction: LnLstm,
    pub lstm_disjunction: LnLstm,
    pub lstm_literal: LnLstm,
    pub init_conjunction: ParamId,
    pub init_disjunction: ParamId,
    pub output: Mlp,
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// U(−1/√fan_in, 1/√fan_in).
    FanIn(usize),
    /// U(−√(6/fan_in), √(6/fan_in)), variance 2/fan_in for ReLU layers.
    He(usize),
    Const(f64),
    /// Gate bias: +1 on the forget block, 0 elsewhere.
    ForgetBias(usize),
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    init: Init,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> ParamId {
        self.specs.push(TensorSpec {
            name,
            rows,
            cols,
            init,
        });
        ParamId(self.specs.len() - 1)
    }

    fn mlp(&mut self, name: &str, input: usize, sizes: &[usize]) -> Mlp {
        let mut fan_in = input;
        let layers = sizes
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let w = self.add(format!("{name}.{i}.weight"), fan_in, out, Init::He(fan_in));
                // A small positive bias keeps pre-activations off the ReLU kink.
                let b = self.add(format!("{name}.{i}.bias"), 1, out, Init::Const(0.1));
                fan_in = out;
                (w, b)
            })
            .collect();
        Mlp { layers }
    }

    fn lstm(&mut self, name: &str, input: usize, k: usize) -> LnLstm {
        LnLstm {
            w_input: self.add(format!("{name}.w_input"), input, 4 * k, Init::FanIn(input)),
            w_hidden: self.add(format!("{name}.w_hidden"), k, 4 * k, Init::FanIn(k)),
            gain_input: self.add(format!("{name}.gain_input"), 1, 4 * k, Init::Const(1.0)),
            bias_input: self.add(format!("{name}.bias_input"), 1, 4 * k, Init::ForgetBias(k)),
            gain_hidden: self.add(format!("{name}.gain_hidden"), 1, 4 * k, Init::Const(1.0)),
            bias_hidden: self.add(format!("{name}.bias_hidden"), 1, 4 * k, Init::Const(0.0)),
            gain_cell: self.add(format!("{name}.gain_cell"), 1, k, Init::Const(1.0)),
            bias_cell: self.add(format!("{name}.bias_cell"), 1, k, Init::Const(0.0)),
            dim: k,
        }
    }
}

impl Layout {
    pub fn build(cfg: &ModelConfig) -> (Self, Vec<TensorSpec>) {
        let k = cfg.dim;
        let mut b = LayoutBuilder { specs: Vec::new() };
        let mut enc_sizes = cfg.encoder_hidden.clone();
        enc_sizes.push(k);
        let msg_sizes = vec![k; cfg.message_layers];
        let mut out_sizes = cfg.output_hidden.clone();
        out_sizes.push(2);
        let layout = Layout {
            encoder: b.mlp("encoder", 1, &enc_sizes),
            msg_literal: b.mlp("msg_literal", k, &msg_sizes),
            msg_conjunction: b.mlp("msg_conjunction", k, &msg_sizes),
            msg_disjunction: b.mlp("msg_disjunction", k, &msg_sizes),
            lstm_conj_literal: b.lstm("lstm_conj_literal", k, k),
            lstm_conj_disjunction: b.lstm("lstm_conj_disjunction", k, k),
            lstm_disjunction: b.lstm("lstm_disjunction", k, k),
            lstm_literal: b.lstm("lstm_literal", 2 * k, k),
            init_conjunction: b.add("init_conjunction".into(), 1, k, Init::Normal(0.1)),
            init_disjunction: b.add("init_disjunction".into(), 1, k, Init::Normal(0.1)),
            output: b.mlp("output", k, &out_sizes),
        };
        (layout, b.specs)
    }
}

/// All learned tensors of a model, with their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: Layout,
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

impl ModelParams {
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Self {
        let (layout, specs) = Layout::build(&config);
        let tensors = specs
            .iter()
            .map(|s| {
                let data = (0..s.rows * s.cols)
                    .map(|j| match s.init {
                        Init::FanIn(fan_in) => {
                            let bound = 1.0 / (fan_in as f64).sqrt();
                            rng.gen_range(-bound..bound)
                        }
                        Init::He(fan_in) => {
                            let bound = (6.0 / fan_in as f64).sqrt();
                            rng.gen_range(-bound..bound)
                        }
                        Init::Const(c) => c,
                        Init::ForgetBias(k) => {
                            if (k..2 * k).contains(&j) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Init::Normal(std) => Normal::new(0.0, std).expect("finite std").sample(rng),
                    })
                    .collect();
                Matrix::from_vec(s.rows, s.cols, data)
            })
            .collect();
        Self {
            config,
            layout,
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
        }
    }

    /// Rebuilds a parameter set from named tensors, checking every name and shape.
    pub fn from_tensors(config: ModelConfig, named: Vec<(String, Matrix)>) -> Result<Self, String> {
        config.validate()?;
        let (layout, specs) = Layout::build(&config);
        if named.len() != specs.len() {
            return Err(format!("expected {} tensors, found {}", specs.len(), named.len()));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (spec, (name, m)) in specs.iter().zip(named) {
            if spec.name != name {
                return Err(format!("expected tensor `{}`, found `{name}`", spec.name));
            }
            if (spec.rows, spec.cols) != m.shape() {
                return Err(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    m.shape(),
                    (spec.rows, spec.cols)
                ));
            }
            if m.data.len() != m.rows * m.cols {
                return Err(format!("tensor `{name}` has {} values for its shape", m.data.len()));
            }
            tensors.push(m);
        }
        Ok(Self {
            config,
            layout,
            names: specs.into_iter().map(|s| s.name).collect(),
            tensors,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.tensors.iter().map(|t| Matrix::zeros(t.rows, t.cols)).collect()
    }
}

/// Predicted Gaussian over the natural log of the weighted count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianPrediction {
    pub fn probability(&self) -> f64 {
        self.mean.exp()
    }
}

pub fn elu_plus_one(x: f64) -> f64 {
    elu_plus_one_with(x, EluVariant::Exp)
}

/// Maps the two raw outputs of `f_out` to (mean, sigma).
pub fn gaussian_from_preactivations(mu_pre: f64, sigma_pre: f64, variant: EluVariant) -> GaussianPrediction {
    GaussianPrediction {
        mean: -elu_plus_one_with(mu_pre, variant),
        sigma: elu_plus_one_with(sigma_pre, variant),
    }
}

/// Output of one forward pass.
pub struct ForwardOutput<T> {
    /// 1×2 `[mean, sigma]`.
    pub head: T,
    /// Head applied to the disjunction state after each iteration.
    pub trace: Vec<T>,
    /// Messages routed in each iteration.
    pub messages: Vec<usize>,
}

fn output_head<E: Exec>(e: &mut E, params: &ModelParams, disjunction: &E::T) -> E::T {
    let raw = params.layout.output.forward(e, disjunction);
    let act = e.elu_plus_one(&raw, params.config.elu);
    let sign = e.constant(Matrix::from_vec(1, 2, vec![-1.0, 1.0]));
    e.mul_row(&act, &sign)
}

/// Applies the output head to an arbitrary disjunction state (a 1×dim row).
pub fn output_head_eval(params: &ModelParams, disjunction: &Matrix) -> GaussianPrediction {
    let mut e = Eager::new(&params.tensors);
    let d = e.constant(disjunction.clone());
    let h = output_head(&mut e, params, &d);
    let v = e.value(&h);
    GaussianPrediction {
        mean: v.data[0],
        sigma: v.data[1],
    }
}

/// Runs the encoder, `iterations` rounds of message passing and the head.
pub fn forward_exec<E: Exec>(
    e: &mut E,
    params: &ModelParams,
    graph: &DnfGraph,
    features: &[f64],
    iterations: usize,
    with_trace: bool,
) -> ForwardOutput<E::T> {
    let l = &params.layout;
    let k = params.config.dim;
    let n_lit = graph.num_literal_nodes();
    let m = graph.num_clauses;
    let routing = graph.routing();
    assert_eq!(features.len(), n_lit);

    let feats = e.constant(Matrix::column(features));
    let mut lit_h = l.encoder.forward(e, &feats);
    let mut lit_c = e.constant(Matrix::zeros(n_lit, k));
    let vc = e.param(l.init_conjunction);
    let mut conj_h = e.repeat_rows(&vc, m);
    let mut conj_c = e.constant(Matrix::zeros(m, k));
    let mut disj_h = e.param(l.init_disjunction);
    let mut disj_c = e.constant(Matrix::zeros(1, k));

    let mut trace = Vec::new();
    let mut messages = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut routed = 0;

        // (a) literals → conjunctions
        let lit_msg = l.msg_literal.forward(e, &lit_h);
        let per_edge = e.gather_rows(&lit_msg, &routing.edge_literal);
        let conj_in = e.scatter_add_rows(&per_edge, &routing.edge_conjunction, m);
        routed += routing.edge_literal.len();
        let gates = l.lstm_conj_literal.input_gates(e, &conj_in);
        let (conj_hat, conj_hat_c) = l.lstm_conj_literal.step(e, &gates, &conj_h, &conj_c);

        // (b) conjunctions → disjunction
        let conj_msg = l.msg_conjunction.forward(e, &conj_hat);
        let disj_in = e.sum_rows(&conj_msg);
        routed += m;
        let gates = l.lstm_disjunction.input_gates(e, &disj_in);
        (disj_h, disj_c) = l.lstm_disjunction.step(e, &gates, &disj_h, &disj_c);

        // (c) disjunction → conjunctions; one message, broadcast
        let disj_msg = l.msg_disjunction.forward(e, &disj_h);
        let gates = l.lstm_conj_disjunction.input_gates(e, &disj_msg);
        let gates = e.repeat_rows(&gates, m);
        routed += m;
        (conj_h, conj_c) = l.lstm_conj_disjunction.step(e, &gates, &conj_hat, &conj_hat_c);

        // (d) conjunctions → literals, plus negation messages from step (a)
        let conj_msg = l.msg_conjunction.forward(e, &conj_h);
        let per_edge = e.gather_rows(&conj_msg, &routing.edge_conjunction);
        let lit_in = e.scatter_add_rows(&per_edge, &routing.edge_literal, n_lit);
        routed += routing.edge_conjunction.len();
        let neg_msg = e.gather_rows(&lit_msg, &routing.negation);
        routed += routing.negation.len();
        let lit_in = e.concat_cols(&lit_in, &neg_msg);
        let gates = l.lstm_literal.input_gates(e, &lit_in);
        (lit_h, lit_c) = l.lstm_literal.step(e, &gates, &lit_h, &lit_c);

        messages.push(routed);
        if with_trace {
            trace.push(output_head(e, params, &disj_h));
        }
    }
    let head = output_head(e, params, &disj_h);
    ForwardOutput {
        head,
        trace,
        messages,
    }
}

fn to_prediction(m: &Matrix) -> GaussianPrediction {
    GaussianPrediction {
        mean: m.data[0],
        sigma: m.data[1],
    }
}

/// Full prediction with per-iteration trace and message counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub prediction: GaussianPrediction,
    pub trace: Vec<GaussianPrediction>,
    pub messages: Vec<usize>,
}

pub fn forward(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    params: &ModelParams,
    iterations: usize,
) -> Forward {
    let graph = encode_graph(formula);
    forward_graph(&graph, &graph.literal_features(weights), params, iterations, true)
}

pub fn forward_graph(
    graph: &DnfGraph,
    features: &[f64],
    params: &ModelParams,
    iterations: usize,
    with_trace: bool,
) -> Forward {
    let mut e = Eager::new(&params.tensors);
    let out = forward_exec(&mut e, params, graph, features, iterations, with_trace);
    Forward {
        prediction: to_prediction(e.value(&out.head)),
        trace: out.trace.iter().map(|t| to_prediction(e.value(t))).collect(),
        messages: out.messages,
    }
}

/// Prediction with the model's configured number of iterations.
pub fn predict(formula: &DnfFormula, weights: &WeightAssignment, params: &ModelParams) -> GaussianPrediction {
    let graph = encode_graph(formula);
    forward_graph(
        &graph,
        &graph.literal_features(weights),
        params,
        params.config.iterations,
        false,
    )
    .prediction
}

/// Predicted weighted model count, exp of the predicted log-count mean.
pub fn predict_wmc(formula: &DnfFormula, weights: &WeightAssignment, params: &ModelParams) -> f64 {
    predict(formula, weights, params).probability()
}

/// Loss and parameter gradients for a single labeled instance.
pub fn loss_and_gradients(
    graph: &DnfGraph,
    features: &[f64],
    params: &ModelParams,
    target_mean: f64,
    target_sigma: f64,
) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new(&params.tensors);
    let out = forward_exec(&mut tape, params, graph, features, params.config.iterations, false);
    let loss = tape.gaussian_kl(&out.head, target_mean, target_sigma);
    let value = tape.value(&loss).data[0];
    let grads = tape.backward(loss, 1.0);
    (value, grads)
}

/// Loss only, for finite-difference checks and evaluation.
pub fn loss(graph: &DnfGraph, features: &[f64], params: &ModelParams, target_mean: f64, target_sigma: f64) -> f64 {
    let f = forward_graph(graph, features, params, params.config.iterations, false);
    super::loss::kl_divergence(
        f.prediction.mean,
        f.prediction.sigma,
        target_mean,
        target_sigma,
    )
    .unwrap_or(f64::INFINITY)
}
