//! Message-passing neural estimator over the literal/conjunction/disjunction
//! graph of a DNF, built on a small dense-matrix and reverse-mode
//! differentiation core.

pub mod autodiff;
pub mod checkpoint;
pub mod graph;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use autodiff::EluVariant;
pub use checkpoint::{load_model, save_model, Checkpoint, CheckpointError};
pub use graph::{encode_graph, DnfGraph};
pub use loss::kl_divergence;
pub use model::{
    elu_plus_one, forward, gaussian_from_preactivations, predict, predict_wmc, Forward, GaussianPrediction,
    ModelConfig, ModelParams,
};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::Matrix;
pub use train::{compute_gradients, train, train_with, Control, TrainConfig, TrainError, TrainExample, TrainReport};
