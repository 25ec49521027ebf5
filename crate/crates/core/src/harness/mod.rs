//! Experiment pipeline: labeled datasets, accuracy reports, figure data and
//! runtime benchmarks.

pub mod bench;
pub mod dataset;
pub mod eval;
pub mod export;

use thiserror::Error;

use crate::formula::{FormulaError, ParseError};
use crate::generator::GeneratorError;
use crate::klm::KlmError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("generation failed in cell {cell}: {source}")]
    Generate {
        cell: String,
        #[source]
        source: GeneratorError,
    },
    #[error(transparent)]
    Klm(#[from] KlmError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("formula file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
    #[error("dataset line {line}: {message}")]
    Record { line: usize, message: String },
}

pub use bench::{run_bench, BenchConfig, BenchReport};
pub use dataset::{build_dataset, load_dataset, write_dataset, DatasetConfig, DatasetRecord, LoadedRecord};
pub use eval::{best_constant_baseline, evaluate, EvalReport};
pub use export::{heatmap, trace_table, Heatmap};
