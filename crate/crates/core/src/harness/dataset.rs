//! Labeled datasets as JSON lines.
//!
//! Each generated formula gets four weight distributions (a uniform base and
//! its three quarter increments), and each (formula, distribution) pair is
//! labeled with a KLM estimate turned into a Gaussian over the log count.
//! Every random choice comes from a stream derived from the master seed and
//! the formula or record index, so output is independent of thread count.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::formula::{parse_formula, serialize_formula, DnfFormula, WeightAssignment};
use crate::generator::{four_distributions, generate_formula, sample_experiment_q_r, GeneratorConfig, GeneratorMode};
use crate::klm::{fit_gaussian_label, klm_estimate, GaussianLabel, KlmError, KlmParams};
use crate::nn::train::TrainExample;
use crate::par::{map_range, Execution};
use crate::rng::{derive_seed, stream, StreamTag, RNG_ALGORITHM};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Clause-count ratios used for every `n`.
pub const PAPER_M_RATIOS: [f64; 5] = [0.25, 0.375, 0.5, 0.625, 0.75];

/// Formulas with more variables than this are written to separate files.
pub const DEFAULT_INLINE_LIMIT: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub ns: Vec<usize>,
    pub widths: Vec<usize>,
    /// `m = round(ratio · n)`.
    pub m_ratios: Vec<f64>,
    pub formulas_per_cell: usize,
    /// Sample privileged-variable parameters per formula.
    pub privileged: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub inline_limit: usize,
    /// Offset added to formula indices when deriving seeds, so disjoint
    /// datasets can share a master seed.
    #[serde(default)]
    pub index_offset: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            ns: vec![20, 30],
            widths: vec![3, 5],
            m_ratios: PAPER_M_RATIOS.to_vec(),
            formulas_per_cell: 5,
            privileged: true,
            epsilon: 0.1,
            delta: 0.05,
            seed: 0,
            inline_limit: DEFAULT_INLINE_LIMIT,
            index_offset: 0,
        }
    }
}

/// One (n, m, w) setting of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub ratio: f64,
}

impl GridCell {
    pub fn label(&self) -> String {
        format!("n={} m={} w={}", self.n, self.m, self.width)
    }
}

impl DatasetConfig {
    /// Valid cells in grid order; `w = 3` with `m = 0.25·n` is excluded.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut cells = Vec::new();
        for &n in &self.ns {
            for &width in &self.widths {
                for &ratio in &self.m_ratios {
                    if width == 3 && (ratio - 0.25).abs() < 1e-12 {
                        continue;
                    }
                    let m = ((ratio * n as f64).round() as usize).max(1);
                    cells.push(GridCell { n, m, width, ratio });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        KlmParams::new(self.epsilon, self.delta, 0)?;
        if self.ns.contains(&0) || self.widths.contains(&0) || self.m_ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(HarnessError::Config("grid sizes and ratios must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaRef {
    Inline { num_vars: usize, clauses: Vec<Vec<i64>> },
    /// Relative to the dataset file's directory.
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEcho {
    pub n: usize,
    pub m: usize,
    pub min_width: usize,
    pub max_width: usize,
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSeeds {
    pub formula: u64,
    pub label: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema: u32,
    pub id: String,
    pub formula: FormulaRef,
    pub distribution: u8,
    pub weights: Vec<f64>,
    pub label_mean: f64,
    pub label_sigma: f64,
    pub klm_estimate: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub seeds: RecordSeeds,
    pub generator: GeneratorEcho,
}

impl DatasetRecord {
    pub fn label(&self) -> GaussianLabel {
        GaussianLabel {
            mean: self.label_mean,
            sigma: self.label_sigma,
        }
    }

    /// Label on the probability scale.
    pub fn label_probability(&self) -> f64 {
        self.label_mean.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub config: DatasetConfig,
    pub cells: Vec<GridCell>,
    pub formulas: usize,
    pub records: usize,
    pub dropped: Vec<DroppedRecord>,
    pub rng: String,
    pub privileged_rule: String,
}

/// A record together with its resolved formula and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRecord {
    pub record: DatasetRecord,
    pub formula: DnfFormula,
    pub weights: WeightAssignment,
}

impl LoadedRecord {
    pub fn n(&self) -> usize {
        self.formula.num_vars()
    }

    /// Grouping key for width breakdowns: the fixed width when the generator
    /// used one, otherwise the formula's widest clause.
    pub fn width_key(&self) -> usize {
        let g = &self.record.generator;
        if g.min_width == g.max_width {
            g.min_width
        } else {
            self.formula.width_stats().map_or(0, |s| s.max)
        }
    }

    pub fn to_example(&self) -> TrainExample {
        TrainExample::new(self.record.id.clone(), &self.formula, &self.weights, self.record.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    pub records: Vec<LoadedRecord>,
    pub manifest: Manifest,
}

struct GeneratedFormula {
    formula: DnfFormula,
    echo: GeneratorEcho,
    seed: u64,
    distributions: [WeightAssignment; 4],
}

fn generate_one(cfg: &DatasetConfig, cell: &GridCell, index: u64) -> Result<GeneratedFormula, HarnessError> {
    let (q, r) = if cfg.privileged {
        let mut rng = stream(cfg.seed, StreamTag::QrRule, index);
        sample_experiment_q_r(cell.n, cell.m, cell.width, cell.width, &mut rng)
    } else {
        (0.0, 0.0)
    };
    let seed = derive_seed(cfg.seed, StreamTag::Generate, index);
    let gen_cfg = GeneratorConfig {
        q,
        r,
        mode: GeneratorMode::SlotPlanned,
        ..GeneratorConfig::fixed_width(cell.n, cell.m, cell.width, seed)
    };
    let formula = generate_formula(&gen_cfg).map_err(|source| HarnessError::Generate {
        cell: cell.label(),
        source,
    })?;
    let distributions = four_distributions(cell.n, &mut stream(cfg.seed, StreamTag::Distribution, index));
    Ok(GeneratedFormula {
        formula,
        echo: GeneratorEcho {
            n: cell.n,
            m: cell.m,
            min_width: cell.width,
            max_width: cell.width,
            q,
            r,
        },
        seed,
        distributions,
    })
}

fn formula_ref(formula: &DnfFormula, inline_limit: usize, id: &str) -> FormulaRef {
    if formula.num_vars() > inline_limit {
        FormulaRef::Path(format!("formulas/{id}.wdnf"))
    } else {
        FormulaRef::Inline {
            num_vars: formula.num_vars(),
            clauses: formula
                .clauses()
                .iter()
                .map(|c| c.literals().iter().map(|l| l.to_dimacs()).collect())
                .collect(),
        }
    }
}

/// Generates and labels the grid. Records whose KLM run has no usable
/// estimate (all clause probabilities zero, or no hits) are dropped and
/// listed in the manifest.
pub fn build_dataset(cfg: &DatasetConfig, exec: Execution) -> Result<BuiltDataset, HarnessError> {
    cfg.validate()?;
    let cells = cfg.cells();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, _)| (0..cfg.formulas_per_cell).map(move |i| (c, i)))
        .collect();
    let generated = map_range(exec, jobs.len(), |j| {
        let (c, _) = jobs[j];
        generate_one(cfg, &cells[c], cfg.index_offset + j as u64)
    });
    let generated = generated.into_iter().collect::<Result<Vec<_>, _>>()?;

    let labels = map_range(exec, generated.len() * 4, |k| {
        let (fi, d) = (k / 4, k % 4);
        let g = &generated[fi];
        let seed = derive_seed(cfg.seed, StreamTag::Label, (cfg.index_offset + fi as u64) * 4 + d as u64);
        let params = KlmParams {
            epsilon: cfg.epsilon,
            delta: cfg.delta,
            seed,
        };
        let result = klm_estimate(&g.formula, &g.distributions[d], &params)
            .and_then(|r| fit_gaussian_label(&r, &params).map(|label| (r.estimate, label)));
        (seed, result)
    });

    let mut records = Vec::new();
    let mut dropped = Vec::new();
    for (k, (label_seed, result)) in labels.into_iter().enumerate() {
        let (fi, d) = (k / 4, k % 4);
        let (c, i) = jobs[fi];
        let g = &generated[fi];
        let cell = &cells[c];
        let id = format!("n{}-m{}-w{}-f{}-d{}", cell.n, cell.m, cell.width, i, d);
        match result {
            Ok((estimate, label)) => {
                let record = DatasetRecord {
                    schema: DATASET_SCHEMA_VERSION,
                    formula: formula_ref(&g.formula, cfg.inline_limit, &format!("n{}-m{}-w{}-f{}", cell.n, cell.m, cell.width, i)),
                    id,
                    distribution: d as u8,
                    weights: g.distributions[d].probs().to_vec(),
                    label_mean: label.mean,
                    label_sigma: label.sigma,
                    klm_estimate: estimate,
                    epsilon: cfg.epsilon,
                    delta: cfg.delta,
                    seeds: RecordSeeds {
                        formula: g.seed,
                        label: label_seed,
                    },
                    generator: g.echo.clone(),
                };
                records.push(LoadedRecord {
                    record,
                    formula: g.formula.clone(),
                    weights: g.distributions[d].clone(),
                });
            }
            Err(e @ (KlmError::ZeroSum | KlmError::ZeroHits { .. } | KlmError::NonPositiveEstimate(_))) => {
                log::warn!("dropping {id}: {e}");
                dropped.push(DroppedRecord {
                    id,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let manifest = Manifest {
        schema: DATASET_SCHEMA_VERSION,
        config: cfg.clone(),
        cells,
        formulas: generated.len(),
        records: records.len(),
        dropped,
        rng: RNG_ALGORITHM.into(),
        privileged_rule: "q: 0 with probability 1/2, else Exp(1) mod ln(n)/n rounded up to a multiple of 1/n; \
                          r: largest value on a 0.01 grid whose one-sided Chebyshev bound on a privileged \
                          variable reaching m clauses is at most 1/2"
            .into(),
    };
    Ok(BuiltDataset { records, manifest })
}

/// Path of the manifest written next to `dataset`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    dataset.with_file_name(name)
}

/// Writes the JSONL file, any out-of-line formula files, and the manifest.
pub fn write_dataset(path: &Path, built: &BuiltDataset) -> Result<(), HarnessError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in &built.records {
        if let FormulaRef::Path(rel) = &r.record.formula {
            let target = base.join(rel);
            if !target.exists() {
                if let Some(dir) = target.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                // Weights live in the record; the file carries the first distribution.
                std::fs::write(&target, serialize_formula(&r.formula, &r.weights)?)?;
            }
        }
        serde_json::to_writer(&mut out, &r.record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&built.manifest)? + "\n")?;
    Ok(())
}

fn resolve(record: DatasetRecord, base: &Path, line: usize) -> Result<LoadedRecord, HarnessError> {
    let bad = |message: String| HarnessError::Record { line, message };
    if record.schema != DATASET_SCHEMA_VERSION {
        return Err(bad(format!("unsupported schema {}", record.schema)));
    }
    if !(record.label_sigma > 0.0) || !record.label_mean.is_finite() {
        return Err(bad(format!("record {} has an invalid label", record.id)));
    }
    let formula = match &record.formula {
        FormulaRef::Inline { num_vars, clauses } => {
            let refs: Vec<&[i64]> = clauses.iter().map(Vec::as_slice).collect();
            DnfFormula::from_dimacs(*num_vars, &refs).map_err(|e| bad(e.to_string()))?
        }
        FormulaRef::Path(rel) => {
            let p = base.join(rel);
            let text = std::fs::read_to_string(&p)?;
            parse_formula(&text)
                .map_err(|source| HarnessError::Parse {
                    path: p.display().to_string(),
                    source,
                })?
                .0
        }
    };
    let weights = WeightAssignment::new(record.weights.clone()).map_err(|e| bad(e.to_string()))?;
    if weights.len() != formula.num_vars() {
        return Err(bad(format!("record {} weight count mismatch", record.id)));
    }
    Ok(LoadedRecord {
        record,
        formula,
        weights,
    })
}

pub fn load_dataset(path: &Path) -> Result<Vec<LoadedRecord>, HarnessError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| HarnessError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(resolve(record, base, i + 1)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            ns: vec![20],
            widths: vec![3],
            m_ratios: vec![0.5, 0.75],
            formulas_per_cell: 5,
            seed: 3,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn grid_excludes_narrow_sparse_cell() {
        let cfg = DatasetConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 2 * (5 + 4));
        assert!(!cells.iter().any(|c| c.width == 3 && c.ratio == 0.25));
        assert_eq!(small().cells().iter().map(|c| c.m).collect::<Vec<_>>(), vec![10, 15]);
    }

    #[test]
    fn counts_labels_and_determinism() {
        let cfg = small();
        let a = build_dataset(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.records.len() + a.manifest.dropped.len(), 40);
        for r in &a.records {
            assert!((r.record.label_sigma - 0.0486285).abs() < 1e-6);
            assert!(r.record.label_mean.is_finite());
        }
        let b = build_dataset(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn write_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let mut cfg = small();
        cfg.formulas_per_cell = 2;
        cfg.inline_limit = 10;
        let built = build_dataset(&cfg, Execution::Sequential).unwrap();
        write_dataset(&path, &built).unwrap();
        let first = std::fs::read(&path).unwrap();
        assert!(dir.path().join("formulas").is_dir());
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded, built.records);
        write_dataset(&path, &build_dataset(&cfg, Execution::Parallel).unwrap()).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
        assert!(manifest_path(&path).exists());
    }
}
