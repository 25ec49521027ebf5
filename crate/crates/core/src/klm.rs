//! Karp–Luby–Madras coverage sampling for weighted #DNF, and the Gaussian
//! labels fitted to its (ε, δ) guarantee.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Assignment, Clause, DnfFormula, WeightAssignment};
use crate::rng::{self, Rng};
use crate::stats::inverse_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlmParams {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl KlmParams {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Result<Self, KlmError> {
        let p = Self {
            epsilon,
            delta,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KlmError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(KlmError::InvalidEpsilon(self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(KlmError::InvalidDelta(self.delta));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlmResult {
    pub estimate: f64,
    pub trials: u64,
    pub hits: u64,
    pub sum_clause_probs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLabel {
    /// Natural log of the KLM estimate.
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum KlmError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("formula has no clauses")]
    NoClauses,
    #[error("weights cover {found} variables, formula has {expected}")]
    WeightLength { expected: usize, found: usize },
    /// Every clause has probability zero, so the count is exactly zero.
    #[error("all clause probabilities are zero")]
    ZeroSum,
    #[error("no hits in {trials} trials")]
    ZeroHits { trials: u64 },
    #[error("estimate {0} is not positive")]
    NonPositiveEstimate(f64),
}

/// τ = ⌈8(1+ε)·m·ln(2/δ)/ε²⌉.
pub fn compute_trials(epsilon: f64, delta: f64, m: usize) -> u64 {
    let t = 8.0 * (1.0 + epsilon) * m as f64 * (2.0 / delta).ln() / (epsilon * epsilon);
    t.ceil() as u64
}

/// Fixes the clause's variables to satisfy it and draws every other variable
/// from its own probability.
pub fn sample_satisfying_assignment(
    clause: &Clause,
    weights: &WeightAssignment,
    rng: &mut Rng,
) -> Assignment {
    let mut a = Assignment::all_false(weights.len());
    fill_satisfying_assignment(clause, weights, rng, &mut a.values);
    a
}

fn fill_satisfying_assignment(
    clause: &Clause,
    weights: &WeightAssignment,
    rng: &mut Rng,
    values: &mut [bool],
) {
    for (v, &p) in values.iter_mut().zip(weights.probs()) {
        *v = rng.gen::<f64>() < p;
    }
    for lit in clause.literals() {
        values[lit.variable.offset()] = lit.positive;
    }
}

/// Prefix sums of clause probabilities for weighted clause selection.
struct ClauseSelector {
    cumulative: Vec<f64>,
}

impl ClauseSelector {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let u = rng.gen::<f64>() * self.total();
        // First index whose cumulative mass exceeds u; zero-probability
        // clauses have an empty interval and are never chosen.
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1)
    }
}

/// Runs the KLM loop for τ trials.
///
/// Each trial checks the current sample against a uniformly chosen clause;
/// a hit increments N and discards the sample, and the next sample is drawn
/// from a clause chosen with probability p(C_i)/Σ p(C_j).
pub fn klm_estimate(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    params: &KlmParams,
) -> Result<KlmResult, KlmError> {
    params.validate()?;
    let m = formula.num_clauses();
    if m == 0 {
        return Err(KlmError::NoClauses);
    }
    if weights.len() != formula.num_vars() {
        return Err(KlmError::WeightLength {
            expected: formula.num_vars(),
            found: weights.len(),
        });
    }
    let clause_probs: Vec<f64> = formula.clauses().iter().map(|c| c.probability(weights)).collect();
    let selector = ClauseSelector::new(&clause_probs);
    let sum = selector.total();
    if sum <= 0.0 {
        return Err(KlmError::ZeroSum);
    }

    let trials = compute_trials(params.epsilon, params.delta, m);
    let mut rng = rng::rng_from_seed(params.seed);
    let mut values = vec![false; formula.num_vars()];
    let mut have_sample = false;
    let mut hits = 0u64;
    let clauses = formula.clauses();

    for _ in 0..trials {
        if !have_sample {
            let source = selector.sample(&mut rng);
            fill_satisfying_assignment(&clauses[source], weights, &mut rng, &mut values);
            have_sample = true;
        }
        let k = rng.gen_range(0..m);
        let satisfied = clauses[k]
            .literals()
            .iter()
            .all(|l| values[l.variable.offset()] == l.positive);
        if satisfied {
            hits += 1;
            have_sample = false;
        }
    }

    if hits == 0 {
        return Err(KlmError::ZeroHits { trials });
    }
    Ok(KlmResult {
        estimate: trials as f64 * sum / (m as f64 * hits as f64),
        trials,
        hits,
        sum_clause_probs: sum,
    })
}

/// Like [`klm_estimate`], but maps the all-zero case to an exact count of 0.
pub fn klm_count(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    params: &KlmParams,
) -> Result<f64, KlmError> {
    match klm_estimate(formula, weights, params) {
        Ok(r) => Ok(r.estimate),
        Err(KlmError::ZeroSum) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// σ = ln(1+ε)/Φ⁻¹(1−δ/2): the half-width of the log-space bound measured in
/// standard deviations of the two-sided (1−δ) interval.
pub fn label_sigma(epsilon: f64, delta: f64) -> f64 {
    (1.0 + epsilon).ln() / inverse_normal_cdf(1.0 - delta / 2.0)
}

pub fn fit_gaussian_label(result: &KlmResult, params: &KlmParams) -> Result<GaussianLabel, KlmError> {
    params.validate()?;
    if !(result.estimate > 0.0) {
        return Err(KlmError::NonPositiveEstimate(result.estimate));
    }
    Ok(GaussianLabel {
        mean: result.estimate.ln(),
        sigma: label_sigma(params.epsilon, params.delta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psi() -> DnfFormula {
        DnfFormula::from_dimacs(2, &[&[1, 2], &[-1, -2]]).unwrap()
    }

    #[test]
    fn trial_counts() {
        assert_eq!(compute_trials(0.1, 0.05, 4), 12985);
        assert_eq!(compute_trials(0.1, 0.05, 8), 25970);
        let delta = 2.0 / std::f64::consts::E.powi(2);
        assert_eq!(compute_trials(1.0, delta, 1), 32);
    }

    #[test]
    fn trial_count_monotonicity() {
        let mut prev = u64::MAX;
        for eps in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let t = compute_trials(eps, 0.05, 10);
            assert!(t < prev);
            prev = t;
        }
        let mut prev = 0;
        for delta in [0.5, 0.2, 0.1, 0.01, 0.001] {
            let t = compute_trials(0.1, delta, 10);
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn forced_samples() {
        let mut rng = rng::rng_from_seed(1);
        let f = DnfFormula::from_dimacs(2, &[&[1, -2], &[1]]).unwrap();
        let half = WeightAssignment::uniform(2, 0.5).unwrap();
        for _ in 0..100 {
            let a = sample_satisfying_assignment(&f.clauses()[0], &half, &mut rng);
            assert_eq!(a.values, vec![true, false]);
        }
        let w = WeightAssignment::new(vec![0.5, 0.0]).unwrap();
        for _ in 0..100 {
            let a = sample_satisfying_assignment(&f.clauses()[1], &w, &mut rng);
            assert_eq!(a.values, vec![true, false]);
        }
    }

    #[test]
    fn free_variable_frequency() {
        let mut rng = rng::rng_from_seed(2);
        let f = DnfFormula::from_dimacs(2, &[&[1]]).unwrap();
        let half = WeightAssignment::uniform(2, 0.5).unwrap();
        let n = 10_000;
        let mut ones = 0;
        for _ in 0..n {
            let a = sample_satisfying_assignment(&f.clauses()[0], &half, &mut rng);
            assert!(a.values[0]);
            ones += usize::from(a.values[1]);
        }
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.05, "{freq}");
    }

    #[test]
    fn single_clause_is_exact() {
        let f = DnfFormula::from_dimacs(3, &[&[1, -3]]).unwrap();
        let w = WeightAssignment::new(vec![0.3, 0.5, 0.6]).unwrap();
        let r = klm_estimate(&f, &w, &KlmParams::new(0.1, 0.05, 9).unwrap()).unwrap();
        assert_eq!(r.hits, r.trials);
        assert!((r.estimate - 0.3 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn psi_coverage() {
        let f = psi();
        let w = WeightAssignment::uniform(2, 0.5).unwrap();
        let inside = (0..200)
            .filter(|&s| {
                let r = klm_estimate(&f, &w, &KlmParams::new(0.1, 0.05, s).unwrap()).unwrap();
                (0.45..=0.55).contains(&r.estimate)
            })
            .count();
        assert!(inside >= 190, "{inside}/200");
    }

    #[test]
    fn zero_sum_maps_to_zero() {
        let f = DnfFormula::from_dimacs(2, &[&[1, 2], &[-1]]).unwrap();
        let w = WeightAssignment::new(vec![1.0, 0.0]).unwrap();
        let p = KlmParams::new(0.1, 0.05, 0).unwrap();
        assert_eq!(klm_estimate(&f, &w, &p), Err(KlmError::ZeroSum));
        assert_eq!(klm_count(&f, &w, &p), Ok(0.0));
    }

    #[test]
    fn zero_probability_clauses_are_never_sources() {
        // Second clause impossible; the estimate must still be exact-ish.
        let f = DnfFormula::from_dimacs(2, &[&[1], &[2]]).unwrap();
        let w = WeightAssignment::new(vec![0.4, 0.0]).unwrap();
        let r = klm_estimate(&f, &w, &KlmParams::new(0.1, 0.05, 3).unwrap()).unwrap();
        assert!((r.estimate - 0.4).abs() < 0.04, "{}", r.estimate);
    }

    #[test]
    fn deterministic_given_seed() {
        let f = psi();
        let w = WeightAssignment::new(vec![0.3, 0.8]).unwrap();
        let p = KlmParams::new(0.2, 0.1, 77).unwrap();
        assert_eq!(klm_estimate(&f, &w, &p), klm_estimate(&f, &w, &p));
    }

    #[test]
    fn rejects_bad_params() {
        assert_eq!(KlmParams::new(0.0, 0.1, 0), Err(KlmError::InvalidEpsilon(0.0)));
        assert_eq!(KlmParams::new(0.1, 1.0, 0), Err(KlmError::InvalidDelta(1.0)));
        let empty = DnfFormula::new(2, vec![]).unwrap();
        let w = WeightAssignment::uniform(2, 0.5).unwrap();
        let p = KlmParams::new(0.1, 0.05, 0).unwrap();
        assert_eq!(klm_estimate(&empty, &w, &p), Err(KlmError::NoClauses));
    }

    #[test]
    fn gaussian_label_examples() {
        let p = KlmParams::new(0.1, 0.05, 0).unwrap();
        let r = |estimate| KlmResult {
            estimate,
            trials: 10,
            hits: 5,
            sum_clause_probs: 1.0,
        };
        let one = fit_gaussian_label(&r(1.0), &p).unwrap();
        assert_eq!(one.mean, 0.0);
        assert!((one.sigma - 0.048_628_5).abs() < 1e-6, "{}", one.sigma);
        let half = fit_gaussian_label(&r(0.5), &p).unwrap();
        assert!((half.mean + std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(
            fit_gaussian_label(&r(0.0), &p),
            Err(KlmError::NonPositiveEstimate(0.0))
        );
    }
}
