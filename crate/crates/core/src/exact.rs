//! Exact weighted model counts for small formulas.
//!
//! Two independent routes: full enumeration of assignments (bounded by the
//! number of variables) and inclusion-exclusion over clause subsets (bounded
//! by the number of clauses). Where both apply they must agree.

use thiserror::Error;

use crate::formula::{DnfFormula, Literal, WeightAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactLimit {
    pub max_vars_enum: usize,
    pub max_clauses_ie: usize,
}

impl Default for ExactLimit {
    fn default() -> Self {
        Self {
            max_vars_enum: 25,
            max_clauses_ie: 22,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("{found} variables exceeds the enumeration limit of {limit}")]
    TooManyVariables { found: usize, limit: usize },
    #[error("{found} clauses exceeds the inclusion-exclusion limit of {limit}")]
    TooManyClauses { found: usize, limit: usize },
    #[error("weights cover {found} variables, formula has {expected}")]
    WeightLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExactMethod {
    #[default]
    Enumeration,
    InclusionExclusion,
}

pub fn exact_wmc(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    method: ExactMethod,
    limit: ExactLimit,
) -> Result<f64, ExactError> {
    match method {
        ExactMethod::Enumeration => exact_wmc_enumeration_with(formula, weights, limit),
        ExactMethod::InclusionExclusion => exact_wmc_inclusion_exclusion_with(formula, weights, limit),
    }
}

pub fn exact_wmc_enumeration(
    formula: &DnfFormula,
    weights: &WeightAssignment,
) -> Result<f64, ExactError> {
    exact_wmc_enumeration_with(formula, weights, ExactLimit::default())
}

pub fn exact_wmc_inclusion_exclusion(
    formula: &DnfFormula,
    weights: &WeightAssignment,
) -> Result<f64, ExactError> {
    exact_wmc_inclusion_exclusion_with(formula, weights, ExactLimit::default())
}

fn check_weights(formula: &DnfFormula, weights: &WeightAssignment) -> Result<(), ExactError> {
    if weights.len() != formula.num_vars() {
        return Err(ExactError::WeightLength {
            expected: formula.num_vars(),
            found: weights.len(),
        });
    }
    Ok(())
}

// Recompute the running weight from scratch this often to stop drift from
// repeated multiply/divide updates.
const RESYNC_PERIOD: u64 = 1 << 12;

/// Sums the weight of every satisfying assignment, visiting assignments in
/// Gray-code order so each step flips one variable.
pub fn exact_wmc_enumeration_with(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    limit: ExactLimit,
) -> Result<f64, ExactError> {
    let n = formula.num_vars();
    if n > limit.max_vars_enum {
        return Err(ExactError::TooManyVariables {
            found: n,
            limit: limit.max_vars_enum,
        });
    }
    check_weights(formula, weights)?;
    if formula.num_clauses() == 0 {
        return Ok(0.0);
    }

    // occurrences[v] = (clause, polarity) pairs
    let mut occurrences: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for (ci, clause) in formula.clauses().iter().enumerate() {
        for lit in clause.literals() {
            occurrences[lit.variable.offset()].push((ci, lit.positive));
        }
    }
    let widths: Vec<usize> = formula.clauses().iter().map(|c| c.width()).collect();
    let probs = weights.probs();

    let mut values = vec![false; n];
    // Literals satisfied per clause under the current assignment.
    let mut sat_lits: Vec<usize> = formula
        .clauses()
        .iter()
        .map(|c| c.literals().iter().filter(|l| !l.positive).count())
        .collect();
    let mut sat_clauses = sat_lits.iter().zip(&widths).filter(|(s, w)| s == w).count();

    let factor = |v: usize, val: bool| if val { probs[v] } else { 1.0 - probs[v] };
    let resync = |values: &[bool]| {
        let mut zeros = 0usize;
        let mut prod = 1.0f64;
        for (v, &val) in values.iter().enumerate() {
            let f = factor(v, val);
            if f == 0.0 {
                zeros += 1;
            } else {
                prod *= f;
            }
        }
        (zeros, prod)
    };
    let (mut zero_factors, mut product) = resync(&values);

    let mut total = 0.0f64;
    let steps: u64 = 1u64 << n;
    for step in 0..steps {
        if step > 0 {
            let v = step.trailing_zeros() as usize;
            let old = values[v];
            let new = !old;
            values[v] = new;
            for &(ci, positive) in &occurrences[v] {
                let before = sat_lits[ci] == widths[ci];
                if positive == new {
                    sat_lits[ci] += 1;
                } else {
                    sat_lits[ci] -= 1;
                }
                let after = sat_lits[ci] == widths[ci];
                match (before, after) {
                    (false, true) => sat_clauses += 1,
                    (true, false) => sat_clauses -= 1,
                    _ => {}
                }
            }
            if step % RESYNC_PERIOD == 0 {
                (zero_factors, product) = resync(&values);
            } else {
                let f_old = factor(v, old);
                let f_new = factor(v, new);
                if f_old == 0.0 {
                    zero_factors -= 1;
                } else {
                    product /= f_old;
                }
                if f_new == 0.0 {
                    zero_factors += 1;
                } else {
                    product *= f_new;
                }
            }
        }
        if sat_clauses > 0 && zero_factors == 0 {
            total += product;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Σ over nonempty clause subsets S of (−1)^{|S|+1} · P(∧S).
///
/// Subsets are explored depth-first; each level merges the next clause's
/// sorted literals into the running conjunction and prunes on conflict, since
/// every superset of a conflicting conjunction also has probability zero.
pub fn exact_wmc_inclusion_exclusion_with(
    formula: &DnfFormula,
    weights: &WeightAssignment,
    limit: ExactLimit,
) -> Result<f64, ExactError> {
    let m = formula.num_clauses();
    if m > limit.max_clauses_ie {
        return Err(ExactError::TooManyClauses {
            found: m,
            limit: limit.max_clauses_ie,
        });
    }
    check_weights(formula, weights)?;
    let clauses: Vec<&[Literal]> = formula.clauses().iter().map(|c| c.literals()).collect();
    let mut total = 0.0;
    for start in 0..m {
        let merged = clauses[start].to_vec();
        subset_sum(&clauses, weights, start, &merged, 1, &mut total);
    }
    Ok(total)
}

fn subset_sum(
    clauses: &[&[Literal]],
    weights: &WeightAssignment,
    last: usize,
    merged: &[Literal],
    size: usize,
    total: &mut f64,
) {
    let p: f64 = merged.iter().map(|l| l.probability(weights)).product();
    if size % 2 == 1 {
        *total += p;
    } else {
        *total -= p;
    }
    for next in last + 1..clauses.len() {
        if let Some(joined) = merge_conjunction(merged, clauses[next]) {
            subset_sum(clauses, weights, next, &joined, size + 1, total);
        }
    }
}

/// Merges two variable-sorted literal lists; `None` when they conflict.
pub(crate) fn merge_conjunction(a: &[Literal], b: &[Literal]) -> Option<Vec<Literal>> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        match x.variable.cmp(&y.variable) {
            std::cmp::Ordering::Less => {
                out.push(x);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(y);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                if x.positive != y.positive {
                    return None;
                }
                out.push(x);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some(out)
}
