//! Weighted DNF formulas: representation, semantics and the `wdnf` text format.
//!
//! A `wdnf` file looks like a DIMACS CNF file with a different problem tag and
//! one weight line per variable:
//!
//! ```text
//! c psi from the message passing figure
//! p wdnf 2 2
//! 1 2 0
//! -1 -2 0
//! w 1 0.5
//! w 2 0.5
//! ```
//!
//! Clause lines are conjunctions here, not disjunctions. Weight lines give the
//! probability that the variable is true.

use std::fmt::{self, Write as _};
use std::io::{self, BufRead};

use thiserror::Error;

/// 1-based propositional variable index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId(u32);

impl VariableId {
    pub fn new(index: u32) -> Option<Self> {
        (index >= 1).then_some(Self(index))
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based position, for indexing weight and assignment vectors.
    pub fn offset(self) -> usize {
        self.0 as usize - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub variable: VariableId,
    pub positive: bool,
}

impl Literal {
    pub fn new(variable: VariableId, positive: bool) -> Self {
        Self { variable, positive }
    }

    /// Builds a literal from its DIMACS integer form (`-3` is `¬x3`).
    pub fn from_dimacs(value: i64) -> Option<Self> {
        let index = u32::try_from(value.unsigned_abs()).ok()?;
        VariableId::new(index).map(|v| Self::new(v, value > 0))
    }

    pub fn to_dimacs(self) -> i64 {
        let i = i64::from(self.variable.index());
        if self.positive {
            i
        } else {
            -i
        }
    }

    pub fn negated(self) -> Self {
        Self::new(self.variable, !self.positive)
    }

    pub fn is_satisfied_by(self, assignment: &Assignment) -> bool {
        assignment.values[self.variable.offset()] == self.positive
    }

    /// Probability that this literal holds under independent weights.
    pub fn probability(self, weights: &WeightAssignment) -> f64 {
        let p = weights.probs[self.variable.offset()];
        if self.positive {
            p
        } else {
            1.0 - p
        }
    }
}

/// A conjunction of literals over distinct variables, kept sorted by variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clause {
    literals: Vec<Literal>,
}

impl Clause {
    /// Sorts the literals by variable and rejects empty or repeated-variable input.
    pub fn new(mut literals: Vec<Literal>) -> Result<Self, FormulaError> {
        if literals.is_empty() {
            return Err(FormulaError::EmptyClause);
        }
        literals.sort_by_key(|l| l.variable);
        if let Some(w) = literals.windows(2).find(|w| w[0].variable == w[1].variable) {
            return Err(FormulaError::DuplicateVariable(w[0].variable.index()));
        }
        Ok(Self { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn width(&self) -> usize {
        self.literals.len()
    }

    pub fn is_satisfied_by(&self, assignment: &Assignment) -> bool {
        self.literals.iter().all(|l| l.is_satisfied_by(assignment))
    }

    /// Probability that a random assignment drawn from `weights` satisfies the clause.
    pub fn probability(&self, weights: &WeightAssignment) -> f64 {
        self.literals.iter().map(|l| l.probability(weights)).product()
    }

    /// The same clause with every literal negated.
    pub fn negated(&self) -> Self {
        Self {
            literals: self.literals.iter().map(|l| l.negated()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DnfFormula {
    num_vars: usize,
    clauses: Vec<Clause>,
}

impl DnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self, FormulaError> {
        for clause in &clauses {
            for lit in clause.literals() {
                if lit.variable.offset() >= num_vars {
                    return Err(FormulaError::VariableOutOfRange {
                        variable: lit.variable.index(),
                        num_vars,
                    });
                }
            }
        }
        Ok(Self { num_vars, clauses })
    }

    /// Convenience constructor from DIMACS-style integer clauses.
    pub fn from_dimacs(num_vars: usize, clauses: &[&[i64]]) -> Result<Self, FormulaError> {
        let clauses = clauses
            .iter()
            .map(|c| {
                let lits = c
                    .iter()
                    .map(|&v| Literal::from_dimacs(v).ok_or(FormulaError::ZeroLiteral))
                    .collect::<Result<Vec<_>, _>>()?;
                Clause::new(lits)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(num_vars, clauses)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Returns a copy with one more clause; used by monotonicity checks.
    pub fn with_clause(&self, clause: Clause) -> Result<Self, FormulaError> {
        let mut clauses = self.clauses.clone();
        clauses.push(clause);
        Self::new(self.num_vars, clauses)
    }

    pub fn evaluate(&self, assignment: &Assignment) -> Result<bool, FormulaError> {
        if assignment.len() != self.num_vars {
            return Err(FormulaError::AssignmentLength {
                expected: self.num_vars,
                found: assignment.len(),
            });
        }
        Ok(self.clauses.iter().any(|c| c.is_satisfied_by(assignment)))
    }

    pub fn width_stats(&self) -> Option<WidthStats> {
        if self.clauses.is_empty() {
            return None;
        }
        let total: usize = self.clauses.iter().map(Clause::width).sum();
        let max = self.clauses.iter().map(Clause::width).max().unwrap_or(0);
        Some(WidthStats {
            mean: total as f64 / self.clauses.len() as f64,
            max,
            slots: total,
        })
    }

    /// Σ clause widths; the number of literal-conjunction edges in the graph encoding.
    pub fn total_slots(&self) -> usize {
        self.clauses.iter().map(Clause::width).sum()
    }
}

/// Clause width summary; `slots` is the total number of literal occurrences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthStats {
    pub mean: f64,
    pub max: usize,
    pub slots: usize,
}

/// Independent per-variable probabilities of the positive literal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    probs: Vec<f64>,
}

impl WeightAssignment {
    pub fn new(probs: Vec<f64>) -> Result<Self, FormulaError> {
        if let Some((i, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(FormulaError::ProbabilityOutOfRange {
                variable: i as u32 + 1,
                value: p,
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_vars: usize, p: f64) -> Result<Self, FormulaError> {
        Self::new(vec![p; num_vars])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, var: VariableId) -> f64 {
        self.probs[var.offset()]
    }

    pub fn complemented(&self) -> Self {
        Self {
            probs: self.probs.iter().map(|p| 1.0 - p).collect(),
        }
    }
}

/// A total truth assignment; `values[i]` is the value of variable `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub values: Vec<bool>,
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn all_false(n: usize) -> Self {
        Self {
            values: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(values: Vec<bool>) -> Self {
        Self { values }
    }
}

pub fn clause_probability(clause: &Clause, weights: &WeightAssignment) -> f64 {
    clause.probability(weights)
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("clause has no literals")]
    EmptyClause,
    #[error("variable {0} appears twice in one clause")]
    DuplicateVariable(u32),
    #[error("literal 0 is not a variable")]
    ZeroLiteral,
    #[error("variable {variable} is out of range for {num_vars} variables")]
    VariableOutOfRange { variable: u32, num_vars: usize },
    #[error("probability {value} of variable {variable} is outside [0, 1]")]
    ProbabilityOutOfRange { variable: u32, value: f64 },
    #[error("assignment has {found} values, formula has {expected} variables")]
    AssignmentLength { expected: usize, found: usize },
    #[error("formula has no clauses")]
    NoClauses,
    #[error("weight vector has {found} entries, formula has {expected} variables")]
    WeightLength { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: FormulaError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ParseError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        Self::Syntax {
            line,
            message: message.into(),
        }
    }

    fn invalid(line: usize, source: FormulaError) -> Self {
        Self::Invalid { line, source }
    }
}

/// Parses a `wdnf` document from a string.
pub fn parse_formula(text: &str) -> Result<(DnfFormula, WeightAssignment), ParseError> {
    read_formula(text.as_bytes())
}

/// Parses a `wdnf` document from a buffered reader.
pub fn read_formula<R: BufRead>(reader: R) -> Result<(DnfFormula, WeightAssignment), ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut pending: Vec<Literal> = Vec::new();
    let mut pending_line = 0;
    let mut weights: Vec<Option<f64>> = Vec::new();
    let mut last_line = 0;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(ParseError::syntax(line_no, "duplicate header"));
            }
            let _ = tokens.next();
            if tokens.next() != Some("wdnf") {
                return Err(ParseError::syntax(line_no, "expected `p wdnf <n> <m>`"));
            }
            let n = parse_count(tokens.next(), line_no, "variable count")?;
            let m = parse_count(tokens.next(), line_no, "clause count")?;
            if tokens.next().is_some() {
                return Err(ParseError::syntax(line_no, "trailing tokens after header"));
            }
            header = Some((n, m));
            weights = vec![None; n];
            continue;
        }
        let Some((n, _)) = header else {
            return Err(ParseError::syntax(line_no, "statement before `p wdnf` header"));
        };
        if trimmed.starts_with('w') {
            let _ = tokens.next();
            let var = tokens
                .next()
                .and_then(|t| t.parse::<u32>().ok())
                .ok_or_else(|| ParseError::syntax(line_no, "expected `w <k> <p>`"))?;
            let p = tokens
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| ParseError::syntax(line_no, "expected probability"))?;
            if tokens.next().is_some() {
                return Err(ParseError::syntax(line_no, "trailing tokens after weight"));
            }
            if var == 0 || var as usize > n {
                return Err(ParseError::invalid(
                    line_no,
                    FormulaError::VariableOutOfRange {
                        variable: var,
                        num_vars: n,
                    },
                ));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(ParseError::invalid(
                    line_no,
                    FormulaError::ProbabilityOutOfRange {
                        variable: var,
                        value: p,
                    },
                ));
            }
            let slot = &mut weights[var as usize - 1];
            if slot.is_some() {
                return Err(ParseError::syntax(
                    line_no,
                    format!("duplicate weight for variable {var}"),
                ));
            }
            *slot = Some(p);
            continue;
        }
        // Clause line; a clause may span lines until its terminating 0.
        if pending.is_empty() {
            pending_line = line_no;
        }
        for token in tokens {
            let value: i64 = token
                .parse()
                .map_err(|_| ParseError::syntax(line_no, format!("bad literal `{token}`")))?;
            if value == 0 {
                let lits = std::mem::take(&mut pending);
                let clause = Clause::new(lits).map_err(|e| ParseError::invalid(pending_line, e))?;
                if let Some(l) = clause.literals().iter().find(|l| l.variable.offset() >= n) {
                    return Err(ParseError::invalid(
                        pending_line,
                        FormulaError::VariableOutOfRange {
                            variable: l.variable.index(),
                            num_vars: n,
                        },
                    ));
                }
                clauses.push(clause);
                pending_line = line_no;
            } else {
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.push(Literal::from_dimacs(value).ok_or_else(|| {
                    ParseError::syntax(line_no, format!("literal `{token}` out of range"))
                })?);
            }
        }
    }

    let Some((n, m)) = header else {
        return Err(ParseError::syntax(last_line.max(1), "missing `p wdnf` header"));
    };
    if !pending.is_empty() {
        return Err(ParseError::syntax(pending_line, "clause not terminated by 0"));
    }
    if clauses.len() != m {
        return Err(ParseError::syntax(
            last_line.max(1),
            format!("header declares {m} clauses, found {}", clauses.len()),
        ));
    }
    let probs = weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            w.ok_or_else(|| {
                ParseError::syntax(last_line.max(1), format!("missing weight for variable {}", i + 1))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let formula =
        DnfFormula::new(n, clauses).map_err(|e| ParseError::invalid(last_line.max(1), e))?;
    let weights =
        WeightAssignment::new(probs).map_err(|e| ParseError::invalid(last_line.max(1), e))?;
    Ok((formula, weights))
}

fn parse_count(token: Option<&str>, line: usize, what: &str) -> Result<usize, ParseError> {
    token
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| ParseError::syntax(line, format!("expected {what}")))
}

/// Renders a formula and its weights as a `wdnf` document.
///
/// Probabilities use Rust's shortest round-tripping decimal form, so parsing
/// the output recovers bit-identical weights.
pub fn serialize_formula(
    formula: &DnfFormula,
    weights: &WeightAssignment,
) -> Result<String, FormulaError> {
    if formula.num_clauses() == 0 {
        return Err(FormulaError::NoClauses);
    }
    if weights.len() != formula.num_vars() {
        return Err(FormulaError::WeightLength {
            expected: formula.num_vars(),
            found: weights.len(),
        });
    }
    let mut out = String::with_capacity(16 * (formula.total_slots() + formula.num_vars()));
    writeln!(out, "p wdnf {} {}", formula.num_vars(), formula.num_clauses()).unwrap();
    for clause in formula.clauses() {
        for lit in clause.literals() {
            write!(out, "{} ", lit.to_dimacs()).unwrap();
        }
        out.push_str("0\n");
    }
    for (i, p) in weights.probs().iter().enumerate() {
        writeln!(out, "w {} {}", i + 1, p).unwrap();
    }
    Ok(out)
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "x{}", self.variable.index())
        } else {
            write!(f, "¬x{}", self.variable.index())
        }
    }
}
