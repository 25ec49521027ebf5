//! Three-layer graph encoding of a DNF formula.
//!
//! Literal nodes come in pairs: variable `v` (1-based) owns node `2(v−1)` for
//! its positive literal and `2(v−1)+1` for the negative one, so a node's
//! negation partner is `i ^ 1`. Conjunction nodes follow clause order and a
//! single disjunction node connects to all of them.

use std::rc::Rc;

use crate::formula::{DnfFormula, Literal, WeightAssignment};

#[derive(Debug, Clone, PartialEq)]
pub struct DnfGraph {
    pub num_vars: usize,
    pub num_clauses: usize,
    /// Literal node of each literal-conjunction edge.
    pub edge_literal: Vec<usize>,
    /// Conjunction node of each literal-conjunction edge.
    pub edge_conjunction: Vec<usize>,
}

pub fn literal_node(lit: Literal) -> usize {
    2 * lit.variable.offset() + usize::from(!lit.positive)
}

impl DnfGraph {
    pub fn num_literal_nodes(&self) -> usize {
        2 * self.num_vars
    }

    pub fn num_edges(&self) -> usize {
        self.edge_literal.len()
    }

    /// Partner index for every literal node.
    pub fn negation_pairs(&self) -> Vec<usize> {
        (0..self.num_literal_nodes()).map(|i| i ^ 1).collect()
    }

    /// Per-iteration message tally: both directions of every
    /// literal-conjunction edge, both directions of every negation pair, and
    /// both directions of every conjunction-disjunction edge.
    pub fn expected_messages_per_iteration(&self) -> usize {
        2 * self.num_edges() + 2 * self.num_vars + 2 * self.num_clauses
    }

    /// Input feature per literal node: the probability that the literal holds.
    pub fn literal_features(&self, weights: &WeightAssignment) -> Vec<f64> {
        assert_eq!(weights.len(), self.num_vars);
        weights.probs().iter().flat_map(|&p| [p, 1.0 - p]).collect()
    }

    pub(crate) fn routing(&self) -> Routing {
        Routing {
            edge_literal: Rc::from(self.edge_literal.as_slice()),
            edge_conjunction: Rc::from(self.edge_conjunction.as_slice()),
            negation: Rc::from(self.negation_pairs()),
        }
    }
}

/// Shared index arrays used by gather/scatter during message passing.
pub(crate) struct Routing {
    pub edge_literal: Rc<[usize]>,
    pub edge_conjunction: Rc<[usize]>,
    pub negation: Rc<[usize]>,
}

pub fn encode_graph(formula: &DnfFormula) -> DnfGraph {
    let edges = formula.total_slots();
    let mut edge_literal = Vec::with_capacity(edges);
    let mut edge_conjunction = Vec::with_capacity(edges);
    for (ci, clause) in formula.clauses().iter().enumerate() {
        for &lit in clause.literals() {
            edge_literal.push(literal_node(lit));
            edge_conjunction.push(ci);
        }
    }
    DnfGraph {
        num_vars: formula.num_vars(),
        num_clauses: formula.num_clauses(),
        edge_literal,
        edge_conjunction,
    }
}
