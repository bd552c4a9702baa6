//! Ternary-tree fermion-to-qubit mapping.
//!
//! Every internal node of a ternary tree carries one qubit, labelled
//! breadth-first from the root. A root-to-leaf path picks `X`, `Y` or `Z` on
//! each qubit it passes through according to the branch taken, which makes
//! the operators of any two distinct paths anticommute. A tree with `2n + 1`
//! leaves yields `2n + 1` such operators whose product is a pure phase; one
//! of them (the all-`Z` path) is dropped and the remaining `2n` represent
//! the Majorana operators.
//!
//! When `2n + 1` is not a power of three the mapping starts from the
//! complete tree of height `h` with `3^h < 2n + 1` and attaches one extra
//! qubit to each of the leftmost `n - (3^h - 1)/2` leaves, splitting that
//! leaf's path into three.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Letter, PauliString};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("level {level} is out of range for a path of length {len}")]
    LevelOutOfRange { level: usize, len: usize },
    #[error("branch choice {0} is not in 0..3")]
    BadStep(u8),
    #[error("path {0} does not end on a leaf of this tree")]
    NotALeaf(TreePath),
    #[error("the number of modes must be at least 1")]
    NoModes,
}

/// Sequence of branch choices from the root, each in `{0, 1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreePath(Vec<u8>);

impl TreePath {
    pub fn new(steps: Vec<u8>) -> Result<Self, TreeError> {
        if let Some(&bad) = steps.iter().find(|&&s| s > 2) {
            return Err(TreeError::BadStep(bad));
        }
        Ok(Self(steps))
    }

    pub fn steps(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The all-2 path of the given length.
    pub fn rightmost(len: usize) -> Self {
        Self(vec![2; len])
    }

    fn child(&self, step: u8) -> Self {
        let mut steps = self.0.clone();
        steps.push(step);
        Self(steps)
    }

    /// Breadth-first label of the node reached after `level` steps.
    ///
    /// `(3^level - 1)/2` nodes sit above that depth; the steps taken so far,
    /// read as a base-3 number, give the offset within the level.
    pub fn node_index(&self, level: usize) -> Result<usize, TreeError> {
        if level > self.len() {
            return Err(TreeError::LevelOutOfRange { level, len: self.len() });
        }
        let above = (3usize.pow(level as u32) - 1) / 2;
        let offset = self.0[..level].iter().fold(0usize, |acc, &s| acc * 3 + s as usize);
        Ok(above + offset)
    }

    /// Path operator on a complete tree whose height equals the path length.
    pub fn complete_operator(&self) -> PauliString {
        PauliString::from_letters(self.0.iter().enumerate().map(|(level, &step)| {
            // level < len, so node_index cannot fail
            (self.node_index(level).unwrap(), Letter::from_branch(step).unwrap())
        }))
    }
}

impl fmt::Display for TreePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

/// Largest `h` with `3^h <= 2n + 1`.
pub fn base_height(n_modes: usize) -> usize {
    let target = 2 * n_modes + 1;
    let mut h = 0;
    let mut p = 1usize;
    while p * 3 <= target {
        p *= 3;
        h += 1;
    }
    h
}

/// `ceil(log3(2n + 1))`, computed in integers.
pub fn optimal_max_weight(n_modes: usize) -> usize {
    let target = 2 * n_modes + 1;
    let mut h = 0;
    let mut p = 1usize;
    while p < target {
        p *= 3;
        h += 1;
    }
    h
}

/// Average-weight lower bound `log3(2n)` for any fermion-to-qubit mapping.
pub fn weight_lower_bound(n_modes: usize) -> f64 {
    (2.0 * n_modes as f64).ln() / 3f64.ln()
}

/// Ternary-tree mapping for a fixed number of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryTreeMapping {
    n_modes: usize,
    base_height: usize,
    /// Base-tree leaves carrying an extra qubit, with that qubit's label.
    extended_leaves: Vec<(TreePath, usize)>,
    /// All `2n + 1` leaf paths in lexicographic order.
    paths: Vec<TreePath>,
    path_operators: Vec<PauliString>,
    dropped_path: TreePath,
    majorana_table: Vec<PauliString>,
}

impl TernaryTreeMapping {
    pub fn build(n_modes: usize) -> Result<Self, TreeError> {
        if n_modes == 0 {
            return Err(TreeError::NoModes);
        }
        let h = base_height(n_modes);
        let base_qubits = (3usize.pow(h as u32) - 1) / 2;
        let extensions = n_modes - base_qubits;

        let mut base_leaves: Vec<TreePath> = vec![TreePath(Vec::new())];
        for _ in 0..h {
            base_leaves = base_leaves
                .into_iter()
                .flat_map(|p| (0..3).map(move |s| p.child(s)))
                .collect();
        }

        let extended_leaves: Vec<(TreePath, usize)> = base_leaves
            .iter()
            .take(extensions)
            .enumerate()
            .map(|(i, leaf)| (leaf.clone(), base_qubits + i))
            .collect();

        let mut paths = Vec::with_capacity(2 * n_modes + 1);
        let mut path_operators = Vec::with_capacity(2 * n_modes + 1);
        for (i, leaf) in base_leaves.iter().enumerate() {
            let op = leaf.complete_operator();
            if i < extensions {
                let extra = base_qubits + i;
                for (step, letter) in Letter::ALL.into_iter().enumerate() {
                    paths.push(leaf.child(step as u8));
                    path_operators.push(op.multiply(&PauliString::single(extra, letter)));
                }
            } else {
                paths.push(leaf.clone());
                path_operators.push(op);
            }
        }
        debug_assert_eq!(paths.len(), 2 * n_modes + 1);

        let dropped_path = TreePath::rightmost(h);
        let majorana_table = paths
            .iter()
            .zip(&path_operators)
            .filter(|(p, _)| **p != dropped_path)
            .map(|(_, op)| op.clone())
            .collect();

        Ok(Self {
            n_modes,
            base_height: h,
            extended_leaves,
            paths,
            path_operators,
            dropped_path,
            majorana_table,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn num_qubits(&self) -> usize {
        self.n_modes
    }

    pub fn base_height(&self) -> usize {
        self.base_height
    }

    pub fn is_complete(&self) -> bool {
        self.extended_leaves.is_empty()
    }

    pub fn extended_leaves(&self) -> &[(TreePath, usize)] {
        &self.extended_leaves
    }

    pub fn paths(&self) -> &[TreePath] {
        &self.paths
    }

    /// Operators of all `2n + 1` paths, including the dropped one.
    pub fn path_operators(&self) -> &[PauliString] {
        &self.path_operators
    }

    pub fn dropped_path(&self) -> &TreePath {
        &self.dropped_path
    }

    pub fn dropped_operator(&self) -> PauliString {
        self.dropped_path.complete_operator()
    }

    /// `table()[u - 1]` is the image of the Majorana operator with index `u`.
    pub fn table(&self) -> &[PauliString] {
        &self.majorana_table
    }

    /// Majorana operator with 1-based index `u`.
    pub fn majorana(&self, u: usize) -> Option<&PauliString> {
        u.checked_sub(1).and_then(|i| self.majorana_table.get(i))
    }

    /// Operator of a root-to-leaf path of this tree.
    pub fn path_operator(&self, path: &TreePath) -> Result<PauliString, TreeError> {
        self.paths
            .binary_search(path)
            .map(|i| self.path_operators[i].clone())
            .map_err(|_| TreeError::NotALeaf(path.clone()))
    }

    pub fn verify(&self) -> VerificationReport {
        let mut report = verify_operators(&self.majorana_table);
        let product = self
            .path_operators
            .iter()
            .fold(PauliString::identity(), |acc, op| acc.multiply(op));
        report.identity_product = Some(product.is_identity());
        report.path_count_ok = Some(
            self.paths.len() == 2 * self.n_modes + 1
                && self.extended_leaves.len() == self.n_modes - (3usize.pow(self.base_height as u32) - 1) / 2,
        );
        report
    }
}

/// Outcome of checking that a table of operators represents Majorana operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub num_operators: usize,
    pub pairs_checked: usize,
    /// 0-based table positions of pairs that commute.
    pub anticommutation_failures: Vec<(usize, usize)>,
    /// 0-based table positions whose square is not `+1`.
    pub square_failures: Vec<usize>,
    /// Whether the product of every path operator is a pure phase
    /// (only for tree mappings).
    pub identity_product: Option<bool>,
    pub path_count_ok: Option<bool>,
    pub weight_histogram: BTreeMap<usize, usize>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.anticommutation_failures.is_empty()
            && self.square_failures.is_empty()
            && self.identity_product.unwrap_or(true)
            && self.path_count_ok.unwrap_or(true)
    }
}

/// Pairwise anticommutation, involution and weight checks over a table.
pub fn verify_operators(ops: &[PauliString]) -> VerificationReport {
    let anticommutation_failures: Vec<(usize, usize)> = (0..ops.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            ((i + 1)..ops.len())
                .filter(move |&j| !ops[i].anticommutes(&ops[j]))
                .map(move |j| (i, j))
        })
        .collect();
    let square_failures = ops
        .iter()
        .enumerate()
        .filter(|(_, op)| !op.multiply(op).eq(&PauliString::identity()))
        .map(|(i, _)| i)
        .collect();
    let mut weight_histogram = BTreeMap::new();
    for op in ops {
        *weight_histogram.entry(op.weight()).or_insert(0) += 1;
    }
    VerificationReport {
        num_operators: ops.len(),
        pairs_checked: ops.len() * ops.len().saturating_sub(1) / 2,
        anticommutation_failures,
        square_failures,
        identity_product: None,
        path_count_ok: None,
        weight_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(steps: &[u8]) -> TreePath {
        TreePath::new(steps.to_vec()).unwrap()
    }

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn node_index_examples() {
        assert_eq!(path(&[1, 2]).node_index(0), Ok(0));
        assert_eq!(path(&[0, 0]).node_index(1), Ok(1));
        assert_eq!(path(&[2, 2]).node_index(2), Ok(12));
        assert_eq!(
            path(&[0]).node_index(2),
            Err(TreeError::LevelOutOfRange { level: 2, len: 1 })
        );
    }

    #[test]
    fn node_index_matches_breadth_first_enumeration() {
        // enumerate the 13-node tree of height 2 level by level
        let mut label = 0;
        let mut frontier = vec![TreePath(vec![])];
        for depth in 0..=2 {
            for node in &frontier {
                assert_eq!(node.node_index(depth).unwrap(), label);
                label += 1;
            }
            frontier = frontier.iter().flat_map(|n| (0..3).map(|s| n.child(s))).collect();
        }
        assert_eq!(label, 13);
    }

    #[test]
    fn bad_step_rejected() {
        assert_eq!(TreePath::new(vec![0, 3]), Err(TreeError::BadStep(3)));
    }

    #[test]
    fn path_operator_examples() {
        let m4 = TernaryTreeMapping::build(4).unwrap();
        assert_eq!(m4.path_operator(&path(&[0, 0])).unwrap(), p("X0 X1"));
        assert_eq!(m4.path_operator(&path(&[1, 0])).unwrap(), p("Y0 X2"));
        assert!(m4.path_operator(&path(&[1, 0])).unwrap().anticommutes(&p("X0 X1")));
        assert!(m4.path_operator(&path(&[1])).is_err());
        let m1 = TernaryTreeMapping::build(1).unwrap();
        assert_eq!(m1.path_operator(&path(&[2])).unwrap(), p("Z0"));
    }

    #[test]
    fn single_mode() {
        let m = TernaryTreeMapping::build(1).unwrap();
        assert_eq!(m.table(), &[p("X0"), p("Y0")]);
        assert_eq!(m.dropped_path(), &path(&[2]));
        assert_eq!(m.dropped_operator(), p("Z0"));
    }

    #[test]
    fn two_modes_extend_leftmost_leaf() {
        let m = TernaryTreeMapping::build(2).unwrap();
        assert_eq!(m.table(), &[p("X0 X1"), p("X0 Y1"), p("X0 Z1"), p("Y0")]);
        assert_eq!(m.extended_leaves(), &[(path(&[0]), 1)]);
        let mut weights: Vec<_> = m.table().iter().map(|o| o.weight()).collect();
        weights.sort();
        assert_eq!(weights, vec![1, 2, 2, 2]);
    }

    #[test]
    fn complete_trees_have_uniform_weight() {
        let m = TernaryTreeMapping::build(4).unwrap();
        let r = m.verify();
        assert!(r.passed());
        assert_eq!(r.weight_histogram, BTreeMap::from([(2, 8)]));
        let r13 = TernaryTreeMapping::build(13).unwrap().verify();
        assert!(r13.passed());
        assert_eq!(r13.weight_histogram, BTreeMap::from([(3, 26)]));
    }

    #[test]
    fn corrupted_table_fails() {
        let m = TernaryTreeMapping::build(4).unwrap();
        let mut table = m.table().to_vec();
        // swap the letter on qubit 1 of the first operator: X0 X1 -> X0 Y1
        table[0] = p("X0 Y1");
        let r = verify_operators(&table);
        assert!(!r.passed());
        assert!(r.anticommutation_failures.contains(&(0, 1)));
    }

    #[test]
    fn lower_bound_values() {
        assert!((weight_lower_bound(1) - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert!((weight_lower_bound(4) - 1.892_789_260_714_372).abs() < 1e-12);
        assert!((weight_lower_bound(13) - 2.965_647_273_044_25).abs() < 1e-12);
        assert_eq!(optimal_max_weight(13), 3);
    }

    #[test]
    fn heights() {
        assert_eq!(base_height(1), 1);
        assert_eq!(base_height(2), 1);
        assert_eq!(base_height(4), 2);
        assert_eq!(base_height(12), 2);
        assert_eq!(base_height(13), 3);
        assert_eq!(optimal_max_weight(12), 3);
        assert_eq!(optimal_max_weight(4), 2);
    }
}
