//! Jordan-Wigner and Bravyi-Kitaev mappings used as weight baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Letter, PauliString};
use crate::ternary_tree::{TernaryTreeMapping, TreeError, TreePath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("the number of modes must be at least 1")]
    NoModes,
    #[error("weight statistics need at least one operator")]
    Empty,
    #[error("unknown mapping kind {0:?}")]
    UnknownKind(String),
}

impl From<TreeError> for MappingError {
    fn from(_: TreeError) -> Self {
        MappingError::NoModes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    JordanWigner,
    BravyiKitaev,
    TernaryTree,
}

impl MappingKind {
    pub const ALL: [MappingKind; 3] =
        [MappingKind::TernaryTree, MappingKind::JordanWigner, MappingKind::BravyiKitaev];

    pub fn short_name(self) -> &'static str {
        match self {
            MappingKind::JordanWigner => "jw",
            MappingKind::BravyiKitaev => "bk",
            MappingKind::TernaryTree => "ternary",
        }
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MappingKind {
    type Err = MappingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jw" | "jordan_wigner" | "jordan-wigner" => Ok(MappingKind::JordanWigner),
            "bk" | "bravyi_kitaev" | "bravyi-kitaev" => Ok(MappingKind::BravyiKitaev),
            "ternary" | "ternary_tree" | "ternary-tree" | "tt" => Ok(MappingKind::TernaryTree),
            _ => Err(MappingError::UnknownKind(s.to_string())),
        }
    }
}

/// `gamma_{2j-1} -> Z_0..Z_{j-2} X_{j-1}`, `gamma_{2j} -> Z_0..Z_{j-2} Y_{j-1}`.
pub fn jordan_wigner(n_modes: usize) -> Result<Vec<PauliString>, MappingError> {
    if n_modes == 0 {
        return Err(MappingError::NoModes);
    }
    let mut out = Vec::with_capacity(2 * n_modes);
    for j in 0..n_modes {
        let tail = PauliString::from_letters((0..j).map(|q| (q, Letter::Z)));
        out.push(tail.multiply(&PauliString::single(j, Letter::X)));
        out.push(tail.multiply(&PauliString::single(j, Letter::Y)));
    }
    Ok(out)
}

/// Index sets of the Fenwick tree over modes `1..=n`. Node `j` stores the
/// occupation parity of modes `(j - lowbit(j), j]`.
#[derive(Debug, Clone, Copy)]
pub struct FenwickSets {
    n: usize,
}

fn lowbit(i: usize) -> usize {
    i & i.wrapping_neg()
}

impl FenwickSets {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Nodes whose range contains `j`, other than `j`.
    pub fn update_set(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = j + lowbit(j);
        while i <= self.n {
            out.push(i);
            i += lowbit(i);
        }
        out
    }

    /// Nodes whose ranges tile `[1, j)`.
    pub fn parity_set(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut i = j - 1;
        while i > 0 {
            out.push(i);
            i -= lowbit(i);
        }
        out
    }

    /// Children of `j`: nodes whose ranges tile `(j - lowbit(j), j)`.
    pub fn flip_set(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let stop = j - lowbit(j);
        let mut i = j - 1;
        while i > stop {
            out.push(i);
            i -= lowbit(i);
        }
        out
    }

    pub fn remainder_set(&self, j: usize) -> Vec<usize> {
        let flip = self.flip_set(j);
        self.parity_set(j).into_iter().filter(|i| !flip.contains(i)).collect()
    }
}

/// Bravyi-Kitaev mapping built from Fenwick-tree index sets:
/// `gamma_{2j-1} -> X_U X_j Z_P`, `gamma_{2j} -> X_U Y_j Z_R`.
pub fn bravyi_kitaev(n_modes: usize) -> Result<Vec<PauliString>, MappingError> {
    if n_modes == 0 {
        return Err(MappingError::NoModes);
    }
    let sets = FenwickSets::new(n_modes);
    let mut out = Vec::with_capacity(2 * n_modes);
    for j in 1..=n_modes {
        let update = PauliString::from_letters(sets.update_set(j).into_iter().map(|i| (i - 1, Letter::X)));
        let parity = PauliString::from_letters(sets.parity_set(j).into_iter().map(|i| (i - 1, Letter::Z)));
        let remainder =
            PauliString::from_letters(sets.remainder_set(j).into_iter().map(|i| (i - 1, Letter::Z)));
        // the three factors act on disjoint qubits, so no phase appears
        out.push(update.multiply(&PauliString::single(j - 1, Letter::X)).multiply(&parity));
        out.push(update.multiply(&PauliString::single(j - 1, Letter::Y)).multiply(&remainder));
    }
    Ok(out)
}

/// Majorana table of any supported mapping; entry `u - 1` is `gamma_u`.
pub fn majorana_table(kind: MappingKind, n_modes: usize) -> Result<Vec<PauliString>, MappingError> {
    match kind {
        MappingKind::JordanWigner => jordan_wigner(n_modes),
        MappingKind::BravyiKitaev => bravyi_kitaev(n_modes),
        MappingKind::TernaryTree => Ok(TernaryTreeMapping::build(n_modes)?.table().to_vec()),
    }
}

/// One row of an exported Majorana table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub majorana_index: usize,
    pub pauli: PauliString,
}

/// JSON form of a mapping. `dropped_path` is only set for ternary trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingExport {
    pub kind: MappingKind,
    pub n_modes: usize,
    pub num_qubits: usize,
    pub dropped_path: Option<TreePath>,
    pub table: Vec<TableEntry>,
}

impl MappingExport {
    pub fn build(kind: MappingKind, n_modes: usize) -> Result<Self, MappingError> {
        let (table, dropped_path) = match kind {
            MappingKind::TernaryTree => {
                let tree = TernaryTreeMapping::build(n_modes)?;
                (tree.table().to_vec(), Some(tree.dropped_path().clone()))
            }
            _ => (majorana_table(kind, n_modes)?, None),
        };
        Ok(Self {
            kind,
            n_modes,
            num_qubits: n_modes,
            dropped_path,
            table: table
                .into_iter()
                .enumerate()
                .map(|(i, pauli)| TableEntry { majorana_index: i + 1, pauli })
                .collect(),
        })
    }

    /// Operators ordered by `majorana_index`.
    pub fn operators(&self) -> Vec<PauliString> {
        let mut rows: Vec<&TableEntry> = self.table.iter().collect();
        rows.sort_by_key(|r| r.majorana_index);
        rows.into_iter().map(|r| r.pauli.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub mean: f64,
    pub max: usize,
    pub histogram: BTreeMap<usize, usize>,
}

pub fn weight_stats(ops: &[PauliString]) -> Result<WeightStats, MappingError> {
    if ops.is_empty() {
        return Err(MappingError::Empty);
    }
    let mut histogram = BTreeMap::new();
    let mut total = 0usize;
    for op in ops {
        *histogram.entry(op.weight()).or_insert(0) += 1;
        total += op.weight();
    }
    Ok(WeightStats {
        mean: total as f64 / ops.len() as f64,
        max: *histogram.keys().next_back().unwrap(),
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ternary_tree::verify_operators;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn jw_examples() {
        assert_eq!(jordan_wigner(1).unwrap(), vec![p("X0"), p("Y0")]);
        let t = jordan_wigner(2).unwrap();
        assert_eq!(t[2], p("Z0 X1"));
        assert!(t[2].anticommutes(&t[0]) && t[2].anticommutes(&t[1]));
        assert_eq!(weight_stats(&jordan_wigner(3).unwrap()).unwrap().max, 3);
    }

    #[test]
    fn bk_examples() {
        assert_eq!(bravyi_kitaev(1).unwrap(), vec![p("X0"), p("Y0")]);
        assert!(weight_stats(&bravyi_kitaev(8).unwrap()).unwrap().max <= 4);
        assert!(verify_operators(&bravyi_kitaev(4).unwrap()).passed());
    }

    #[test]
    fn fenwick_sets_for_eight_modes() {
        let s = FenwickSets::new(8);
        assert_eq!(s.update_set(1), vec![2, 4, 8]);
        assert_eq!(s.update_set(3), vec![4, 8]);
        assert_eq!(s.parity_set(7), vec![6, 4]);
        assert_eq!(s.flip_set(8), vec![7, 6, 4]);
        assert_eq!(s.flip_set(6), vec![5]);
        assert_eq!(s.remainder_set(6), vec![4]);
        assert!(s.remainder_set(8).is_empty());
    }

    #[test]
    fn stats_examples() {
        let tt = weight_stats(&majorana_table(MappingKind::TernaryTree, 4).unwrap()).unwrap();
        assert_eq!(tt.mean, 2.0);
        assert_eq!(tt.max, 2);
        assert_eq!(tt.histogram, BTreeMap::from([(2, 8)]));

        let jw = weight_stats(&jordan_wigner(4).unwrap()).unwrap();
        assert_eq!(jw.mean, 2.5);
        assert_eq!(jw.max, 4);
        assert_eq!(jw.histogram, BTreeMap::from([(1, 2), (2, 2), (3, 2), (4, 2)]));

        let one = weight_stats(&[p("X0 Y1 Z2")]).unwrap();
        assert_eq!((one.mean, one.max), (3.0, 3));
        assert_eq!(weight_stats(&[]), Err(MappingError::Empty));
    }

    #[test]
    fn export_round_trip() {
        let export = MappingExport::build(MappingKind::TernaryTree, 4).unwrap();
        let text = serde_json::to_string(&export).unwrap();
        assert!(text.contains("\"majorana_index\":1"));
        let back: MappingExport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, export);
        assert_eq!(back.operators(), majorana_table(MappingKind::TernaryTree, 4).unwrap());
        let jw = MappingExport::build(MappingKind::JordanWigner, 1).unwrap();
        assert_eq!(jw.dropped_path, None);
        assert_eq!(jw.operators(), vec![p("X0"), p("Y0")]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("jw".parse::<MappingKind>(), Ok(MappingKind::JordanWigner));
        assert_eq!("ternary".parse::<MappingKind>(), Ok(MappingKind::TernaryTree));
        assert_eq!("BK".parse::<MappingKind>(), Ok(MappingKind::BravyiKitaev));
        assert!("parity".parse::<MappingKind>().is_err());
    }
}
