//! Ternary-tree fermion-to-qubit mapping with Jordan-Wigner and
//! Bravyi-Kitaev baselines, plus a dense simulator of ancilla-assisted
//! Bell-basis tomography for qubit, fermionic and qudit reduced density
//! matrices.

pub mod baseline;
pub mod bell_tomography;
pub mod fermion_rdm;
pub mod pauli;
pub mod qudit_hw;
pub mod state_sim;
pub mod ternary_tree;

pub use baseline::{MappingKind, WeightStats};
pub use pauli::{Letter, PauliString};
pub use ternary_tree::{TernaryTreeMapping, TreePath, VerificationReport};
pub use fermion_rdm::{FermionMapping, FermionRdm};
pub use qudit_hw::{FiducialState, HwTerm};
pub use state_sim::{DenseState, ShotStream};
