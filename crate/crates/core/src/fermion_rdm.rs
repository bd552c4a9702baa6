//! Fermionic RDM estimation through a fermion-to-qubit mapping.
//!
//! A `k`-fermion RDM element is the expectation of a product of `2k`
//! distinct Majorana operators. The mapping turns that product into a single
//! Pauli string, which is then either evaluated exactly on a dense state or
//! estimated from pairwise Bell shots with the `sqrt(3)^weight` rescaling.

use itertools::Itertools;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{majorana_table, MappingError, MappingKind};
use crate::bell_tomography::{fold_signs, signed_product, TomographyError};
use crate::pauli::{i_power, PauliString};
use crate::state_sim::{check_capacity, prepare_xi, sample_bell_shots, DenseState, ShotStream, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FermionError {
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error("Majorana index {index} is outside 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("k = {k} needs {needed} Majorana operators but only {available} exist")]
    KTooLarge { k: usize, needed: usize, available: usize },
    #[error("expected {expected} occupation numbers, got {got}")]
    OccupationLength { expected: usize, got: usize },
    #[error("state has {got} qubits but the mapping uses {expected}")]
    StateSize { expected: usize, got: usize },
    #[error("no encoded vacuum found; the table does not define independent mode parities")]
    NoVacuum,
}

/// Majorana table of a fermion-to-qubit mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct FermionMapping {
    kind: MappingKind,
    n_modes: usize,
    table: Vec<PauliString>,
}

impl FermionMapping {
    pub fn new(kind: MappingKind, n_modes: usize) -> Result<Self, FermionError> {
        Ok(Self { kind, n_modes, table: majorana_table(kind, n_modes)? })
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// All supported mappings use exactly one qubit per mode.
    pub fn num_qubits(&self) -> usize {
        self.n_modes
    }

    pub fn table(&self) -> &[PauliString] {
        &self.table
    }

    /// Image of `gamma_u`, `u` in `1..=2n`.
    pub fn majorana(&self, u: usize) -> Result<&PauliString, FermionError> {
        u.checked_sub(1)
            .and_then(|i| self.table.get(i))
            .ok_or(FermionError::IndexOutOfRange { index: u, max: self.table.len() })
    }

    /// Encoded `i gamma_{2j-1} gamma_{2j}` for mode `j` (0-based), which
    /// equals `2 n_j - 1`.
    pub fn mode_parity(&self, mode: usize) -> Result<PauliString, FermionError> {
        let a = self.majorana(2 * mode + 1)?;
        let b = self.majorana(2 * mode + 2)?;
        let p = a.multiply(b);
        let phase = p.phase() + 1;
        Ok(p.with_phase(phase))
    }
}

/// `coefficient * gamma_{u_1} ... gamma_{u_m}` with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MajoranaMonomial {
    indices: Vec<usize>,
    coefficient: Complex64,
}

impl MajoranaMonomial {
    /// Brings an arbitrary product into canonical order. Each transposition
    /// of distinct operators flips the sign; repeated operators square to 1.
    pub fn new(mut indices: Vec<usize>, coefficient: Complex64) -> Result<Self, FermionError> {
        if let Some(&bad) = indices.iter().find(|&&u| u == 0) {
            return Err(FermionError::IndexOutOfRange { index: bad, max: 0 });
        }
        let mut sign = 1.0;
        // insertion sort, counting swaps of unequal neighbours
        for i in 1..indices.len() {
            let mut j = i;
            while j > 0 && indices[j - 1] > indices[j] {
                indices.swap(j - 1, j);
                sign = -sign;
                j -= 1;
            }
        }
        let mut canonical: Vec<usize> = Vec::with_capacity(indices.len());
        for u in indices {
            if canonical.last() == Some(&u) {
                canonical.pop();
            } else {
                canonical.push(u);
            }
        }
        Ok(Self { indices: canonical, coefficient: coefficient * sign })
    }

    pub fn from_sorted(indices: &[usize]) -> Result<Self, FermionError> {
        Self::new(indices.to_vec(), Complex64::new(1.0, 0.0))
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn coefficient(&self) -> Complex64 {
        self.coefficient
    }

    /// Power of `i` making the operator product Hermitian: `m(m-1)/2`.
    pub fn hermitian_phase(&self) -> u8 {
        let m = self.indices.len();
        ((m * m.saturating_sub(1) / 2) % 4) as u8
    }
}

/// Product of the mapped Majorana operators in index order, without the
/// monomial's coefficient.
pub fn encode_monomial(m: &MajoranaMonomial, mapping: &FermionMapping) -> Result<PauliString, FermionError> {
    m.indices
        .iter()
        .try_fold(PauliString::identity(), |acc, &u| Ok(acc.multiply(mapping.majorana(u)?)))
}

/// One fermionic RDM element `<gamma_{u_1} ... gamma_{u_2k}>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FermionRdmEntry {
    pub indices: Vec<usize>,
    /// Raw expectation of the ordered product.
    pub value: Complex64,
    /// `i^{m(m-1)/2}` times `value`; real for exact values.
    pub hermitized: Complex64,
    pub std_error: Option<f64>,
    pub pauli: PauliString,
    pub weight: usize,
    /// `sqrt(3)^weight`, the factor dividing the Bell-sampled signal.
    pub attenuation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermionRdm {
    pub n_modes: usize,
    pub mapping_kind: MappingKind,
    pub k: usize,
    /// `(2n + 1)^k`.
    pub attenuation_bound: f64,
    pub num_shots: Option<usize>,
    pub entries: Vec<FermionRdmEntry>,
}

/// `(2n + 1)^k`.
pub fn attenuation_bound(n_modes: usize, k: usize) -> f64 {
    ((2 * n_modes + 1) as f64).powi(k as i32)
}

/// All increasing index tuples of length `2k` over `1..=2n`.
pub fn rdm_index_sets(n_modes: usize, k: usize) -> Result<Vec<Vec<usize>>, FermionError> {
    let available = 2 * n_modes;
    if 2 * k > available {
        return Err(FermionError::KTooLarge { k, needed: 2 * k, available });
    }
    Ok((1..=available).combinations(2 * k).collect())
}

fn check_state(state: &DenseState, mapping: &FermionMapping) -> Result<(), FermionError> {
    if state.local_dim() != 2 || state.num_sites() != mapping.num_qubits() {
        return Err(FermionError::StateSize { expected: mapping.num_qubits(), got: state.num_sites() });
    }
    Ok(())
}

fn entry_skeleton(indices: Vec<usize>, mapping: &FermionMapping) -> Result<(MajoranaMonomial, PauliString), FermionError> {
    let m = MajoranaMonomial::from_sorted(&indices)?;
    let pauli = encode_monomial(&m, mapping)?;
    Ok((m, pauli))
}

/// Every `<gamma_{u_1} ... gamma_{u_2k}>` evaluated on a dense state.
pub fn exact_fermionic_rdm(state: &DenseState, mapping: &FermionMapping, k: usize) -> Result<FermionRdm, FermionError> {
    check_state(state, mapping)?;
    let sets = rdm_index_sets(mapping.n_modes(), k)?;
    let entries = sets
        .into_par_iter()
        .map(|indices| {
            let (m, pauli) = entry_skeleton(indices, mapping)?;
            let value = state.pauli_expectation(&pauli)?;
            Ok(FermionRdmEntry {
                hermitized: i_power(m.hermitian_phase()) * value,
                indices: m.indices,
                value,
                std_error: None,
                weight: pauli.weight(),
                attenuation: 3f64.sqrt().powi(pauli.weight() as i32),
                pauli,
            })
        })
        .collect::<Result<Vec<_>, FermionError>>()?;
    Ok(FermionRdm {
        n_modes: mapping.n_modes(),
        mapping_kind: mapping.kind(),
        k,
        attenuation_bound: attenuation_bound(mapping.n_modes(), k),
        num_shots: None,
        entries,
    })
}

/// RDM estimated from a Bell shot stream over the mapping's qubits.
pub fn rdm_from_stream(stream: &ShotStream, mapping: &FermionMapping, k: usize) -> Result<FermionRdm, FermionError> {
    if stream.local_dim != 2 {
        return Err(TomographyError::NotQubits(stream.local_dim).into());
    }
    if stream.is_empty() {
        return Err(TomographyError::EmptyStream.into());
    }
    if stream.num_pairs != mapping.num_qubits() {
        return Err(FermionError::StateSize { expected: mapping.num_qubits(), got: stream.num_pairs });
    }
    let sets = rdm_index_sets(mapping.n_modes(), k)?;
    let entries = sets
        .into_iter()
        .map(|indices| {
            let (m, pauli) = entry_skeleton(indices, mapping)?;
            let bare = pauli.without_phase();
            let acc = fold_signs(stream, |shot| signed_product(shot, &bare));
            let scale = 3f64.sqrt().powi(pauli.weight() as i32);
            let value = pauli.phase_factor() * (scale * acc.mean());
            Ok(FermionRdmEntry {
                hermitized: i_power(m.hermitian_phase()) * value,
                indices: m.indices,
                value,
                std_error: Some(scale * acc.std_error()),
                weight: pauli.weight(),
                attenuation: scale,
                pauli,
            })
        })
        .collect::<Result<Vec<_>, FermionError>>()?;
    Ok(FermionRdm {
        n_modes: mapping.n_modes(),
        mapping_kind: mapping.kind(),
        k,
        attenuation_bound: attenuation_bound(mapping.n_modes(), k),
        num_shots: Some(stream.len()),
        entries,
    })
}

/// Attaches tetrahedral ancillas to `system`, samples `shots` Bell
/// measurements and estimates every `k`-RDM element from that one stream.
pub fn sampled_fermionic_rdm(
    system: &DenseState,
    mapping: &FermionMapping,
    k: usize,
    shots: usize,
    seed: u64,
    workers: usize,
) -> Result<FermionRdm, FermionError> {
    check_state(system, mapping)?;
    check_capacity(2, 2 * mapping.num_qubits())?;
    if shots == 0 {
        return Err(TomographyError::EmptyStream.into());
    }
    let stream = sample_bell_shots(system, &prepare_xi(), shots, seed, workers)?;
    rdm_from_stream(&stream, mapping, k)
}

/// Joint `-1` eigenstate of every encoded `i gamma_{2j-1} gamma_{2j}`,
/// with global phase fixed so the first non-zero amplitude is positive.
pub fn encoded_vacuum(mapping: &FermionMapping) -> Result<DenseState, FermionError> {
    let n = mapping.num_qubits();
    let dim = check_capacity(2, n)?;
    let parities = (0..mapping.n_modes()).map(|j| mapping.mode_parity(j)).collect::<Result<Vec<_>, _>>()?;
    let threshold = 0.5 / dim as f64;
    for b in 0..dim {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[b] = Complex64::new(1.0, 0.0);
        let mut psi = DenseState::normalized(2, n, amps)?;
        let mut weight = 1.0;
        for p in &parities {
            let image = psi.apply_pauli(p)?;
            let projected: Vec<Complex64> =
                psi.amplitudes().iter().zip(image.amplitudes()).map(|(a, pa)| (a - pa) * 0.5).collect();
            let norm_sqr: f64 = projected.iter().map(|a| a.norm_sqr()).sum();
            weight *= norm_sqr;
            if norm_sqr < 1e-12 {
                break;
            }
            psi = DenseState::normalized(2, n, projected)?;
        }
        if weight >= threshold {
            return Ok(fix_global_phase(psi));
        }
    }
    Err(FermionError::NoVacuum)
}

fn fix_global_phase(state: DenseState) -> DenseState {
    let lead = state.amplitudes().iter().find(|a| a.norm() > 1e-12).copied();
    match lead {
        Some(a) => {
            let rot = a.conj() / a.norm();
            let amps = state.amplitudes().iter().map(|x| x * rot).collect();
            DenseState::normalized(state.local_dim(), state.num_sites(), amps).unwrap()
        }
        None => state,
    }
}

/// Encoded Fock state `prod_{j occupied} c_j^dag |vac>` with creation
/// operators applied in increasing mode order from the left.
pub fn fock_state(mapping: &FermionMapping, occupied: &[bool]) -> Result<DenseState, FermionError> {
    if occupied.len() != mapping.n_modes() {
        return Err(FermionError::OccupationLength { expected: mapping.n_modes(), got: occupied.len() });
    }
    let mut psi = encoded_vacuum(mapping)?;
    for j in (0..mapping.n_modes()).rev().filter(|&j| occupied[j]) {
        // c_j^dag = (gamma_{2j-1} - i gamma_{2j}) / 2
        let a = psi.apply_pauli(mapping.majorana(2 * j + 1)?)?;
        let b = psi.apply_pauli(mapping.majorana(2 * j + 2)?)?;
        let amps = a
            .amplitudes()
            .iter()
            .zip(b.amplitudes())
            .map(|(x, y)| (x - Complex64::new(0.0, 1.0) * y) * 0.5)
            .collect();
        psi = DenseState::normalized(2, mapping.num_qubits(), amps)?;
    }
    Ok(psi)
}

/// Occupations from a string such as `"101"`.
pub fn parse_occupations(text: &str) -> Option<Vec<bool>> {
    text.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    indices: Vec<usize>,
    value_re: f64,
    value_im: f64,
    hermitized_re: f64,
    hermitized_im: f64,
    std_error: Option<f64>,
    pauli: PauliString,
    weight: usize,
    attenuation: f64,
}

#[derive(Serialize, Deserialize)]
struct RdmJson {
    n_modes: usize,
    mapping_kind: MappingKind,
    k: usize,
    attenuation_bound: f64,
    num_shots: Option<usize>,
    entries: Vec<EntryJson>,
}

impl Serialize for FermionRdm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RdmJson {
            n_modes: self.n_modes,
            mapping_kind: self.mapping_kind,
            k: self.k,
            attenuation_bound: self.attenuation_bound,
            num_shots: self.num_shots,
            entries: self
                .entries
                .iter()
                .map(|e| EntryJson {
                    indices: e.indices.clone(),
                    value_re: e.value.re,
                    value_im: e.value.im,
                    hermitized_re: e.hermitized.re,
                    hermitized_im: e.hermitized.im,
                    std_error: e.std_error,
                    pauli: e.pauli.clone(),
                    weight: e.weight,
                    attenuation: e.attenuation,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FermionRdm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RdmJson::deserialize(d)?;
        Ok(FermionRdm {
            n_modes: raw.n_modes,
            mapping_kind: raw.mapping_kind,
            k: raw.k,
            attenuation_bound: raw.attenuation_bound,
            num_shots: raw.num_shots,
            entries: raw
                .entries
                .into_iter()
                .map(|e| FermionRdmEntry {
                    indices: e.indices,
                    value: Complex64::new(e.value_re, e.value_im),
                    hermitized: Complex64::new(e.hermitized_re, e.hermitized_im),
                    std_error: e.std_error,
                    pauli: e.pauli,
                    weight: e.weight,
                    attenuation: e.attenuation,
                })
                .collect(),
        })
    }
}
