//! Dense pure-state simulator for small registers of qubits or qudits.
//!
//! Amplitudes are stored with site 0 as the most significant digit, so a
//! register reads left to right like a tensor product. Bell-basis tomography
//! uses a pair layout: system site `j` lives at register site `2j` and its
//! ancilla at `2j + 1`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::pauli::{PauliError, PauliString};

/// Largest number of amplitudes a register may hold.
pub const MAX_AMPLITUDES: usize = 1 << 20;

/// Normalization tolerance for states handed to the simulator.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Shots drawn from one RNG stream before moving on to the next.
pub const SHOT_BLOCK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("register of {requested} amplitudes exceeds the capacity of {max}")]
    Capacity { requested: u128, max: usize },
    #[error("local dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("expected {expected} amplitudes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("site {site} is outside a register of {num_sites} sites")]
    SiteOutOfRange { site: usize, num_sites: usize },
    #[error("pairwise measurement needs an even number of sites, got {0}")]
    OddRegister(usize),
    #[error("operation requires qubits but the register has local dimension {0}")]
    NotQubits(usize),
    #[error("operator {0} is not Hermitian")]
    NonHermitian(String),
    #[error("outcome ({h}, {l}) is invalid for local dimension {dim}")]
    BadOutcome { h: usize, l: usize, dim: usize },
    #[error("operator shape {got:?} does not match local dimension {dim}")]
    BadOperator { got: Vec<usize>, dim: usize },
    #[error("shot stream parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

pub fn check_capacity(local_dim: usize, num_sites: usize) -> Result<usize, SimError> {
    if local_dim < 2 {
        return Err(SimError::BadDimension(local_dim));
    }
    let requested = (local_dim as u128).checked_pow(num_sites as u32).unwrap_or(u128::MAX);
    if requested > MAX_AMPLITUDES as u128 {
        return Err(SimError::Capacity { requested, max: MAX_AMPLITUDES });
    }
    Ok(requested as usize)
}

/// `exp(2 pi i k / d)` with `k` reduced modulo `d` first.
pub fn root_of_unity(d: usize, k: i64) -> Complex64 {
    let k = k.rem_euclid(d as i64) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * k / d as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    local_dim: usize,
    num_sites: usize,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn new(local_dim: usize, num_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let expected = check_capacity(local_dim, num_sites)?;
        if amplitudes.len() != expected {
            return Err(SimError::LengthMismatch { expected, got: amplitudes.len() });
        }
        let state = Self { local_dim, num_sites, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(local_dim: usize, num_sites: usize, mut amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        let expected = check_capacity(local_dim, num_sites)?;
        if amplitudes.len() != expected {
            return Err(SimError::LengthMismatch { expected, got: amplitudes.len() });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(SimError::NotNormalized(norm));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { local_dim, num_sites, amplitudes })
    }

    pub fn basis_state(local_dim: usize, digits: &[usize]) -> Result<Self, SimError> {
        let len = check_capacity(local_dim, digits.len())?;
        let mut index = 0;
        for &d in digits {
            if d >= local_dim {
                return Err(SimError::BadOutcome { h: d, l: 0, dim: local_dim });
            }
            index = index * local_dim + d;
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); len];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { local_dim, num_sites: digits.len(), amplitudes })
    }

    pub fn zero_state(local_dim: usize, num_sites: usize) -> Result<Self, SimError> {
        Self::basis_state(local_dim, &vec![0; num_sites])
    }

    /// Haar-random pure state.
    pub fn random<R: Rng + ?Sized>(local_dim: usize, num_sites: usize, rng: &mut R) -> Result<Self, SimError> {
        let len = check_capacity(local_dim, num_sites)?;
        let amplitudes = (0..len)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(local_dim, num_sites, amplitudes)
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &DenseState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn tensor(&self, other: &DenseState) -> Result<DenseState, SimError> {
        if self.local_dim != other.local_dim {
            return Err(SimError::BadDimension(other.local_dim));
        }
        check_capacity(self.local_dim, self.num_sites + other.num_sites)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(DenseState { local_dim: self.local_dim, num_sites: self.num_sites + other.num_sites, amplitudes })
    }

    /// `system (x) ancilla^{(x) n}` laid out as interleaved (system, ancilla) pairs.
    pub fn with_ancillas(system: &DenseState, ancilla: &DenseState) -> Result<DenseState, SimError> {
        if ancilla.num_sites != 1 || ancilla.local_dim != system.local_dim {
            return Err(SimError::BadDimension(ancilla.local_dim));
        }
        let d = system.local_dim;
        let n = system.num_sites;
        let len = check_capacity(d, 2 * n)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); len];
        for (sys_index, &amp) in system.amplitudes.iter().enumerate() {
            if amp == Complex64::new(0.0, 0.0) {
                continue;
            }
            let sys_digits = digits_of(sys_index, d, n);
            // enumerate ancilla digit strings
            for anc_index in 0..d.pow(n as u32) {
                let anc_digits = digits_of(anc_index, d, n);
                let mut coeff = amp;
                let mut index = 0;
                for j in 0..n {
                    coeff *= ancilla.amplitudes[anc_digits[j]];
                    index = (index * d + sys_digits[j]) * d + anc_digits[j];
                }
                amplitudes[index] = coeff;
            }
        }
        Ok(DenseState { local_dim: d, num_sites: 2 * n, amplitudes })
    }

    fn stride(&self, site: usize) -> usize {
        self.local_dim.pow((self.num_sites - 1 - site) as u32)
    }

    fn check_site(&self, site: usize) -> Result<(), SimError> {
        if site >= self.num_sites {
            return Err(SimError::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        Ok(())
    }

    /// Applies a `D x D` operator to one site (need not be unitary).
    pub fn apply_local(&mut self, site: usize, op: &Array2<Complex64>) -> Result<(), SimError> {
        self.check_site(site)?;
        let d = self.local_dim;
        if op.shape() != [d, d] {
            return Err(SimError::BadOperator { got: op.shape().to_vec(), dim: d });
        }
        let stride = self.stride(site);
        let block = stride * d;
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for base in (0..self.amplitudes.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = self.amplitudes[start + k * stride];
                }
                for r in 0..d {
                    self.amplitudes[start + r * stride] = (0..d).map(|c| op[[r, c]] * buf[c]).sum();
                }
            }
        }
        Ok(())
    }

    /// Applies a `D^2 x D^2` operator to the adjacent sites `(site, site + 1)`.
    pub fn apply_adjacent_pair(&mut self, site: usize, op: &Array2<Complex64>) -> Result<(), SimError> {
        self.check_site(site + 1)?;
        let d2 = self.local_dim * self.local_dim;
        if op.shape() != [d2, d2] {
            return Err(SimError::BadOperator { got: op.shape().to_vec(), dim: self.local_dim });
        }
        let stride = self.stride(site + 1);
        let block = stride * d2;
        let mut buf = vec![Complex64::new(0.0, 0.0); d2];
        for base in (0..self.amplitudes.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = self.amplitudes[start + k * stride];
                }
                for r in 0..d2 {
                    self.amplitudes[start + r * stride] = (0..d2).map(|c| op[[r, c]] * buf[c]).sum();
                }
            }
        }
        Ok(())
    }

    fn require_qubits(&self) -> Result<(), SimError> {
        if self.local_dim != 2 {
            return Err(SimError::NotQubits(self.local_dim));
        }
        Ok(())
    }

    fn check_pauli(&self, op: &PauliString) -> Result<(), SimError> {
        self.require_qubits()?;
        if let Some(q) = op.max_qubit() {
            if q >= self.num_sites {
                return Err(PauliError::IndexOutOfRange { index: q, num_qubits: self.num_sites }.into());
            }
        }
        Ok(())
    }

    /// `P|psi>`, phase included.
    pub fn apply_pauli(&self, op: &PauliString) -> Result<DenseState, SimError> {
        self.check_pauli(op)?;
        let masks = op.masks(self.num_sites);
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (b, &a) in self.amplitudes.iter().enumerate() {
            let (row, coeff) = masks.apply(b);
            out[row] = coeff * a;
        }
        Ok(DenseState { local_dim: 2, num_sites: self.num_sites, amplitudes: out })
    }

    /// `<psi|P|psi>` for any Pauli string, including non-Hermitian phases.
    pub fn pauli_expectation(&self, op: &PauliString) -> Result<Complex64, SimError> {
        self.check_pauli(op)?;
        let masks = op.masks(self.num_sites);
        Ok(self
            .amplitudes
            .par_iter()
            .enumerate()
            .map(|(b, &a)| {
                let (row, coeff) = masks.apply(b);
                self.amplitudes[row].conj() * coeff * a
            })
            .sum())
    }

    /// Real expectation of a Hermitian Pauli string.
    pub fn expectation(&self, op: &PauliString) -> Result<f64, SimError> {
        if !op.is_hermitian() {
            return Err(SimError::NonHermitian(op.to_string()));
        }
        Ok(self.pauli_expectation(op)?.re)
    }

    /// `<psi| prod_i O_i |psi>` for single-site operators on distinct sites.
    pub fn local_expectation(&self, ops: &[(usize, Array2<Complex64>)]) -> Result<Complex64, SimError> {
        let mut image = self.clone();
        for (site, op) in ops {
            image.apply_local(*site, op)?;
        }
        Ok(self.inner(&image))
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn num_pairs(&self) -> Result<usize, SimError> {
        if self.num_sites % 2 == 1 {
            return Err(SimError::OddRegister(self.num_sites));
        }
        Ok(self.num_sites / 2)
    }

    /// Copy of the state with every (system, ancilla) pair rotated into the
    /// generalized Bell basis; pair digit `h * D + l` then labels outcome
    /// `(h, l)`.
    fn in_bell_frame(&self) -> Result<DenseState, SimError> {
        let pairs = self.num_pairs()?;
        let basis = bell_basis_change(self.local_dim);
        let mut out = self.clone();
        for j in 0..pairs {
            out.apply_adjacent_pair(2 * j, &basis)?;
        }
        Ok(out)
    }
}

fn digits_of(mut index: usize, d: usize, n: usize) -> Vec<usize> {
    let mut digits = vec![0; n];
    for k in (0..n).rev() {
        digits[k] = index % d;
        index /= d;
    }
    digits
}

fn mat(d: usize, f: impl Fn(usize, usize) -> Complex64) -> Array2<Complex64> {
    Array2::from_shape_fn((d, d), |(r, c)| f(r, c))
}

/// `R_x(theta) = exp(-i theta X / 2)`.
pub fn rx(theta: f64) -> Array2<Complex64> {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = Complex64::new(0.0, -(theta / 2.0).sin());
    Array2::from_shape_vec((2, 2), vec![c, s, s, c]).unwrap()
}

/// `R_z(phi) = exp(-i phi Z / 2)`.
pub fn rz(phi: f64) -> Array2<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    Array2::from_shape_vec(
        (2, 2),
        vec![Complex64::from_polar(1.0, -phi / 2.0), z, z, Complex64::from_polar(1.0, phi / 2.0)],
    )
    .unwrap()
}

/// Rotation angles `(theta, phi)` taking `|0>` to the tetrahedral ancilla state.
pub fn xi_angles() -> (f64, f64) {
    ((1.0 / 3f64.sqrt()).acos(), 3.0 * PI / 4.0)
}

/// Ancilla state with `<X> = <Y> = <Z> = 1/sqrt(3)`, prepared as
/// `R_z(3 pi / 4) R_x(arccos(1/sqrt 3)) |0>`.
pub fn prepare_xi() -> DenseState {
    let (theta, phi) = xi_angles();
    let mut state = DenseState::zero_state(2, 1).unwrap();
    state.apply_local(0, &rx(theta)).unwrap();
    state.apply_local(0, &rz(phi)).unwrap();
    state
}

/// Heisenberg-Weyl operator `X^f Z^g` with `X|d> = |d+1>` and
/// `Z|d> = exp(2 pi i d / D)|d>`; exponents are taken modulo `D`.
pub fn hw_operator(dim: usize, f: i64, g: i64) -> Result<Array2<Complex64>, SimError> {
    if dim < 2 {
        return Err(SimError::BadDimension(dim));
    }
    let f = f.rem_euclid(dim as i64) as usize;
    Ok(mat(dim, |r, c| {
        if r == (c + f) % dim {
            root_of_unity(dim, g * c as i64)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

/// `|Phi_{hl}> = (X^h Z^l (x) 1) |Phi_00>` with
/// `|Phi_00> = sum_d |d d> / sqrt(D)`.
///
/// These states diagonalize `X^f Z^g (x) X^f Z^{-g}` with eigenvalue
/// `exp(2 pi i (g h - f l) / D)`.
pub fn generalized_bell_state(dim: usize, h: usize, l: usize) -> Result<DenseState, SimError> {
    if dim < 2 {
        return Err(SimError::BadDimension(dim));
    }
    if h >= dim || l >= dim {
        return Err(SimError::BadOutcome { h, l, dim });
    }
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim * dim];
    let scale = 1.0 / (dim as f64).sqrt();
    for d in 0..dim {
        amplitudes[((d + h) % dim) * dim + d] = root_of_unity(dim, (l * d) as i64) * scale;
    }
    Ok(DenseState { local_dim: dim, num_sites: 2, amplitudes })
}

/// Unitary whose row `h * D + l` is `<Phi_{hl}|`.
pub fn bell_basis_change(dim: usize) -> Array2<Complex64> {
    let d2 = dim * dim;
    let mut out = Array2::zeros((d2, d2));
    for h in 0..dim {
        for l in 0..dim {
            let state = generalized_bell_state(dim, h, l).unwrap();
            for (c, a) in state.amplitudes.iter().enumerate() {
                out[[h * dim + l, c]] = a.conj();
            }
        }
    }
    out
}

/// Outcome `(h, l)` of a generalized Bell measurement on one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairOutcome {
    pub h: usize,
    pub l: usize,
}

impl PairOutcome {
    pub fn new(h: usize, l: usize) -> Self {
        Self { h, l }
    }
}

/// The four two-qubit Bell outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellOutcome {
    #[serde(rename = "F+")]
    PhiPlus,
    #[serde(rename = "F-")]
    PhiMinus,
    #[serde(rename = "P+")]
    PsiPlus,
    #[serde(rename = "P-")]
    PsiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] =
        [BellOutcome::PhiPlus, BellOutcome::PhiMinus, BellOutcome::PsiPlus, BellOutcome::PsiMinus];

    pub fn label(self) -> &'static str {
        match self {
            BellOutcome::PhiPlus => "F+",
            BellOutcome::PhiMinus => "F-",
            BellOutcome::PsiPlus => "P+",
            BellOutcome::PsiMinus => "P-",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.label() == s)
    }

    /// `Phi+ = Phi_00`, `Phi- = Phi_01`, `Psi+ = Phi_10`, `Psi- = -Phi_11`.
    pub fn to_pair(self) -> PairOutcome {
        match self {
            BellOutcome::PhiPlus => PairOutcome::new(0, 0),
            BellOutcome::PhiMinus => PairOutcome::new(0, 1),
            BellOutcome::PsiPlus => PairOutcome::new(1, 0),
            BellOutcome::PsiMinus => PairOutcome::new(1, 1),
        }
    }

    pub fn from_pair(p: PairOutcome) -> Option<Self> {
        match (p.h, p.l) {
            (0, 0) => Some(BellOutcome::PhiPlus),
            (0, 1) => Some(BellOutcome::PhiMinus),
            (1, 0) => Some(BellOutcome::PsiPlus),
            (1, 1) => Some(BellOutcome::PsiMinus),
            _ => None,
        }
    }

    /// The Bell state itself, in `|00>, |01>, |10>, |11>` order.
    pub fn state(self) -> DenseState {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b, c, d) = match self {
            BellOutcome::PhiPlus => (s, 0.0, 0.0, s),
            BellOutcome::PhiMinus => (s, 0.0, 0.0, -s),
            BellOutcome::PsiPlus => (0.0, s, s, 0.0),
            BellOutcome::PsiMinus => (0.0, s, -s, 0.0),
        };
        let amps = [a, b, c, d].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        DenseState::new(2, 2, amps).unwrap()
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One repetition: the Bell outcome of every (system, ancilla) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShotRecord {
    pub outcomes: Vec<PairOutcome>,
}

impl ShotRecord {
    pub fn qubit_outcome(&self, pair: usize) -> Option<BellOutcome> {
        self.outcomes.get(pair).copied().and_then(BellOutcome::from_pair)
    }
}

/// Shots from repeating one circuit, all over the same register.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotStream {
    pub local_dim: usize,
    pub num_pairs: usize,
    pub shots: Vec<ShotRecord>,
}

impl ShotStream {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    fn outcome_json(&self, o: PairOutcome) -> Value {
        match (self.local_dim, BellOutcome::from_pair(o)) {
            (2, Some(b)) => Value::String(b.label().to_string()),
            _ => json!([o.h, o.l]),
        }
    }

    /// One JSON object per line: `{"shot_index": i, "outcomes": [...]}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, shot) in self.shots.iter().enumerate() {
            let outcomes: Vec<Value> = shot.outcomes.iter().map(|&o| self.outcome_json(o)).collect();
            writeln!(out, "{}", json!({ "shot_index": i, "outcomes": outcomes }))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(local_dim: usize, input: R) -> Result<ShotStream, SimError> {
        let bad = |m: String| SimError::Parse(m);
        let mut shots = Vec::new();
        let mut num_pairs = None;
        for line in input.lines() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let arr = v["outcomes"].as_array().ok_or_else(|| bad("missing outcomes".into()))?;
            let mut outcomes = Vec::with_capacity(arr.len());
            for o in arr {
                let pair = match o {
                    Value::String(s) => BellOutcome::from_label(s)
                        .filter(|_| local_dim == 2)
                        .map(BellOutcome::to_pair)
                        .ok_or_else(|| bad(format!("unknown outcome {s}")))?,
                    Value::Array(hl) if hl.len() == 2 => {
                        let h = hl[0].as_u64().ok_or_else(|| bad("bad h".into()))? as usize;
                        let l = hl[1].as_u64().ok_or_else(|| bad("bad l".into()))? as usize;
                        if h >= local_dim || l >= local_dim {
                            return Err(SimError::BadOutcome { h, l, dim: local_dim });
                        }
                        PairOutcome::new(h, l)
                    }
                    other => return Err(bad(format!("unexpected outcome {other}"))),
                };
                outcomes.push(pair);
            }
            match num_pairs {
                None => num_pairs = Some(outcomes.len()),
                Some(n) if n != outcomes.len() => return Err(bad("ragged shot stream".into())),
                _ => {}
            }
            shots.push(ShotRecord { outcomes });
        }
        Ok(ShotStream { local_dim, num_pairs: num_pairs.unwrap_or(0), shots })
    }
}

fn decode_pairs(mut index: usize, dim: usize, num_pairs: usize) -> ShotRecord {
    let d2 = dim * dim;
    let mut outcomes = vec![PairOutcome::new(0, 0); num_pairs];
    for j in (0..num_pairs).rev() {
        let r = index % d2;
        index /= d2;
        outcomes[j] = PairOutcome::new(r / dim, r % dim);
    }
    ShotRecord { outcomes }
}

/// One shot of pairwise Bell measurement: pairs are measured in order, each
/// outcome drawn from the conditional Born distribution and the state
/// collapsed before moving on.
pub fn bell_measure_all_pairs<R: Rng + ?Sized>(state: &DenseState, rng: &mut R) -> Result<ShotRecord, SimError> {
    let mut frame = state.in_bell_frame()?;
    let dim = frame.local_dim;
    let d2 = dim * dim;
    let pairs = frame.num_sites / 2;
    let mut outcomes = Vec::with_capacity(pairs);
    for j in 0..pairs {
        let stride = frame.stride(2 * j + 1);
        let digit = |index: usize| (index / stride) % d2;
        let mut marginal = vec![0.0; d2];
        for (i, a) in frame.amplitudes.iter().enumerate() {
            marginal[digit(i)] += a.norm_sqr();
        }
        let total: f64 = marginal.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = d2 - 1;
        for (r, &p) in marginal.iter().enumerate() {
            if u < p {
                pick = r;
                break;
            }
            u -= p;
        }
        // a zero-probability bin can only be chosen through rounding at the top end
        while marginal[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        let keep = marginal[pick].sqrt();
        for (i, a) in frame.amplitudes.iter_mut().enumerate() {
            if digit(i) == pick {
                *a /= keep;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        outcomes.push(PairOutcome::new(pick / dim, pick % dim));
    }
    Ok(ShotRecord { outcomes })
}

/// Repeated Bell sampling from a fixed register, drawing each shot from the
/// precomputed joint outcome distribution.
#[derive(Debug, Clone)]
pub struct BellSampler {
    local_dim: usize,
    num_pairs: usize,
    cumulative: Vec<f64>,
}

impl BellSampler {
    pub fn new(state: &DenseState) -> Result<Self, SimError> {
        let frame = state.in_bell_frame()?;
        let mut acc = 0.0;
        let cumulative = frame
            .amplitudes
            .iter()
            .map(|a| {
                acc += a.norm_sqr();
                acc
            })
            .collect();
        Ok(Self { local_dim: state.local_dim, num_pairs: state.num_sites / 2, cumulative })
    }

    /// Exact probability of each joint outcome, indexed by the base-`D^2`
    /// number whose digit `j` is `h_j * D + l_j`.
    pub fn joint_probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn decode(&self, index: usize) -> ShotRecord {
        decode_pairs(index, self.local_dim, self.num_pairs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ShotRecord {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let index = self.cumulative.partition_point(|&c| c <= u);
        self.decode(index.min(self.cumulative.len() - 1))
    }

    /// `shots` repetitions. Shots are drawn in blocks of [`SHOT_BLOCK`], block
    /// `b` using ChaCha stream `b` under `seed`, so the stream does not depend
    /// on how many workers draw it.
    pub fn sample_stream(&self, shots: usize, seed: u64, workers: usize) -> Result<ShotStream, SimError> {
        let blocks = shots.div_ceil(SHOT_BLOCK);
        let draw = |b: usize| -> Vec<ShotRecord> {
            let mut rng = block_rng(seed, b as u64);
            let count = SHOT_BLOCK.min(shots - b * SHOT_BLOCK);
            (0..count).map(|_| self.sample(&mut rng)).collect()
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| SimError::Parse(e.to_string()))?;
        let per_block: Vec<Vec<ShotRecord>> = pool.install(|| (0..blocks).into_par_iter().map(draw).collect());
        Ok(ShotStream {
            local_dim: self.local_dim,
            num_pairs: self.num_pairs,
            shots: per_block.into_iter().flatten().collect(),
        })
    }
}

/// RNG for shot block `block` of a run seeded with `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Convenience: attach `ancilla` to every system site and sample `shots`
/// pairwise Bell measurements.
pub fn sample_bell_shots(
    system: &DenseState,
    ancilla: &DenseState,
    shots: usize,
    seed: u64,
    workers: usize,
) -> Result<ShotStream, SimError> {
    let register = DenseState::with_ancillas(system, ancilla)?;
    BellSampler::new(&register)?.sample_stream(shots, seed, workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Letter;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &Array2<Complex64>, b: &Array2<Complex64>, tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < tol)
    }

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn xi_has_equal_bloch_components() {
        let xi = prepare_xi();
        let third = 1.0 / 3f64.sqrt();
        for l in ["X0", "Y0", "Z0"] {
            assert!((xi.expectation(&p(l)).unwrap() - third).abs() < 1e-10);
        }
        assert!((xi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let zero = DenseState::zero_state(2, 1).unwrap();
        assert_eq!(zero.expectation(&p("Z0")).unwrap(), 1.0);
        let phi = BellOutcome::PhiPlus.state();
        assert!((phi.expectation(&p("X0 X1")).unwrap() - 1.0).abs() < 1e-12);
        assert!((phi.expectation(&p("Y0 Y1")).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(zero.expectation(&p("Z1")), Err(SimError::Pauli(_))));
        assert!(matches!(zero.expectation(&p("+i Z0")), Err(SimError::NonHermitian(_))));
    }

    #[test]
    fn hw_operator_examples() {
        assert!(close(&hw_operator(2, 1, 0).unwrap(), &Letter::X.matrix(), 1e-12));
        let minus_i_y = Letter::Y.matrix().mapv(|v| v * c(0.0, -1.0));
        assert!(close(&hw_operator(2, 1, 1).unwrap(), &minus_i_y, 1e-12));
        assert!(matches!(hw_operator(1, 0, 0), Err(SimError::BadDimension(1))));
    }

    #[test]
    fn shift_and_clock_exchange_relation() {
        // Z X = w X Z for X|d> = |d+1>, Z|d> = w^d |d>
        for d in 2..6 {
            let x = hw_operator(d, 1, 0).unwrap();
            let z = hw_operator(d, 0, 1).unwrap();
            let lhs = z.dot(&x);
            let rhs = x.dot(&z).mapv(|v| v * root_of_unity(d, 1));
            assert!(close(&lhs, &rhs, 1e-12));
            // unitarity
            let xz = hw_operator(d, 2, 3).unwrap();
            let prod = xz.t().mapv(|v| v.conj()).dot(&xz);
            assert!(close(&prod, &Array2::eye(d).mapv(|v: f64| c(v, 0.0)), 1e-12));
        }
    }

    #[test]
    fn bell_states_from_generalized_family() {
        for o in BellOutcome::ALL {
            let p = o.to_pair();
            let g = generalized_bell_state(2, p.h, p.l).unwrap();
            assert!((o.state().inner(&g).norm() - 1.0).abs() < 1e-12, "{o}");
        }
        assert!(generalized_bell_state(3, 3, 0).is_err());
    }

    #[test]
    fn with_ancillas_layout() {
        let sys = DenseState::basis_state(2, &[1, 0]).unwrap();
        let anc = DenseState::basis_state(2, &[1]).unwrap();
        let reg = DenseState::with_ancillas(&sys, &anc).unwrap();
        // sites: s0=1, a0=1, s1=0, a1=1 -> 0b1101
        assert_eq!(reg.amplitudes()[0b1101], c(1.0, 0.0));
        let zz = reg.expectation(&p("Z0 Z1 Z2 Z3")).unwrap();
        assert!((zz + 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_eigenstate_always_measures_phi_plus() {
        let phi = BellOutcome::PhiPlus.state();
        let reg = phi.tensor(&phi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let shot = bell_measure_all_pairs(&reg, &mut rng).unwrap();
            assert!(shot.outcomes.iter().all(|&o| o == PairOutcome::new(0, 0)));
        }
        let sampler = BellSampler::new(&reg).unwrap();
        for _ in 0..50 {
            assert_eq!(sampler.sample(&mut rng).qubit_outcome(1), Some(BellOutcome::PhiPlus));
        }
    }

    #[test]
    fn product_zero_state_never_gives_psi() {
        let reg = DenseState::zero_state(2, 2).unwrap();
        let sampler = BellSampler::new(&reg).unwrap();
        let probs = sampler.joint_probabilities();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
        assert!(probs[2].abs() < 1e-12 && probs[3].abs() < 1e-12);
        let stream = sampler.sample_stream(100_000, 11, 1).unwrap();
        let phi_plus = stream.shots.iter().filter(|s| s.qubit_outcome(0) == Some(BellOutcome::PhiPlus)).count();
        assert!(stream.shots.iter().all(|s| matches!(
            s.qubit_outcome(0),
            Some(BellOutcome::PhiPlus) | Some(BellOutcome::PhiMinus)
        )));
        assert!((phi_plus as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn odd_register_rejected() {
        let s = DenseState::zero_state(2, 3).unwrap();
        assert_eq!(BellSampler::new(&s).err(), Some(SimError::OddRegister(3)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(bell_measure_all_pairs(&s, &mut rng).is_err());
    }

    #[test]
    fn capacity_limit() {
        assert!(matches!(DenseState::zero_state(2, 21), Err(SimError::Capacity { .. })));
        assert!(DenseState::zero_state(2, 20).is_ok());
        assert!(matches!(DenseState::zero_state(3, 13), Err(SimError::Capacity { .. })));
    }

    #[test]
    fn worker_count_does_not_change_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = DenseState::random(2, 2, &mut rng).unwrap();
        let a = sample_bell_shots(&sys, &prepare_xi(), 10_000, 42, 1).unwrap();
        let b = sample_bell_shots(&sys, &prepare_xi(), 10_000, 42, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for dim in [2, 3] {
            let sys = DenseState::random(dim, 2, &mut rng).unwrap();
            let anc = DenseState::random(dim, 1, &mut rng).unwrap();
            let stream = sample_bell_shots(&sys, &anc, 50, 1, 1).unwrap();
            let mut buf = Vec::new();
            stream.write_jsonl(&mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            if dim == 2 {
                assert!(text.lines().next().unwrap().contains('"'));
            }
            let back = ShotStream::read_jsonl(dim, buf.as_slice()).unwrap();
            assert_eq!(back, stream);
        }
    }
}
