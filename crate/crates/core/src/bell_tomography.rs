//! Qubit RDM estimation from pairwise Bell-basis shots.
//!
//! Each system qubit is paired with an ancilla prepared in the tetrahedral
//! state `xi` and the pair is measured in the Bell basis. Every Bell state
//! is a joint eigenstate of `XX`, `YY` and `ZZ`, so one outcome fixes all
//! three signs at once. Because `<a (x) a>` on `rho (x) xi` factorizes as
//! `<a>_rho / sqrt(3)`, a `k`-letter correlator is the mean signed product
//! over shots times `sqrt(3)^k`.

use itertools::Itertools;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Letter, PauliString};
use crate::state_sim::{prepare_xi, BellOutcome, ShotStream};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TomographyError {
    #[error("the shot stream is empty")]
    EmptyStream,
    #[error("qubit {0} appears more than once")]
    DuplicateQubit(usize),
    #[error("{qubits} qubits but {letters} letters")]
    LengthMismatch { qubits: usize, letters: usize },
    #[error("at least one qubit is required")]
    NoQubits,
    #[error("qubit {qubit} is outside a stream over {num_pairs} pairs")]
    QubitOutOfRange { qubit: usize, num_pairs: usize },
    #[error("k = {k} exceeds the number of qubits {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("stream has local dimension {0}, expected qubits")]
    NotQubits(usize),
}

/// Eigenvalue of `a (x) a` on a Bell outcome.
pub fn outcome_eigenvalue(outcome: BellOutcome, letter: Letter) -> i8 {
    use BellOutcome::*;
    use Letter::*;
    match (outcome, letter) {
        (PhiPlus, X) | (PhiPlus, Z) => 1,
        (PhiPlus, Y) => -1,
        (PhiMinus, X) => -1,
        (PhiMinus, Y) | (PhiMinus, Z) => 1,
        (PsiPlus, X) | (PsiPlus, Y) => 1,
        (PsiPlus, Z) => -1,
        (PsiMinus, _) => -1,
    }
}

/// Running sum of `+-1` products. Integer arithmetic makes merging exact in
/// any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SignAccumulator {
    pub sum: i64,
    pub count: u64,
}

impl SignAccumulator {
    pub fn push(&mut self, sign: i8) {
        self.sum += sign as i64;
        self.count += 1;
    }

    pub fn merge(self, other: SignAccumulator) -> SignAccumulator {
        SignAccumulator { sum: self.sum + other.sum, count: self.count + other.count }
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Sample standard deviation of the `+-1` values.
    pub fn sample_std(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let s = self.count as f64;
        let m = self.mean();
        (s / (s - 1.0) * (1.0 - m * m)).max(0.0).sqrt()
    }

    pub fn std_error(&self) -> f64 {
        self.sample_std() / (self.count as f64).sqrt()
    }
}

const FOLD_CHUNK: usize = 8192;

/// Folds `sign(shot)` over a stream in parallel chunks.
pub fn fold_signs<F>(stream: &ShotStream, sign: F) -> SignAccumulator
where
    F: Fn(&crate::state_sim::ShotRecord) -> i8 + Sync,
{
    stream
        .shots
        .par_chunks(FOLD_CHUNK)
        .map(|chunk| {
            let mut acc = SignAccumulator::default();
            chunk.iter().for_each(|s| acc.push(sign(s)));
            acc
        })
        .reduce(SignAccumulator::default, SignAccumulator::merge)
}

/// Signed product of Bell eigenvalues over the letters of a Pauli string,
/// with qubit `q` read from pair `q`.
pub fn signed_product(shot: &crate::state_sim::ShotRecord, op: &PauliString) -> i8 {
    op.letters().iter().fold(1i8, |acc, (&q, &l)| {
        acc * outcome_eigenvalue(BellOutcome::from_pair(shot.outcomes[q]).expect("qubit outcome"), l)
    })
}

/// Estimate of `tr(rho prod_i sigma^{a_i}_{j_i})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmEstimate {
    pub qubits: Vec<usize>,
    #[serde(with = "letters_text")]
    pub letters: Vec<Letter>,
    pub value: f64,
    pub std_error: f64,
    pub num_shots: usize,
}

impl RdmEstimate {
    pub fn letters_string(&self) -> String {
        self.letters.iter().map(|l| l.lower()).collect()
    }

    /// The Pauli string whose expectation this estimates.
    pub fn operator(&self) -> PauliString {
        PauliString::from_letters(self.qubits.iter().copied().zip(self.letters.iter().copied()))
    }
}

mod letters_text {
    use super::Letter;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(letters: &[Letter], s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&letters.iter().map(|l| l.lower()).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Letter>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| Letter::from_char(c).ok_or_else(|| serde::de::Error::custom(format!("bad letter {c}"))))
            .collect()
    }
}

fn check_qubit_stream(stream: &ShotStream) -> Result<(), TomographyError> {
    if stream.local_dim != 2 {
        return Err(TomographyError::NotQubits(stream.local_dim));
    }
    if stream.is_empty() {
        return Err(TomographyError::EmptyStream);
    }
    Ok(())
}

pub fn estimate_rdm_element(
    stream: &ShotStream,
    qubits: &[usize],
    letters: &[Letter],
) -> Result<RdmEstimate, TomographyError> {
    check_qubit_stream(stream)?;
    if qubits.len() != letters.len() {
        return Err(TomographyError::LengthMismatch { qubits: qubits.len(), letters: letters.len() });
    }
    if qubits.is_empty() {
        return Err(TomographyError::NoQubits);
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= stream.num_pairs {
            return Err(TomographyError::QubitOutOfRange { qubit: q, num_pairs: stream.num_pairs });
        }
        if qubits[..i].contains(&q) {
            return Err(TomographyError::DuplicateQubit(q));
        }
    }
    let acc = fold_signs(stream, |shot| {
        qubits.iter().zip(letters).fold(1i8, |s, (&q, &l)| {
            s * outcome_eigenvalue(BellOutcome::from_pair(shot.outcomes[q]).expect("qubit outcome"), l)
        })
    });
    let scale = 3f64.sqrt().powi(qubits.len() as i32);
    Ok(RdmEstimate {
        qubits: qubits.to_vec(),
        letters: letters.to_vec(),
        value: scale * acc.mean(),
        std_error: scale * acc.std_error(),
        num_shots: acc.count as usize,
    })
}

/// Every `k`-qubit correlator with non-identity letters, `C(n, k) 3^k` in
/// all, from one stream. Qubit sets and letters are in lexicographic order.
pub fn estimate_all_k_rdms(stream: &ShotStream, k: usize, n: usize) -> Result<Vec<RdmEstimate>, TomographyError> {
    check_qubit_stream(stream)?;
    if k > n {
        return Err(TomographyError::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(TomographyError::NoQubits);
    }
    if n > stream.num_pairs {
        return Err(TomographyError::QubitOutOfRange { qubit: n - 1, num_pairs: stream.num_pairs });
    }
    let index_sets: Vec<(Vec<usize>, Vec<Letter>)> = (0..n)
        .combinations(k)
        .flat_map(|qubits| {
            (0..k)
                .map(|_| Letter::ALL)
                .multi_cartesian_product()
                .map(move |letters| (qubits.clone(), letters))
        })
        .collect();
    index_sets
        .par_iter()
        .map(|(q, l)| estimate_rdm_element(stream, q, l))
        .collect()
}

fn xi_matrix() -> Array2<Complex64> {
    density_matrix(prepare_xi().amplitudes())
}

/// `|psi><psi|` for a single-site amplitude vector.
pub fn density_matrix(amplitudes: &[Complex64]) -> Array2<Complex64> {
    let d = amplitudes.len();
    Array2::from_shape_fn((d, d), |(r, c)| amplitudes[r] * amplitudes[c].conj())
}

/// Tetrahedral POVM `{xi/2, Z xi Z/2, X xi X/2, Y xi Y/2}`, listed for the
/// outcomes `Phi+, Phi-, Psi+, Psi-`.
pub fn sic_povm_elements() -> [Array2<Complex64>; 4] {
    let xi = xi_matrix();
    let conj = |l: Letter| {
        let s = l.matrix();
        s.dot(&xi).dot(&s).mapv(|v| v * 0.5)
    };
    [xi.mapv(|v| v * 0.5), conj(Letter::Z), conj(Letter::X), conj(Letter::Y)]
}

/// Bloch-vector estimate `sqrt(3) <a (x) a>` for `a = x, y, z` on one pair.
pub fn bloch_estimate(stream: &ShotStream, pair: usize) -> Result<[f64; 3], TomographyError> {
    let mut r = [0.0; 3];
    for (slot, l) in r.iter_mut().zip(Letter::ALL) {
        *slot = estimate_rdm_element(stream, &[pair], &[l])?.value;
    }
    Ok(r)
}

/// Single-qubit state from the shots of one pair.
///
/// Builds `(1 + r.sigma)/2` from [`bloch_estimate`]; when sampling noise
/// pushes `|r|` past 1 the eigenvalues are clipped to `[0, 1]` and the trace
/// renormalized, which lands on the pure state along `r`.
pub fn reconstruct_state_1q(stream: &ShotStream, pair: usize) -> Result<Array2<Complex64>, TomographyError> {
    let r = bloch_estimate(stream, pair)?;
    Ok(bloch_to_density(project_bloch(r)))
}

/// Eigenvalue clipping of `(1 + r.sigma)/2` expressed on the Bloch vector.
pub fn project_bloch(r: [f64; 3]) -> [f64; 3] {
    let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if len <= 1.0 {
        return r;
    }
    // eigenvalues (1 +- len)/2 clip to 1 and 0; trace is already 1
    let upper = ((1.0 + len) / 2.0).clamp(0.0, 1.0);
    let lower = ((1.0 - len) / 2.0).clamp(0.0, 1.0);
    let scale = (upper - lower) / (upper + lower) / len;
    [r[0] * scale, r[1] * scale, r[2] * scale]
}

pub fn bloch_to_density(r: [f64; 3]) -> Array2<Complex64> {
    let mut rho = Array2::<Complex64>::eye(2).mapv(|v| v * 0.5);
    for (c, l) in r.iter().zip(Letter::ALL) {
        rho = rho + l.matrix().mapv(|v| v * (c / 2.0));
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_sim::{sample_bell_shots, DenseState, PairOutcome, ShotRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(m: &Array2<Complex64>) -> Complex64 {
        (0..m.nrows()).map(|i| m[[i, i]]).sum()
    }

    fn stream_of(outcomes: &[BellOutcome]) -> ShotStream {
        ShotStream {
            local_dim: 2,
            num_pairs: 1,
            shots: outcomes.iter().map(|o| ShotRecord { outcomes: vec![o.to_pair()] }).collect(),
        }
    }

    #[test]
    fn eigenvalue_table() {
        assert_eq!(outcome_eigenvalue(BellOutcome::PhiPlus, Letter::X), 1);
        assert_eq!(outcome_eigenvalue(BellOutcome::PsiMinus, Letter::Y), -1);
        assert_eq!(outcome_eigenvalue(BellOutcome::PsiPlus, Letter::Z), -1);
        let rows: Vec<[i8; 3]> = BellOutcome::ALL
            .iter()
            .map(|&o| [Letter::X, Letter::Y, Letter::Z].map(|l| outcome_eigenvalue(o, l)))
            .collect();
        assert_eq!(rows, vec![[1, -1, 1], [-1, 1, 1], [1, 1, -1], [-1, -1, -1]]);
    }

    #[test]
    fn eigenvalue_table_matches_bell_states() {
        for o in BellOutcome::ALL {
            for l in Letter::ALL {
                let op = PauliString::from_letters([(0, l), (1, l)]);
                let exact = o.state().expectation(&op).unwrap();
                assert!((exact - outcome_eigenvalue(o, l) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn estimator_arithmetic() {
        let s = stream_of(&[BellOutcome::PhiPlus, BellOutcome::PhiPlus, BellOutcome::PsiPlus, BellOutcome::PhiMinus]);
        // z signs: 1, 1, -1, 1 -> mean 0.5
        let e = estimate_rdm_element(&s, &[0], &[Letter::Z]).unwrap();
        assert!((e.value - 3f64.sqrt() * 0.5).abs() < 1e-15);
        let sd = (4.0 / 3.0 * (1.0 - 0.25f64)).sqrt();
        assert!((e.std_error - 3f64.sqrt() * sd / 2.0).abs() < 1e-15);
        assert_eq!(e.num_shots, 4);
        assert_eq!(e.letters_string(), "z");
    }

    #[test]
    fn estimator_errors() {
        let s = stream_of(&[BellOutcome::PhiPlus]);
        let empty = ShotStream { local_dim: 2, num_pairs: 1, shots: vec![] };
        assert_eq!(estimate_rdm_element(&empty, &[0], &[Letter::X]), Err(TomographyError::EmptyStream));
        let two = ShotStream {
            local_dim: 2,
            num_pairs: 2,
            shots: vec![ShotRecord { outcomes: vec![PairOutcome::new(0, 0); 2] }],
        };
        assert_eq!(
            estimate_rdm_element(&two, &[1, 1], &[Letter::X, Letter::Y]),
            Err(TomographyError::DuplicateQubit(1))
        );
        assert!(matches!(
            estimate_rdm_element(&s, &[0], &[Letter::X, Letter::Y]),
            Err(TomographyError::LengthMismatch { .. })
        ));
        assert_eq!(estimate_all_k_rdms(&two, 3, 2), Err(TomographyError::KTooLarge { k: 3, n: 2 }));
    }

    #[test]
    fn zero_state_single_qubit() {
        let sys = DenseState::zero_state(2, 1).unwrap();
        let stream = sample_bell_shots(&sys, &prepare_xi(), 30_000, 17, 2).unwrap();
        let z = estimate_rdm_element(&stream, &[0], &[Letter::Z]).unwrap();
        assert!((z.value - 1.0).abs() <= 0.03);
        let x = estimate_rdm_element(&stream, &[0], &[Letter::X]).unwrap();
        assert!(x.value.abs() <= 0.03);
    }

    #[test]
    fn ghz_three_body_correlator() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![Complex64::new(0.0, 0.0); 8];
        amps[0] = Complex64::new(s, 0.0);
        amps[7] = Complex64::new(s, 0.0);
        let ghz = DenseState::new(2, 3, amps).unwrap();
        let op: PauliString = "X0 X1 X2".parse().unwrap();
        assert!((ghz.expectation(&op).unwrap() - 1.0).abs() < 1e-12);
        let shots = 30_000;
        let stream = sample_bell_shots(&ghz, &prepare_xi(), shots, 23, 2).unwrap();
        let est = estimate_rdm_element(&stream, &[0, 1, 2], &[Letter::X; 3]).unwrap();
        assert!((est.value - 1.0).abs() <= 3.0 * 27f64.sqrt() / (shots as f64).sqrt());
    }

    #[test]
    fn all_k_counts_and_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = DenseState::random(2, 3, &mut rng).unwrap();
        let stream = sample_bell_shots(&sys, &prepare_xi(), 2_000, 9, 1).unwrap();
        assert_eq!(estimate_all_k_rdms(&stream, 1, 2).unwrap().len(), 6);
        let all = estimate_all_k_rdms(&stream, 2, 3).unwrap();
        assert_eq!(all.len(), 27);
        for e in &all {
            assert_eq!(e, &estimate_rdm_element(&stream, &e.qubits, &e.letters).unwrap());
        }
    }

    #[test]
    fn xi_system_gives_equal_one_body_terms() {
        let sys = prepare_xi().tensor(&prepare_xi()).unwrap();
        let stream = sample_bell_shots(&sys, &prepare_xi(), 60_000, 31, 2).unwrap();
        for e in estimate_all_k_rdms(&stream, 1, 2).unwrap() {
            assert!((e.value - 1.0 / 3f64.sqrt()).abs() < 4.0 * e.std_error, "{e:?}");
        }
    }

    #[test]
    fn povm_structure() {
        let els = sic_povm_elements();
        let sum = els.iter().fold(Array2::<Complex64>::zeros((2, 2)), |acc, e| acc + e);
        for ((r, c), v) in sum.indexed_iter() {
            let want = if r == c { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
        for e in &els {
            assert!((trace(e) - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
        for i in 0..4 {
            for j in 0..4 {
                let overlap = trace(&els[i].dot(&els[j])).re * 4.0;
                let want = if i == j { 1.0 } else { 1.0 / 3.0 };
                assert!((overlap - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_of_plus_state() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DenseState::new(2, 1, vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0)]).unwrap();
        let stream = sample_bell_shots(&plus, &prepare_xi(), 100_000, 2, 2).unwrap();
        let r = bloch_estimate(&stream, 0).unwrap();
        let dist = ((r[0] - 1.0).powi(2) + r[1].powi(2) + r[2].powi(2)).sqrt();
        assert!(dist <= 0.03, "{r:?}");
        let rho = reconstruct_state_1q(&stream, 0).unwrap();
        assert!((trace(&rho).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_clips_to_bloch_ball() {
        let r = project_bloch([1.2, 0.0, 0.0]);
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert_eq!(project_bloch([0.3, 0.1, -0.2]), [0.3, 0.1, -0.2]);
        // all Phi+ outcomes imply r = sqrt(3) (1, -1, 1), far outside the ball
        let s = stream_of(&[BellOutcome::PhiPlus; 10]);
        let rho = reconstruct_state_1q(&s, 0).unwrap();
        let purity = trace(&rho.dot(&rho)).re;
        assert!((purity - 1.0).abs() < 1e-12);
    }
}
