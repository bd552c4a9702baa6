//! Heisenberg-Weyl correlators on qudits from generalized Bell shots, with
//! fiducial-state validation and the covariant POVM built from a fiducial.

use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state_sim::{
    generalized_bell_state, hw_operator, prepare_xi, root_of_unity, DenseState, PairOutcome, ShotRecord,
    ShotStream, SimError, NORM_TOLERANCE,
};

/// Smallest overlap magnitude accepted by default.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Tolerance for classifying a fiducial as an exact SIC fiducial.
pub const SIC_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuditError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("fiducial has {got} amplitudes, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fiducial norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("overlap tr(X^{f} Z^-{g} xi) = {magnitude:e} is below the threshold {threshold:e}")]
    ZeroOverlap { f: usize, g: usize, magnitude: f64, threshold: f64 },
    #[error("term on site {0} is the identity")]
    IdentityTerm(usize),
    #[error("site {0} appears more than once")]
    DuplicateSite(usize),
    #[error("site {site} is outside a stream over {num_pairs} pairs")]
    SiteOutOfRange { site: usize, num_pairs: usize },
    #[error("stream has dimension {stream} but the fiducial has dimension {fiducial}")]
    DimensionMismatch { stream: usize, fiducial: usize },
    #[error("the shot stream is empty")]
    EmptyStream,
    #[error("at least one term is required")]
    NoTerms,
    #[error("no built-in fiducial for dimension {0}")]
    NoBuiltin(usize),
    #[error("fiducial file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FiducialKind {
    /// Every non-trivial overlap has magnitude `1/sqrt(D+1)`.
    ExactSic,
    /// Overlaps differ; `delta` is the smallest magnitude.
    Relaxed { delta: f64 },
}

/// Ancilla state for the qudit protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialState {
    dimension: usize,
    amplitudes: Vec<Complex64>,
    kind: FiducialKind,
}

/// `tr(X^f Z^{-g} xi)` for one `(f, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub f: usize,
    pub g: usize,
    pub value: Complex64,
    pub magnitude: f64,
}

fn overlap_of(amplitudes: &[Complex64], f: usize, g: usize) -> Complex64 {
    // <xi| X^f Z^{-g} |xi> = sum_d conj(xi_{d+f}) w^{-g d} xi_d
    let dim = amplitudes.len();
    (0..dim)
        .map(|d| amplitudes[(d + f) % dim].conj() * root_of_unity(dim, -((g * d) as i64)) * amplitudes[d])
        .sum()
}

impl FiducialState {
    /// Validates and classifies a unit vector.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self, QuditError> {
        let dimension = amplitudes.len();
        if dimension < 2 {
            return Err(QuditError::BadDimension(dimension));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuditError::NotNormalized(norm));
        }
        let target = 1.0 / ((dimension + 1) as f64).sqrt();
        let mags: Vec<f64> = nontrivial_pairs(dimension).map(|(f, g)| overlap_of(&amplitudes, f, g).norm()).collect();
        let exact = mags.iter().all(|m| (m - target).abs() <= SIC_TOLERANCE);
        let kind = if exact {
            FiducialKind::ExactSic
        } else {
            FiducialKind::Relaxed { delta: mags.iter().copied().fold(f64::INFINITY, f64::min) }
        };
        Ok(Self { dimension, amplitudes, kind })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn kind(&self) -> FiducialKind {
        self.kind
    }

    pub fn is_exact_sic(&self) -> bool {
        self.kind == FiducialKind::ExactSic
    }

    /// Smallest overlap magnitude over `(f, g) != (0, 0)`.
    pub fn delta(&self) -> f64 {
        self.overlaps().iter().map(|o| o.magnitude).fold(f64::INFINITY, f64::min)
    }

    /// `tr(X^f Z^{-g} xi)`; exponents are reduced modulo `D`.
    pub fn overlap(&self, f: i64, g: i64) -> Complex64 {
        let d = self.dimension as i64;
        overlap_of(&self.amplitudes, f.rem_euclid(d) as usize, g.rem_euclid(d) as usize)
    }

    /// All overlaps except `(0, 0)`, ordered by `f` then `g`.
    pub fn overlaps(&self) -> Vec<Overlap> {
        nontrivial_pairs(self.dimension)
            .map(|(f, g)| {
                let value = overlap_of(&self.amplitudes, f, g);
                Overlap { f, g, value, magnitude: value.norm() }
            })
            .collect()
    }

    /// Fails with the first overlap whose magnitude is below `threshold`.
    pub fn validate(&self, threshold: f64) -> Result<(), QuditError> {
        match self.overlaps().into_iter().find(|o| o.magnitude < threshold) {
            Some(o) => Err(QuditError::ZeroOverlap { f: o.f, g: o.g, magnitude: o.magnitude, threshold }),
            None => Ok(()),
        }
    }

    pub fn state(&self) -> DenseState {
        DenseState::new(self.dimension, 1, self.amplitudes.clone()).unwrap()
    }

    pub fn density(&self) -> Array2<Complex64> {
        let a = &self.amplitudes;
        Array2::from_shape_fn((self.dimension, self.dimension), |(r, c)| a[r] * a[c].conj())
    }

    /// Complex conjugate vector, whose projector is the transpose of this one.
    pub fn conjugate(&self) -> FiducialState {
        Self::new(self.amplitudes.iter().map(|a| a.conj()).collect()).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Self, QuditError> {
        let file: FiducialFile = serde_json::from_str(text).map_err(|e| QuditError::Parse(e.to_string()))?;
        if file.amplitudes.len() != file.dimension {
            return Err(QuditError::LengthMismatch { expected: file.dimension, got: file.amplitudes.len() });
        }
        Self::new(file.amplitudes.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
    }

    pub fn to_json(&self) -> String {
        let file = FiducialFile {
            dimension: self.dimension,
            amplitudes: self.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        };
        serde_json::to_string(&file).unwrap()
    }

    pub fn report(&self, threshold: f64) -> FiducialReport {
        FiducialReport {
            dimension: self.dimension,
            classification: self.kind,
            delta: self.delta(),
            threshold,
            sic_target: 1.0 / ((self.dimension + 1) as f64).sqrt(),
            valid: self.validate(threshold).is_ok(),
            overlaps: self.overlaps(),
        }
    }
}

fn nontrivial_pairs(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |f| (0..dim).map(move |g| (f, g))).filter(|&p| p != (0, 0))
}

#[derive(Debug, Serialize, Deserialize)]
struct FiducialFile {
    dimension: usize,
    amplitudes: Vec<[f64; 2]>,
}

/// Validation summary for a fiducial.
#[derive(Debug, Clone, Serialize)]
pub struct FiducialReport {
    pub dimension: usize,
    pub classification: FiducialKind,
    pub delta: f64,
    pub threshold: f64,
    pub sic_target: f64,
    pub valid: bool,
    pub overlaps: Vec<Overlap>,
}

impl fmt::Display for FiducialReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dimension {}", self.dimension)?;
        match self.classification {
            FiducialKind::ExactSic => writeln!(f, "classification exact_sic (target {:.12})", self.sic_target)?,
            FiducialKind::Relaxed { delta } => writeln!(f, "classification relaxed (delta {delta:.12})")?,
        }
        writeln!(f, "threshold {:e}: {}", self.threshold, if self.valid { "ok" } else { "FAILED" })?;
        writeln!(f, "f g |tr(X^f Z^-g xi)|")?;
        for o in &self.overlaps {
            writeln!(f, "{} {} {:.12}", o.f, o.g, o.magnitude)?;
        }
        Ok(())
    }
}

/// `(0, 1, -1)/sqrt(2)`.
pub fn qutrit_fiducial() -> FiducialState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    FiducialState::new(vec![Complex64::new(0.0, 0.0), Complex64::new(s, 0.0), Complex64::new(-s, 0.0)]).unwrap()
}

/// The tetrahedral qubit ancilla.
pub fn qubit_fiducial() -> FiducialState {
    FiducialState::new(prepare_xi().amplitudes().to_vec()).unwrap()
}

pub fn builtin_fiducial(dimension: usize) -> Result<FiducialState, QuditError> {
    match dimension {
        2 => Ok(qubit_fiducial()),
        3 => Ok(qutrit_fiducial()),
        d => Err(QuditError::NoBuiltin(d)),
    }
}

/// `X^f Z^g` on one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HwTerm {
    pub f: usize,
    pub g: usize,
    pub site: usize,
}

impl HwTerm {
    pub fn new(f: usize, g: usize, site: usize) -> Self {
        Self { f, g, site }
    }
}

/// Eigenvalue exponent of `X^f Z^g (x) X^f Z^{-g}` on `|Phi_{hl}>`:
/// the phase is `w^(g h - f l)`.
pub fn eigen_exponent(dim: usize, f: usize, g: usize, outcome: PairOutcome) -> usize {
    let d = dim as i64;
    ((g * outcome.h) as i64 - (f * outcome.l) as i64).rem_euclid(d) as usize
}

/// Counts of the total phase exponent; merging is exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseHistogram {
    counts: Vec<u64>,
}

impl PhaseHistogram {
    pub fn new(dim: usize) -> Self {
        Self { counts: vec![0; dim] }
    }

    pub fn push(&mut self, exponent: usize) {
        self.counts[exponent] += 1;
    }

    pub fn merge(mut self, other: PhaseHistogram) -> PhaseHistogram {
        self.counts.iter_mut().zip(other.counts).for_each(|(a, b)| *a += b);
        self
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mean of `w^exponent`.
    pub fn mean(&self) -> Complex64 {
        let dim = self.counts.len();
        let sum: Complex64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(r, &c)| root_of_unity(dim, r as i64) * c as f64)
            .sum();
        sum / self.total() as f64
    }

    /// Standard error of the mean of unit-modulus samples.
    pub fn std_error(&self) -> f64 {
        let s = self.total() as f64;
        if s < 2.0 {
            return f64::INFINITY;
        }
        let var = (1.0 - self.mean().norm_sqr()).max(0.0) * s / (s - 1.0);
        (var / s).sqrt()
    }
}

fn phase_histogram(stream: &ShotStream, terms: &[HwTerm]) -> PhaseHistogram {
    let dim = stream.local_dim;
    let exponent = |shot: &ShotRecord| {
        terms.iter().map(|t| eigen_exponent(dim, t.f, t.g, shot.outcomes[t.site])).sum::<usize>() % dim
    };
    stream
        .shots
        .par_chunks(8192)
        .map(|chunk| {
            let mut hist = PhaseHistogram::new(dim);
            chunk.iter().for_each(|s| hist.push(exponent(s)));
            hist
        })
        .reduce(|| PhaseHistogram::new(dim), PhaseHistogram::merge)
}

/// Estimate of `tr(rho prod_i X^{f_i} Z^{g_i})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HwEstimate {
    pub terms: Vec<HwTerm>,
    pub value: Complex64,
    pub std_error: f64,
    /// Product of the ancilla overlaps divided out of the raw mean.
    pub overlap_product: Complex64,
    pub num_shots: usize,
}

/// Estimate with the default overlap threshold.
pub fn estimate_hw_correlator(
    stream: &ShotStream,
    terms: &[HwTerm],
    fiducial: &FiducialState,
) -> Result<HwEstimate, QuditError> {
    estimate_hw_correlator_with_threshold(stream, terms, fiducial, DEFAULT_DELTA)
}

/// Mean over shots of `prod_i w^(g_i h_i - f_i l_i)`, divided by
/// `prod_i tr(X^{f_i} Z^{-g_i} xi)`.
pub fn estimate_hw_correlator_with_threshold(
    stream: &ShotStream,
    terms: &[HwTerm],
    fiducial: &FiducialState,
    threshold: f64,
) -> Result<HwEstimate, QuditError> {
    let dim = fiducial.dimension();
    if stream.local_dim != dim {
        return Err(QuditError::DimensionMismatch { stream: stream.local_dim, fiducial: dim });
    }
    if terms.is_empty() {
        return Err(QuditError::NoTerms);
    }
    if stream.is_empty() {
        return Err(QuditError::EmptyStream);
    }
    let mut seen = vec![false; stream.num_pairs];
    let mut reduced = Vec::with_capacity(terms.len());
    let mut overlap_product = Complex64::new(1.0, 0.0);
    for t in terms {
        if t.site >= stream.num_pairs {
            return Err(QuditError::SiteOutOfRange { site: t.site, num_pairs: stream.num_pairs });
        }
        if std::mem::replace(&mut seen[t.site], true) {
            return Err(QuditError::DuplicateSite(t.site));
        }
        let (f, g) = (t.f % dim, t.g % dim);
        if (f, g) == (0, 0) {
            return Err(QuditError::IdentityTerm(t.site));
        }
        let ov = fiducial.overlap(f as i64, g as i64);
        if ov.norm() < threshold {
            return Err(QuditError::ZeroOverlap { f, g, magnitude: ov.norm(), threshold });
        }
        overlap_product *= ov;
        reduced.push(HwTerm::new(f, g, t.site));
    }
    let hist = phase_histogram(stream, &reduced);
    Ok(HwEstimate {
        value: hist.mean() / overlap_product,
        std_error: hist.std_error() / overlap_product.norm(),
        overlap_product,
        num_shots: stream.len(),
        terms: reduced,
    })
}

/// `E_{hl} = X^h Z^l xi Z^{-l} X^{-h} / D`, indexed by `h * D + l`.
pub fn hw_sic_elements(fiducial: &FiducialState) -> Vec<Array2<Complex64>> {
    let dim = fiducial.dimension();
    let xi = fiducial.density();
    let mut out = Vec::with_capacity(dim * dim);
    for h in 0..dim {
        for l in 0..dim {
            let u = hw_operator(dim, h as i64, l as i64).unwrap();
            let adj = u.t().mapv(|v| v.conj());
            out.push(u.dot(&xi).dot(&adj).mapv(|v| v / dim as f64));
        }
    }
    out
}

/// Born-rule POVM on the system when the ancilla holds `fiducial` and the
/// pair is measured in the generalized Bell basis. With
/// `|Phi_{hl}> = (X^h Z^l (x) 1)|Phi_00>` the ancilla projector enters
/// transposed, so this is [`hw_sic_elements`] of the conjugate fiducial.
pub fn effective_povm(fiducial: &FiducialState) -> Vec<Array2<Complex64>> {
    hw_sic_elements(&fiducial.conjugate())
}

/// `|<psi_i|psi_j>|^2` for `psi_{hl} = X^h Z^l xi`, indexed by `h * D + l`.
pub fn sic_overlap_matrix(fiducial: &FiducialState) -> Array2<f64> {
    let dim = fiducial.dimension();
    let xi = fiducial.state();
    let vectors: Vec<DenseState> = (0..dim * dim)
        .map(|i| {
            let mut v = xi.clone();
            v.apply_local(0, &hw_operator(dim, (i / dim) as i64, (i % dim) as i64).unwrap()).unwrap();
            v
        })
        .collect();
    Array2::from_shape_fn((dim * dim, dim * dim), |(i, j)| vectors[i].inner(&vectors[j]).norm_sqr())
}

/// Largest entry of `|sum_i E_i - 1|`.
pub fn completeness_error(elements: &[Array2<Complex64>]) -> f64 {
    let dim = elements[0].nrows();
    let mut sum = Array2::<Complex64>::zeros((dim, dim));
    for e in elements {
        sum += e;
    }
    let eye = Array2::<Complex64>::eye(dim);
    (sum - eye).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Numerical check of the generalized Bell basis in dimension `D`.
#[derive(Debug, Clone, Serialize)]
pub struct BellBasisReport {
    pub dimension: usize,
    /// Largest `|<Phi_a|Phi_b> - delta_ab|`.
    pub orthonormality_error: f64,
    /// Largest deviation of `X^f Z^g (x) X^f Z^{-g} |Phi_{hl}>` from
    /// `w^(g h - f l) |Phi_{hl}>`.
    pub eigen_error: f64,
    pub combinations: usize,
}

pub fn check_bell_basis(dim: usize) -> Result<BellBasisReport, QuditError> {
    if dim < 2 {
        return Err(QuditError::BadDimension(dim));
    }
    let basis: Vec<(usize, usize, DenseState)> = (0..dim)
        .flat_map(|h| (0..dim).map(move |l| (h, l)))
        .map(|(h, l)| Ok((h, l, generalized_bell_state(dim, h, l)?)))
        .collect::<Result<_, SimError>>()?;
    let mut orthonormality_error: f64 = 0.0;
    for (i, (_, _, a)) in basis.iter().enumerate() {
        for (j, (_, _, b)) in basis.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            orthonormality_error = orthonormality_error.max((a.inner(b) - expected).norm());
        }
    }
    let mut eigen_error: f64 = 0.0;
    let mut combinations = 0;
    for f in 0..dim {
        for g in 0..dim {
            let left = hw_operator(dim, f as i64, g as i64)?;
            let right = hw_operator(dim, f as i64, -(g as i64))?;
            for (h, l, state) in &basis {
                let mut image = state.clone();
                image.apply_local(0, &left)?;
                image.apply_local(1, &right)?;
                let phase = root_of_unity(dim, eigen_exponent(dim, f, g, PairOutcome::new(*h, *l)) as i64);
                let err = image
                    .amplitudes()
                    .iter()
                    .zip(state.amplitudes())
                    .map(|(x, y)| (x - phase * y).norm())
                    .fold(0.0, f64::max);
                eigen_error = eigen_error.max(err);
                combinations += 1;
            }
        }
    }
    Ok(BellBasisReport { dimension: dim, orthonormality_error, eigen_error, combinations })
}
