//! Exact algebra of phase-tracked multi-qubit Pauli operators.
//!
//! A [`PauliString`] is `i^phase` times a tensor product of single-qubit
//! letters. Identity factors are never stored, so the weight is the size of
//! the letter map. Phases are kept as integer powers of `i`; nothing in this
//! module touches floating point except [`PauliString::to_dense`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest register that [`PauliString::to_dense`] will materialize.
pub const MAX_DENSE_QUBITS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("qubit index {index} is outside a register of {num_qubits} qubits")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("dense matrices are limited to {max} qubits, got {requested}")]
    TooLarge { requested: usize, max: usize },
    #[error("cannot parse Pauli string {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// A non-identity single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    X,
    Y,
    Z,
}

impl Letter {
    pub const ALL: [Letter; 3] = [Letter::X, Letter::Y, Letter::Z];

    /// Letter for a ternary branch choice: 0 -> X, 1 -> Y, 2 -> Z.
    pub fn from_branch(step: u8) -> Option<Letter> {
        match step {
            0 => Some(Letter::X),
            1 => Some(Letter::Y),
            2 => Some(Letter::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    pub fn lower(self) -> char {
        self.as_char().to_ascii_lowercase()
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c {
            'X' | 'x' => Some(Letter::X),
            'Y' | 'y' => Some(Letter::Y),
            'Z' | 'z' => Some(Letter::Z),
            _ => None,
        }
    }

    /// Product of two letters as `(power of i, result)`; `None` is the identity.
    fn product(self, other: Letter) -> (u8, Option<Letter>) {
        use Letter::*;
        match (self, other) {
            (a, b) if a == b => (0, None),
            (X, Y) => (1, Some(Z)),
            (Y, Z) => (1, Some(X)),
            (Z, X) => (1, Some(Y)),
            (Y, X) => (3, Some(Z)),
            (Z, Y) => (3, Some(X)),
            (X, Z) => (3, Some(Y)),
            _ => unreachable!(),
        }
    }

    /// 2x2 matrix of the letter.
    pub fn matrix(self) -> Array2<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let data = match self {
            Letter::X => [o, l, l, o],
            Letter::Y => [o, -i, i, o],
            Letter::Z => [l, o, o, -l],
        };
        Array2::from_shape_vec((2, 2), data.to_vec()).unwrap()
    }
}

/// `i^phase` times a sparse tensor product of Pauli letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct PauliString {
    phase: u8,
    letters: BTreeMap<usize, Letter>,
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn single(qubit: usize, letter: Letter) -> Self {
        let mut letters = BTreeMap::new();
        letters.insert(qubit, letter);
        Self { phase: 0, letters }
    }

    /// Builds a phase-free string. Later entries for a repeated qubit are
    /// multiplied in from the right.
    pub fn from_letters<I>(letters: I) -> Self
    where
        I: IntoIterator<Item = (usize, Letter)>,
    {
        letters
            .into_iter()
            .fold(Self::identity(), |acc, (q, l)| acc.multiply(&Self::single(q, l)))
    }

    pub fn with_phase(mut self, phase: u8) -> Self {
        self.phase = phase % 4;
        self
    }

    /// Power of `i` multiplying the letters, in `0..4`.
    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn phase_factor(&self) -> Complex64 {
        i_power(self.phase)
    }

    pub fn letters(&self) -> &BTreeMap<usize, Letter> {
        &self.letters
    }

    pub fn letter(&self, qubit: usize) -> Option<Letter> {
        self.letters.get(&qubit).copied()
    }

    pub fn weight(&self) -> usize {
        self.letters.len()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    /// Hermitian iff the phase is real.
    pub fn is_hermitian(&self) -> bool {
        self.phase.is_multiple_of(2)
    }

    /// Largest qubit index touched, if any.
    pub fn max_qubit(&self) -> Option<usize> {
        self.letters.keys().next_back().copied()
    }

    /// The same letters with phase `+1`.
    pub fn without_phase(&self) -> Self {
        Self { phase: 0, letters: self.letters.clone() }
    }

    pub fn multiply(&self, other: &PauliString) -> PauliString {
        let mut phase = self.phase + other.phase;
        let mut letters = self.letters.clone();
        for (&q, &b) in &other.letters {
            match letters.get(&q).copied() {
                None => {
                    letters.insert(q, b);
                }
                Some(a) => {
                    let (p, c) = a.product(b);
                    phase += p;
                    match c {
                        Some(c) => {
                            letters.insert(q, c);
                        }
                        None => {
                            letters.remove(&q);
                        }
                    }
                }
            }
        }
        PauliString { phase: phase % 4, letters }
    }

    /// True iff `self * other == -(other * self)`.
    pub fn anticommutes(&self, other: &PauliString) -> bool {
        let (small, large) = if self.weight() <= other.weight() {
            (self, other)
        } else {
            (other, self)
        };
        let clashes = small
            .letters
            .iter()
            .filter(|(q, a)| large.letters.get(q).is_some_and(|b| b != *a))
            .count();
        clashes % 2 == 1
    }

    pub fn commutes(&self, other: &PauliString) -> bool {
        !self.anticommutes(other)
    }

    /// Dense `2^num_qubits` matrix. Qubit 0 is the leftmost tensor factor.
    pub fn to_dense(&self, num_qubits: usize) -> Result<Array2<Complex64>, PauliError> {
        if num_qubits > MAX_DENSE_QUBITS {
            return Err(PauliError::TooLarge { requested: num_qubits, max: MAX_DENSE_QUBITS });
        }
        if let Some(q) = self.max_qubit() {
            if q >= num_qubits {
                return Err(PauliError::IndexOutOfRange { index: q, num_qubits });
            }
        }
        let dim = 1usize << num_qubits;
        let masks = self.masks(num_qubits);
        let mut out = Array2::zeros((dim, dim));
        for col in 0..dim {
            let (row, amp) = masks.apply(col);
            out[[row, col]] = amp;
        }
        Ok(out)
    }

    /// Bit masks describing the action on computational basis states of a
    /// `num_qubits` register (qubit 0 is the most significant bit).
    pub(crate) fn masks(&self, num_qubits: usize) -> PauliMasks {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut y_count = 0u8;
        for (&q, &l) in &self.letters {
            let bit = 1usize << (num_qubits - 1 - q);
            match l {
                Letter::X => x |= bit,
                Letter::Z => z |= bit,
                Letter::Y => {
                    x |= bit;
                    z |= bit;
                    y_count += 1;
                }
            }
        }
        PauliMasks { x, z, phase: (self.phase + y_count) % 4 }
    }
}

/// `P|b> = i^phase (-1)^{popcount(b & z)} |b ^ x>`, using `Y = iXZ`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PauliMasks {
    pub x: usize,
    pub z: usize,
    pub phase: u8,
}

impl PauliMasks {
    #[inline]
    pub fn apply(&self, basis: usize) -> (usize, Complex64) {
        let sign = if (basis & self.z).count_ones() % 2 == 1 { 2 } else { 0 };
        (basis ^ self.x, i_power(self.phase + sign))
    }
}

pub fn i_power(p: u8) -> Complex64 {
    match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

impl Mul for &PauliString {
    type Output = PauliString;
    fn mul(self, rhs: &PauliString) -> PauliString {
        self.multiply(rhs)
    }
}

impl Mul for PauliString {
    type Output = PauliString;
    fn mul(self, rhs: PauliString) -> PauliString {
        self.multiply(&rhs)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        if self.letters.is_empty() {
            return f.write_str(" I");
        }
        for (q, l) in &self.letters {
            write!(f, " {}{}", l.as_char(), q)?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| PauliError::Parse { input: s.to_string(), reason: reason.to_string() };
        let mut tokens = s.split_whitespace().peekable();
        let phase = match tokens.peek().copied() {
            Some("+") => Some(0),
            Some("+i") => Some(1),
            Some("-") => Some(2),
            Some("-i") => Some(3),
            _ => None,
        };
        if phase.is_some() {
            tokens.next();
        }
        let mut out = PauliString::identity().with_phase(phase.unwrap_or(0));
        let mut saw_token = false;
        for tok in tokens {
            saw_token = true;
            if tok == "I" {
                continue;
            }
            let mut chars = tok.chars();
            let head = chars.next().ok_or_else(|| err("empty token"))?;
            let rest = chars.as_str();
            if head == 'I' {
                rest.parse::<usize>().map_err(|_| err("bad qubit index"))?;
                continue;
            }
            let letter = Letter::from_char(head)
                .filter(|_| head.is_ascii_uppercase())
                .ok_or_else(|| err("expected a letter X, Y, Z or I"))?;
            let q = rest.parse::<usize>().map_err(|_| err("bad qubit index"))?;
            if out.letters.contains_key(&q) {
                return Err(err("repeated qubit index"));
            }
            out.letters.insert(q, letter);
        }
        if !saw_token && phase.is_none() {
            return Err(err("empty input"));
        }
        Ok(out)
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
