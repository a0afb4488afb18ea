//! Sparse algebra of n-qubit Pauli words and the normalized su(2^n) basis.
//!
//! A word is stored as a pair of bit masks: bit `k` of `x` (resp. `z`) is set
//! when qubit `k` carries an X (resp. Z) factor, and a qubit with both bits set
//! carries Y. The basis element associated with a word `P` is
//! `X_P = P / 2^(n/2)`, which is orthonormal under `tr(A† B)`.
//!
//! Text form lists qubit 0 first: `"XZI"` is `σx ⊗ σz ⊗ I`. The same ordering is
//! used for dense matrices, so qubit 0 is the most significant bit of a
//! computational-basis index.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest qubit count a word can describe.
pub const MAX_QUBITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

/// A global phase `i^k`, `k ∈ {0, 1, 2, 3}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: u32) -> Self {
        Phase((k % 4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn to_complex<T: Real>(self) -> Complex<T> {
        match self.0 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase::from_exponent(u32::from(self.0) + u32::from(rhs.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn new(n: usize, x_mask: u64, z_mask: u64) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Dimension(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n}"
            )));
        }
        let limit = full_mask(n);
        if x_mask & !limit != 0 || z_mask & !limit != 0 {
            return Err(Error::Dimension(format!(
                "masks ({x_mask:#x}, {z_mask:#x}) exceed {n} qubits"
            )));
        }
        Ok(PauliString {
            n,
            x: x_mask,
            z: z_mask,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(n, 0, 0)
    }

    /// A single-qubit letter on `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, letter: Letter) -> Result<Self> {
        Self::from_letters(n, &[(qubit, letter)])
    }

    pub fn from_letters(n: usize, letters: &[(usize, Letter)]) -> Result<Self> {
        let mut x = 0u64;
        let mut z = 0u64;
        for &(q, l) in letters {
            if q >= n {
                return Err(Error::IndexOutOfBounds { index: q, len: n });
            }
            let (bx, bz) = l.bits();
            if bx {
                x |= 1 << q;
            }
            if bz {
                z |= 1 << q;
            }
        }
        Self::new(n, x, z)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        match ((self.x >> qubit) & 1, (self.z >> qubit) & 1) {
            (0, 0) => Letter::I,
            (1, 0) => Letter::X,
            (1, 1) => Letter::Y,
            _ => Letter::Z,
        }
    }

    /// Qubits with a non-identity factor, ascending.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        let mask = self.x | self.z;
        (0..self.n).filter(move |q| (mask >> q) & 1 == 1)
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z) ^ (self.z & other.x)).count_ones() % 2 == 0
    }

    /// Canonical basis order: weight, then support (lexicographic), then letters.
    pub fn canonical_cmp(&self, other: &PauliString) -> Ordering {
        self.weight()
            .cmp(&other.weight())
            .then_with(|| self.support().cmp(other.support()))
            .then_with(|| {
                let a = self.support().map(|q| self.letter(q));
                let b = other.support().map(|q| other.letter(q));
                a.cmp(b)
            })
    }

    /// Dense `2^n × 2^n` matrix of the (unnormalized) word.
    pub fn to_dense<T: Real>(&self) -> DMatrix<Complex<T>> {
        let dim = 1usize << self.n;
        let flip = self.index_mask(self.x);
        let zidx = self.index_mask(self.z);
        let y_phase = Phase::from_exponent((self.x & self.z).count_ones());
        let mut m = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
        for col in 0..dim {
            let sign = if (zidx & col as u64).count_ones() % 2 == 1 {
                Phase::MINUS_ONE
            } else {
                Phase::ONE
            };
            m[((col as u64 ^ flip) as usize, col)] = (y_phase * sign).to_complex();
        }
        m
    }

    /// Maps a qubit mask to the corresponding computational-basis index mask.
    fn index_mask(&self, mask: u64) -> u64 {
        (0..self.n)
            .filter(|q| (mask >> q) & 1 == 1)
            .fold(0, |acc, q| acc | 1 << (self.n - 1 - q))
    }
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.letter(q).as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .enumerate()
            .map(|(q, c)| match c.to_ascii_uppercase() {
                'I' => Ok((q, Letter::I)),
                'X' => Ok((q, Letter::X)),
                'Y' => Ok((q, Letter::Y)),
                'Z' => Ok((q, Letter::Z)),
                _ => Err(Error::PauliParse(s.to_string())),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::PauliParse(s.to_string()));
        }
        Self::from_letters(letters.len(), &letters)
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Product of two words: `a · b = phase · product`.
pub fn multiply(a: &PauliString, b: &PauliString) -> Result<(Phase, PauliString)> {
    if a.n != b.n {
        return Err(Error::Dimension(format!(
            "cannot multiply {}-qubit and {}-qubit words",
            a.n, b.n
        )));
    }
    let (ax, az, bx, bz) = (a.x, a.z, b.x, b.z);
    let a_x = ax & !az;
    let a_y = ax & az;
    let a_z = !ax & az;
    let b_x = bx & !bz;
    let b_y = bx & bz;
    let b_z = !bx & bz;
    // Cyclic pairs (XY, YZ, ZX) give +i, anticyclic pairs give -i.
    let plus = (a_x & b_y) | (a_y & b_z) | (a_z & b_x);
    let minus = (a_y & b_x) | (a_z & b_y) | (a_x & b_z);
    let phase = Phase::from_exponent(plus.count_ones() + 3 * minus.count_ones());
    Ok((
        phase,
        PauliString {
            n: a.n,
            x: ax ^ bx,
            z: az ^ bz,
        },
    ))
}

/// Commutator of two normalized basis elements.
///
/// Returns `Some((sign, word))` with `[iX_a, iX_b] = sign · 2^(1 - n/2) · iX_word`,
/// or `None` when the words commute.
pub fn commutator(a: &PauliString, b: &PauliString) -> Result<Option<(i8, PauliString)>> {
    let (phase, product) = multiply(a, b)?;
    if a.commutes_with(b) {
        return Ok(None);
    }
    // Anticommuting words multiply to ±i times a Hermitian word, and
    // [iX_a, iX_b] = -2 a b / 2^n = 2 i φ 2^(-n/2) (iX_word) for a b = φ word.
    let sign = match phase {
        Phase::I => -1,
        Phase::MINUS_I => 1,
        _ => unreachable!("anticommuting Pauli words have an imaginary product phase"),
    };
    Ok(Some((sign, product)))
}

/// An ordered list of basis elements with O(1) index lookup.
#[derive(Clone, Debug)]
pub struct PauliBasis {
    n: usize,
    elements: Vec<PauliString>,
    index: HashMap<PauliString, usize>,
}

impl PauliBasis {
    /// All `4^n - 1` non-identity words in canonical order.
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 || n > 12 {
            return Err(Error::TooLarge {
                qubits: n,
                limit: 12,
            });
        }
        let mut elements = Vec::with_capacity((1 << (2 * n)) - 1);
        for x in 0..(1u64 << n) {
            for z in 0..(1u64 << n) {
                if x != 0 || z != 0 {
                    elements.push(PauliString { n, x, z });
                }
            }
        }
        elements.sort_by(|a, b| a.canonical_cmp(b));
        Self::from_elements(n, elements)
    }

    pub fn from_elements(n: usize, elements: Vec<PauliString>) -> Result<Self> {
        let mut index = HashMap::with_capacity(elements.len());
        for (i, p) in elements.iter().enumerate() {
            if p.n != n {
                return Err(Error::Dimension(format!(
                    "basis element {p} does not act on {n} qubits"
                )));
            }
            if p.is_identity() {
                return Err(Error::InvalidModel(
                    "the identity is not an su(N) basis element".into(),
                ));
            }
            if index.insert(*p, i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate basis element {p}")));
            }
        }
        Ok(PauliBasis { n, elements, index })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&PauliString> {
        self.elements.get(i)
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn iter(&self) -> impl Iterator<Item = &PauliString> {
        self.elements.iter()
    }

    /// Dense matrix of the normalized element `X_i`.
    pub fn element_dense<T: Real>(&self, i: usize) -> Result<DMatrix<Complex<T>>> {
        let p = self.get(i).ok_or(Error::IndexOutOfBounds {
            index: i,
            len: self.len(),
        })?;
        Ok(p.to_dense::<T>() * Complex::new(normalization::<T>(self.n), T::zero()))
    }
}

/// `2^(-n/2)`, the factor taking a Pauli word to an orthonormal basis element.
pub fn normalization<T: Real>(n: usize) -> T {
    T::lit(2f64.powf(-(n as f64) / 2.0))
}

/// One term `C_jkl` of a structure-constant expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StructureTerm {
    /// Index `l` of the resulting element in the basis.
    pub target: usize,
    /// Sign of the coefficient; its magnitude is always `2^(1 - n/2)`.
    pub sign: i8,
    pub num_qubits: usize,
}

impl StructureTerm {
    pub fn coefficient<T: Real>(&self) -> T {
        T::lit(f64::from(self.sign) * 2f64.powf(1.0 - self.num_qubits as f64 / 2.0))
    }
}

/// Structure constants `C_jkl` of `[iX_j, iX_k] = Σ_l C_jkl iX_l`.
///
/// At most one term is nonzero for Pauli bases; commuting pairs give an empty list.
pub fn commutator_structure(j: usize, k: usize, basis: &PauliBasis) -> Result<Vec<StructureTerm>> {
    let len = basis.len();
    let a = basis.get(j).ok_or(Error::IndexOutOfBounds { index: j, len })?;
    let b = basis.get(k).ok_or(Error::IndexOutOfBounds { index: k, len })?;
    match commutator(a, b)? {
        None => Ok(Vec::new()),
        Some((sign, word)) => {
            let target = basis
                .index_of(&word)
                .ok_or_else(|| Error::NotInBasis(word.to_string()))?;
            Ok(vec![StructureTerm {
                target,
                sign,
                num_qubits: basis.num_qubits(),
            }])
        }
    }
}

/// Hilbert–Schmidt inner product `tr(A† B)`; real part returned (exact for Hermitian inputs).
pub fn hs_inner<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> Result<T> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "hs_inner needs equal square matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    Ok(acc.re)
}

/// Expansion `O = identity · I/2^(n/2) + Σ_j o_j X_j` of a Hermitian observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableExpansion<T> {
    /// Coefficient on the normalized identity `I / 2^(n/2)`; excluded from the su(N) basis.
    pub identity: T,
    /// Nonzero `(basis index, o_j)` pairs in basis order.
    pub terms: Vec<(usize, T)>,
}

/// Projects a dense Hermitian matrix onto the normalized Pauli basis.
///
/// Coefficients with magnitude below `1e-14 · ‖O‖_max` are dropped.
pub fn expand_observable<T: Real>(
    o: &DMatrix<Complex<T>>,
    basis: &PauliBasis,
) -> Result<ObservableExpansion<T>> {
    let n = basis.num_qubits();
    let dim = 1usize << n;
    if o.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "observable is {:?}, expected {dim}×{dim}",
            o.shape()
        )));
    }
    let scale = o.iter().fold(T::zero(), |m, z| m.max(z.modulus()));
    let mut herm_dev = T::zero();
    for r in 0..dim {
        for c in 0..dim {
            herm_dev = herm_dev.max((o[(r, c)] - o[(c, r)].conj()).modulus());
        }
    }
    if herm_dev > T::lit(1e-10) * scale.max(T::one()) {
        return Err(Error::NotHermitian(herm_dev.to_f64_lossy()));
    }
    let norm = normalization::<T>(n);
    let cutoff = T::lit(1e-14) * scale;
    // tr(P O) = Σ_col P[col ^ flip, col] · O[col, col ^ flip]; one nonzero per column.
    let project = |p: &PauliString| -> T {
        let flip = p.index_mask(p.x) as usize;
        let zidx = p.index_mask(p.z);
        let y_phase = Phase::from_exponent((p.x & p.z).count_ones());
        let mut acc = Complex::new(T::zero(), T::zero());
        for col in 0..dim {
            let sign = if (zidx & col as u64).count_ones() % 2 == 1 {
                Phase::MINUS_ONE
            } else {
                Phase::ONE
            };
            acc += (y_phase * sign).to_complex::<T>() * o[(col, col ^ flip)];
        }
        acc.re * norm
    };
    let identity = (0..dim).fold(T::zero(), |acc, i| acc + o[(i, i)].re) * norm;
    let terms = basis
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let c = project(p);
            (c.abs() > cutoff).then_some((i, c))
        })
        .collect();
    Ok(ObservableExpansion { identity, terms })
}
