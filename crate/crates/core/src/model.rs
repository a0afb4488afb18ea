//! Parameterized Hamiltonians, measured observables and initial states.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString};
use crate::scalar::Real;

/// Source of a term's coefficient.
#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    /// Fixed coefficient (units 1/s).
    Known(f64),
    /// Coefficient `scale · θ[index]`.
    Unknown { index: usize, scale: f64 },
}

/// `coefficient · pauli` where the coefficient multiplies the unnormalized word.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub pauli: PauliString,
    pub slot: Slot,
}

/// `H = Σ_t c_t(θ) P_t` with each `c_t` either fixed or linear in one parameter.
///
/// The normalized-basis coefficient is `a_t = tr(H X_t) = 2^(n/2) c_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianModel {
    n: usize,
    terms: Vec<Term>,
    parameter_names: Vec<String>,
}

impl HamiltonianModel {
    pub fn new(n: usize, terms: Vec<Term>, parameter_names: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut used = vec![false; parameter_names.len()];
        for t in &terms {
            if t.pauli.num_qubits() != n {
                return Err(Error::InvalidModel(format!(
                    "term {} does not act on {n} qubits",
                    t.pauli
                )));
            }
            if t.pauli.is_identity() {
                return Err(Error::InvalidModel("identity term in Hamiltonian".into()));
            }
            if !seen.insert(t.pauli) {
                return Err(Error::InvalidModel(format!("duplicate term {}", t.pauli)));
            }
            match t.slot {
                Slot::Known(v) if !v.is_finite() => {
                    return Err(Error::InvalidModel(format!("non-finite value on {}", t.pauli)))
                }
                Slot::Unknown { index, scale } => {
                    if index >= parameter_names.len() {
                        return Err(Error::InvalidModel(format!(
                            "term {} references parameter {index}, only {} declared",
                            t.pauli,
                            parameter_names.len()
                        )));
                    }
                    if !scale.is_finite() || scale == 0.0 {
                        return Err(Error::InvalidModel(format!(
                            "invalid scale {scale} on {}",
                            t.pauli
                        )));
                    }
                    used[index] = true;
                }
                _ => {}
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidModel(format!(
                "parameter {:?} does not appear in any term",
                parameter_names[i]
            )));
        }
        Ok(HamiltonianModel {
            n,
            terms,
            parameter_names,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.parameter_names
    }

    /// The set Δ of Pauli words appearing in `H`.
    pub fn words(&self) -> impl Iterator<Item = &PauliString> {
        self.terms.iter().map(|t| &t.pauli)
    }

    pub fn check_theta_len(&self, len: usize) -> Result<()> {
        if len != self.parameter_count() {
            return Err(Error::ParameterCount {
                expected: self.parameter_count(),
                got: len,
            });
        }
        Ok(())
    }

    /// Word coefficients `c_t(θ)`, in term order.
    pub fn coefficients<T>(&self, theta: &[T]) -> Result<Vec<T>>
    where
        T: Clone + Num + FromPrimitive,
    {
        self.check_theta_len(theta.len())?;
        self.terms
            .iter()
            .map(|t| match t.slot {
                Slot::Known(v) => T::from_f64(v)
                    .ok_or_else(|| Error::InvalidModel(format!("value {v} not representable"))),
                Slot::Unknown { index, scale } => T::from_f64(scale)
                    .map(|s| s * theta[index].clone())
                    .ok_or_else(|| Error::InvalidModel(format!("scale {scale} not representable"))),
            })
            .collect()
    }

    /// Dense Hamiltonian matrix.
    pub fn dense_hamiltonian<T: Real>(&self, theta: &[T]) -> Result<DMatrix<Complex<T>>> {
        let coeffs = self.coefficients(theta)?;
        let dim = 1usize << self.n;
        let mut h = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
        for (t, c) in self.terms.iter().zip(coeffs) {
            h += t.pauli.to_dense::<T>() * Complex::new(c, T::zero());
        }
        Ok(h)
    }
}

/// A measured observable `O = Σ c_i P_i` over non-identity words.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn word(p: PauliString) -> Self {
        Observable {
            terms: vec![(1.0, p)],
        }
    }

    pub fn num_qubits(&self) -> Option<usize> {
        self.terms.first().map(|(_, p)| p.num_qubits())
    }

    pub fn dense<T: Real>(&self) -> DMatrix<Complex<T>> {
        let n = self.num_qubits().unwrap_or(1);
        let dim = 1usize << n;
        let mut m = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
        for (c, p) in &self.terms {
            m += p.to_dense::<T>() * Complex::new(T::lit(*c), T::zero());
        }
        m
    }
}

/// Preparation of the initial pure state.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// All qubits in |0⟩.
    Zero,
    /// `(|0⟩ + i|1⟩)/√2` on `qubit`, |0⟩ elsewhere.
    PlusI { qubit: usize },
    /// `(|0⟩ + |1⟩)/√2` on `qubit`, |0⟩ elsewhere.
    Plus { qubit: usize },
    /// Explicit amplitudes, qubit 0 most significant.
    Amplitudes(Vec<Complex<f64>>),
}

impl InitialState {
    pub fn label(&self) -> String {
        match self {
            InitialState::Zero => "zero".into(),
            InitialState::PlusI { qubit } => format!("plus_i_qubit={qubit}"),
            InitialState::Plus { qubit } => format!("plus_qubit={qubit}"),
            InitialState::Amplitudes(_) => "amplitudes".into(),
        }
    }

    pub fn state_vector<T: Real>(&self, n: usize) -> Result<DVector<Complex<T>>> {
        let dim = 1usize << n;
        let zero = Complex::new(T::zero(), T::zero());
        let single = |qubit: usize, one: Complex<T>| -> Result<DVector<Complex<T>>> {
            if qubit >= n {
                return Err(Error::IndexOutOfBounds {
                    index: qubit,
                    len: n,
                });
            }
            let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
            let mut v = DVector::from_element(dim, zero);
            v[0] = Complex::new(h, T::zero());
            v[1 << (n - 1 - qubit)] = one * h;
            Ok(v)
        };
        match self {
            InitialState::Zero => {
                let mut v = DVector::from_element(dim, zero);
                v[0] = Complex::new(T::one(), T::zero());
                Ok(v)
            }
            InitialState::PlusI { qubit } => single(*qubit, Complex::new(T::zero(), T::one())),
            InitialState::Plus { qubit } => single(*qubit, Complex::new(T::one(), T::zero())),
            InitialState::Amplitudes(a) => {
                if a.len() != dim {
                    return Err(Error::Dimension(format!(
                        "{} amplitudes given for {n} qubits",
                        a.len()
                    )));
                }
                Ok(DVector::from_iterator(
                    dim,
                    a.iter().map(|z| Complex::new(T::lit(z.re), T::lit(z.im))),
                ))
            }
        }
    }
}

/// Convenience: a single-letter observable on one qubit.
pub fn local_observable(n: usize, qubit: usize, letter: Letter) -> Result<Observable> {
    Ok(Observable::word(PauliString::single(n, qubit, letter)?))
}
