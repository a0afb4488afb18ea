//! Coherence-vector dynamics: the accessible set, the reduced generator and
//! sampled observable traces.
//!
//! For a Hamiltonian `H = Σ_m a_m X_m` the expectations `x_k = ⟨X_k⟩` of the
//! normalized basis obey `ẋ = A x` with `A_kl = Σ_m C_mkl a_m`. Restricting to
//! the closure of the measured elements under commutation with the model terms
//! gives the reduced `K × K` generator.

use std::collections::HashSet;

use log::warn;
use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{HamiltonianModel, Observable, Slot};
use crate::pauli::{commutator, normalization, PauliString};
use crate::scalar::{Field, Real};

/// Largest qubit count accepted by the dense oracle.
pub const DENSE_QUBIT_LIMIT: usize = 10;

/// Result of the filtration `G_i = [G_{i-1}, Δ] ∪ G_{i-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessibleSet {
    elements: Vec<PauliString>,
    measured: usize,
    level_sizes: Vec<usize>,
}

impl AccessibleSet {
    pub fn elements(&self) -> &[PauliString] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Number of leading elements that came from the measured set.
    pub fn measured_count(&self) -> usize {
        self.measured
    }

    /// `|G_0|, |G_1|, …` up to saturation.
    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    pub fn position(&self, p: &PauliString) -> Option<usize> {
        self.elements.iter().position(|e| e == p)
    }
}

/// Saturates the measured set under commutation with the model terms.
///
/// Measured elements keep their given order; elements discovered later are
/// appended in canonical basis order, which for nearest-neighbour chains
/// interleaves the `(…X_k, …Y_k)` pairs site by site.
pub fn filtration(measured: &[PauliString], model: &HamiltonianModel) -> Result<AccessibleSet> {
    if measured.is_empty() {
        return Err(Error::InvalidModel("no measured observables".into()));
    }
    let mut members: HashSet<PauliString> = HashSet::new();
    let mut elements = Vec::new();
    for p in measured {
        if p.num_qubits() != model.num_qubits() {
            return Err(Error::Dimension(format!(
                "observable {p} does not act on {} qubits",
                model.num_qubits()
            )));
        }
        if p.is_identity() {
            return Err(Error::InvalidModel(
                "identity cannot be a measured basis element".into(),
            ));
        }
        if members.insert(*p) {
            elements.push(*p);
        }
    }
    let measured_count = elements.len();
    let mut level_sizes = vec![elements.len()];
    let mut frontier = elements.clone();
    let mut discovered = Vec::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for h in model.words() {
                if let Some((_, word)) = commutator(g, h)? {
                    if members.insert(word) {
                        next.push(word);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        discovered.extend_from_slice(&next);
        level_sizes.push(measured_count + discovered.len());
        frontier = next;
    }
    discovered.sort_by(|a, b| a.canonical_cmp(b));
    elements.extend(discovered);
    Ok(AccessibleSet {
        elements,
        measured: measured_count,
        level_sizes,
    })
}

/// Reduced generator `Ã_kl = Σ_m C_mkl a_m` over the accessible elements.
///
/// Entries are `±2 c_m` for word coefficients `c_m`, so the construction is exact
/// in any field (including rationals). Fails if a commutator leaves the set.
pub fn build_generator<T: Field>(
    model: &HamiltonianModel,
    theta: &[T],
    accessible: &[PauliString],
) -> Result<DMatrix<T>> {
    let coeffs = model.coefficients(theta)?;
    let k = accessible.len();
    let mut gen = DMatrix::from_element(k, k, T::zero());
    let index: std::collections::HashMap<_, _> =
        accessible.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    for (row, elem) in accessible.iter().enumerate() {
        for (term, c) in model.terms().iter().zip(&coeffs) {
            if let Some((sign, word)) = commutator(&term.pauli, elem)? {
                let col = *index.get(&word).ok_or_else(|| Error::NotClosed {
                    term: term.pauli.to_string(),
                    element: elem.to_string(),
                    outside: word.to_string(),
                })?;
                let factor = T::from_i64(2 * i64::from(sign)).expect("small integer");
                let entry = gen[(row, col)].clone() + factor * c.clone();
                gen[(row, col)] = entry;
            }
        }
    }
    Ok(gen)
}

/// Names of parameters that never enter `Ã` (non-identifiable from these observables).
pub fn unidentifiable_parameters(
    model: &HamiltonianModel,
    accessible: &[PauliString],
) -> Result<Vec<String>> {
    let mut present = vec![false; model.parameter_count()];
    for elem in accessible {
        for term in model.terms() {
            if let Slot::Unknown { index, .. } = term.slot {
                if !term.pauli.commutes_with(elem) {
                    present[index] = true;
                }
            }
        }
    }
    // Parameters could in principle cancel between terms; check numerically too.
    let p = model.parameter_count();
    for (i, flag) in present.iter_mut().enumerate() {
        if *flag {
            let mut theta = vec![0.0f64; p];
            theta[i] = 1.0;
            let with = build_generator(model, &theta, accessible)?;
            let without = build_generator(model, &vec![0.0f64; p], accessible)?;
            *flag = (with - without).amax() > 0.0;
        }
    }
    Ok(present
        .iter()
        .zip(model.parameter_names())
        .filter(|(f, _)| !**f)
        .map(|(_, n)| n.clone())
        .collect())
}

/// The coherence-vector LTI system `ẋ = Ã x`, `y = C x`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceSystem<T: Real> {
    pub accessible: Vec<PauliString>,
    pub generator: DMatrix<T>,
    pub selector: DMatrix<T>,
    pub x0: DVector<T>,
}

impl<T: Real> CoherenceSystem<T> {
    /// Builds the full system for parameters `theta`.
    pub fn build(
        model: &HamiltonianModel,
        theta: &[T],
        observables: &[Observable],
        psi0: &DVector<Complex<T>>,
    ) -> Result<Self> {
        let measured = measured_elements(observables);
        let accessible = filtration(&measured, model)?.elements;
        let generator = build_generator(model, theta, &accessible)?;
        let selector = selector(observables, &accessible)?;
        let x0 = initial_coherence(psi0, &accessible)?;
        Ok(CoherenceSystem {
            accessible,
            generator,
            selector,
            x0,
        })
    }

    pub fn order(&self) -> usize {
        self.accessible.len()
    }

    pub fn outputs(&self) -> usize {
        self.selector.nrows()
    }

    /// Same measurement setup with the generator rebuilt for new parameters.
    pub fn with_parameters(&self, model: &HamiltonianModel, theta: &[T]) -> Result<Self> {
        Ok(CoherenceSystem {
            generator: build_generator(model, theta, &self.accessible)?,
            ..self.clone()
        })
    }
}

/// Distinct basis words appearing in the observables, in order of appearance.
pub fn measured_elements(observables: &[Observable]) -> Vec<PauliString> {
    let mut seen = HashSet::new();
    observables
        .iter()
        .flat_map(|o| o.terms.iter().map(|(_, p)| *p))
        .filter(|p| seen.insert(*p))
        .collect()
}

/// `p × K` selector: row `i` holds observable `i`'s coefficients on the normalized elements.
pub fn selector<T: Real>(observables: &[Observable], accessible: &[PauliString]) -> Result<DMatrix<T>> {
    let mut c = DMatrix::zeros(observables.len(), accessible.len());
    for (i, o) in observables.iter().enumerate() {
        for (coef, p) in &o.terms {
            let j = accessible
                .iter()
                .position(|e| e == p)
                .ok_or_else(|| Error::NotInBasis(p.to_string()))?;
            // O = c P = c 2^(n/2) X_P
            c[(i, j)] += T::lit(*coef) / normalization::<T>(p.num_qubits());
        }
    }
    Ok(c)
}

/// `x_k(0) = ⟨ψ0| X_k |ψ0⟩` for each accessible element.
pub fn initial_coherence<T: Real>(
    psi0: &DVector<Complex<T>>,
    accessible: &[PauliString],
) -> Result<DVector<T>> {
    let Some(first) = accessible.first() else {
        return Ok(DVector::zeros(0));
    };
    let n = first.num_qubits();
    if psi0.len() != 1 << n {
        return Err(Error::Dimension(format!(
            "state has dimension {}, expected {}",
            psi0.len(),
            1usize << n
        )));
    }
    let dev = (psi0.norm() - T::one()).abs();
    if dev > T::lit(1e-10) {
        return Err(Error::NotNormalized(dev.to_f64_lossy()));
    }
    let norm = normalization::<T>(n);
    Ok(DVector::from_iterator(
        accessible.len(),
        accessible.iter().map(|p| expectation(psi0, p) * norm),
    ))
}

/// `⟨ψ|P|ψ⟩` for an unnormalized word, without forming the dense matrix.
fn expectation<T: Real>(psi: &DVector<Complex<T>>, p: &PauliString) -> T {
    let n = p.num_qubits();
    let to_index = |mask: u64| -> usize {
        (0..n)
            .filter(|q| (mask >> q) & 1 == 1)
            .fold(0, |acc, q| acc | 1 << (n - 1 - q))
    };
    let flip = to_index(p.x_mask());
    let zidx = to_index(p.z_mask());
    let ny = (p.x_mask() & p.z_mask()).count_ones();
    let y_phase = crate::pauli::Phase::from_exponent(ny).to_complex::<T>();
    let mut acc = Complex::new(T::zero(), T::zero());
    for col in 0..psi.len() {
        let mut v = y_phase * psi[col];
        if (zidx & col).count_ones() % 2 == 1 {
            v = -v;
        }
        acc += psi[col ^ flip].conj() * v;
    }
    acc.re
}

/// Sampled outputs `y(j) = y(j Δt)`, `j = 0..J`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeTrace<T: Real> {
    pub dt: T,
    /// `J × p`, row `j` is `y(j)`.
    pub samples: DMatrix<T>,
    pub noise_sigma: f64,
    pub seed: Option<u64>,
    pub initial_state_label: String,
}

impl<T: Real> TimeTrace<T> {
    pub fn new(dt: T, samples: DMatrix<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::Sampling(format!("dt must be positive, got {dt}")));
        }
        if samples.nrows() < 2 {
            return Err(Error::Sampling(format!(
                "need at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        Ok(TimeTrace {
            dt,
            samples,
            noise_sigma: 0.0,
            seed: None,
            initial_state_label: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn outputs(&self) -> usize {
        self.samples.ncols()
    }

    pub fn output(&self, j: usize) -> DVector<T> {
        self.samples.row(j).transpose()
    }
}

/// Number of samples covering `[0, duration]` at period `dt`.
pub fn sample_count(dt: f64, duration: f64) -> Result<usize> {
    if !(dt > 0.0) || !(duration > 0.0) {
        return Err(Error::Sampling(format!(
            "dt ({dt}) and duration ({duration}) must be positive"
        )));
    }
    Ok((duration / dt + 1e-9).floor() as usize + 1)
}

/// Propagates `x(j+1) = exp(Ã Δt) x(j)` and records `y(j) = C x(j)`.
///
/// Logs a warning when `dt` violates the Nyquist bound of `Ã`.
pub fn simulate_trace<T: Real>(sys: &CoherenceSystem<T>, dt: T, count: usize) -> Result<TimeTrace<T>> {
    if !(dt > T::zero()) || count < 2 {
        return Err(Error::Sampling(format!(
            "need dt > 0 and at least 2 samples (dt = {dt}, J = {count})"
        )));
    }
    if let Some(bound) = nyquist_max_dt(&sys.generator) {
        if dt >= bound {
            warn!(
                "sampling period {dt} violates the Nyquist bound {bound}; the recovered \
                 generator will be aliased"
            );
        }
    }
    let step = (&sys.generator * dt).exp();
    let mut x = sys.x0.clone();
    let mut samples = DMatrix::zeros(count, sys.outputs());
    for j in 0..count {
        let y = &sys.selector * &x;
        samples.row_mut(j).copy_from(&y.transpose());
        x = &step * x;
    }
    TimeTrace::new(dt, samples)
}

/// Adds i.i.d. `N(0, σ²)` noise to every sample, deterministically in `seed`.
pub fn add_noise<T: Real>(trace: &TimeTrace<T>, sigma: f64, seed: u64) -> Result<TimeTrace<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("noise sigma must be ≥ 0, got {sigma}")));
    }
    let mut out = trace.clone();
    out.noise_sigma = sigma;
    out.seed = Some(seed);
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 0..out.samples.nrows() {
        for c in 0..out.samples.ncols() {
            out.samples[(j, c)] += T::lit(normal.sample(&mut rng));
        }
    }
    Ok(out)
}

/// Largest alias-free sampling period `π / max|σ(Ã)|`; `None` when `Ã = 0`.
///
/// For antisymmetric `Ã` the spectral radius equals the largest singular value.
pub fn nyquist_max_dt<T: Real>(generator: &DMatrix<T>) -> Option<T> {
    if generator.is_empty() {
        return None;
    }
    let radius = generator
        .clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |m, s| m.max(*s));
    (radius > T::zero()).then(|| T::pi() / radius)
}

/// Dense Schrödinger propagation `|ψ(t)⟩ = exp(-iHt)|ψ0⟩` with direct expectations.
///
/// Independent of the coherence-vector path; intended for verification.
pub fn quantum_oracle_trace<T: Real>(
    model: &HamiltonianModel,
    theta: &[T],
    psi0: &DVector<Complex<T>>,
    observables: &[Observable],
    dt: T,
    count: usize,
) -> Result<TimeTrace<T>> {
    let n = model.num_qubits();
    if n > DENSE_QUBIT_LIMIT {
        return Err(Error::TooLarge {
            qubits: n,
            limit: DENSE_QUBIT_LIMIT,
        });
    }
    if psi0.len() != 1 << n {
        return Err(Error::Dimension(format!(
            "state has dimension {}, expected {}",
            psi0.len(),
            1usize << n
        )));
    }
    let h = model.dense_hamiltonian(theta)?;
    let eig = SymmetricEigen::new(h);
    let v = eig.eigenvectors;
    let coords = v.adjoint() * psi0;
    let dense_obs: Vec<_> = observables.iter().map(|o| o.dense::<T>()).collect();
    let mut samples = DMatrix::zeros(count, observables.len());
    for j in 0..count {
        let t = dt * T::from_usize(j).expect("sample index");
        let phased = DVector::from_iterator(
            coords.len(),
            coords
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(c, &e)| *c * Complex::new(T::zero(), -e * t).exp()),
        );
        let psi = &v * phased;
        for (i, o) in dense_obs.iter().enumerate() {
            samples[(j, i)] = psi.dotc(&(o * &psi)).re;
        }
    }
    TimeTrace::new(dt, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialState, Term};

    fn word(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn rabi() -> HamiltonianModel {
        HamiltonianModel::new(
            1,
            vec![Term {
                pauli: word("Z"),
                slot: Slot::Unknown {
                    index: 0,
                    scale: 0.5,
                },
            }],
            vec!["w".into()],
        )
        .unwrap()
    }

    #[test]
    fn commuting_model_leaves_measured_set() {
        let m = HamiltonianModel::new(
            2,
            vec![
                Term {
                    pauli: word("ZI"),
                    slot: Slot::Known(1.0),
                },
                Term {
                    pauli: word("ZZ"),
                    slot: Slot::Known(0.5),
                },
            ],
            vec![],
        )
        .unwrap();
        let acc = filtration(&[word("ZI"), word("ZZ")], &m).unwrap();
        assert_eq!(acc.elements(), &[word("ZI"), word("ZZ")]);
        assert_eq!(acc.level_sizes(), &[2]);
    }

    #[test]
    fn zero_parameters_give_zero_generator() {
        let m = rabi();
        let acc = filtration(&[word("X")], &m).unwrap();
        let g = build_generator(&m, &[0.0f64], acc.elements()).unwrap();
        assert_eq!(g.amax(), 0.0);
    }

    #[test]
    fn rabi_generator_and_trace() {
        let m = rabi();
        let obs = [Observable::word(word("X"))];
        let psi = InitialState::Plus { qubit: 0 }.state_vector::<f64>(1).unwrap();
        let sys = CoherenceSystem::build(&m, &[2.0], &obs, &psi).unwrap();
        assert_eq!(sys.accessible, vec![word("X"), word("Y")]);
        // d⟨σx⟩/dt = i⟨[H, σx]⟩ = -ω⟨σy⟩
        assert_eq!(sys.generator[(0, 1)], -2.0);
        assert_eq!(sys.generator[(1, 0)], 2.0);
        let dt = 0.1;
        let tr = simulate_trace(&sys, dt, 50).unwrap();
        for j in 0..50 {
            let t = dt * j as f64;
            assert!((tr.samples[(j, 0)] - (2.0 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_trace_for_zero_generator() {
        let m = rabi();
        let obs = [Observable::word(word("X"))];
        let psi = InitialState::Plus { qubit: 0 }.state_vector::<f64>(1).unwrap();
        let sys = CoherenceSystem::build(&m, &[0.0], &obs, &psi).unwrap();
        let tr = simulate_trace(&sys, 0.3, 10).unwrap();
        assert!(tr.samples.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(nyquist_max_dt(&sys.generator).is_none());
    }

    #[test]
    fn nyquist_single_qubit() {
        let m = rabi();
        let acc = filtration(&[word("X")], &m).unwrap();
        let g = build_generator(&m, &[2.0f64], acc.elements()).unwrap();
        let bound = nyquist_max_dt(&g).unwrap();
        assert!((bound - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn zero_state_has_no_transverse_coherence() {
        let psi = InitialState::Zero.state_vector::<f64>(2).unwrap();
        let x0 = initial_coherence(&psi, &[word("XI"), word("ZI")]).unwrap();
        assert_eq!(x0[0], 0.0);
        assert!((x0[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_state_rejected() {
        let psi = DVector::from_vec(vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)]);
        assert!(matches!(
            initial_coherence(&psi, &[word("X")]),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn noise_contract() {
        let tr = TimeTrace::new(0.1, DMatrix::from_element(20, 1, 0.25f64)).unwrap();
        let same = add_noise(&tr, 0.0, 3).unwrap();
        assert_eq!(same.samples, tr.samples);
        let a = add_noise(&tr, 0.05, 11).unwrap();
        let b = add_noise(&tr, 0.05, 11).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.seed, Some(11));
        assert!(add_noise(&tr, -1.0, 0).is_err());
    }

    #[test]
    fn noise_standard_deviation() {
        let tr = TimeTrace::new(0.1, DMatrix::zeros(100_000, 1)).unwrap();
        let noisy = add_noise(&tr, 0.05, 2024).unwrap();
        let n = noisy.samples.len() as f64;
        let mean = noisy.samples.sum() / n;
        let var = noisy.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.05).abs() < 0.02 * 0.05);
    }

    #[test]
    fn trace_validation() {
        assert!(TimeTrace::new(0.0, DMatrix::<f64>::zeros(3, 1)).is_err());
        assert!(TimeTrace::new(0.1, DMatrix::<f64>::zeros(1, 1)).is_err());
        assert_eq!(sample_count(0.0598, 20.0).unwrap(), 335);
    }

    #[test]
    fn closure_violation_detected() {
        let m = rabi();
        // {X} alone is not closed under [·, Z].
        assert!(matches!(
            build_generator(&m, &[1.0f64], &[word("X")]),
            Err(Error::NotClosed { .. })
        ));
    }

    #[test]
    fn decoupled_parameter_flagged() {
        let m = HamiltonianModel::new(
            2,
            vec![
                Term {
                    pauli: word("ZI"),
                    slot: Slot::Unknown {
                        index: 0,
                        scale: 0.5,
                    },
                },
                Term {
                    pauli: word("IZ"),
                    slot: Slot::Unknown {
                        index: 1,
                        scale: 0.5,
                    },
                },
            ],
            vec!["w1".into(), "w2".into()],
        )
        .unwrap();
        let acc = filtration(&[word("XI")], &m).unwrap();
        assert_eq!(unidentifiable_parameters(&m, acc.elements()).unwrap(), vec!["w2"]);
    }
}
