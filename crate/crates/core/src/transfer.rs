//! Transfer-function coefficients `G(s) = C (sI − A)⁻¹ x₀ = Q(s) / P(s)`.
//!
//! `P` is the characteristic polynomial of `A` and `Q(s) = C adj(sI − A) x₀`,
//! both obtained from the Faddeev–LeVerrier recursion. Coefficients are
//! invariant under any change of state basis, so they can be compared between
//! the parameterized model and a data-derived realization.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{build_generator, CoherenceSystem};
use crate::error::{Error, Result};
use crate::model::HamiltonianModel;
use crate::scalar::{Field, Real};

/// `Q_c(s) / P(s)` for each output channel `c`; index `i` holds the `sⁱ` coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction<T> {
    /// `p_0..p_{K-1}` of the monic `P(s) = s^K + Σ p_i sⁱ`.
    pub den: Vec<T>,
    /// `q_0..q_{K-1}` per channel.
    pub num: Vec<Vec<T>>,
}

impl<T> TransferFunction<T> {
    pub fn order(&self) -> usize {
        self.den.len()
    }

    pub fn channels(&self) -> usize {
        self.num.len()
    }
}

impl<T: Real> TransferFunction<T> {
    /// Evaluates `Q_c(s)` and `P(s)`.
    pub fn eval(&self, channel: usize, s: Complex<T>) -> (Complex<T>, Complex<T>) {
        let horner = |coeffs: &[T], lead: Option<T>| {
            let mut acc = Complex::new(lead.unwrap_or_else(T::zero), T::zero());
            for c in coeffs.iter().rev() {
                acc = acc * s + Complex::new(*c, T::zero());
            }
            acc
        };
        (horner(&self.num[channel], None), horner(&self.den, Some(T::one())))
    }

    /// Largest coefficient difference, relative to `max(1, |coefficient|)`.
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        if self.den.len() != other.den.len() || self.num.len() != other.num.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        let mut cmp = |a: &T, b: &T| {
            let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        };
        self.den.iter().zip(&other.den).for_each(|(a, b)| cmp(a, b));
        for (qa, qb) in self.num.iter().zip(&other.num) {
            qa.iter().zip(qb).for_each(|(a, b)| cmp(a, b));
        }
        worst
    }

    pub fn to_f64(&self) -> TransferFunction<f64> {
        TransferFunction {
            den: self.den.iter().map(|v| v.to_f64_lossy()).collect(),
            num: self
                .num
                .iter()
                .map(|q| q.iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
        }
    }
}

fn trace<T: Field>(m: &DMatrix<T>) -> T {
    (0..m.nrows()).fold(T::zero(), |acc, i| acc + m[(i, i)].clone())
}

/// Faddeev–LeVerrier: `M_1 = I`, `M_k = A M_{k-1} + p_{K-k+1} I`, `p_{K-k} = −tr(A M_k)/k`.
///
/// `adj(sI − A) = Σ_k M_k s^{K-k}`, so `q_{K-k} = C M_k x₀`. Exact in any field.
pub fn transfer_coefficients<T: Field>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    x0: &DVector<T>,
) -> Result<TransferFunction<T>> {
    let k = a.nrows();
    if !a.is_square() || c.ncols() != k || x0.len() != k {
        return Err(Error::Dimension(format!(
            "A is {:?}, C is {:?}, x0 has {} entries",
            a.shape(),
            c.shape(),
            x0.len()
        )));
    }
    let mut den = vec![T::zero(); k];
    let mut num = vec![vec![T::zero(); k]; c.nrows()];
    let eye = DMatrix::<T>::identity(k, k);
    let mut m = eye.clone();
    for step in 1..=k {
        if step > 1 {
            m = a * &m + &eye * den[k - step + 1].clone();
        }
        let cmx = c * (&m * x0);
        for (ch, q) in num.iter_mut().enumerate() {
            q[k - step] = cmx[ch].clone();
        }
        let am = a * &m;
        let divisor = T::from_usize(step).expect("small integer");
        den[k - step] = T::zero() - trace(&am) / divisor;
    }
    Ok(TransferFunction { den, num })
}

/// Coefficients of the model system at parameters `theta`.
pub fn model_coefficients<T: Real>(
    model: &HamiltonianModel,
    theta: &[T],
    template: &CoherenceSystem<T>,
) -> Result<TransferFunction<T>> {
    let a = build_generator(model, theta, &template.accessible)?;
    transfer_coefficients(&a, &template.selector, &template.x0)
}

/// Largest relative error of `G(s) P(s) = Q(s)` at `samples` random complex points.
///
/// `G(s)` comes from a direct solve of `(sI − A) v = x₀`, independent of the recursion.
pub fn resolvent_check<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    x0: &DVector<T>,
    tf: &TransferFunction<T>,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let k = a.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = a.amax().to_f64_lossy().max(1.0);
    let ac = a.map(|v| Complex::new(v, T::zero()));
    let x0c = x0.map(|v| Complex::new(v, T::zero()));
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let s = Complex::new(
            T::lit(rng.random_range(-2.0..2.0) * scale),
            T::lit(rng.random_range(-2.0..2.0) * scale),
        );
        let shifted = DMatrix::from_diagonal_element(k, k, s) - &ac;
        let v = shifted
            .lu()
            .solve(&x0c)
            .ok_or_else(|| Error::Dimension("sI − A singular at sample point".into()))?;
        for ch in 0..c.nrows() {
            let g = (0..k).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
                acc + v[i] * c[(ch, i)]
            });
            let (q, p) = tf.eval(ch, s);
            let lhs = g * p;
            let err = (lhs - q).modulus().to_f64_lossy();
            let mag = q.modulus().to_f64_lossy().max(lhs.modulus().to_f64_lossy()).max(f64::MIN_POSITIVE);
            worst = worst.max(err / mag);
        }
    }
    Ok(worst)
}

/// One coefficient of a transfer function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coefficient {
    Den(usize),
    Num { channel: usize, power: usize },
}

impl Coefficient {
    pub fn get<T: Copy>(&self, tf: &TransferFunction<T>) -> T {
        match *self {
            Coefficient::Den(i) => tf.den[i],
            Coefficient::Num { channel, power } => tf.num[channel][power],
        }
    }

    /// Polynomial degree in the Hamiltonian coefficients.
    pub fn degree(&self, order: usize) -> usize {
        match *self {
            Coefficient::Den(i) => order - i,
            Coefficient::Num { power, .. } => order - power - 1,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Coefficient::Den(i) => format!("p{i}"),
            Coefficient::Num { channel, power } => format!("q{power}[{channel}]"),
        }
    }
}

/// All coefficients, numerator before denominator within each degree, lowest degree first.
pub fn all_coefficients(order: usize, channels: usize) -> Vec<Coefficient> {
    let mut out: Vec<Coefficient> = (0..order).map(Coefficient::Den).collect();
    for channel in 0..channels {
        out.extend((0..order).map(|power| Coefficient::Num { channel, power }));
    }
    out.sort_by_key(|c| (c.degree(order), matches!(c, Coefficient::Den(_))));
    out
}

/// Which coefficient equations enter the residual.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum EquationSet {
    /// Every coefficient that depends on the parameters.
    #[default]
    All,
    /// The `count` lowest-degree parameter-dependent equations.
    LowestOrder(usize),
}

/// Splits the coefficients into parameter-dependent ones and fixed ones
/// (identically zero or constant), by evaluating the model at random points.
pub fn partition_coefficients(
    model: &HamiltonianModel,
    template: &CoherenceSystem<f64>,
) -> Result<(Vec<Coefficient>, Vec<Coefficient>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let p = model.parameter_count();
    let probes: Vec<TransferFunction<f64>> = (0..4)
        .map(|_| {
            let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            model_coefficients(model, &theta, template)
        })
        .collect::<Result<_>>()?;
    Ok(all_coefficients(template.order(), template.outputs())
        .into_iter()
        .partition(|c| {
            let vals: Vec<f64> = probes.iter().map(|tf| c.get(tf)).collect();
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            vals.iter().any(|v| (v - vals[0]).abs() > 1e-9 * scale)
        }))
}

/// Resolves an [`EquationSet`] for a model and measurement setup.
pub fn select_equations(
    model: &HamiltonianModel,
    template: &CoherenceSystem<f64>,
    set: &EquationSet,
) -> Result<Vec<Coefficient>> {
    let (informative, _) = partition_coefficients(model, template)?;
    let count = match set {
        EquationSet::All => return Ok(informative),
        EquationSet::LowestOrder(c) => *c,
    };
    if informative.len() < count {
        return Err(Error::Config(format!(
            "only {} parameter-dependent coefficient equations available, {count} requested",
            informative.len()
        )));
    }
    Ok(informative.into_iter().take(count).collect())
}

/// Weighted residual `(model − target) / w` over the selected coefficients.
///
/// Default weights are `max(1, |target coefficient|)`.
pub fn coefficient_residual(
    model: &HamiltonianModel,
    theta: &[f64],
    template: &CoherenceSystem<f64>,
    target: &TransferFunction<f64>,
    equations: &[Coefficient],
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    if target.order() != template.order() {
        return Err(Error::StructuralMismatch {
            expected: template.order(),
            found: target.order(),
            hint: mismatch_hint(template.order(), target.order()),
        });
    }
    if target.channels() != template.outputs() {
        return Err(Error::Dimension(format!(
            "target has {} channels, model measures {}",
            target.channels(),
            template.outputs()
        )));
    }
    let tf = model_coefficients(model, theta, template)?;
    Ok(DVector::from_iterator(
        equations.len(),
        equations.iter().enumerate().map(|(i, c)| {
            let t = c.get(target);
            let w = weights.map_or_else(|| t.abs().max(1.0), |w| w[i]);
            (c.get(&tf) - t) / w
        }),
    ))
}

/// Remediation text for an order mismatch between data and model.
pub fn mismatch_hint(model_order: usize, data_order: usize) -> String {
    if data_order < model_order {
        "the data reveal fewer modes than the model's accessible set: the initial state or \
         observables may not excite or observe every mode (choose another initial state or add \
         observables), the truncation epsilon may be too large, or the model may be wrong"
            .into()
    } else {
        "the data reveal more modes than the model allows: the truncation epsilon may be too \
         small for the noise level, or the model is missing terms"
            .into()
    }
}

/// Projects `(A, C, x₀)` onto its controllable and observable part.
///
/// The reduced triple has the same transfer function with coprime `P`, `Q`.
pub fn minimal_subsystem<T: Real>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    x0: &DVector<T>,
    rel_tol: T,
) -> (DMatrix<T>, DMatrix<T>, DVector<T>) {
    let k = a.nrows();
    let rank_basis = |m: DMatrix<T>| -> DMatrix<T> {
        let svd = m.svd(true, false);
        let u = svd.u.expect("requested U");
        let top = svd.singular_values.iter().fold(T::zero(), |m, s| m.max(*s));
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > rel_tol * top)
            .collect();
        DMatrix::from_fn(u.nrows(), keep.len(), |r, j| u[(r, keep[j])])
    };
    // Controllable subspace: span{x₀, A x₀, …}.
    let mut krylov = DMatrix::zeros(k, k);
    let mut v = x0.clone();
    for j in 0..k {
        krylov.set_column(j, &v);
        v = a * v;
    }
    let basis = rank_basis(krylov);
    let (a1, c1, x1) = (basis.transpose() * a * &basis, c * &basis, basis.transpose() * x0);
    // Observable subspace: row span of [C; C A; …].
    let k1 = a1.nrows();
    let p = c1.nrows();
    let mut obs = DMatrix::zeros(k1, p * k1);
    let mut row = c1.clone();
    for j in 0..k1 {
        obs.columns_mut(j * p, p).copy_from(&row.transpose());
        row = row * &a1;
    }
    let basis = rank_basis(obs);
    (
        basis.transpose() * &a1 * &basis,
        &c1 * &basis,
        basis.transpose() * x1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rational, ExactRational};

    #[test]
    fn integrator() {
        let tf = transfer_coefficients(
            &DMatrix::from_element(1, 1, 0.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(tf.den, vec![0.0]);
        assert_eq!(tf.num, vec![vec![1.0]]);
    }

    #[test]
    fn rotation_closed_form() {
        // A = [[0, -w], [w, 0]], C = e1, x0 = e1: G = s / (s² + w²).
        let w = rational(3, 2);
        let zero = rational(0, 1);
        let one = rational(1, 1);
        let a = DMatrix::from_row_slice(2, 2, &[zero.clone(), -w.clone(), w.clone(), zero.clone()]);
        let c = DMatrix::from_row_slice(1, 2, &[one.clone(), zero.clone()]);
        let x0 = DVector::from_vec(vec![one.clone(), zero.clone()]);
        let tf: TransferFunction<ExactRational> = transfer_coefficients(&a, &c, &x0).unwrap();
        assert_eq!(tf.den, vec![rational(9, 4), zero.clone()]);
        assert_eq!(tf.num, vec![vec![zero, one]]);
    }

    #[test]
    fn resolvent_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 5;
        let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, k, |_, _| rng.random_range(-1.0..1.0));
        let x0 = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let tf = transfer_coefficients(&a, &c, &x0).unwrap();
        assert!(resolvent_check(&a, &c, &x0, &tf, 10, 1).unwrap() < 1e-10);
    }

    #[test]
    fn dimension_checks() {
        let a = DMatrix::<f64>::zeros(2, 2);
        assert!(transfer_coefficients(&a, &DMatrix::zeros(1, 3), &DVector::zeros(2)).is_err());
        assert!(transfer_coefficients(&a, &DMatrix::zeros(1, 2), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn coefficient_ordering() {
        let all = all_coefficients(2, 1);
        assert_eq!(
            all,
            vec![
                Coefficient::Num { channel: 0, power: 1 },
                Coefficient::Num { channel: 0, power: 0 },
                Coefficient::Den(1),
                Coefficient::Den(0),
            ]
        );
    }

    #[test]
    fn minimal_subsystem_drops_unexcited_mode() {
        // Two decoupled rotations; x0 excites only the first.
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = -1.0;
        a[(1, 0)] = 1.0;
        a[(2, 3)] = -3.0;
        a[(3, 2)] = 3.0;
        let c = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let (ar, cr, xr) = minimal_subsystem(&a, &c, &x0, 1e-10);
        assert_eq!(ar.nrows(), 2);
        let tf = transfer_coefficients(&ar, &cr, &xr).unwrap();
        assert!((tf.den[0] - 1.0).abs() < 1e-12 && tf.den[1].abs() < 1e-12);
        assert!((tf.num[0][1] - 1.0).abs() < 1e-12 && tf.num[0][0].abs() < 1e-12);
    }
}
