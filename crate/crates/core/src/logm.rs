//! Principal matrix logarithm of real matrices.
//!
//! Inverse scaling and squaring on the real Schur form: `A = Q T Qᵀ`, take
//! repeated square roots of the quasi-triangular `T` (2×2 diagonal blocks in
//! closed form, off-diagonal blocks by small Sylvester solves) until it is close
//! to the identity, evaluate `log` by the `atanh` series and scale back.

use nalgebra::{ComplexField, DMatrix, Schur};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative distance from the closed negative real axis below which an eigenvalue is rejected.
pub const NEGATIVE_AXIS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
struct Block {
    start: usize,
    size: usize,
}

/// Principal logarithm; fails when an eigenvalue lies on or near `(-∞, 0]`.
pub fn principal_log<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    principal_log_with(a, false)
}

/// Principal logarithm, optionally zeroing the real parts of its eigenvalues
/// (equivalent to projecting the eigenvalues of `a` onto the unit circle).
pub fn principal_log_with<T: Real>(a: &DMatrix<T>, project_unit_circle: bool) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "logarithm needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let schur = Schur::try_new(a.clone(), T::unit_roundoff(), 10_000)
        .ok_or_else(|| Error::Logarithm("real Schur decomposition did not converge".into()))?;
    let (q, mut t) = schur.unpack();
    let blocks = quasi_blocks(&mut t);
    check_spectrum(&t, &blocks)?;

    let mut r = t;
    let mut squarings = 0u32;
    let quarter = T::lit(0.25);
    while (&r - DMatrix::identity(n, n)).norm() > quarter {
        r = sqrt_quasi(&r, &blocks)?;
        squarings += 1;
        if squarings > 64 {
            return Err(Error::Logarithm("square-root iteration did not approach identity".into()));
        }
    }
    let mut l = log_near_identity(&r)? * T::lit(2f64.powi(squarings as i32));
    if project_unit_circle {
        for b in &blocks {
            let s = b.start;
            if b.size == 1 {
                l[(s, s)] = T::zero();
            } else {
                let half_trace = (l[(s, s)] + l[(s + 1, s + 1)]) * T::lit(0.5);
                l[(s, s)] -= half_trace;
                l[(s + 1, s + 1)] -= half_trace;
            }
        }
    }
    Ok(&q * l * q.transpose())
}

/// Eigenvalues of a real matrix, sorted by imaginary then real part.
pub fn spectrum<T: Real>(a: &DMatrix<T>) -> Vec<Complex<T>> {
    let mut ev: Vec<Complex<T>> = a.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| {
        x.im.partial_cmp(&y.im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.re.partial_cmp(&y.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    ev
}

/// Identifies 1×1 and 2×2 diagonal blocks, flushing negligible subdiagonals to zero.
fn quasi_blocks<T: Real>(t: &mut DMatrix<T>) -> Vec<Block> {
    let n = t.nrows();
    let eps = T::unit_roundoff();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let two = i + 1 < n
            && t[(i + 1, i)].abs() > eps * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs());
        if two {
            blocks.push(Block { start: i, size: 2 });
            i += 2;
        } else {
            if i + 1 < n {
                t[(i + 1, i)] = T::zero();
            }
            blocks.push(Block { start: i, size: 1 });
            i += 1;
        }
    }
    blocks
}

fn block_eigenvalues<T: Real>(t: &DMatrix<T>, b: Block) -> Vec<Complex<T>> {
    let s = b.start;
    if b.size == 1 {
        return vec![Complex::new(t[(s, s)], T::zero())];
    }
    let (p, q, r, u) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
    let half_tr = (p + u) * T::lit(0.5);
    let det = p * u - q * r;
    let disc = half_tr * half_tr - det;
    if disc < T::zero() {
        let im = (-disc).sqrt();
        vec![Complex::new(half_tr, im), Complex::new(half_tr, -im)]
    } else {
        let d = disc.sqrt();
        vec![Complex::new(half_tr + d, T::zero()), Complex::new(half_tr - d, T::zero())]
    }
}

fn check_spectrum<T: Real>(t: &DMatrix<T>, blocks: &[Block]) -> Result<()> {
    let scale = t.amax().max(T::unit_roundoff().powi(4));
    let tol = T::lit(NEGATIVE_AXIS_TOL);
    for b in blocks {
        for ev in block_eigenvalues(t, *b) {
            let modulus = ev.modulus();
            let on_axis = ev.re <= T::zero() && ev.im.abs() <= tol * modulus;
            if modulus <= tol * scale || on_axis {
                return Err(Error::Aliasing {
                    re: ev.re.to_f64_lossy(),
                    im: ev.im.to_f64_lossy(),
                });
            }
        }
    }
    Ok(())
}

/// Principal square root of a 1×1 or 2×2 block with no eigenvalue on `(-∞, 0]`.
fn sqrt_block<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if m.nrows() == 1 {
        return Ok(DMatrix::from_element(1, 1, m[(0, 0)].sqrt()));
    }
    // sqrt(B) = (B + √det I) / √(tr + 2√det) for 2×2 B without eigenvalues on R⁻.
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det <= T::zero() {
        return Err(Error::Logarithm("2×2 block has a non-positive determinant".into()));
    }
    let delta = det.sqrt();
    let denom = (m[(0, 0)] + m[(1, 1)] + delta * T::lit(2.0)).sqrt();
    Ok((m + DMatrix::identity(2, 2) * delta) / denom)
}

/// Solves `A X + X B = C` for small blocks via the Kronecker form.
fn sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, q) = c.shape();
    let mut k = DMatrix::zeros(p * q, p * q);
    for col in 0..q {
        for row in 0..p {
            let eq = col * p + row;
            for i in 0..p {
                k[(eq, col * p + i)] += a[(row, i)];
            }
            for j in 0..q {
                k[(eq, j * p + row)] += b[(j, col)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(p * q, c.iter().copied());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Logarithm("singular Sylvester system in square root".into()))?;
    Ok(DMatrix::from_column_slice(p, q, x.as_slice()))
}

/// Principal square root of a quasi-upper-triangular matrix.
fn sqrt_quasi<T: Real>(t: &DMatrix<T>, blocks: &[Block]) -> Result<DMatrix<T>> {
    let n = t.nrows();
    let mut r = DMatrix::zeros(n, n);
    let view = |m: &DMatrix<T>, bi: Block, bj: Block| -> DMatrix<T> {
        m.view((bi.start, bj.start), (bi.size, bj.size)).into_owned()
    };
    for (j, bj) in blocks.iter().enumerate() {
        let rjj = sqrt_block(&view(t, *bj, *bj))?;
        r.view_mut((bj.start, bj.start), (bj.size, bj.size)).copy_from(&rjj);
        for i in (0..j).rev() {
            let bi = blocks[i];
            let mut rhs = view(t, bi, *bj);
            for bk in &blocks[i + 1..j] {
                rhs -= view(&r, bi, *bk) * view(&r, *bk, *bj);
            }
            let rii = view(&r, bi, bi);
            let x = sylvester(&rii, &rjj, &rhs)?;
            r.view_mut((bi.start, bj.start), (bi.size, bj.size)).copy_from(&x);
        }
    }
    Ok(r)
}

/// `log(R) = 2 atanh(Z)`, `Z = (R + I)⁻¹(R − I)`, for `‖R − I‖ ≤ 1/4`.
fn log_near_identity<T: Real>(r: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = r.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let z = (r + &eye)
        .lu()
        .solve(&(r - &eye))
        .ok_or_else(|| Error::Logarithm("R + I is singular".into()))?;
    let z2 = &z * &z;
    let mut term = z;
    let mut sum = DMatrix::zeros(n, n);
    let eps = T::unit_roundoff();
    for k in 0..200 {
        let contrib = &term / T::from_usize(2 * k + 1).expect("small integer");
        let small = contrib.norm() <= eps * sum.norm();
        sum += contrib;
        if small {
            break;
        }
        term = &term * &z2;
    }
    Ok(sum * T::lit(2.0))
}
