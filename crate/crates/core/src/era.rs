//! Eigensystem realization: Hankel matrices, SVD truncation and the
//! discrete/continuous realization of a sampled output trace.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::dynamics::TimeTrace;
use crate::error::{Error, Result};
use crate::logm::{principal_log_with, spectrum};
use crate::scalar::Real;

/// Sample offsets of a generalized Hankel matrix.
///
/// Block `(i, l)` holds `y(j_i + k + t_l)`; both offset lists start at 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HankelConfig {
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
}

impl HankelConfig {
    /// `r` block rows and `s` columns with unit spacing.
    pub fn consecutive(r: usize, s: usize) -> Result<Self> {
        Self::with_offsets((1..r).collect(), (1..s).collect())
    }

    /// Explicit offsets `j_1..j_{r-1}` and `t_1..t_{s-1}` (strictly increasing).
    pub fn with_offsets(j: Vec<usize>, t: Vec<usize>) -> Result<Self> {
        let build = |v: Vec<usize>, name: &str| -> Result<Vec<usize>> {
            let mut out = Vec::with_capacity(v.len() + 1);
            out.push(0);
            for x in v {
                if x <= *out.last().unwrap() {
                    return Err(Error::Config(format!("{name} offsets must be strictly increasing")));
                }
                out.push(x);
            }
            Ok(out)
        };
        Ok(HankelConfig {
            row_offsets: build(j, "row")?,
            col_offsets: build(t, "column")?,
        })
    }

    /// Even split of a `J`-sample trace: `r = s = ⌊(J − 1)/2⌋`.
    pub fn for_length(samples: usize) -> Result<Self> {
        let half = samples.saturating_sub(1) / 2;
        if half == 0 {
            return Err(Error::InsufficientSamples {
                needed: 3,
                available: samples,
            });
        }
        Self::consecutive(half, half)
    }

    pub fn rows(&self) -> usize {
        self.row_offsets.len()
    }

    pub fn cols(&self) -> usize {
        self.col_offsets.len()
    }

    /// Samples needed to fill both `H(0)` and `H(1)`.
    pub fn samples_needed(&self) -> usize {
        self.row_offsets.last().unwrap() + self.col_offsets.last().unwrap() + 2
    }
}

/// `H_rs(k)`: an `r p × s` matrix of shifted output samples.
pub fn build_hankel<T: Real>(trace: &TimeTrace<T>, cfg: &HankelConfig, k: usize) -> Result<DMatrix<T>> {
    let needed = cfg.row_offsets.last().unwrap() + cfg.col_offsets.last().unwrap() + k + 1;
    if needed > trace.len() {
        return Err(Error::InsufficientSamples {
            needed,
            available: trace.len(),
        });
    }
    let p = trace.outputs();
    let mut h = DMatrix::zeros(cfg.rows() * p, cfg.cols());
    for (i, j) in cfg.row_offsets.iter().enumerate() {
        for (l, t) in cfg.col_offsets.iter().enumerate() {
            for c in 0..p {
                h[(i * p + c, l)] = trace.samples[(j + k + t, c)];
            }
        }
    }
    Ok(h)
}

/// Rule for the number of retained singular values.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Truncation {
    /// Tolerance rule when it leaves a numerical null space, largest gap otherwise.
    #[default]
    Auto,
    /// Keep singular values above this absolute threshold.
    Epsilon(f64),
    /// Cut at the largest ratio between consecutive singular values.
    Gap,
    /// Keep exactly this many.
    Order(usize),
}

/// Minimal realization `(Â_d, Ĉ, x̂(0))` of a sampled trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization<T: Real> {
    pub ad: DMatrix<T>,
    pub c: DMatrix<T>,
    pub x0: DVector<T>,
    /// All singular values of `H(0)`, descending.
    pub singular_values: Vec<T>,
    pub n_sigma: usize,
    /// Threshold separating retained from discarded singular values.
    pub epsilon: T,
    /// `log(Â_d)/Δt`, once recovered.
    pub acont: Option<DMatrix<T>>,
}

/// Default tolerance `max(rp, s) · σ_max · ε_mach`.
pub fn default_epsilon<T: Real>(shape: (usize, usize), sigma_max: T) -> T {
    T::from_usize(shape.0.max(shape.1)).expect("matrix dimension") * sigma_max * T::unit_roundoff()
}

fn largest_gap<T: Real>(sv: &[T]) -> usize {
    let floor = sv[0] * T::unit_roundoff();
    let mut best = (1, T::zero());
    for i in 0..sv.len() - 1 {
        let ratio = sv[i] / sv[i + 1].max(floor);
        if ratio > best.1 {
            best = (i + 1, ratio);
        }
    }
    best.0
}

/// Order and threshold chosen by `rule` for descending singular values `sv`.
pub fn select_order<T: Real>(sv: &[T], shape: (usize, usize), rule: Truncation) -> Result<(usize, T)> {
    let sigma_max = sv.first().copied().unwrap_or_else(T::zero);
    let tol = default_epsilon(shape, sigma_max);
    let count_above = |eps: T| sv.iter().take_while(|s| **s > eps).count();
    let (n, eps) = match rule {
        Truncation::Epsilon(e) => {
            if !(e > 0.0) {
                return Err(Error::Config(format!("epsilon must be positive, got {e}")));
            }
            let e = T::lit(e);
            (count_above(e), e)
        }
        Truncation::Order(k) => {
            if k == 0 || k > sv.len() {
                return Err(Error::Config(format!(
                    "order {k} outside 1..={}",
                    sv.len()
                )));
            }
            (k, sv[k - 1])
        }
        Truncation::Gap | Truncation::Auto if sigma_max <= T::zero() => (0, tol),
        Truncation::Gap => {
            let k = largest_gap(sv);
            (k, sv.get(k).copied().unwrap_or_else(T::zero))
        }
        Truncation::Auto => {
            let k = count_above(tol);
            if k < sv.len() {
                (k, tol)
            } else {
                let k = largest_gap(sv);
                (k, sv.get(k).copied().unwrap_or_else(T::zero))
            }
        }
    };
    if n == 0 {
        return Err(Error::EmptySystem {
            epsilon: eps.to_f64_lossy(),
        });
    }
    Ok((n, eps))
}

/// SVD of `H(0)` with singular values sorted in descending order.
///
/// The bidiagonal QR sweep occasionally stalls on rank-deficient input and returns
/// factors that do not reproduce the matrix; other deflation thresholds are tried then.
fn sorted_svd<T: Real>(h0: &DMatrix<T>) -> Result<(DMatrix<T>, Vec<T>, DMatrix<T>)> {
    let eps = T::default_epsilon();
    let scale = h0.amax();
    let tol = T::lit(1e3 * (h0.nrows().max(h0.ncols()) as f64).sqrt()) * eps * scale;
    let mut best: Option<(T, nalgebra::SVD<T, nalgebra::Dyn, nalgebra::Dyn>)> = None;
    for factor in [5.0, 1.0, 0.25, 100.0, 1e4] {
        let Some(svd) = h0.clone().try_svd(true, true, eps * T::lit(factor), 0) else {
            continue;
        };
        let err = match svd.clone().recompose() {
            Ok(r) => (r - h0).amax(),
            Err(_) => continue,
        };
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, svd));
        }
        if err <= tol {
            break;
        }
    }
    let (_, svd) = best.ok_or_else(|| Error::Dimension("SVD of the Hankel matrix failed".into()))?;
    let u = svd.u.ok_or_else(|| Error::Dimension("SVD did not return U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Dimension("SVD did not return Vᵀ".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    Ok((u, sv, v))
}

/// Realization from `H(0)`, `H(1)` for a `p`-output trace.
///
/// `Â_d = Σ^{-1/2} P₁ᵀ H(1) Q₁ Σ^{-1/2}`, `Ĉ = E_pᵀ P₁ Σ^{1/2}`, `x̂(0) = Σ^{1/2} Q₁ᵀ e₁`.
pub fn era_realize<T: Real>(
    h0: &DMatrix<T>,
    h1: &DMatrix<T>,
    outputs: usize,
    rule: Truncation,
) -> Result<Realization<T>> {
    if h0.shape() != h1.shape() {
        return Err(Error::Dimension(format!(
            "H(0) is {:?} but H(1) is {:?}",
            h0.shape(),
            h1.shape()
        )));
    }
    if outputs == 0 || h0.nrows() % outputs != 0 {
        return Err(Error::Dimension(format!(
            "{} Hankel rows are not a multiple of {outputs} outputs",
            h0.nrows()
        )));
    }
    let (u, sv, v) = sorted_svd(h0)?;
    let (n, epsilon) = select_order(&sv, h0.shape(), rule)?;
    let p1 = u.columns(0, n);
    let q1 = v.columns(0, n);
    let root: Vec<T> = sv[..n].iter().map(|s| s.sqrt()).collect();
    let inv_root = DMatrix::from_diagonal(&DVector::from_iterator(n, root.iter().map(|r| T::one() / *r)));
    let root_m = DMatrix::from_diagonal(&DVector::from_vec(root));
    let ad = &inv_root * p1.transpose() * h1 * q1 * &inv_root;
    let c = p1.rows(0, outputs) * &root_m;
    let x0 = &root_m * q1.row(0).transpose();
    Ok(Realization {
        ad,
        c,
        x0,
        singular_values: sv,
        n_sigma: n,
        epsilon,
        acont: None,
    })
}

/// Hankel construction plus realization in one step.
pub fn realize_trace<T: Real>(
    trace: &TimeTrace<T>,
    cfg: Option<&HankelConfig>,
    rule: Truncation,
) -> Result<Realization<T>> {
    let owned;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            owned = HankelConfig::for_length(trace.len())?;
            &owned
        }
    };
    if cfg.samples_needed() > trace.len() {
        return Err(Error::InsufficientSamples {
            needed: cfg.samples_needed(),
            available: trace.len(),
        });
    }
    let h0 = build_hankel(trace, cfg, 0)?;
    let h1 = build_hankel(trace, cfg, 1)?;
    era_realize(&h0, &h1, trace.outputs(), rule)
}

/// Options for recovering the continuous generator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContinuousOptions {
    /// Prior upper bound on `max|σ(Ã)|`; rejects `dt ≥ π / bound`.
    pub spectral_bound: Option<f64>,
    /// Zero the real parts of the recovered eigenvalues.
    pub project_unit_circle: bool,
}

/// `Â = log(Â_d) / Δt` with the principal logarithm.
pub fn continuous_generator<T: Real>(real: &Realization<T>, dt: T) -> Result<Realization<T>> {
    continuous_generator_with(real, dt, ContinuousOptions::default())
}

pub fn continuous_generator_with<T: Real>(
    real: &Realization<T>,
    dt: T,
    opts: ContinuousOptions,
) -> Result<Realization<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Sampling(format!("dt must be positive, got {dt}")));
    }
    if let Some(bound) = opts.spectral_bound {
        if bound > 0.0 {
            let limit = std::f64::consts::PI / bound;
            let dt64 = dt.to_f64_lossy();
            if dt64 >= limit {
                return Err(Error::NyquistViolation { dt: dt64, bound: limit });
            }
        }
    }
    let log = principal_log_with(&real.ad, opts.project_unit_circle)?;
    Ok(Realization {
        acont: Some(log / dt),
        ..real.clone()
    })
}

/// Largest eigenvalue modulus of the continuous generator, if recovered.
pub fn spectral_radius<T: Real>(real: &Realization<T>) -> Option<T> {
    real.acont
        .as_ref()
        .map(|a| spectrum(a).iter().fold(T::zero(), |m, z| m.max(z.modulus())))
}

/// Deviation between a trace and the realization's prediction `Ĉ Â_dʲ x̂(0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    pub max_abs: f64,
    pub rms: f64,
    /// `max_abs / max|y|`.
    pub max_rel: f64,
}

pub fn verify_realization<T: Real>(real: &Realization<T>, trace: &TimeTrace<T>) -> Result<ResidualReport> {
    if real.c.nrows() != trace.outputs() {
        return Err(Error::Dimension(format!(
            "realization has {} outputs, trace has {}",
            real.c.nrows(),
            trace.outputs()
        )));
    }
    let mut x = real.x0.clone();
    let (mut max_abs, mut sq, mut peak) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..trace.len() {
        let pred = &real.c * &x;
        for c in 0..trace.outputs() {
            let y = trace.samples[(j, c)].to_f64_lossy();
            let d = (pred[c].to_f64_lossy() - y).abs();
            max_abs = max_abs.max(d);
            peak = peak.max(y.abs());
            sq += d * d;
        }
        x = &real.ad * x;
    }
    let count = (trace.len() * trace.outputs()) as f64;
    Ok(ResidualReport {
        max_abs,
        rms: (sq / count).sqrt(),
        max_rel: if peak > 0.0 { max_abs / peak } else { max_abs },
    })
}
