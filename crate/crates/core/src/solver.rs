//! Multi-start Levenberg–Marquardt on the coefficient equations.
//!
//! The model's generator is affine in the parameters, so the residual
//! `θ ↦ coefficients(Ã(θ)) − target` is a polynomial map. It is minimized from
//! many random starts; converged minima are deduplicated and grouped into
//! classes of input/output-equivalent parameter vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{build_generator, unidentifiable_parameters, CoherenceSystem};
use crate::error::{Error, Result};
use crate::model::HamiltonianModel;
use crate::transfer::{
    mismatch_hint, partition_coefficients, select_equations, transfer_coefficients, Coefficient, EquationSet,
    TransferFunction,
};

/// Caveat attached to reports with more than one surviving solution.
pub const AMBIGUITY_NOTE: &str = "several parameter vectors reproduce the measured input/output \
    behaviour; additional measurements (other observables or initial states) or prior \
    information are required to tell them apart";

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub starts: usize,
    /// Half-width `B` of the start box `[−B, B]`; required unless the caller supplies one.
    pub bound: Option<f64>,
    pub tol_residual: f64,
    /// Relative distance below which two minima are the same solution.
    pub tol_cluster: f64,
    /// Relative coefficient agreement for input/output equivalence.
    pub tol_class: f64,
    pub max_iterations: usize,
    pub seed: u64,
    pub equations: EquationSet,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            starts: 100,
            bound: None,
            tol_residual: 1e-6,
            tol_cluster: 1e-5,
            tol_class: 1e-6,
            max_iterations: 200,
            seed: 0,
            equations: EquationSet::All,
        }
    }
}

/// Measurement setup plus the coefficients identified from its data.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSystem {
    pub template: CoherenceSystem<f64>,
    pub target: TransferFunction<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterEstimate {
    pub theta: Vec<f64>,
    pub residual_norm: f64,
    pub class_id: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub parameter_names: Vec<String>,
    /// Accepted, distinct solutions sorted by residual then `θ`.
    pub estimates: Vec<ParameterEstimate>,
    pub class_count: usize,
    /// Parameter index sets whose joint sign flip leaves every coefficient unchanged.
    pub sign_symmetries: Vec<Vec<usize>>,
    /// Lowest residual over all starts, accepted or not.
    pub best_residual: f64,
    pub best_theta: Vec<f64>,
    pub starts: usize,
    pub converged_starts: usize,
    /// Singular values of the residual Jacobian at the best point, descending.
    pub jacobian_singular_values: Vec<f64>,
    /// True when the Jacobian is numerically rank deficient at the best point.
    pub insensitive: bool,
    /// Weighted mismatch of the parameter-independent coefficients (structural zeros and
    /// constants). Large values point at a wrong model rather than a poor fit.
    pub fixed_residual: f64,
    pub caveat: Option<String>,
}

impl SolveReport {
    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn class_members(&self, class_id: usize) -> impl Iterator<Item = &ParameterEstimate> {
        self.estimates.iter().filter(move |e| e.class_id == class_id)
    }
}

/// `Ã(θ) = A₀ + Σ θ_i A_i`, precomputed once per problem.
struct AffineGenerator {
    base: DMatrix<f64>,
    parts: Vec<DMatrix<f64>>,
}

impl AffineGenerator {
    fn new(model: &HamiltonianModel, accessible: &[crate::pauli::PauliString]) -> Result<Self> {
        let p = model.parameter_count();
        let base = build_generator(model, &vec![0.0; p], accessible)?;
        let parts = (0..p)
            .map(|i| {
                let mut e = vec![0.0; p];
                e[i] = 1.0;
                build_generator(model, &e, accessible).map(|a| a - &base)
            })
            .collect::<Result<_>>()?;
        Ok(AffineGenerator { base, parts })
    }

    fn at(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut a = self.base.clone();
        for (t, part) in theta.iter().zip(&self.parts) {
            a += part * *t;
        }
        a
    }
}

struct Channel {
    template: CoherenceSystem<f64>,
    target: TransferFunction<f64>,
    equations: Vec<Coefficient>,
    weights: Vec<f64>,
    fixed: Vec<Coefficient>,
}

/// Stacked residual over all targets.
struct Objective {
    generator: AffineGenerator,
    channels: Vec<Channel>,
}

impl Objective {
    fn new(model: &HamiltonianModel, targets: &[TargetSystem], set: &EquationSet) -> Result<Self> {
        let first = targets
            .first()
            .ok_or_else(|| Error::InconsistentTargets("no targets supplied".into()))?;
        let accessible = &first.template.accessible;
        let missing = unidentifiable_parameters(model, accessible)?;
        if !missing.is_empty() {
            return Err(Error::NotIdentifiable(missing));
        }
        let mut channels = Vec::new();
        for t in targets {
            if &t.template.accessible != accessible {
                return Err(Error::InconsistentTargets(
                    "targets have different accessible sets; combine only initial states \
                     measured with the same observables"
                        .into(),
                ));
            }
            if t.target.order() != t.template.order() {
                return Err(Error::StructuralMismatch {
                    expected: t.template.order(),
                    found: t.target.order(),
                    hint: mismatch_hint(t.template.order(), t.target.order()),
                });
            }
            if t.target.channels() != t.template.outputs() {
                return Err(Error::Dimension(format!(
                    "target has {} channels, setup measures {}",
                    t.target.channels(),
                    t.template.outputs()
                )));
            }
            let equations = select_equations(model, &t.template, set)?;
            let (_, fixed) = partition_coefficients(model, &t.template)?;
            let weights = equations
                .iter()
                .map(|c| c.get(&t.target).abs().max(1.0))
                .collect();
            channels.push(Channel {
                template: t.template.clone(),
                target: t.target.clone(),
                equations,
                weights,
                fixed,
            });
        }
        Ok(Objective {
            generator: AffineGenerator::new(model, accessible)?,
            channels,
        })
    }

    fn fixed_residual(&self, p: usize) -> f64 {
        let model = self.coefficients(&vec![0.0; p]);
        self.channels
            .iter()
            .zip(&model)
            .flat_map(|(c, m)| {
                c.fixed
                    .iter()
                    .map(move |k| (k.get(m) - k.get(&c.target)) / k.get(&c.target).abs().max(1.0))
            })
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }

    fn coefficients(&self, theta: &[f64]) -> Vec<TransferFunction<f64>> {
        let a = self.generator.at(theta);
        self.channels
            .iter()
            .map(|c| {
                transfer_coefficients(&a, &c.template.selector, &c.template.x0)
                    .expect("dimensions validated at construction")
            })
            .collect()
    }

    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        let tfs = self.coefficients(theta);
        let len = self.channels.iter().map(|c| c.equations.len()).sum();
        let mut r = DVector::zeros(len);
        let mut i = 0;
        for (c, tf) in self.channels.iter().zip(&tfs) {
            for (eq, w) in c.equations.iter().zip(&c.weights) {
                r[i] = (eq.get(tf) - eq.get(&c.target)) / w;
                i += 1;
            }
        }
        r
    }

    /// Forward differences with `h = 1e-6 · max(1, |θ_i|)`.
    fn jacobian(&self, theta: &[f64], r0: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(r0.len(), theta.len());
        let mut probe = theta.to_vec();
        for i in 0..theta.len() {
            let h = 1e-6 * theta[i].abs().max(1.0);
            probe[i] = theta[i] + h;
            let ri = self.residual(&probe);
            j.set_column(i, &((ri - r0) / h));
            probe[i] = theta[i];
        }
        j
    }
}

struct LmOutcome {
    theta: Vec<f64>,
    residual: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(obj: &Objective, start: Vec<f64>, max_iterations: usize) -> LmOutcome {
    let p = start.len();
    let mut theta = start;
    let mut r = obj.residual(&theta);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        if !cost.is_finite() {
            break;
        }
        if cost <= 1e-30 {
            converged = true;
            break;
        }
        let jac = obj.jacobian(&theta, &r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() <= 1e-14 * (1.0 + cost.sqrt()) {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for i in 0..p {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&grad)) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let rt = obj.residual(&trial);
            let ct = rt.norm_squared();
            if ct < cost {
                let step_small =
                    step.norm() <= 1e-13 * (1e-13 + DVector::from_column_slice(&theta).norm());
                let decrease_small = cost - ct <= 1e-15 * cost;
                theta = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                if step_small || decrease_small {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No descent possible at any damping: a stationary point to working precision.
            converged = cost.is_finite();
            break;
        }
        if converged {
            break;
        }
    }
    LmOutcome {
        theta,
        residual: cost.sqrt(),
        iterations,
        converged,
    }
}

/// Detects sign flips of parameter subsets that leave all coefficients unchanged.
///
/// Subsets are tested exhaustively for up to 12 parameters, single flips otherwise.
fn sign_symmetries(obj: &Objective, p: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_6e5);
    let probes: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..p).map(|_| rng.random_range(0.5..2.0)).collect())
        .collect();
    let base: Vec<Vec<TransferFunction<f64>>> = probes.iter().map(|t| obj.coefficients(t)).collect();
    let masks: Vec<u64> = if p <= 12 {
        (1..(1u64 << p)).collect()
    } else {
        (0..p).map(|i| 1u64 << i).collect()
    };
    masks
        .into_iter()
        .filter(|mask| {
            probes.iter().zip(&base).all(|(theta, tfs)| {
                let flipped = flip(theta, *mask);
                obj.coefficients(&flipped)
                    .iter()
                    .zip(tfs)
                    .all(|(a, b)| a.max_rel_diff(b) <= 1e-10)
            })
        })
        .map(|mask| (0..p).filter(|i| mask >> i & 1 == 1).collect())
        .collect()
}

fn flip(theta: &[f64], mask: u64) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| if mask >> i & 1 == 1 { -t } else { *t })
        .collect()
}

fn mask_of(set: &[usize]) -> u64 {
    set.iter().fold(0, |m, i| m | 1 << i)
}

/// Representative of `theta` under the detected sign symmetries: the image whose
/// sign pattern, read in parameter order, is lexicographically most positive.
pub fn canonical_signs(theta: &[f64], symmetries: &[Vec<usize>]) -> Vec<f64> {
    let mut best = theta.to_vec();
    let key = |v: &[f64]| -> Vec<bool> { v.iter().map(|x| *x < 0.0).collect() };
    for s in symmetries {
        let cand = flip(theta, mask_of(s));
        if key(&cand) < key(&best) {
            best = cand;
        }
    }
    best
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    diff <= tol * scale
}

/// Solves for one measurement setup.
pub fn solve(model: &HamiltonianModel, target: &TargetSystem, cfg: &SolveConfig) -> Result<SolveReport> {
    multi_state_solve(model, std::slice::from_ref(target), cfg)
}

/// Solves the stacked equations of several initial states measured the same way.
pub fn multi_state_solve(
    model: &HamiltonianModel,
    targets: &[TargetSystem],
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    if cfg.starts == 0 || !(cfg.tol_residual > 0.0) || !(cfg.tol_cluster > 0.0) {
        return Err(Error::Config(
            "starts must be ≥ 1 and tolerances positive".into(),
        ));
    }
    let bound = cfg
        .bound
        .filter(|b| *b > 0.0 && b.is_finite())
        .ok_or_else(|| Error::Config("a positive search bound is required".into()))?;
    let obj = Objective::new(model, targets, &cfg.equations)?;
    let p = model.parameter_count();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|_| (0..p).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    let outcomes: Vec<LmOutcome> = starts
        .into_par_iter()
        .map(|s| levenberg_marquardt(&obj, s, cfg.max_iterations))
        .collect();

    let converged_starts = outcomes.iter().filter(|o| o.converged).count();
    let best = outcomes
        .iter()
        .filter(|o| o.residual.is_finite())
        .min_by(|a, b| a.residual.total_cmp(&b.residual).then(lex(&a.theta, &b.theta)));
    let (best_residual, best_theta) = best.map_or((f64::INFINITY, Vec::new()), |o| (o.residual, o.theta.clone()));

    let mut accepted: Vec<&LmOutcome> = outcomes
        .iter()
        .filter(|o| o.converged && o.residual <= cfg.tol_residual)
        .collect();
    accepted.sort_by(|a, b| a.residual.total_cmp(&b.residual).then(lex(&a.theta, &b.theta)));
    let mut distinct: Vec<&LmOutcome> = Vec::new();
    for o in accepted {
        if !distinct.iter().any(|d| close(&o.theta, &d.theta, cfg.tol_cluster)) {
            distinct.push(o);
        }
    }

    let symmetries = sign_symmetries(&obj, p, cfg.seed);
    let coeffs: Vec<Vec<TransferFunction<f64>>> =
        distinct.iter().map(|o| obj.coefficients(&o.theta)).collect();
    let mut class = vec![usize::MAX; distinct.len()];
    let mut class_count = 0;
    for i in 0..distinct.len() {
        if class[i] != usize::MAX {
            continue;
        }
        class[i] = class_count;
        for j in i + 1..distinct.len() {
            if class[j] != usize::MAX {
                continue;
            }
            let same_io = coeffs[i]
                .iter()
                .zip(&coeffs[j])
                .all(|(a, b)| a.max_rel_diff(b) <= cfg.tol_class);
            let related = symmetries
                .iter()
                .any(|s| close(&flip(&distinct[j].theta, mask_of(s)), &distinct[i].theta, cfg.tol_cluster));
            if same_io || related {
                class[j] = class_count;
            }
        }
        class_count += 1;
    }

    let estimates: Vec<ParameterEstimate> = distinct
        .iter()
        .zip(&class)
        .map(|(o, c)| ParameterEstimate {
            theta: o.theta.clone(),
            residual_norm: o.residual,
            class_id: *c,
            converged: o.converged,
            iterations: o.iterations,
        })
        .collect();

    let (jacobian_singular_values, insensitive) = if best_theta.is_empty() {
        (Vec::new(), false)
    } else {
        let r = obj.residual(&best_theta);
        let mut sv: Vec<f64> = obj.jacobian(&best_theta, &r).singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let top = sv.first().copied().unwrap_or(0.0);
        let deficient = sv.len() < p || sv.last().is_none_or(|s| *s <= 1e-8 * top);
        (sv, deficient)
    };
    let fixed_residual = obj.fixed_residual(p);
    let caveat = (estimates.len() > 1).then(|| AMBIGUITY_NOTE.to_string());
    Ok(SolveReport {
        parameter_names: model.parameter_names().to_vec(),
        estimates,
        class_count,
        sign_symmetries: symmetries,
        best_residual,
        best_theta,
        starts: cfg.starts,
        converged_starts,
        jacobian_singular_values,
        insensitive,
        fixed_residual,
        caveat,
    })
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Coefficient residual norm of `theta`, recomputed from scratch.
pub fn residual_norm(
    model: &HamiltonianModel,
    targets: &[TargetSystem],
    equations: &EquationSet,
    theta: &[f64],
) -> Result<f64> {
    let obj = Objective::new(model, targets, equations)?;
    Ok(obj.residual(theta).norm())
}

/// Groups estimates into input/output-equivalence classes by their model coefficients.
pub fn classify_equivalents(
    model: &HamiltonianModel,
    template: &CoherenceSystem<f64>,
    estimates: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<usize>> {
    let coeffs: Vec<TransferFunction<f64>> = estimates
        .iter()
        .map(|t| crate::transfer::model_coefficients(model, t, template))
        .collect::<Result<_>>()?;
    let mut class = vec![usize::MAX; estimates.len()];
    let mut next = 0;
    for i in 0..estimates.len() {
        if class[i] == usize::MAX {
            class[i] = next;
            for j in i + 1..estimates.len() {
                if class[j] == usize::MAX && coeffs[i].max_rel_diff(&coeffs[j]) <= tol {
                    class[j] = next;
                }
            }
            next += 1;
        }
    }
    Ok(class)
}
