//! End-to-end simulate and identify.

use serde::Serialize;

use crate::dynamics::{
    add_noise, filtration, measured_elements, nyquist_max_dt, simulate_trace, unidentifiable_parameters,
    CoherenceSystem, TimeTrace,
};
use crate::era::{
    continuous_generator_with, realize_trace, spectral_radius, ContinuousOptions, HankelConfig,
    Realization, Truncation,
};
use crate::error::{Error, Result};
use crate::model::{HamiltonianModel, InitialState, Observable};
use crate::solver::{solve, SolveConfig, SolveReport, TargetSystem};
use crate::transfer::{mismatch_hint, select_equations, transfer_coefficients, TransferFunction};

/// Model, measurement and preparation.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub model: HamiltonianModel,
    pub observables: Vec<Observable>,
    pub initial_state: InitialState,
    pub nominal: Option<Vec<f64>>,
}

impl Experiment {
    /// Coherence system at `theta` (the nominal values, or zeros, when absent).
    pub fn system(&self, theta: Option<&[f64]>) -> Result<CoherenceSystem<f64>> {
        let zeros = vec![0.0; self.model.parameter_count()];
        let theta = theta.or(self.nominal.as_deref()).unwrap_or(&zeros);
        let psi = self.initial_state.state_vector::<f64>(self.model.num_qubits())?;
        CoherenceSystem::build(&self.model, theta, &self.observables, &psi)
    }

    /// Clean trace at `theta`, optionally with noise.
    pub fn simulate(&self, theta: &[f64], dt: f64, count: usize, noise: Option<(f64, u64)>) -> Result<TimeTrace<f64>> {
        let sys = self.system(Some(theta))?;
        let mut trace = simulate_trace(&sys, dt, count)?;
        if let Some((sigma, seed)) = noise {
            trace = add_noise(&trace, sigma, seed)?;
        }
        trace.initial_state_label = self.initial_state.label();
        Ok(trace)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifyConfig {
    pub hankel: Option<HankelConfig>,
    pub truncation: Truncation,
    pub continuous: ContinuousOptions,
    /// `bound: None` uses the spectral radius of the recovered generator.
    pub solve: SolveConfig,
    /// `None`: `1e-6` for clean traces, `1e-2 · √(equations)` for noisy ones.
    pub tol_residual: Option<f64>,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            hankel: None,
            truncation: Truncation::Auto,
            continuous: ContinuousOptions::default(),
            solve: SolveConfig::default(),
            tol_residual: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Identification {
    pub accessible: Vec<String>,
    pub realization: Realization<f64>,
    pub target: TransferFunction<f64>,
    pub report: SolveReport,
}

/// Realization of the trace and its continuous generator, checked against the model order.
pub fn realize_for(exp: &Experiment, trace: &TimeTrace<f64>, cfg: &IdentifyConfig) -> Result<(CoherenceSystem<f64>, Realization<f64>)> {
    let template = exp.system(None)?;
    if trace.outputs() != template.outputs() {
        return Err(Error::Dimension(format!(
            "trace has {} outputs, model measures {}",
            trace.outputs(),
            template.outputs()
        )));
    }
    let real = realize_trace(trace, cfg.hankel.as_ref(), cfg.truncation)?;
    if real.n_sigma != template.order() {
        return Err(Error::StructuralMismatch {
            expected: template.order(),
            found: real.n_sigma,
            hint: mismatch_hint(template.order(), real.n_sigma),
        });
    }
    let real = continuous_generator_with(&real, trace.dt, cfg.continuous)?;
    Ok((template, real))
}

/// ERA → continuous generator → transfer coefficients → parameter solve.
pub fn identify(exp: &Experiment, trace: &TimeTrace<f64>, cfg: &IdentifyConfig) -> Result<Identification> {
    let (template, real) = realize_for(exp, trace, cfg)?;
    let acont = real.acont.as_ref().expect("continuous generator recovered");
    let target = transfer_coefficients(acont, &real.c, &real.x0)?;
    let mut solve_cfg = cfg.solve.clone();
    if solve_cfg.bound.is_none() {
        solve_cfg.bound = spectral_radius(&real).filter(|b| *b > 0.0).or(Some(1.0));
    }
    solve_cfg.tol_residual = match cfg.tol_residual {
        Some(t) => t,
        None if trace.noise_sigma > 0.0 => {
            let eqs = select_equations(&exp.model, &template, &solve_cfg.equations)?.len();
            1e-2 * (eqs as f64).sqrt()
        }
        None => 1e-6,
    };
    let accessible = template.accessible.iter().map(|p| p.to_string()).collect();
    let report = solve(
        &exp.model,
        &TargetSystem {
            template,
            target: target.clone(),
        },
        &solve_cfg,
    )?;
    Ok(Identification {
        accessible,
        realization: real,
        target,
        report,
    })
}

/// Static facts about a model: accessible set, identifiability, sampling bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inspection {
    pub accessible: Vec<String>,
    pub level_sizes: Vec<usize>,
    pub unidentifiable: Vec<String>,
    pub nyquist_max_dt: Option<f64>,
}

pub fn inspect(exp: &Experiment) -> Result<Inspection> {
    let acc = filtration(&measured_elements(&exp.observables), &exp.model)?;
    let unidentifiable = unidentifiable_parameters(&exp.model, acc.elements())?;
    let nyquist = match &exp.nominal {
        Some(theta) => nyquist_max_dt(&crate::dynamics::build_generator(&exp.model, theta, acc.elements())?),
        None => None,
    };
    Ok(Inspection {
        accessible: acc.elements().iter().map(|p| p.to_string()).collect(),
        level_sizes: acc.level_sizes().to_vec(),
        unidentifiable,
        nyquist_max_dt: nyquist,
    })
}
