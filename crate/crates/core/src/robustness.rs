//! Monte-Carlo noise study: identify from many independently noised traces.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::statistics::{Data, OrderStatistics};

use crate::dynamics::add_noise;
use crate::era::Truncation;
use crate::error::{Error, Result};
use crate::pipeline::{identify, Experiment, IdentifyConfig};
use crate::solver::canonical_signs;

/// Default noise grid.
pub const DEFAULT_SIGMAS: [f64; 6] = [0.01, 0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessConfig {
    pub sigmas: Vec<f64>,
    pub trajectories: usize,
    pub seed: u64,
    pub dt: f64,
    pub samples: usize,
    pub identify: IdentifyConfig,
}

impl RobustnessConfig {
    /// Defaults for an experiment: model-order truncation, 20 starts, all minima kept.
    pub fn new(exp: &Experiment, dt: f64, samples: usize) -> Result<Self> {
        let order = exp.system(None)?.order();
        let mut identify = IdentifyConfig {
            truncation: Truncation::Order(order),
            tol_residual: Some(f64::INFINITY),
            ..Default::default()
        };
        identify.solve.starts = 20;
        Ok(RobustnessConfig {
            sigmas: DEFAULT_SIGMAS.to_vec(),
            trajectories: 500,
            seed: 0,
            dt,
            samples,
            identify,
        })
    }
}

/// Statistics of one parameter at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStats {
    pub sigma: f64,
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    /// `(mean − truth) / truth · 100`.
    pub rel_error_pct: f64,
    pub std: f64,
    pub q09: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q91: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub sigma_grid: Vec<f64>,
    pub parameter_names: Vec<String>,
    pub truth: Vec<f64>,
    pub trajectories: usize,
    pub seed: u64,
    /// Failed identifications per noise level.
    pub dropouts: Vec<usize>,
    /// Row-major over `(sigma, parameter)`.
    pub cells: Vec<CellStats>,
}

impl RobustnessReport {
    pub fn cell(&self, sigma_index: usize, parameter: usize) -> &CellStats {
        &self.cells[sigma_index * self.parameter_names.len() + parameter]
    }

    /// Standard deviations of one parameter across the grid.
    pub fn std_series(&self, parameter: usize) -> Vec<f64> {
        (0..self.sigma_grid.len()).map(|s| self.cell(s, parameter).std).collect()
    }
}

/// splitmix64 finalizer; decorrelates the per-trajectory seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `t` at noise index `s`.
pub fn trajectory_seed(master: u64, s: usize, t: usize) -> u64 {
    mix(mix(mix(master) ^ s as u64) ^ t as u64)
}

/// Estimate from one noisy trace: the converged minimum nearest the truth after sign
/// canonicalization, or `None` when identification fails.
fn one_trajectory(
    exp: &Experiment,
    clean: &crate::dynamics::TimeTrace<f64>,
    truth_canon: &[f64],
    sigma: f64,
    seed: u64,
    cfg: &IdentifyConfig,
) -> Option<Vec<f64>> {
    let noisy = add_noise(clean, sigma, seed).ok()?;
    let mut cfg = cfg.clone();
    cfg.solve.seed = seed;
    let id = identify(exp, &noisy, &cfg).ok()?;
    let sym = &id.report.sign_symmetries;
    id.report
        .estimates
        .iter()
        .map(|e| canonical_signs(&e.theta, sym))
        .min_by(|a, b| distance(a, truth_canon).total_cmp(&distance(b, truth_canon)))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn run_robustness(exp: &Experiment, truth: &[f64], cfg: &RobustnessConfig) -> Result<RobustnessReport> {
    exp.model.check_theta_len(truth.len())?;
    if cfg.trajectories < 10 {
        return Err(Error::Config(format!(
            "at least 10 trajectories needed, got {}",
            cfg.trajectories
        )));
    }
    if cfg.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config("noise levels must be ≥ 0".into()));
    }
    let clean = exp.simulate(truth, cfg.dt, cfg.samples, None)?;
    // Canonical truth under the model's sign symmetries, from a clean identification.
    let mut probe_cfg = cfg.identify.clone();
    probe_cfg.solve.starts = probe_cfg.solve.starts.max(1);
    let symmetries = identify(exp, &clean, &probe_cfg)
        .map(|id| id.report.sign_symmetries)
        .unwrap_or_default();
    let truth_canon = canonical_signs(truth, &symmetries);

    let names = exp.model.parameter_names().to_vec();
    let mut cells = Vec::new();
    let mut dropouts = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        let estimates: Vec<Option<Vec<f64>>> = (0..cfg.trajectories)
            .into_par_iter()
            .map(|t| {
                let seed = trajectory_seed(cfg.seed, si, t);
                one_trajectory(exp, &clean, &truth_canon, sigma, seed, &cfg.identify)
            })
            .collect();
        let ok: Vec<&Vec<f64>> = estimates.iter().flatten().collect();
        dropouts.push(cfg.trajectories - ok.len());
        for (pi, name) in names.iter().enumerate() {
            let values: Vec<f64> = ok.iter().map(|e| e[pi]).collect();
            cells.push(cell_stats(sigma, name, truth_canon[pi], values));
        }
    }
    Ok(RobustnessReport {
        sigma_grid: cfg.sigmas.clone(),
        parameter_names: names,
        truth: truth_canon,
        trajectories: cfg.trajectories,
        seed: cfg.seed,
        dropouts,
        cells,
    })
}

fn cell_stats(sigma: f64, name: &str, truth: f64, values: Vec<f64>) -> CellStats {
    let count = values.len();
    if count == 0 {
        return CellStats {
            sigma,
            parameter: name.to_string(),
            truth,
            mean: f64::NAN,
            rel_error_pct: f64::NAN,
            std: f64::NAN,
            q09: f64::NAN,
            q25: f64::NAN,
            q50: f64::NAN,
            q75: f64::NAN,
            q91: f64::NAN,
            count,
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut data = Data::new(values);
    CellStats {
        sigma,
        parameter: name.to_string(),
        truth,
        mean,
        rel_error_pct: (mean - truth) / truth * 100.0,
        std,
        q09: data.quantile(0.09),
        q25: data.quantile(0.25),
        q50: data.quantile(0.50),
        q75: data.quantile(0.75),
        q91: data.quantile(0.91),
        count,
    }
}

/// Percentage relative error of the mean, one column per parameter.
pub fn rel_error_csv(report: &RobustnessReport) -> String {
    series_csv(report, |c| c.rel_error_pct)
}

/// Standard deviation of the estimates, one column per parameter.
pub fn std_csv(report: &RobustnessReport) -> String {
    series_csv(report, |c| c.std)
}

fn series_csv(report: &RobustnessReport, f: impl Fn(&CellStats) -> f64) -> String {
    let mut out = String::from("sigma");
    for n in &report.parameter_names {
        write!(out, ",{n}").expect("string write");
    }
    out.push('\n');
    for (si, sigma) in report.sigma_grid.iter().enumerate() {
        write!(out, "{sigma}").expect("string write");
        for pi in 0..report.parameter_names.len() {
            write!(out, ",{}", f(report.cell(si, pi))).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Box-plot data: quantiles of the relative error `(estimate − truth)/truth · 100`.
pub fn boxplot_csv(report: &RobustnessReport) -> String {
    let mut out = String::from("sigma,parameter,q09,q25,q50,q75,q91,count\n");
    for c in &report.cells {
        let rel = |q: f64| (q - c.truth) / c.truth * 100.0;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.sigma,
            c.parameter,
            rel(c.q09),
            rel(c.q25),
            rel(c.q50),
            rel(c.q75),
            rel(c.q91),
            c.count
        )
        .expect("string write");
    }
    out
}
