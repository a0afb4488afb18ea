//! `hamid`: simulate coherence traces, identify Hamiltonian parameters from them,
//! and measure how the estimates degrade with noise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hamid_core::dynamics::sample_count;
use hamid_core::era::{ContinuousOptions, Truncation};
use hamid_core::io::{read_trace, singular_values_csv, trace_to_csv, ModelFile};
use hamid_core::logm::spectrum;
use hamid_core::pipeline::{identify, inspect, Experiment, IdentifyConfig};
use hamid_core::robustness::{boxplot_csv, rel_error_csv, run_robustness, std_csv, RobustnessConfig, DEFAULT_SIGMAS};
use hamid_core::transfer::EquationSet;
use hamid_core::Error;
use log::{info, warn};
use serde_json::json;

#[derive(Parser)]
#[command(name = "hamid", version, about = "Hamiltonian identification from coherence time traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a measurement trace at the model's nominal parameters.
    Simulate(SimulateArgs),
    /// Estimate the unknown parameters from a trace.
    Identify(IdentifyArgs),
    /// Monte-Carlo study of estimate spread against measurement noise.
    Robustness(RobustnessArgs),
    /// Accessible set, identifiability and sampling bound of a model.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    duration: f64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Trace CSV written by `simulate` or by an experiment.
    #[arg(long)]
    trace: PathBuf,
    /// Keep singular values above this threshold.
    #[arg(long, conflicts_with = "order")]
    epsilon: Option<f64>,
    /// Keep exactly this many singular values.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = 100)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fit only as many of the lowest-degree coefficient equations as there are unknowns.
    #[arg(long)]
    lowest_order_only: bool,
    /// Prior bound on the generator's spectral radius; rejects undersampled traces.
    #[arg(long)]
    spectral_bound: Option<f64>,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the Hankel singular values (next to `--out` as `<stem>.sv.csv`).
    #[arg(long)]
    dump_singular_values: bool,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    duration: f64,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIGMAS)]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    trajectories: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    starts: usize,
    /// Output directory for the JSON report and CSV tables.
    #[arg(long, default_value = "robustness")]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sampling period to check against the Nyquist bound.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Core(Error),
    NoSolution(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::from(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(Error::from(e))
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::NoSolution(_) => 2,
        Failure::Core(Error::StructuralMismatch { .. }) => 3,
        Failure::Core(
            Error::Io(_) | Error::Parse(_) | Error::PauliParse(_) | Error::InvalidModel(_),
        ) => 4,
        Failure::Core(_) => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => run_identify(a),
        Command::Robustness(a) => robustness(a),
        Command::Inspect(a) => run_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::NoSolution(msg) => eprintln!("no solution: {msg}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

fn load(path: &Path) -> Result<Experiment, Failure> {
    Ok(ModelFile::read(path)?.to_experiment()?)
}

fn nominal(exp: &Experiment) -> Result<Vec<f64>, Failure> {
    exp.nominal.clone().ok_or_else(|| {
        Failure::Core(Error::Config(
            "model file has no `nominal` parameter values to simulate with".into(),
        ))
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let exp = load(&a.model)?;
    let theta = nominal(&exp)?;
    let count = sample_count(a.dt, a.duration)?;
    let noise = (a.sigma > 0.0).then_some((a.sigma, a.seed));
    let trace = exp.simulate(&theta, a.dt, count, noise)?;
    info!("{count} samples of {} output(s)", trace.outputs());
    emit(a.out.as_deref(), &trace_to_csv(&trace)?)
}

fn run_identify(a: IdentifyArgs) -> Result<(), Failure> {
    let exp = load(&a.model)?;
    let trace = read_trace(&a.trace)?;
    let mut cfg = IdentifyConfig {
        truncation: match (a.epsilon, a.order) {
            (Some(e), _) => Truncation::Epsilon(e),
            (_, Some(k)) => Truncation::Order(k),
            _ => Truncation::Auto,
        },
        continuous: ContinuousOptions {
            spectral_bound: a.spectral_bound,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.solve.starts = a.starts;
    cfg.solve.seed = a.seed;
    if a.lowest_order_only {
        cfg.solve.equations = EquationSet::LowestOrder(exp.model.parameter_count());
    }
    let id = identify(&exp, &trace, &cfg)?;
    let real = &id.realization;
    let rep = &id.report;
    info!(
        "order {} (epsilon {:.3e}), {} of {} starts converged, {} estimate(s) in {} class(es)",
        real.n_sigma,
        real.epsilon,
        rep.converged_starts,
        rep.starts,
        rep.estimates.len(),
        rep.class_count
    );
    if let Some(c) = &rep.caveat {
        warn!("{c}");
    }
    if rep.insensitive {
        warn!("the coefficient residual is insensitive to some parameter direction at the best point");
    }
    let eigen: Vec<[f64; 2]> = real
        .acont
        .as_ref()
        .map(|a| spectrum(a).iter().map(|z| [z.re, z.im]).collect())
        .unwrap_or_default();
    let shown = (real.n_sigma + 1).min(real.singular_values.len());
    let report = json!({
        "accessible": id.accessible,
        "n_sigma": real.n_sigma,
        "epsilon": real.epsilon,
        "leading_singular_values": &real.singular_values[..shown],
        "generator_spectrum": eigen,
        "transfer": { "den": id.target.den, "num": id.target.num },
        "solve": rep,
    });
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if a.dump_singular_values {
        let csv = singular_values_csv(&real.singular_values);
        match &a.out {
            Some(p) => std::fs::write(p.with_extension("sv.csv"), csv)?,
            None => print!("{csv}"),
        }
    }
    if rep.is_empty() {
        return Err(Failure::NoSolution(format!(
            "no start met the residual tolerance (best {:.3e} at {:?}); try more --starts",
            rep.best_residual, rep.best_theta
        )));
    }
    Ok(())
}

fn robustness(a: RobustnessArgs) -> Result<(), Failure> {
    let exp = load(&a.model)?;
    let truth = nominal(&exp)?;
    let count = sample_count(a.dt, a.duration)?;
    let mut cfg = RobustnessConfig::new(&exp, a.dt, count)?;
    cfg.sigmas = a.sigma;
    cfg.trajectories = a.trajectories;
    cfg.seed = a.seed;
    cfg.identify.solve.starts = a.starts;
    info!(
        "{} trajectories at {} noise level(s)",
        cfg.trajectories,
        cfg.sigmas.len()
    );
    let rep = run_robustness(&exp, &truth, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&rep)? + "\n")?;
    std::fs::write(a.out.join("rel_error.csv"), rel_error_csv(&rep))?;
    std::fs::write(a.out.join("std.csv"), std_csv(&rep))?;
    std::fs::write(a.out.join("boxplot.csv"), boxplot_csv(&rep))?;
    let mut table = String::from("sigma");
    for n in &rep.parameter_names {
        write!(table, "\t{n} mean±std").expect("string write");
    }
    table.push_str("\tdropouts\n");
    for (si, sigma) in rep.sigma_grid.iter().enumerate() {
        write!(table, "{sigma}").expect("string write");
        for pi in 0..rep.parameter_names.len() {
            let c = rep.cell(si, pi);
            write!(table, "\t{:.4}±{:.4}", c.mean, c.std).expect("string write");
        }
        writeln!(table, "\t{}", rep.dropouts[si]).expect("string write");
    }
    print!("{table}");
    Ok(())
}

fn run_inspect(a: InspectArgs) -> Result<(), Failure> {
    let exp = load(&a.model)?;
    let ins = inspect(&exp)?;
    if !ins.unidentifiable.is_empty() {
        warn!("parameters absent from the accessible dynamics: {:?}", ins.unidentifiable);
    }
    let dt_ok = match (a.dt, ins.nyquist_max_dt) {
        (Some(dt), Some(bound)) => {
            if dt >= bound {
                warn!("dt = {dt} is at or above the Nyquist bound {bound:.6} of the nominal generator");
            }
            Some(dt < bound)
        }
        _ => None,
    };
    let report = json!({
        "accessible": ins.accessible,
        "order": ins.accessible.len(),
        "level_sizes": ins.level_sizes,
        "unidentifiable": ins.unidentifiable,
        "nyquist_max_dt": ins.nyquist_max_dt,
        "dt_within_nyquist": dt_ok,
    });
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))
}
