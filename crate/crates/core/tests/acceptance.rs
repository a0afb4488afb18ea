//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p hamid-core --test acceptance`; `ACCEPTANCE_ONLY=<n>` selects one
//! criterion and `ACCEPTANCE_STRICT=1` turns failures into a nonzero exit.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use hamid_core::chain::{first_site_x, ChainSpec};
use hamid_core::dynamics::{
    add_noise, build_generator, filtration, quantum_oracle_trace, sample_count, simulate_trace,
    CoherenceSystem,
};
use hamid_core::era::{
    continuous_generator, continuous_generator_with, realize_trace, verify_realization,
    ContinuousOptions, HankelConfig, Truncation,
};
use hamid_core::io::{trace_to_csv, ModelFile};
use hamid_core::logm::spectrum;
use hamid_core::model::{HamiltonianModel, Observable, Slot, Term};
use hamid_core::pauli::{commutator, multiply, PauliBasis, PauliString};
use hamid_core::pipeline::{identify, Experiment, IdentifyConfig};
use hamid_core::robustness::{run_robustness, RobustnessConfig, DEFAULT_SIGMAS};
use hamid_core::transfer::transfer_coefficients;
use hamid_core::{rational, Error, ExactRational};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::statistics::Statistics;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn benchmark() -> (ChainSpec, Experiment) {
    let spec = ChainSpec::benchmark();
    let exp = ModelFile::chain(&spec).unwrap().to_experiment().unwrap();
    (spec, exp)
}

const DT: f64 = 0.0598;
const DURATION: f64 = 20.0;

fn criterion_1() -> Outcome {
    let (spec, exp) = benchmark();
    let truth = spec.truth();
    let n = sample_count(DT, DURATION).unwrap();
    let trace = exp.simulate(&truth, DT, n, None).unwrap();
    let start = Instant::now();
    let id = match identify(&exp, &trace, &IdentifyConfig::default()) {
        Ok(id) => id,
        Err(e) => return outcome(false, format!("identify failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let rep = &id.report;
    let mut worst = 0.0f64;
    let mut patterns = BTreeSet::new();
    for e in &rep.estimates {
        for (i, (est, t)) in e.theta.iter().zip(&truth).enumerate() {
            let err = if i < 3 {
                (est - t).abs() / t.abs()
            } else {
                (est.abs() - t.abs()).abs() / t.abs()
            };
            worst = worst.max(err);
        }
        patterns.insert((e.theta[3] > 0.0, e.theta[4] > 0.0));
    }
    let one_class = rep.class_count == 1 && rep.estimates.iter().all(|e| e.class_id == 0);
    let pass = !rep.is_empty() && worst < 1e-4 && one_class && patterns.len() == 4;
    outcome(
        pass,
        format!(
            "{} estimates, {} class(es), {} sign patterns, worst rel err {worst:.1e}, {secs:.2}s",
            rep.estimates.len(),
            rep.class_count,
            patterns.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let (_, exp) = benchmark();
    let tmpl = exp.system(None).unwrap();
    let theta: Vec<ExactRational> = [13, 24, 17, 43, 52].iter().map(|v| rational(*v, 10)).collect();
    let a = build_generator::<ExactRational>(&exp.model, &theta, &tmpl.accessible).unwrap();
    // Selector and x0 carry reciprocal normalizations; unit vectors give the same product.
    let k = tmpl.order();
    let c = DMatrix::from_fn(1, k, |_, j| if j == 0 { rational(1, 1) } else { rational(0, 1) });
    let x0 = DVector::from_fn(k, |i, _| if i == 1 { rational(1, 1) } else { rational(0, 1) });
    let tf = transfer_coefficients(&a, &c, &x0).unwrap();
    let fixtures = [
        ("q4", tf.num[0][4].clone(), rational(13, 10)),
        ("p4", tf.den[4].clone(), rational(1014, 10)),
        ("q2", tf.num[0][2].clone(), rational(37173, 1000)),
        ("p2", tf.den[2].clone(), rational(19664892, 10000)),
        ("q0", tf.num[0][0].clone(), rational(140701176, 100000)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, want) in &fixtures {
        let rel = ((got - want).abs() / want.abs()).to_f64().unwrap();
        let ok = rel <= 1e-9;
        pass &= ok;
        let mirrored = (got + want).is_zero();
        parts.push(format!(
            "{name}={}{}",
            got.to_f64().unwrap(),
            if ok {
                ""
            } else if mirrored {
                " (negated fixture)"
            } else {
                " (mismatch)"
            }
        ));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_3() -> Outcome {
    let (spec, exp) = benchmark();
    let n = sample_count(DT, DURATION).unwrap();
    let trace = exp.simulate(&spec.truth(), DT, n, None).unwrap();
    let cfg = HankelConfig::consecutive(167, 167).unwrap();
    match realize_trace(&trace, Some(&cfg), Truncation::Auto) {
        Ok(r) => outcome(
            r.n_sigma == 6,
            format!(
                "n_sigma = {} from {} samples, sv[5] = {:.3e}, sv[6] = {:.3e}, epsilon = {:.3e}",
                r.n_sigma, n, r.singular_values[5], r.singular_values[6], r.epsilon
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

struct RandomCase {
    model: HamiltonianModel,
    theta: Vec<f64>,
    psi: DVector<Complex<f64>>,
    observables: Vec<Observable>,
    system: CoherenceSystem<f64>,
}

fn random_cases(count: usize, seed: u64) -> Vec<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=4usize);
            let omegas: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let deltas: Vec<f64> = (1..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let spec = ChainSpec::new(omegas, deltas);
            let model = ModelFile::chain(&spec).unwrap().to_experiment().unwrap().model;
            let mut amps: Vec<Complex<f64>> = (0..1 << n)
                .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|z| *z /= norm);
            let psi = DVector::from_vec(amps);
            let observables = vec![first_site_x(n).unwrap()];
            let theta = spec.truth();
            let system = CoherenceSystem::build(&model, &theta, &observables, &psi).unwrap();
            RandomCase {
                model,
                theta,
                psi,
                observables,
                system,
            }
        })
        .collect()
}

fn criterion_4(cases: &[RandomCase]) -> Outcome {
    let mut worst = 0.0f64;
    for case in cases {
        let dt = 0.05;
        let count = 200;
        let coh = simulate_trace(&case.system, dt, count).unwrap();
        let dense =
            quantum_oracle_trace(&case.model, &case.theta, &case.psi, &case.observables, dt, count).unwrap();
        worst = worst.max((&coh.samples - &dense.samples).abs().max());
    }
    outcome(worst < 1e-8, format!("{} models, worst |Δy| = {worst:.2e}", cases.len()))
}

fn criterion_5(cases: &[RandomCase]) -> Outcome {
    let mut worst_spec = 0.0f64;
    let mut worst_fit = 0.0f64;
    let mut failures = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let nyq = hamid_core::dynamics::nyquist_max_dt(&case.system.generator).unwrap_or(1.0);
        let dt = 0.5 * nyq.min(1.0);
        let count = 4 * case.system.order() + 60;
        let trace = simulate_trace(&case.system, dt, count).unwrap();
        let real = match realize_trace(&trace, None, Truncation::Auto).and_then(|r| continuous_generator(&r, dt)) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("case {i}: {e}"));
                continue;
            }
        };
        if real.n_sigma != case.system.order() {
            failures.push(format!("case {i}: n_sigma {} vs K {}", real.n_sigma, case.system.order()));
            continue;
        }
        let got = spectrum(real.acont.as_ref().unwrap());
        let want = spectrum(&case.system.generator);
        let diff = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst_spec = worst_spec.max(diff);
        worst_fit = worst_fit.max(verify_realization(&real, &trace).unwrap().max_abs);
    }
    let pass = failures.is_empty() && worst_spec < 1e-6 && worst_fit < 1e-8;
    let mut detail = format!("worst spectrum error {worst_spec:.2e}, worst output residual {worst_fit:.2e}");
    if !failures.is_empty() {
        detail.push_str(&format!("; failures: {}", failures.join("; ")));
    }
    outcome(pass, detail)
}

fn random_orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

fn criterion_6(cases: &[RandomCase]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in cases {
        let s = &case.system;
        let base = transfer_coefficients(&s.generator, &s.selector, &s.x0).unwrap();
        for _ in 0..20 {
            let t = random_orthogonal(s.order(), &mut rng);
            let moved = transfer_coefficients(&(&t * &s.generator * t.transpose()), &(&s.selector * t.transpose()), &(&t * &s.x0))
                .unwrap();
            worst = worst.max(base.max_rel_diff(&moved));
        }
    }
    outcome(
        worst < 1e-9,
        format!("{} matrices × 20 transforms, worst relative change {worst:.2e}", cases.len()),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    x.covariance(y) / (x.std_dev() * y.std_dev())
}

fn criterion_7() -> Outcome {
    let (spec, exp) = benchmark();
    let n = sample_count(DT, DURATION).unwrap();
    let cfg = RobustnessConfig::new(&exp, DT, n).unwrap();
    let start = Instant::now();
    let rep = match run_robustness(&exp, &spec.truth(), &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    let names = &rep.parameter_names;
    let mut notes = Vec::new();

    let mut a_ok = true;
    let mut min_r = f64::INFINITY;
    for p in 0..names.len() {
        let std = rep.std_series(p);
        let monotone = std.windows(2).all(|w| w[1] >= w[0]);
        let r = pearson(&rep.sigma_grid, &std);
        min_r = min_r.min(r);
        if !monotone || r.is_nan() || r < 0.95 {
            a_ok = false;
            notes.push(format!("{} std {:?} r={r:.3}", names[p], std));
        }
    }

    let mut b_ok = true;
    let mut worst_bias = 0.0f64;
    for (si, sigma) in rep.sigma_grid.iter().enumerate() {
        if *sigma > 0.10 + 1e-12 {
            continue;
        }
        for p in 0..names.len() {
            let e = rep.cell(si, p).rel_error_pct;
            worst_bias = worst_bias.max(e.abs());
            if !(e.abs() < 5.0) {
                b_ok = false;
                notes.push(format!("{} bias {e:.2}% at sigma {sigma}", names[p]));
            }
        }
    }

    let last = rep.sigma_grid.len() - 1;
    let rel_spread: Vec<f64> = (0..names.len())
        .map(|p| rep.cell(last, p).std / rep.truth[p].abs())
        .collect();
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|a, b| rel_spread[*b].total_cmp(&rel_spread[*a]));
    let top: BTreeSet<&str> = order[..2].iter().map(|p| names[*p].as_str()).collect();
    let c_ok = top == BTreeSet::from(["w1", "w3"]);
    let spreads: Vec<String> = order
        .iter()
        .map(|p| format!("{}={:.3}", names[*p], rel_spread[*p]))
        .collect();

    let dropped: usize = rep.dropouts.iter().sum();
    let detail = format!(
        "{} trajectories × {} levels in {secs:.0}s, {dropped} dropouts; (a) {} min r={min_r:.3}; \
         (b) {} max |bias|={worst_bias:.2}%; (c) {} relative spread at sigma={}: {}{}",
        rep.trajectories,
        rep.sigma_grid.len(),
        if a_ok { "ok" } else { "FAIL" },
        if b_ok { "ok" } else { "FAIL" },
        if c_ok { "ok" } else { "FAIL" },
        rep.sigma_grid[last],
        spreads.join(" "),
        if notes.is_empty() {
            String::new()
        } else {
            format!("; {}", notes.join("; "))
        }
    );
    assert_eq!(rep.sigma_grid, DEFAULT_SIGMAS.to_vec());
    outcome(a_ok && b_ok && c_ok, detail)
}

fn criterion_8() -> Outcome {
    let spec = ChainSpec::new(vec![2.0], vec![]);
    let exp = ModelFile::chain(&spec).unwrap().to_experiment().unwrap();
    let omega = 2.0;
    let limit = PI / omega;
    let run = |dt: f64| {
        let trace = exp.simulate(&spec.truth(), dt, 41, None)?;
        let real = realize_trace(&trace, None, Truncation::Auto)?;
        let opts = ContinuousOptions {
            spectral_bound: Some(omega),
            ..Default::default()
        };
        let cont = continuous_generator_with(&real, dt, opts)?;
        Ok::<_, Error>(spectrum(cont.acont.as_ref().unwrap()))
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for frac in [0.25, 0.5, 0.9, 0.99] {
        let dt = frac * limit;
        match run(dt) {
            Ok(ev) => {
                let im = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                let ok = (im - omega).abs() < 1e-8;
                pass &= ok;
                parts.push(format!("dt={frac}·π/2 → |ω̂|={im:.10}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("dt={frac}·π/2 failed: {e}"));
            }
        }
    }
    let dt = 1.1 * limit;
    match run(dt) {
        Err(Error::Aliasing { .. }) | Err(Error::NyquistViolation { .. }) => {
            parts.push("dt=1.1·π/2 rejected as aliased".into());
        }
        Err(e) => {
            pass = false;
            parts.push(format!("dt=1.1·π/2 wrong error: {e}"));
        }
        Ok(ev) => {
            pass = false;
            parts.push(format!("dt=1.1·π/2 accepted with spectrum {ev:?}"));
        }
    }
    outcome(pass, parts.join(", "))
}

fn dense_close(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> bool {
    (a - b).iter().all(|z| z.norm() < 1e-12)
}

fn pauli_exhaustive() -> std::result::Result<usize, String> {
    let mut checks = 0;
    for n in 1..=3 {
        let basis = PauliBasis::full(n).map_err(|e| e.to_string())?;
        let words = basis.elements();
        let dense: Vec<DMatrix<Complex<f64>>> = words.iter().map(|w| w.to_dense()).collect();
        let scale = 2f64.powf(-(n as f64) / 2.0);
        for (i, a) in words.iter().enumerate() {
            if a.to_string().parse::<PauliString>().ok() != Some(*a) {
                return Err(format!("parse round trip {a}"));
            }
            for (j, b) in words.iter().enumerate() {
                let (phase, prod) = multiply(a, b).unwrap();
                let lhs = &dense[i] * &dense[j];
                let rhs = prod.to_dense::<f64>() * phase.to_complex::<f64>();
                if !dense_close(&lhs, &rhs) {
                    return Err(format!("product {a}·{b}"));
                }
                let comm = &lhs - &dense[j] * &dense[i];
                let zero = comm.iter().all(|z| z.norm() < 1e-12);
                if zero != a.commutes_with(b) {
                    return Err(format!("commutation flag {a},{b}"));
                }
                // [iX_a, iX_b] = -(X_a X_b - X_b X_a) with X = scale · P.
                let lhs = comm * Complex::new(-scale * scale, 0.0);
                let ab = commutator(a, b).unwrap();
                let ba = commutator(b, a).unwrap();
                let rhs = match ab {
                    None => DMatrix::zeros(1 << n, 1 << n),
                    Some((sign, w)) => {
                        w.to_dense::<f64>() * Complex::new(0.0, f64::from(sign) * 2.0 * scale * scale)
                    }
                };
                if !dense_close(&lhs, &rhs) {
                    return Err(format!("commutator {a},{b}"));
                }
                if ab.map(|(s, w)| (-s, w)) != ba {
                    return Err(format!("antisymmetry {a},{b}"));
                }
                checks += 1;
            }
        }
        // Jacobi on the signed word algebra: [a,[b,c]] + [b,[c,a]] + [c,[a,b]] = 0.
        let nested = |x: &PauliString, y: &PauliString, z: &PauliString| -> Option<(i8, PauliString)> {
            let (s1, w) = commutator(y, z).unwrap()?;
            let (s2, v) = commutator(x, &w).unwrap()?;
            Some((s1 * s2, v))
        };
        for a in words {
            for b in words {
                for c in words {
                    let mut acc: Vec<(PauliString, i32)> = Vec::new();
                    for (s, w) in [nested(a, b, c), nested(b, c, a), nested(c, a, b)].into_iter().flatten() {
                        match acc.iter_mut().find(|(v, _)| *v == w) {
                            Some(e) => e.1 += i32::from(s),
                            None => acc.push((w, i32::from(s))),
                        }
                    }
                    if acc.iter().any(|(_, s)| *s != 0) {
                        return Err(format!("Jacobi {a},{b},{c}"));
                    }
                    checks += 1;
                }
            }
        }
    }
    Ok(checks)
}

fn random_word(n: usize, rng: &mut ChaCha8Rng) -> PauliString {
    loop {
        let p = PauliString::new(n, rng.random_range(0..1u64 << n), rng.random_range(0..1u64 << n)).unwrap();
        if !p.is_identity() {
            return p;
        }
    }
}

fn filtration_properties() -> std::result::Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let n = rng.random_range(1..=4usize);
        let term_count = rng.random_range(1..=4usize);
        let mut words = BTreeSet::new();
        while words.len() < term_count.min((1 << (2 * n)) - 2) {
            words.insert(random_word(n, &mut rng).to_string());
        }
        let extra = loop {
            let w = random_word(n, &mut rng);
            if !words.contains(&w.to_string()) {
                break w;
            }
        };
        let terms: Vec<Term> = words
            .iter()
            .map(|w| Term {
                pauli: w.parse().unwrap(),
                slot: Slot::Known(rng.random_range(-2.0..2.0)),
            })
            .collect();
        let model = HamiltonianModel::new(n, terms.clone(), vec![]).unwrap();
        let measured = vec![random_word(n, &mut rng)];
        let mut more = measured.clone();
        more.push(random_word(n, &mut rng));
        let set = |m: &[PauliString], model: &HamiltonianModel| -> BTreeSet<String> {
            filtration(m, model).unwrap().elements().iter().map(|p| p.to_string()).collect()
        };
        let acc = filtration(&measured, &model).unwrap();
        let again = filtration(acc.elements(), &model).unwrap();
        if again.elements() != acc.elements() {
            return Err(format!("case {case}: not idempotent"));
        }
        let small = set(&measured, &model);
        if !small.is_subset(&set(&more, &model)) {
            return Err(format!("case {case}: not monotone in the measured set"));
        }
        let mut bigger = terms;
        bigger.push(Term {
            pauli: extra,
            slot: Slot::Known(1.0),
        });
        let bigger = HamiltonianModel::new(n, bigger, vec![]).unwrap();
        if !small.is_subset(&set(&measured, &bigger)) {
            return Err(format!("case {case}: not monotone in the model terms"));
        }
    }
    Ok(100)
}

fn determinism() -> std::result::Result<(), String> {
    let (spec, exp) = benchmark();
    let n = sample_count(DT, DURATION).unwrap();
    let clean = exp.simulate(&spec.truth(), DT, n, None).unwrap();
    let csv = |seed| trace_to_csv(&add_noise(&clean, 0.05, seed).unwrap()).unwrap();
    if csv(11) != csv(11) {
        return Err("noisy trace differs between runs".into());
    }
    if csv(11) == csv(12) {
        return Err("different seeds give the same noise".into());
    }
    let noisy = add_noise(&clean, 0.05, 11).unwrap();
    let report = || serde_json::to_string(&identify(&exp, &noisy, &IdentifyConfig::default()).unwrap().report).unwrap();
    if report() != report() {
        return Err("identification report differs between runs".into());
    }
    let mut cfg = RobustnessConfig::new(&exp, DT, n).unwrap();
    cfg.sigmas = vec![0.05, 0.2];
    cfg.trajectories = 12;
    cfg.seed = 5;
    let robust = || serde_json::to_string(&run_robustness(&exp, &spec.truth(), &cfg).unwrap()).unwrap();
    if robust() != robust() {
        return Err("robustness report differs between runs".into());
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    match pauli_exhaustive() {
        Ok(c) => parts.push(format!("Pauli algebra {c} checks ok")),
        Err(e) => {
            pass = false;
            parts.push(format!("Pauli algebra failed at {e}"));
        }
    }
    match filtration_properties() {
        Ok(c) => parts.push(format!("filtration ok on {c} models")),
        Err(e) => {
            pass = false;
            parts.push(format!("filtration failed: {e}"));
        }
    }
    match determinism() {
        Ok(()) => parts.push("determinism ok".into()),
        Err(e) => {
            pass = false;
            parts.push(format!("determinism failed: {e}"));
        }
    }
    outcome(pass, parts.join(", "))
}

fn main() {
    let cases = random_cases(50, 4);
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "exact identification benchmark", Box::new(criterion_1)),
        (2, "transfer-coefficient fixtures", Box::new(criterion_2)),
        (3, "realization order", Box::new(criterion_3)),
        (4, "oracle equivalence", Box::new(|| criterion_4(&cases))),
        (5, "realization round trip", Box::new(|| criterion_5(&cases))),
        (6, "similarity invariance", Box::new(|| criterion_6(&cases))),
        (7, "noise robustness", Box::new(criterion_7)),
        (8, "Nyquist guard", Box::new(criterion_8)),
        (9, "property suites", Box::new(criterion_9)),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let (mut ran, mut failed) = (0, 0);
    for (id, name, run) in &criteria {
        if only.is_some_and(|o| o != *id) {
            continue;
        }
        ran += 1;
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail
        );
    }
    println!("acceptance: {ran} run, {failed} failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
