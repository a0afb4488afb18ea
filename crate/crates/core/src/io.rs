//! Model files (JSON) and trace files (CSV with `#` metadata lines).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::chain::{first_site_plus_i, first_site_x, generate_chain_model, ChainSpec};
use crate::dynamics::TimeTrace;
use crate::error::{Error, Result};
use crate::model::{HamiltonianModel, InitialState, Observable, Slot, Term};
use crate::pauli::PauliString;
use crate::pipeline::Experiment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermSpec {
    Known {
        pauli: PauliString,
        value: f64,
    },
    Unknown {
        pauli: PauliString,
        param: String,
        #[serde(default = "unit_scale", skip_serializing_if = "is_unit")]
        scale: f64,
    },
}

fn unit_scale() -> f64 {
    1.0
}

fn is_unit(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Word(PauliString),
    Weighted { terms: Vec<(f64, PauliString)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Zero,
    PlusIQubit(usize),
    PlusQubit(usize),
    /// `[re, im]` pairs, qubit 0 most significant.
    Amplitudes(Vec<[f64; 2]>),
}

/// On-disk experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub terms: Vec<TermSpec>,
    pub observables: Vec<ObservableSpec>,
    pub initial_state: StateSpec,
    /// Nominal parameter values by name, used for simulation and Nyquist checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<std::collections::BTreeMap<String, f64>>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// XX chain measured through `σx¹` from `(|0⟩ + i|1⟩)/√2 ⊗ |0…0⟩`, truth as nominal.
    pub fn chain(spec: &ChainSpec) -> Result<Self> {
        let model = generate_chain_model(spec)?;
        let n = spec.num_qubits();
        let exp = Experiment {
            model,
            observables: vec![first_site_x(n)?],
            initial_state: first_site_plus_i(),
            nominal: Some(spec.truth()),
        };
        Ok(Self::from_experiment(&exp))
    }

    pub fn from_experiment(exp: &Experiment) -> Self {
        let names = exp.model.parameter_names();
        let terms = exp
            .model
            .terms()
            .iter()
            .map(|t| match t.slot {
                Slot::Known(value) => TermSpec::Known {
                    pauli: t.pauli,
                    value,
                },
                Slot::Unknown { index, scale } => TermSpec::Unknown {
                    pauli: t.pauli,
                    param: names[index].clone(),
                    scale,
                },
            })
            .collect();
        let observables = exp
            .observables
            .iter()
            .map(|o| match o.terms.as_slice() {
                [(c, p)] if *c == 1.0 => ObservableSpec::Word(*p),
                _ => ObservableSpec::Weighted {
                    terms: o.terms.clone(),
                },
            })
            .collect();
        let initial_state = match &exp.initial_state {
            InitialState::Zero => StateSpec::Zero,
            InitialState::PlusI { qubit } => StateSpec::PlusIQubit(*qubit),
            InitialState::Plus { qubit } => StateSpec::PlusQubit(*qubit),
            InitialState::Amplitudes(a) => StateSpec::Amplitudes(a.iter().map(|z| [z.re, z.im]).collect()),
        };
        let nominal = exp
            .nominal
            .as_ref()
            .map(|v| names.iter().cloned().zip(v.iter().copied()).collect());
        ModelFile {
            n: exp.model.num_qubits(),
            terms,
            observables,
            initial_state,
            nominal,
        }
    }

    pub fn to_experiment(&self) -> Result<Experiment> {
        let mut names: Vec<String> = Vec::new();
        let mut terms = Vec::new();
        for t in &self.terms {
            let term = match t {
                TermSpec::Known { pauli, value } => Term {
                    pauli: *pauli,
                    slot: Slot::Known(*value),
                },
                TermSpec::Unknown { pauli, param, scale } => {
                    let index = names.iter().position(|n| n == param).unwrap_or_else(|| {
                        names.push(param.clone());
                        names.len() - 1
                    });
                    Term {
                        pauli: *pauli,
                        slot: Slot::Unknown {
                            index,
                            scale: *scale,
                        },
                    }
                }
            };
            terms.push(term);
        }
        let model = HamiltonianModel::new(self.n, terms, names)?;
        let observables = self
            .observables
            .iter()
            .map(|o| {
                let obs = match o {
                    ObservableSpec::Word(p) => Observable::word(*p),
                    ObservableSpec::Weighted { terms } => Observable { terms: terms.clone() },
                };
                if obs.terms.is_empty() {
                    return Err(Error::InvalidModel("observable without terms".into()));
                }
                if obs.terms.iter().any(|(_, p)| p.num_qubits() != self.n || p.is_identity()) {
                    return Err(Error::InvalidModel(format!(
                        "observables must be non-identity words on {} qubits",
                        self.n
                    )));
                }
                Ok(obs)
            })
            .collect::<Result<Vec<_>>>()?;
        if observables.is_empty() {
            return Err(Error::InvalidModel("no observables".into()));
        }
        let initial_state = match &self.initial_state {
            StateSpec::Zero => InitialState::Zero,
            StateSpec::PlusIQubit(q) => InitialState::PlusI { qubit: *q },
            StateSpec::PlusQubit(q) => InitialState::Plus { qubit: *q },
            StateSpec::Amplitudes(a) => {
                InitialState::Amplitudes(a.iter().map(|[re, im]| Complex::new(*re, *im)).collect())
            }
        };
        let nominal = match &self.nominal {
            None => None,
            Some(map) => {
                let v = model
                    .parameter_names()
                    .iter()
                    .map(|n| {
                        map.get(n).copied().ok_or_else(|| {
                            Error::InvalidModel(format!("nominal value for {n:?} missing"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if let Some(extra) = map.keys().find(|k| !model.parameter_names().contains(k)) {
                    return Err(Error::InvalidModel(format!("nominal value for unknown parameter {extra:?}")));
                }
                Some(v)
            }
        };
        Ok(Experiment {
            model,
            observables,
            initial_state,
            nominal,
        })
    }
}

/// Trace CSV: `# key = value` metadata lines, a `t,y1..yp` header, one row per sample.
pub fn trace_to_csv(trace: &TimeTrace<f64>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# dt = {}", trace.dt).expect("string write");
    writeln!(out, "# sigma = {}", trace.noise_sigma).expect("string write");
    match trace.seed {
        Some(s) => writeln!(out, "# seed = {s}"),
        None => writeln!(out, "# seed = none"),
    }
    .expect("string write");
    if !trace.initial_state_label.is_empty() {
        writeln!(out, "# initial_state = {}", trace.initial_state_label).expect("string write");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=trace.outputs()).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for j in 0..trace.len() {
        let mut row = vec![(trace.dt * j as f64).to_string()];
        row.extend(trace.samples.row(j).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    let body = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    out.push_str(&String::from_utf8(body).map_err(|e| Error::Parse(e.to_string()))?);
    Ok(out)
}

pub fn trace_from_csv(text: &str) -> Result<TimeTrace<f64>> {
    let mut dt = None;
    let mut sigma = 0.0;
    let mut seed = None;
    let mut label = String::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(meta) = line.trim_start().strip_prefix('#') {
            let Some((key, value)) = meta.split_once('=') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("{key}: {e}")));
            match key {
                "dt" => dt = Some(num(value)?),
                "sigma" => sigma = num(value)?,
                "seed" if value != "none" => {
                    seed = Some(value.parse().map_err(|e| Error::Parse(format!("seed: {e}")))?)
                }
                "initial_state" => label = value.to_string(),
                _ => {}
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let dt = dt.ok_or_else(|| Error::Parse("trace lacks a `# dt = …` metadata line".into()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let width = reader.headers()?.len();
    if width < 2 {
        return Err(Error::Parse("trace needs a time column and at least one output".into()));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec?;
        for field in rec.iter().skip(1) {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", rows + 1)))?,
            );
        }
        rows += 1;
    }
    let mut trace = TimeTrace::new(dt, DMatrix::from_row_slice(rows, width - 1, &values))?;
    trace.noise_sigma = sigma;
    trace.seed = seed;
    trace.initial_state_label = label;
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<TimeTrace<f64>> {
    trace_from_csv(&std::fs::read_to_string(path)?)
}

pub fn write_trace(path: &Path, trace: &TimeTrace<f64>) -> Result<()> {
    Ok(std::fs::write(path, trace_to_csv(trace)?)?)
}

/// `index,singular_value` rows for model-order inspection.
pub fn singular_values_csv(sv: &[f64]) -> String {
    let mut out = String::from("index,singular_value\n");
    for (i, s) in sv.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, s).expect("string write");
    }
    out
}
