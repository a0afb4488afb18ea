//! Nearest-neighbour XX spin chains.

use crate::error::{Error, Result};
use crate::model::{HamiltonianModel, InitialState, Observable, Slot, Term};
use crate::pauli::{Letter, PauliString};

/// `H = Σ_k (ω_k/2) σz^k + Σ_k δ_k (σ₊^k σ₋^{k+1} + σ₋^k σ₊^{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub omegas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Per-parameter flag, omegas first then deltas; `None` marks all unknown.
    pub unknown: Option<Vec<bool>>,
}

impl ChainSpec {
    pub fn new(omegas: Vec<f64>, deltas: Vec<f64>) -> Self {
        ChainSpec {
            omegas,
            deltas,
            unknown: None,
        }
    }

    /// The three-qubit chain `ω = (1.3, 2.4, 1.7)`, `δ = (4.3, 5.2)`.
    pub fn benchmark() -> Self {
        ChainSpec::new(vec![1.3, 2.4, 1.7], vec![4.3, 5.2])
    }

    pub fn num_qubits(&self) -> usize {
        self.omegas.len()
    }

    /// Parameter values in model order (`ω_1..ω_n, δ_1..δ_{n-1}`), unknown ones only.
    pub fn truth(&self) -> Vec<f64> {
        self.omegas
            .iter()
            .chain(&self.deltas)
            .enumerate()
            .filter(|(i, _)| self.is_unknown(*i))
            .map(|(_, v)| *v)
            .collect()
    }

    fn is_unknown(&self, i: usize) -> bool {
        self.unknown.as_ref().is_none_or(|u| u[i])
    }

    fn validate(&self) -> Result<()> {
        let n = self.omegas.len();
        if n == 0 {
            return Err(Error::InvalidModel("chain needs at least one qubit".into()));
        }
        if self.deltas.len() + 1 != n {
            return Err(Error::InvalidModel(format!(
                "{n} qubits need {} couplings, got {}",
                n - 1,
                self.deltas.len()
            )));
        }
        if let Some(u) = &self.unknown {
            if u.len() != 2 * n - 1 {
                return Err(Error::InvalidModel(format!(
                    "unknown flags need {} entries, got {}",
                    2 * n - 1,
                    u.len()
                )));
            }
        }
        Ok(())
    }
}

/// Builds the chain model. Hopping expands to `(δ_k/2)(σx σx + σy σy)`.
pub fn generate_chain_model(spec: &ChainSpec) -> Result<HamiltonianModel> {
    spec.validate()?;
    let n = spec.num_qubits();
    let mut names = Vec::new();
    let mut terms = Vec::new();
    let slot = |flat: usize, name: String, value: f64, names: &mut Vec<String>| {
        if spec.is_unknown(flat) {
            names.push(name);
            Slot::Unknown {
                index: names.len() - 1,
                scale: 0.5,
            }
        } else {
            Slot::Known(0.5 * value)
        }
    };
    for (k, w) in spec.omegas.iter().enumerate() {
        terms.push(Term {
            pauli: PauliString::single(n, k, Letter::Z)?,
            slot: slot(k, format!("w{}", k + 1), *w, &mut names),
        });
    }
    for (k, d) in spec.deltas.iter().enumerate() {
        let s = slot(n + k, format!("d{}", k + 1), *d, &mut names);
        for letter in [Letter::X, Letter::Y] {
            terms.push(Term {
                pauli: PauliString::from_letters(n, &[(k, letter), (k + 1, letter)])?,
                slot: s.clone(),
            });
        }
    }
    HamiltonianModel::new(n, terms, names)
}

/// `⟨σx¹⟩` on an `n`-qubit chain.
pub fn first_site_x(n: usize) -> Result<Observable> {
    Ok(Observable::word(PauliString::single(n, 0, Letter::X)?))
}

/// `(|0⟩ + i|1⟩)/√2 ⊗ |0…0⟩`.
pub fn first_site_plus_i() -> InitialState {
    InitialState::PlusI { qubit: 0 }
}
