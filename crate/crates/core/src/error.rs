use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid Pauli string {0:?}: expected letters I, X, Y, Z")]
    PauliParse(String),

    #[error("index {index} out of bounds for basis of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("Pauli word {0} is not an element of the supplied basis")]
    NotInBasis(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("state is not normalized (norm deviates from 1 by {0:.3e})")]
    NotNormalized(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parameter vector has length {got}, model expects {expected}")]
    ParameterCount { expected: usize, got: usize },

    #[error(
        "accessible set is not closed: commutator of {term} with {element} yields {outside}, \
         which is outside the set"
    )]
    NotClosed {
        term: String,
        element: String,
        outside: String,
    },

    #[error("system too large for dense simulation: {qubits} qubits (limit {limit})")]
    TooLarge { qubits: usize, limit: usize },

    #[error("invalid sampling: {0}")]
    Sampling(String),

    #[error("not enough samples: Hankel layout needs {needed}, trace has {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("realization is empty: no singular value exceeds epsilon = {epsilon:.3e}")]
    EmptySystem { epsilon: f64 },

    #[error(
        "sampling period too long: discrete generator has an eigenvalue at {re:.6}{im:+.6}i on or \
         near the negative real axis, so the continuous generator is aliased; resample with a \
         smaller dt"
    )]
    Aliasing { re: f64, im: f64 },

    #[error(
        "sampling period {dt} exceeds the Nyquist bound {bound} implied by the supplied spectral \
         radius; the recovered generator would be aliased, resample with a smaller dt"
    )]
    NyquistViolation { dt: f64, bound: f64 },

    #[error("matrix logarithm failed: {0}")]
    Logarithm(String),

    #[error(
        "structural mismatch: realization order {found} differs from the model's accessible \
         dimension {expected}; {hint}"
    )]
    StructuralMismatch {
        expected: usize,
        found: usize,
        hint: String,
    },

    #[error("parameters not identifiable from the chosen observables: {0:?}")]
    NotIdentifiable(Vec<String>),

    #[error("inconsistent targets: {0}")]
    InconsistentTargets(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
