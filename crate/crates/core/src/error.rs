use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: expected {expected}, got {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid pauli text: {0}")]
    PauliParse(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid measurement basis letter {0:?}")]
    InvalidBasis(char),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("empty shot result")]
    EmptyResult,

    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeOverflow { index: usize, n_modes: usize },

    #[error("term {term} does not commute with symmetry generator {generator}")]
    NonCommutingGenerator { term: String, generator: String },

    #[error("invalid symmetry set: {0}")]
    InvalidSymmetry(String),

    #[error("integral schema error: {0}")]
    Schema(String),

    #[error("integrals are not hermitian: {0}")]
    NotHermitian(String),

    #[error("{electrons} electrons do not fit into {orbitals} spatial orbitals")]
    TooManyElectrons { electrons: usize, orbitals: usize },

    #[error("dense diagonalization limited to {limit} qubits, got {n_qubits}")]
    TooLarge { n_qubits: usize, limit: usize },

    #[error("expected {expected} ansatz parameters, got {found}")]
    Arity { expected: usize, found: usize },

    #[error("inconsistent excitation set: {0}")]
    InconsistentExcitation(String),

    #[error("no {0} excitations available")]
    NoExcitations(&'static str),

    #[error("overlap matrix degenerate: every eigenvalue below {threshold} (largest {largest})")]
    DegenerateSubspace { threshold: f64, largest: f64 },

    #[error("calibration matrix singular (condition number {condition:e})")]
    SingularCalibration { condition: f64 },

    #[error("fold factor must be an odd positive integer, got {0}")]
    EvenFold(usize),

    #[error("extrapolation needs at least two distinct noise factors: {0}")]
    Extrapolation(String),

    #[error("repeat {index} failed after {} completed samples: {source}", completed.len())]
    RepeatFailed {
        index: usize,
        completed: Vec<Vec<f64>>,
        #[source]
        source: Box<Error>,
    },

    #[error("missing Γ point for the Γ-referenced shift")]
    MissingGamma,

    #[error("unknown backend {0:?}")]
    UnknownBackend(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
