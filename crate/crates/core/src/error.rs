use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid particle table: {0}")]
    ParticleTable(String),

    #[error("invalid mode grid: {0}")]
    ModeGrid(String),

    #[error("basis size {required} exceeds the configured hard limit {limit}")]
    BasisTooLarge { required: usize, limit: usize },

    #[error("unknown mode: particle {particle}, momentum {momentum:?}, label {label}")]
    UnknownMode {
        particle: String,
        momentum: Vec<i32>,
        label: usize,
    },

    #[error("unknown particle `{0}`")]
    UnknownParticle(String),

    #[error("invalid vertex {vertex}: {reason}")]
    InvalidVertex { vertex: String, reason: String },

    #[error("kernel evaluation failed for vertex {vertex}: {reason}")]
    KernelEvaluation { vertex: String, reason: String },

    #[error("unknown coupling `{0}`")]
    UnknownCoupling(String),

    #[error("interaction rank {rank} exceeds basis size {basis_size}")]
    RankTooLarge { rank: usize, basis_size: usize },

    #[error("assembled Hamiltonian is not hermitian (defect {defect:e})")]
    NonHermitian { defect: f64 },

    #[error("dimension {dim} exceeds the dense limit {limit}")]
    DenseLimit { dim: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigensolve(String),

    #[error("propagation did not converge: achieved residual {residual:e} after {iterations} iterations")]
    Propagation { residual: f64, iterations: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("observable `{family}` failed at rank {rank}, regulator {regulator}: {reason}")]
    Observable {
        family: String,
        rank: usize,
        regulator: String,
        reason: String,
    },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
