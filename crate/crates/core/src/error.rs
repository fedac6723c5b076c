use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("factor {factor} evaluated to {value}, outside [0, {bound}]")]
    BoundViolation { factor: usize, value: f64, bound: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate model: local maximum energy is zero")]
    DegenerateModel,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite sample {value} at Chebyshev node {node}")]
    NonFiniteSample { node: usize, value: f64 },

    #[error("point {x} outside the polynomial domain [{lower}, {upper}]")]
    OutsideDomain { x: f64, lower: f64, upper: f64 },

    #[error("density has non-positive total mass {0}")]
    NonPositiveMass(f64),

    #[error("rejection envelope violated: density/envelope ratio {ratio} exceeds 1")]
    EnvelopeViolation { ratio: f64 },

    #[error("proposal density is not finite")]
    NonFiniteProposal,

    #[error("operation requires a {expected} domain")]
    WrongDomain { expected: &'static str },

    #[error("state space has {size} states, more than the enumeration limit {limit}")]
    StateSpaceTooLarge { size: f64, limit: usize },

    #[error("transition matrix is not reversible: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotReversible { residual: f64, tolerance: f64 },

    #[error("histogram shapes differ: {0} vs {1} bins")]
    BinMismatch(usize, usize),

    #[error("report holds no samples")]
    EmptyReport,

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
