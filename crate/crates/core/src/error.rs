use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bath decomposition failed: {0}")]
    Decomposition(String),

    #[error("empty bath expansion: no modes to build a hierarchy from")]
    EmptyExpansion,

    #[error("hierarchy inconsistency: {0}")]
    Hierarchy(String),

    #[error(
        "step size underflow at t = {time:.6} (h = {step:.3e}); fastest decay rate {fastest_rate:.3e} eV. \
         Consider a larger Pade count or a smaller lead bandwidth"
    )]
    Stiffness {
        time: f64,
        step: f64,
        fastest_rate: f64,
    },

    #[error("master equation contract violated: {0}")]
    Contract(String),

    #[error("limit cycle not reached after {cycles} cycles (residual {residual:.3e})")]
    NonConvergence { cycles: usize, residual: f64 },

    #[error("undefined phase: fundamental Fourier component |a1| = {0:.3e}")]
    UndefinedPhase(f64),

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
