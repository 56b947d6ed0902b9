use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument to a library function.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Run configuration failed validation.
    #[error("config: {0}")]
    Config(String),
    #[error("mesh: {0}")]
    Mesh(String),
    /// Domain mapping is not a diffeomorphism for this sample.
    #[error("mapping: {0}")]
    Mapping(String),
    #[error("solver failure at kappa0 = {kappa0:e} (possible discrete resonance): {msg}")]
    Solver { kappa0: f64, msg: String },
    #[error("weight underflow: {0}")]
    Underflow(String),
    #[error("smc iteration {iteration}: {source}")]
    Smc {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solver { .. } | Error::Underflow(_) | Error::Mapping(_) => true,
            Error::Smc { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
