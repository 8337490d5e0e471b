use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate field: |B| = {mag_b:e} below floor at x = {x:?}")]
    DegenerateField { mag_b: f64, x: [f64; 3] },

    #[error("point {x:?} lies outside the field domain")]
    OutsideDomain { x: [f64; 3] },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("velocity point (e = {e}, c_par = {c_par}) is outside the admissible set")]
    OutsideVelocityDomain { e: f64, c_par: f64 },

    #[error("non-finite integrand at gyrophase {alpha}")]
    NonFinite { alpha: f64 },

    #[error("harmonic {m} aliases on {n_alpha} gyrophase nodes")]
    Aliasing { m: usize, n_alpha: usize },

    #[error("solvability violated: |mean| = {mean:e} exceeds {limit:e}")]
    Solvability { mean: f64, limit: f64 },

    #[error("quadrature truncation: tail estimate {tail:e} exceeds {limit:e}")]
    Truncation { tail: f64, limit: f64 },

    #[error("vacuum: density {n:e} below floor")]
    Vacuum { n: f64 },

    #[error("no motion: W = {w} below the potential minimum {v_min}")]
    NoMotion { w: f64, v_min: f64 },

    #[error("stability: {0}")]
    Stability(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("incompatible right-hand side: projection residual {residual:e}")]
    Incompatible { residual: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("capability: {0}")]
    Capability(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("io: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
