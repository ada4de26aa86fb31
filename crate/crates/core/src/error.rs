use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("map is the identity within tolerance; fixed points are undefined")]
    IdentityMap,
    #[error("matrix is singular")]
    Singular,
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("convolution enumeration needs {needed} atoms, cap is {cap}")]
    CapExceeded { needed: u128, cap: u64 },
    #[error("sentinel cells cluster at pixel ({i}, {j})")]
    SentinelCluster { i: usize, j: usize },
    #[error("zero on the box boundary persisted after {attempts} jiggles")]
    BoundaryZero { attempts: u32 },
    #[error("Newton iteration failed to converge near {re}+{im}i")]
    NonConvergence { re: f64, im: f64 },
    #[error("measure has non-positive total mass {0}")]
    DegenerateMeasure(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SentinelCluster { .. }
                | Error::BoundaryZero { .. }
                | Error::NonConvergence { .. }
                | Error::DegenerateMeasure(_)
                | Error::IdentityMap
                | Error::Singular
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
