use thiserror::Error;

/// Errors raised by the numerical kernels and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate linear fractional map: 0/0 at the requested point")]
    DegenerateMobius,

    #[error("the zero vector does not represent a point of the Riemann sphere")]
    ZeroVector,

    #[error("point {re}+{im}i is not in the open upper half-plane")]
    NotInUpperHalfPlane { re: f64, im: f64 },

    #[error("off-diagonal coefficient a_{site} = {value:e} fell below the positivity floor")]
    PositivityFloor { site: i64, value: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("Picard iteration is not contracting (step {iteration}, increment {increment:e})")]
    NonContraction { iteration: usize, increment: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Toda map leaves the Herglotz domain (Im = {im:e})")]
    DomainViolation { im: f64 },

    #[error("square-root branch of m+ + m- is ambiguous ({re}+{im}i)")]
    BranchAmbiguity { re: f64, im: f64 },

    #[error("z lies on a band edge (discriminant^2 - 4 = 0)")]
    BandEdge,

    #[error("period transfer matrix is plus or minus the identity")]
    TrivialMonodromy,

    #[error("band-set grid too coarse near x = {0}")]
    GridTooCoarse(f64),

    #[error("grid exhausted: requested x = {requested}, grid ends at {available}")]
    GridExhausted { requested: f64, available: f64 },

    #[error("Weyl disks did not shrink below tolerance; last radius {last_radius:e}")]
    NotConverged { last_radius: f64 },

    #[error("Hamiltonian is not positive semidefinite at node {node} (min eigenvalue {eigenvalue:e})")]
    NotPositive { node: usize, eigenvalue: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
