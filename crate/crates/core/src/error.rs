use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Mesh parameters or geometry rejected.
    InvalidMesh(String),
    /// A solver parameter violates its constraint.
    InvalidConfig(String),
    /// Input data with the wrong shape or contents.
    InvalidInput(String),
    /// Zero or non-finite pivot during factorization.
    SingularMatrix { pivot: usize },
    /// Linear solve failed while marching; `step` is the time index.
    SolveFailed { step: usize },
    /// The reconstruction produced a non-finite iterate.
    Diverged { iteration: usize },
    UnknownExample(u32),
    /// Relative error requested against an identically zero reference.
    ZeroReference,
    /// Adaptive quadrature hit its refinement limit.
    QuadratureNotConverged { estimate: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidMesh(msg) => write!(f, "invalid mesh: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::SingularMatrix { pivot } => {
                write!(f, "matrix is singular at pivot {pivot}")
            }
            Error::SolveFailed { step } => write!(f, "linear solve failed at time step {step}"),
            Error::Diverged { iteration } => {
                write!(f, "reconstruction diverged at iteration {iteration}")
            }
            Error::UnknownExample(id) => write!(f, "unknown example id {id} (expected 1, 2 or 3)"),
            Error::ZeroReference => write!(f, "reference field is identically zero"),
            Error::QuadratureNotConverged { estimate } => {
                write!(f, "quadrature did not converge (last estimate {estimate:e})")
            }
        }
    }
}

impl core::error::Error for Error {}
