use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input or intermediate quantity was NaN or infinite.
    NonFinite { context: &'static str },
    /// A physical quantity is outside the domain where the model is defined.
    Domain { quantity: &'static str, value: f64 },
    /// A parameter failed its validation rule; `field` is the dotted config path.
    InvalidParameter { field: String, reason: &'static str },
    /// A linear system or matrix inverse is (numerically) singular.
    Singular { context: &'static str },
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    IndexOutOfRange { index: usize, len: usize },
    /// Newton-type iteration stopped without meeting its tolerance.
    NoConvergence { context: &'static str, iterations: usize, residual: f64 },
    /// Eigenvector basis too ill-conditioned for modal analysis.
    IllConditioned { condition: f64, bound: f64 },
    /// The selected relevant mode is an oscillatory pair; the reduction only
    /// supports a single real electro-mechanical mode.
    ComplexMode { re: f64, im: f64 },
    /// A finite-difference quotient produced a non-finite entry.
    NonFiniteJacobian { row: usize, col: usize },
    /// The LMI has no certificate at the requested performance level.
    Infeasible { gamma: f64 },
    /// An assignment did not provide a value for the named decision variable.
    MissingVariable(String),
    /// Per-unit bases of two models that are being combined disagree.
    BaseMismatch,
    /// Simulation state diverged.
    Diverged { time: f64 },
    InvalidScenario(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::Domain { quantity, value } => {
                write!(f, "{quantity} = {value} is outside the model domain")
            }
            Error::InvalidParameter { field, reason } => write!(f, "`{field}`: {reason}"),
            Error::Singular { context } => write!(f, "singular system in {context}"),
            Error::DimensionMismatch { context, expected, found } => {
                write!(f, "{context}: expected dimension {expected}, found {found}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::NoConvergence { context, iterations, residual } => write!(
                f,
                "{context} did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::IllConditioned { condition, bound } => write!(
                f,
                "eigenvector basis condition estimate {condition:e} exceeds bound {bound:e}"
            ),
            Error::ComplexMode { re, im } => write!(
                f,
                "relevant mode {re} ± {im}i is oscillatory; single-state reduction needs a real mode"
            ),
            Error::NonFiniteJacobian { row, col } => {
                write!(f, "non-finite difference quotient at Jacobian entry ({row}, {col})")
            }
            Error::Infeasible { gamma } => {
                write!(f, "no certificate at requested performance (gamma = {gamma})")
            }
            Error::MissingVariable(name) => write!(f, "assignment has no value for `{name}`"),
            Error::BaseMismatch => write!(f, "models are not expressed in the same per-unit base"),
            Error::Diverged { time } => write!(f, "simulation diverged at t = {time} s"),
            Error::InvalidScenario(why) => write!(f, "invalid scenario: {why}"),
        }
    }
}

impl core::error::Error for Error {}
