use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors raised by the estimation and covariance routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability argument fell outside `[0, 1]` (or was NaN).
    ProbabilityDomain { u: f64 },
    /// The quantile is infinite at this probability (unbounded support).
    InfiniteQuantile { u: f64 },
    /// The quantile density is infinite (density vanishes) at this probability.
    SingularDensity { u: f64 },
    /// The transform is undefined at this point of the support.
    TransformDomain { transform: String, x: f64 },
    /// A distribution parameter is outside the family's domain.
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
    },
    /// Trimming proportions violate `0 <= a, b` and `a + b < 1`.
    InvalidTrim { a: f64, b: f64 },
    /// The retained window of order statistics is empty.
    EmptyWindow { n: usize, lower: usize, upper: usize },
    /// The sample has no observations.
    EmptySample,
    /// A sample value is not finite.
    NonFiniteObservation { index: usize },
    /// A routine for one estimator mode was called with a spec of the other mode.
    ModeMismatch { expected: &'static str },
    /// An endpoint term `w * H(u)` was required but `H(u)` is unbounded.
    EndpointDivergence { u: f64 },
    /// The integrand produced a non-finite value.
    NonFiniteIntegrand { x: f64 },
    /// Adaptive quadrature ran out of subdivisions without meeting tolerance.
    QuadratureNotConverged { value: f64, abs_error: f64 },
    /// Trimming windows do not satisfy the ordering required by a closed form.
    OrderingViolation {
        a_i: f64,
        b_i: f64,
        a_j: f64,
        b_j: f64,
    },
    /// Equal-proportion formulas called with unequal proportions.
    UnequalProportions,
    /// Nonlinear solver exhausted its iteration budget.
    NoConvergence { iterations: usize, residual: f64 },
    /// The moment Jacobian is (numerically) singular.
    SingularJacobian { condition: f64 },
    /// The number of moment conditions does not match the free parameters.
    DimensionMismatch { expected: usize, found: usize },
    /// Generic parse failure for distribution / transform strings.
    Parse(String),
    /// A covariance entry failed; carries the pair indices.
    Pair {
        i: usize,
        j: usize,
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ProbabilityDomain { u } => write!(f, "probability {u} outside [0, 1]"),
            Error::InfiniteQuantile { u } => {
                write!(f, "quantile is infinite at u = {u} (unbounded support)")
            }
            Error::SingularDensity { u } => {
                write!(f, "quantile density is infinite at u = {u} (zero density)")
            }
            Error::TransformDomain { transform, x } => {
                write!(f, "transform {transform} undefined at x = {x}")
            }
            Error::InvalidParameter {
                family,
                name,
                value,
            } => write!(f, "{family}: invalid parameter {name} = {value}"),
            Error::InvalidTrim { a, b } => write!(
                f,
                "invalid trimming proportions a = {a}, b = {b}: need a, b >= 0 and a+b must be < 1"
            ),
            Error::EmptyWindow { n, lower, upper } => write!(
                f,
                "empty window: n = {n}, {lower} trimmed below and {upper} above"
            ),
            Error::EmptySample => write!(f, "empty sample"),
            Error::NonFiniteObservation { index } => {
                write!(f, "observation {index} is not finite")
            }
            Error::ModeMismatch { expected } => write!(f, "expected a {expected} moment spec"),
            Error::EndpointDivergence { u } => {
                write!(f, "endpoint term diverges: H is unbounded at u = {u}")
            }
            Error::NonFiniteIntegrand { x } => write!(f, "integrand not finite at {x}"),
            Error::QuadratureNotConverged { value, abs_error } => write!(
                f,
                "quadrature did not converge: value {value}, error estimate {abs_error}"
            ),
            Error::OrderingViolation { a_i, b_i, a_j, b_j } => write!(
                f,
                "trimming order (a_i={a_i}, b_i={b_i}), (a_j={a_j}, b_j={b_j}) does not satisfy \
                 a_i <= a_j < 1-b_i <= 1-b_j in either orientation; use the kernel form"
            ),
            Error::UnequalProportions => {
                write!(f, "equal-proportion formula requires a_i = a_j and b_i = b_j")
            }
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::SingularJacobian { condition } => {
                write!(f, "moment Jacobian is singular (condition estimate {condition:e})")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "expected {expected} moment conditions, found {found}")
            }
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
            Error::Pair { i, j, source } => write!(f, "entry ({i}, {j}): {source}"),
        }
    }
}

impl core::error::Error for Error {}
