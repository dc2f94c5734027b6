//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the assimilation pipeline.
#[derive(Debug)]
pub enum Error {
    /// Newton failed to reach the residual tolerance within the iteration cap.
    NonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    /// A Newton iterate left the physical (positive Kelvin) range.
    NonPhysical {
        step: usize,
        min_value: f64,
    },
    /// A sensor patch does not fit inside the computational domain.
    PatchOutsideDomain {
        center: [f64; 2],
        halfwidth: f64,
    },
    /// The observation Gram matrix lost positive definiteness.
    SingularGram,
    /// Requested more POD modes than the snapshot set supports.
    RankDeficient {
        requested: usize,
        eigenvalue: f64,
        largest: f64,
    },
    /// The projection basis is linearly dependent in the chosen inner product.
    SingularProjectionGram,
    /// The background/observable pair violates the inf-sup condition.
    StabilityViolation {
        beta: f64,
        n: usize,
        m: usize,
    },
    /// The saddle-point matrix could not be factorized or solved.
    SingularKkt,
    /// Coefficient vector lengths do not match the space dimensions.
    DimensionMismatch {
        expected: usize,
        got: usize,
        what: &'static str,
    },
    /// Lookback window does not leave a single training pair.
    LookbackTooLarge {
        lookback: usize,
        rows: usize,
    },
    /// Training loss became non-finite.
    DivergedLoss {
        epoch: usize,
    },
    /// Predictions must be generated in time order.
    OutOfOrderRequest {
        requested: usize,
        next: usize,
    },
    /// The a-priori bound failed beyond numerical slack; indicates a bug.
    BoundViolated {
        step: usize,
        lhs: f64,
        rhs: f64,
    },
    /// Matrix expected to be SPD failed its Cholesky factorization.
    NotPositiveDefinite {
        context: &'static str,
    },
    /// Malformed on-disk data (config, CSV, binary container).
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonConvergence { step, iterations, residual } => write!(
                f,
                "Newton did not converge at step {step}: residual {residual:.3e} after {iterations} iterations"
            ),
            Error::NonPhysical { step, min_value } => write!(
                f,
                "non-physical iterate at step {step}: minimum temperature {min_value:.3e} K"
            ),
            Error::PatchOutsideDomain { center, halfwidth } => write!(
                f,
                "patch centered at ({}, {}) with halfwidth {halfwidth} leaves the domain",
                center[0], center[1]
            ),
            Error::SingularGram => write!(f, "observation Gram matrix is singular"),
            Error::RankDeficient { requested, eigenvalue, largest } => write!(
                f,
                "snapshot set cannot support {requested} modes: eigenvalue {eigenvalue:.3e} vs largest {largest:.3e}"
            ),
            Error::SingularProjectionGram => write!(f, "projection basis is linearly dependent"),
            Error::StabilityViolation { beta, n, m } => write!(
                f,
                "stability constant {beta:.3e} unusable for N={n}, M={m}: need more/better sensors"
            ),
            Error::SingularKkt => write!(f, "saddle-point system is singular"),
            Error::DimensionMismatch { expected, got, what } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            Error::LookbackTooLarge { lookback, rows } => write!(
                f,
                "lookback {lookback} too large for {rows} training rows (need lookback <= rows - 1)"
            ),
            Error::DivergedLoss { epoch } => write!(f, "training loss diverged at epoch {epoch}"),
            Error::OutOfOrderRequest { requested, next } => write!(
                f,
                "prediction requested out of order: step {requested}, expected at most {next}"
            ),
            Error::BoundViolated { step, lhs, rhs } => write!(
                f,
                "error bound violated at step {step}: {lhs:.6e} > {rhs:.6e}"
            ),
            Error::NotPositiveDefinite { context } => {
                write!(f, "matrix not positive definite: {context}")
            }
            Error::Format(msg) => write!(f, "{msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
