use thiserror::Error;

use crate::picard::BlowupReport;

/// Reasons an initial profile is rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDataIssue {
    /// Samples do not cover [-1, 1] on a uniform grid.
    Grid(String),
    /// More than one sign change (or none).
    MultipleZeros(usize),
    /// Positive right of the zero or negative left of it.
    SignStructure,
    /// Slope at a wall is not zero within grid tolerance.
    BoundarySlope { wall: f64, slope: f64, tol: f64 },
    /// `-f_I' > lambda_I / 2` fails somewhere in the a0-window.
    SlopeWindow { x: f64, slope: f64, lambda: f64 },
    /// One of the side masses is not positive.
    Mass,
}

impl std::fmt::Display for InitialDataIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialDataIssue::Grid(msg) => write!(f, "grid: {msg}"),
            InitialDataIssue::MultipleZeros(n) => {
                write!(f, "multiple zeros: expected exactly one sign change, found {n}")
            }
            InitialDataIssue::SignStructure => {
                write!(f, "sign structure: profile must be positive left of the zero and negative right of it")
            }
            InitialDataIssue::BoundarySlope { wall, slope, tol } => write!(
                f,
                "boundary slope: f'({wall}) = {slope:.3e} exceeds tolerance {tol:.3e} (Neumann condition)"
            ),
            InitialDataIssue::SlopeWindow { x, slope, lambda } => write!(
                f,
                "slope window: -f'({x:.6}) = {slope:.6} is not above lambda_I/2 = {:.6}",
                lambda / 2.0
            ),
            InitialDataIssue::Mass => write!(f, "mass: buyer and vendor masses must both be positive"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(InitialDataIssue),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time {t} is beyond the solved horizon {t_current}")]
    OutOfRange { t: f64, t_current: f64 },

    #[error("derivative query at x = {x} is within {radius} of a source or sink at time {t}")]
    SingularEvaluation { x: f64, t: f64, radius: f64 },

    #[error("Picard iteration diverged: {0}")]
    IterationDiverged(String),

    #[error("blow-up detected: {0}")]
    BlowupDetected(Box<BlowupReport>),

    #[error("bracket [{lo}, {hi}] does not contain a sign change")]
    NoBracket { lo: f64, hi: f64 },

    #[error("samples in [{lo}, {hi}] are not monotone; more than one zero suspected")]
    MultipleZeroSuspected { lo: f64, hi: f64 },

    #[error("front is degenerate: all available derivatives vanish at x = {x}")]
    DegenerateFront { x: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
