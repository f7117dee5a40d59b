use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Infeasibility that is part of a normal design search (constraint
/// violations, stalled transitions in a sweep) is reported as data by the
/// callers that aggregate it; these variants are for the single-call APIs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("malformed table: {0}")]
    Schema(String),
    #[error("non-finite numeric input: {0}")]
    Numeric(String),
    #[error("singular system: {0}")]
    Singularity(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("coupling infeasible: {0}")]
    CouplingInfeasible(String),
    #[error("slack wire on circuit {circuit}: required tension {tension:.6} N")]
    SlackWire { circuit: &'static str, tension: f64 },
    #[error("spring displacement {dx:.6} m outside stroke [0, {stroke:.6}] m")]
    Stroke { dx: f64, stroke: f64 },
    #[error("transition stalled at knee angle {angle:.6} rad")]
    Stall { angle: f64 },
    #[error("non-positive knee moment {moment:.6} N*m inside the sitting sweep")]
    DivisionGuard { moment: f64 },
    #[error("no feasible design after {generations} generations (best violation {best_violation:.6})")]
    NoFeasibleDesign {
        generations: usize,
        best_violation: f64,
    },
    #[error("no feasible actuator placement: {0}")]
    NoFeasibleActuator(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}
