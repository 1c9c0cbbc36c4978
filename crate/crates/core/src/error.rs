use thiserror::Error;

/// Errors raised anywhere in the planning, synthesis and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("interface position {gamma} m outside ({lower}, {upper})")]
    AssumptionViolation { gamma: f64, lower: f64, upper: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {requested} requested, at most {max} available")]
    Capability { requested: usize, max: usize },

    #[error("trajectory planning failed: {0}")]
    Planning(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("controller synthesis failed: {0}")]
    Synthesis(String),

    #[error("decoupling series diverges (mean coefficient ratio {ratio:.3e} at j = {index}); use a smoother reference or a lower truncation order")]
    Divergence { index: usize, ratio: f64 },

    #[error("simulation aborted at t = {t} s: {reason}")]
    SimulationAbort { t: f64, reason: String },

    #[error("interface error: {0}")]
    Interface(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Json(_)
            | Error::Planning(_)
            | Error::Artifact(_)
            | Error::Parse { .. }
            | Error::Io(_) => 2,
            Error::Synthesis(_)
            | Error::Divergence { .. }
            | Error::Capability { .. } => 3,
            Error::SimulationAbort { .. } | Error::AssumptionViolation { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
