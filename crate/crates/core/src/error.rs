use thiserror::Error;

use crate::equilibrium::EquilibriumResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid power profile: {0}")]
    InvalidProfile(String),

    #[error("invalid channel state: {0}")]
    InvalidChannel(String),

    #[error("invalid fading spec: {0}")]
    InvalidFading(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("fading spec has kind {found:?}, operation requires {expected}")]
    WrongFadingKind {
        expected: &'static str,
        found: crate::channels::FadingKind,
    },

    #[error("near-coincident ergodic parameters on channel {channel}: closed form is singular")]
    DegenerateParameters { channel: usize },

    #[error("step {step} exceeds the simplex-safe bound {bound}")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("initial profile is not interior (user {user}, slot {slot} has zero power)")]
    NotInterior { user: usize, slot: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge in {iterations} iterations (kkt residual {residual:e})")]
    SolverDidNotConverge {
        iterations: usize,
        residual: f64,
        best: Box<EquilibriumResult>,
    },

    #[error("equilibrium is not strict (user {user} supports {support_size} channels)")]
    NotStrict { user: usize, support_size: usize },

    #[error("sampled Rayleigh quotient {rayleigh:e} is negative: potential is not star-convex here")]
    StarConvexityViolation { rayleigh: f64 },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(&'static str),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("{line}:{column}: {message}")]
    ScenarioParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
