use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("invalid diffusion: {0}")]
    InvalidDiffusion(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("piecewise function is discontinuous at x = {at}: left {left}, right {right}")]
    Discontinuous { at: f64, left: f64, right: f64 },
    #[error("generator evaluated at kink x = {0}; use kink_jump there")]
    KinkEvaluation(f64),
    #[error("x = {0} is not a declared kink")]
    NotAKink(f64),
    #[error("no unique ordering region at x = {x} (matches: {matches})")]
    ClassificationConflict { x: f64, matches: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociatedError {
    #[error("associated payoffs out of order at x = {x}: f~ = {f_tilde} > g~ = {g_tilde}")]
    OrderingViolation { x: f64, f_tilde: f64, g_tilde: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (max residual {max_residual:e})")]
    NonConvergence { iterations: usize, max_residual: f64 },
    #[error("lower obstacle above upper obstacle at x = {x}: {lower} > {upper}")]
    ObstacleCrossing { x: f64, lower: f64, upper: f64 },
    #[error("value iteration did not contract within {iterations} sweeps (change {change:e})")]
    NonContraction { iterations: usize, change: f64 },
    #[error("invalid chain time step: {0}")]
    InvalidTimeStep(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("explicit Nash construction requires B5 and B6 to be empty ({points} grid points violate)")]
    HypothesisViolated { points: usize },
    #[error("no positive-width exit interval around x = {0}")]
    DegenerateInterval(f64),
    #[error("calibration failed at x = {x}: probability*gap = {product:e} above target {target:e} at rate cap")]
    CalibrationFailure { x: f64, product: f64, target: f64 },
    #[error("invalid strategy: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("r = 0 requires both players to have a nonempty pure stop set")]
    UndiscountedCensoring,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Associated(#[from] AssociatedError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
