use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input component lies outside its admissible interval.
    #[error("input `{name}` component {index} = {value} outside [{lo}, {hi}]")]
    InputOutOfRange {
        name: &'static str,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got} for `{name}`")]
    DimensionMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0}")]
    Domain(String),

    /// A caller violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Equality set of the boundary min-max condition is empty: the game has
    /// no barrier anchor and the (theta, beta) pair must be rejected.
    #[error("no barrier anchor on the captivity boundary: {0}")]
    NoBnup(String),

    /// Tangency residual along an integrated surface exceeded tolerance.
    #[error("surface integration drift at t = {t}: |xi^T f| = {residual:e} > {tol:e}")]
    IntegrationDrift { t: f64, residual: f64, tol: f64 },

    /// Integrated state left the divergence guard region.
    #[error("surface integration diverged at t = {t}: |x| = {norm} > {limit}")]
    Diverged { t: f64, norm: f64, limit: f64 },

    /// Surfaces never intersect each other (or the non-escapable boundary arc)
    /// within the integration horizon; the barrier cannot be closed.
    #[error("barrier cannot be closed: {0}")]
    BarrierOpen(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// Requested safety margin is below the smallest achievable one.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Root bracketing failed: the junction residual does not change sign.
    #[error("no root: {0}")]
    NoRoot(String),

    /// A barrier validity condition failed at the solution.
    #[error("validity check `{condition}` failed: {detail}")]
    ValidityFailed { condition: &'static str, detail: String },

    /// Controller queried outside the tracking error bound.
    #[error("safety violation: state outside the tracking error bound ({0})")]
    SafetyViolation(String),

    #[error("simulation diverged at t = {t}: |x| = {norm}")]
    SimDiverged { t: f64, norm: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
