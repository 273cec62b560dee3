use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {value} lies outside [-1, 1]")]
    Domain { value: f64 },

    #[error("resampled nonlinearity misses the exact composite by {residual:.3e} (limit {limit:.3e}); {grid} nodes are too coarse")]
    Resolution { residual: f64, limit: f64, grid: usize },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("time index of level {level} exceeds depth {depth}")]
    Depth { level: usize, depth: usize },

    #[error("depth mismatch: {left} vs {right}")]
    DepthMismatch { left: usize, right: usize },

    #[error("grid mismatch: {left} vs {right} nodes")]
    GridMismatch { left: usize, right: usize },

    #[error("no fixed point in (0, 1): peak f(0) = {peak} does not exceed the diagonal")]
    NoFixedPoint { peak: f64 },

    #[error("side interval cannot be bracketed: f(1) = {f_one} > -p = {minus_p}")]
    NoSideInterval { f_one: f64, minus_p: f64 },

    #[error("map with peak value {t} is not renormalizable: f(0) = {peak} outside [{p}, {b}]")]
    NotRenormalizable { t: f64, peak: f64, p: f64, b: f64 },

    #[error("no renormalizable peak value found in (1/2, 1)")]
    NoWindow,

    #[error("{stage} did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    #[error("no sign change found while bracketing {0}")]
    Bracket(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),
}
