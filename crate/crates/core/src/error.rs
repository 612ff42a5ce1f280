use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate lattice basis (det = {det:e})")]
    DegenerateLattice { det: f64 },

    #[error("coefficient cannot be made elliptic with lambda >= {min_lambda}: {reason}")]
    NotElliptic { min_lambda: f64, reason: String },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("inconsistent homogenized matrix: quadratic form differs from flux average by {discrepancy:e}")]
    Inconsistency { discrepancy: f64 },

    #[error("det(I + grad chi) has nonpositive minimum {mu_min} at n = {n}")]
    InvertibilityViolation { mu_min: f64, n: usize },

    #[error("mesh request refused: estimated {estimated_triangles} triangles exceeds budget")]
    Budget { estimated_triangles: usize },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("degenerate denominator: mean square {value:e} on circle of radius {radius}")]
    DegenerateDenominator { value: f64, radius: f64 },

    #[error("winding number cannot be certified on loop: {0}")]
    Uncertifiable(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("missing plot columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
