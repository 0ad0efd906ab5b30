use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("perturbation could not preserve orientation at vertex {vertex}")]
    PerturbationFailed { vertex: usize },
    #[error("inner box is not aligned with the mesh lattice: {0}")]
    NotAligned(String),
    #[error("meshes are not nested: {0}")]
    NotNested(String),
    #[error("supermesh area {got} deviates from domain area {expected}")]
    SupermeshArea { got: f64, expected: f64 },
    #[error("unsupported polynomial degree {0} (supported: 1..=3)")]
    UnsupportedDegree(usize),
    #[error("point ({x}, {y}) is not contained in the parent cell (barycentric min {min_bary:e})")]
    Containment { x: f64, y: f64, min_bary: f64 },
    #[error("Cholesky pivot {pivot:e} below tolerance {tol:e} at row {row}")]
    Cholesky { row: usize, pivot: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("solver breakdown: operator is not positive definite (curvature {curvature:e})")]
    NotPositiveDefinite { curvature: f64 },
    #[error("MLMC level cap {0} reached before the bias target was met")]
    LevelCap(usize),
    #[error("non-finite sample value on level {level}")]
    NonFinite { level: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("point ({x}, {y}) is outside the mesh")]
    OutsideMesh { x: f64, y: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SupermeshArea { .. }
                | Error::Cholesky { .. }
                | Error::NotConverged { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::LevelCap(_)
                | Error::NonFinite { .. }
                | Error::DegenerateFit(_)
                | Error::PerturbationFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
