//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value or data set violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quadratic form that should be Hermitian (here: real symmetric)
    /// is not, beyond the stated relative tolerance.
    #[error("matrix is not symmetric: max asymmetry {max_asym:.3e} (relative)")]
    NotSymmetric { max_asym: f64 },

    /// The symplectic eigenproblem has a (near-)degenerate eigenpair.
    #[error(
        "degenerate symplectic spectrum: eigenvalues {a:.6e} and {b:.6e} \
         rad/s at indices {i} and {j}"
    )]
    DegenerateSpectrum { i: usize, j: usize, a: f64, b: f64 },

    /// The quadratic form does not describe a stable oscillator system
    /// (not positive definite, or a normal-mode frequency collapsed to zero).
    #[error("dynamically unstable quadratic form: {0}")]
    Unstable(String),

    /// Mode tracking across a tuning step lost a branch (best overlap below
    /// the 0.5 identification threshold).
    #[error("mode tracking failed for branch {branch}: best overlap {overlap:.3} < 0.5")]
    Tracking { branch: usize, overlap: f64 },

    /// A truncated-system build would exceed the dimension cap.
    #[error("truncated Hilbert space dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    /// The truncated Hamiltonian couples different total-excitation sectors,
    /// i.e. a non-excitation-conserving term leaked into the model.
    #[error("excitation number not conserved: off-sector element {leak:.3e} (relative)")]
    NumberNotConserved { leak: f64 },

    /// An iterative fit stopped without meeting its convergence criterion.
    #[error("fit did not converge after {iterations} iterations (residual {residual:.6e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A linear fit has no usable signal in the design matrix.
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    /// An error attributable to one point of a sweep grid.
    #[error("sweep point {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the index of the sweep point it occurred at.
    pub fn at_grid_point(self, index: usize) -> Self {
        Error::AtGridPoint {
            index,
            source: Box::new(self),
        }
    }
}
