//! Multilevel preconditioners for reaction-diffusion problems with jumping
//! coefficients.
//!
//! This crate discretizes
//!
//! ```text
//!     -div(omega grad u) + rho u = f   in Omega = (0,1)^d,   u = 0 on the boundary,
//! ```
//!
//! with linear Lagrange elements on structured simplicial meshes, where the
//! diffusion coefficient `omega` and the reaction coefficient `rho` are
//! constant on each material subdomain and may jump by many orders of
//! magnitude across subdomain interfaces. It provides
//!
//! * nested mesh hierarchies for two benchmark geometries (a 3D cube with two
//!   interior cubic inclusions, and a 2D square with randomly assigned
//!   materials),
//! * CSR assembly of the stiffness-plus-mass operator with Dirichlet
//!   elimination,
//! * Jacobi / symmetric Gauss-Seidel smoothers, the additive BPX
//!   preconditioner, and a multigrid V(1,1)-cycle,
//! * preconditioned conjugate gradients with Lanczos eigenvalue estimates,
//! * a dense spectral oracle for effective condition numbers
//!   `kappa_m = lambda_N / lambda_{m+1}` and isolated-eigenvalue detection,
//! * and a `theory` module that measures the stability inequalities behind
//!   the preconditioner bounds (dual-basis interpolation, stable multilevel
//!   decompositions, strengthened Cauchy-Schwarz decay).
//!
//! The `rdmg` binary drives coefficient sweeps over the benchmark problems
//! and emits the iteration-count tables and convergence histories used to
//! study robustness of the preconditioners with respect to coefficient jumps.

// Negated float comparisons like `!(d > 0.0)` are NaN guards, not typos, and
// the numerical kernels index several arrays in lockstep where iterator
// chains would obscure the arithmetic.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod cli;
pub mod coefficients;
mod eig;
pub mod krylov;
pub mod mesh;
pub mod multilevel;
pub mod sparse;
pub mod spectral;
pub mod theory;

pub use sparse::{SparseOperator, Vector};

/// Errors produced anywhere in the solver stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh too coarse: cells_per_edge = {0}, need at least 2")]
    MeshTooCoarse(usize),
    #[error("inclusion box [{0}] does not lie on the coarse cell lattice")]
    BoxNotAligned(String),
    #[error("degenerate cell with volume {volume:.3e}")]
    DegenerateCell { volume: f64 },
    #[error("coefficient field covers {have} subdomains but the mesh uses subdomain index {need}")]
    MissingCoefficient { have: usize, need: usize },
    #[error("coefficient value {0:.3e} must be strictly positive here")]
    NonPositiveCoefficient(f64),
    #[error("negative coefficient value {0:.3e}")]
    NegativeCoefficient(f64),
    #[error("diagonal entry {row} is {value:.3e}; smoothing needs a strictly positive diagonal")]
    ZeroDiagonal { row: usize, value: f64 },
    #[error("{context} inner product is {value:.3e} <= 0; operator is not positive definite")]
    Indefinite { context: &'static str, value: f64 },
    #[error("stationary iteration diverged: residual grew over {0} consecutive steps")]
    Divergence(usize),
    #[error("level {k} outside hierarchy range 0..={top}")]
    LevelOutOfRange { k: usize, top: usize },
    #[error("index {m} out of range for a spectrum of {n} eigenvalues")]
    IndexOutOfRange { m: usize, n: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("problem size {n} exceeds the dense-spectrum limit {limit}; use the Lanczos estimates from a PCG run instead")]
    TooLargeForDense { n: usize, limit: usize },
    #[error("need at least 2 CG iterations for tridiagonal eigenvalue estimates, got {0}")]
    InsufficientData(usize),
    #[error("coarse-level operator is not positive definite; dense factorization failed")]
    CoarseSolveFailed,
    #[error("weighted mass matrix is singular: the weight vanishes on every subdomain")]
    AllZeroWeight,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
