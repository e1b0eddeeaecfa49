//! Chebyshev-basis s-step preconditioned conjugate gradients.
//!
//! The solver builds `s` search directions per outer iteration from a
//! Chebyshev polynomial basis, couples them through a small Gram system and
//! solves that system either exactly (Cholesky) or with a fixed number of
//! forward Gauss–Seidel sweeps. Around it sit the analysis tools used to
//! study the Gram matrices (moments, conditioning, inexact-solve monitors)
//! and a latency–bandwidth cost model.

pub mod error;
pub mod gram;
pub mod moments;
pub mod mpk;
pub mod perf_model;
pub mod precond;
pub mod problems;
pub mod solver;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use gram::{FgsConfig, GramSystem};
pub use mpk::ChebyshevParams;
pub use perf_model::{MachineParams, ModelQuery};
pub use precond::{Identity, Jacobi, PrecondKind, Preconditioner};
pub use problems::PoissonSpec;
pub use solver::{GramSolver, SolveReport, SolverConfig};
pub use sparse::{CsrMatrix, SmallDense, VectorBlock};
pub use spectral::SpectrumEstimate;
