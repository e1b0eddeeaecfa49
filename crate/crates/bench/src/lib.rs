//! Shared fixtures for the kernel benchmarks.

use chebstep::problems::poisson27;
use chebstep::{CsrMatrix, GramSystem, PoissonSpec, SmallDense};

/// 27-point Poisson operator on a `p^3` grid with unit right-hand side.
pub fn poisson_cube(p: usize) -> (CsrMatrix, Vec<f64>) {
    poisson27(&PoissonSpec::cube(p).expect("p >= 1")).expect("grid fits in memory")
}

/// Unit-diagonal SPD Gram matrix `W_ij = rho^|i-j|` (Kac–Murdock–Szegő).
pub fn kms_gram(s: usize, rho: f64) -> GramSystem {
    let mut w = SmallDense::zeros(s, s).expect("s within the small-dense limit");
    for j in 0..s {
        for i in 0..s {
            w.set(i, j, rho.powi(i.abs_diff(j) as i32));
        }
    }
    GramSystem::from_matrix(w).expect("KMS matrices are SPD for |rho| < 1")
}
