//! End-to-end use of the public API: problem I/O, both solvers, both
//! preconditioners and the cost model.

use chebstep::perf_model::{delta_strong, delta_weak};
use chebstep::problems::{poisson27, read_matrix_market, write_matrix_market};
use chebstep::solver::{pcg_s_solve, pcg_solve};
use chebstep::{GramSolver, Identity, Jacobi, MachineParams, ModelQuery, PoissonSpec, SolverConfig};

fn rel_residual(a: &chebstep::CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.spmv(x).unwrap();
    let r: f64 = ax.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn matrix_market_round_trip_then_solve() {
    let (a, b) = poisson27(&PoissonSpec::new(5, 4, 3).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    write_matrix_market(&a, &path).unwrap();
    let back = read_matrix_market(&path).unwrap();
    assert_eq!(back.n(), a.n());
    assert_eq!(back.nnz(), a.nnz());

    let cfg = SolverConfig::new(3, 1e-10).unwrap();
    let (x, report) = pcg_s_solve(&back, &b, None, &Identity, &cfg).unwrap();
    assert!(report.converged);
    assert!(rel_residual(&a, &x, &b) < 1e-8);
}

#[test]
fn pcg_and_pcg_s_agree_with_jacobi() {
    let (a, b) = poisson27(&PoissonSpec::cube(6).unwrap()).unwrap();
    let jac = Jacobi::new(&a).unwrap();
    let (x_cg, r_cg) = pcg_solve(&a, &b, None, &jac, 1e-10, 500).unwrap();
    assert!(r_cg.converged);
    for gram in [GramSolver::Cholesky, GramSolver::Fgs] {
        let cfg = SolverConfig {
            gram_solver: gram,
            ..SolverConfig::new(4, 1e-10).unwrap()
        };
        let (x, r) = pcg_s_solve(&a, &b, None, &jac, &cfg).unwrap();
        assert!(r.converged, "{gram:?}");
        let diff: f64 = x.iter().zip(&x_cg).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "{gram:?}: {diff}");
    }
}

#[test]
fn nonzero_initial_guess_is_honoured() {
    let (a, b) = poisson27(&PoissonSpec::cube(4).unwrap()).unwrap();
    let cfg = SolverConfig::new(2, 1e-12).unwrap();
    let (x, _) = pcg_s_solve(&a, &b, None, &Identity, &cfg).unwrap();
    // starting from the solution there is nothing left to do
    let (x2, report) = pcg_s_solve(&a, &b, Some(&x), &Identity, &cfg).unwrap();
    assert!(report.converged);
    assert!(report.outer_iters <= 1);
    assert!(rel_residual(&a, &x2, &b) < 1e-10);
}

#[test]
fn scaling_mode_must_match_the_query() {
    let m = MachineParams::default();
    let weak = ModelQuery::weak(64.0, 4, 30, 1e6);
    let strong = ModelQuery::strong(64.0, 4, 30, 64e6);
    assert!(delta_strong(&weak, &m).is_err());
    assert!(delta_weak(&strong, &m).is_err());
    // same local size, same answer
    let a = delta_weak(&weak, &m).unwrap();
    let b = delta_strong(&strong, &m).unwrap();
    assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
}
