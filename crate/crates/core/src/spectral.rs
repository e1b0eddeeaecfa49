//! Spectral interval estimation for the Chebyshev basis and dense
//! eigendecomposition for analysis-scale problems.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precond::Preconditioner;
use crate::sparse::{axpy, dot, CsrMatrix};

/// Largest `n` accepted by the dense analysis routines.
pub const DENSE_ANALYSIS_LIMIT: usize = 2048;

pub const LOW_SAFETY: f64 = 0.9;
pub const HIGH_SAFETY: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Lanczos,
    Gershgorin,
    ExactDense,
    /// Given by the caller.
    Supplied,
}

/// An interval `[lambda_min, lambda_max]` covering the operator spectrum.
///
/// The stored bounds already include the safety factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub method: SpectrumMethod,
    pub low_factor: f64,
    pub high_factor: f64,
}

impl SpectrumEstimate {
    /// Widens raw bounds by `low_factor` / `high_factor`.
    pub fn new(
        raw_min: f64,
        raw_max: f64,
        method: SpectrumMethod,
        low_factor: f64,
        high_factor: f64,
    ) -> Result<Self> {
        let lambda_min = raw_min * low_factor;
        let lambda_max = raw_max * high_factor;
        if !lambda_min.is_finite() || !lambda_max.is_finite() {
            return Err(Error::NonFinite("spectrum estimate"));
        }
        if !(lambda_min > 0.0) || lambda_max < lambda_min {
            return Err(Error::InvalidParameter(format!(
                "invalid spectral interval [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            method,
            low_factor,
            high_factor,
        })
    }

    /// Exact bounds with no widening.
    pub fn exact(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        Self::new(lambda_min, lambda_max, SpectrumMethod::ExactDense, 1.0, 1.0)
    }

    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.lambda_min <= lo && hi <= self.lambda_max
    }
}

/// Lanczos estimate of the spectrum of `M^{-1} A`, widened by 0.9 / 1.1.
///
/// The recurrence runs on `A M^{-1}` in the `M^{-1}` inner product, which has
/// the same spectrum and only needs the action of `M^{-1}`. All Lanczos
/// vectors are kept and every new vector is fully reorthogonalized.
pub fn estimate_interval(
    a: &CsrMatrix,
    precond: &dyn Preconditioner,
    steps: usize,
    seed: u64,
) -> Result<SpectrumEstimate> {
    let (lo, hi) = lanczos_extremes(a, precond, steps, seed)?;
    SpectrumEstimate::new(lo, hi, SpectrumMethod::Lanczos, LOW_SAFETY, HIGH_SAFETY)
}

/// Raw Ritz extremes `(min, max)` after at most `steps` Lanczos steps.
pub fn lanczos_extremes(
    a: &CsrMatrix,
    precond: &dyn Preconditioner,
    steps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "Lanczos needs at least 2 steps, got {steps}"
        )));
    }
    let n = a.n();
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let steps = steps.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut w = precond.apply(&v)?;
    let beta0 = dot(&v, &w);
    if !(beta0 > 0.0) {
        return Err(Error::InvalidParameter(
            "preconditioner is not positive definite on the start vector".into(),
        ));
    }
    let s = 1.0 / beta0.sqrt();
    v.iter_mut().for_each(|x| *x *= s);
    w.iter_mut().for_each(|x| *x *= s);

    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut ws: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    let mut scale = 0.0f64;

    for j in 0..steps {
        let mut u = a.spmv(&w)?;
        let alpha = dot(&w, &u);
        axpy(-alpha, &v, &mut u);
        if j > 0 {
            axpy(-betas[j - 1], &vs[j - 1], &mut u);
        }
        alphas.push(alpha);
        vs.push(v);
        ws.push(w);
        if !alpha.is_finite() {
            return Err(Error::NonFinite("Lanczos coefficients"));
        }
        if j + 1 == steps {
            break;
        }
        // two passes of full reorthogonalization in the M^{-1} inner product
        for _ in 0..2 {
            for (vi, wi) in vs.iter().zip(&ws) {
                let c = dot(wi, &u);
                axpy(-c, vi, &mut u);
            }
        }
        let wu = precond.apply(&u)?;
        let b2 = dot(&u, &wu);
        scale = scale.max(alpha.abs());
        if !b2.is_finite() {
            return Err(Error::NonFinite("Lanczos coefficients"));
        }
        let beta = b2.max(0.0).sqrt();
        if beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            log::debug!("Lanczos breakdown after {} steps", j + 1);
            break;
        }
        betas.push(beta);
        v = u.iter().map(|x| x / beta).collect();
        w = wu.iter().map(|x| x / beta).collect();
    }

    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite("Ritz values"));
    }
    Ok((lo, hi))
}

/// Gershgorin disc bounds `(lower, upper)` of a symmetric matrix.
pub fn gershgorin_bounds(a: &CsrMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.n() {
        let (cols, vals) = a.row(i);
        let mut d = 0.0;
        let mut r = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                d = v;
            } else {
                r += v.abs();
            }
        }
        lo = lo.min(d - r);
        hi = hi.max(d + r);
    }
    (lo, hi)
}

/// Gershgorin interval; fails when the lower disc bound is not positive.
pub fn gershgorin_interval(a: &CsrMatrix) -> Result<SpectrumEstimate> {
    let (lo, hi) = gershgorin_bounds(a);
    SpectrumEstimate::new(lo, hi, SpectrumMethod::Gershgorin, 1.0, 1.0)
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    /// Column `l` is the eigenvector for `values[l]`.
    pub vectors: DMatrix<f64>,
}

pub fn dense_eigendecomposition(a: &CsrMatrix) -> Result<DenseEigen> {
    if a.n() > DENSE_ANALYSIS_LIMIT {
        return Err(Error::TooLarge {
            n: a.n(),
            limit: DENSE_ANALYSIS_LIMIT,
        });
    }
    Ok(symmetric_eigen_sorted(a.to_dense()))
}

pub(crate) fn symmetric_eigen_sorted(m: DMatrix<f64>) -> DenseEigen {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    DenseEigen { values, vectors }
}

/// Exact interval from the dense eigendecomposition.
pub fn exact_interval(a: &CsrMatrix) -> Result<SpectrumEstimate> {
    let eig = dense_eigendecomposition(a)?;
    let lo = eig.values[0];
    let hi = *eig.values.last().expect("non-empty");
    SpectrumEstimate::exact(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::{Identity, Jacobi};
    use crate::problems::{poisson27, PoissonSpec};

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        let mut offsum = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                if rng.random_bool(0.1) {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                    offsum[i] += v.abs();
                    offsum[j] += v.abs();
                }
            }
        }
        for (i, s) in offsum.iter().enumerate() {
            t.push((i, i, s + rng.random_range(0.5..5.0)));
        }
        CsrMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn exact_diagonal_interval() {
        let a = CsrMatrix::from_diagonal(&[2.0, 1.0, 3.0]).unwrap();
        let e = exact_interval(&a).unwrap();
        assert!((e.lambda_min - 1.0).abs() < 1e-14);
        assert!((e.lambda_max - 3.0).abs() < 1e-14);
    }

    #[test]
    fn identity_interval_after_safety() {
        let a = CsrMatrix::identity(5);
        let e = estimate_interval(&a, &Identity, 10, 0).unwrap();
        assert!((e.lambda_min - 0.9).abs() < 1e-14);
        assert!((e.lambda_max - 1.1).abs() < 1e-14);
    }

    #[test]
    fn lanczos_within_gershgorin_on_poisson() {
        let (a, _) = poisson27(&PoissonSpec::cube(8).unwrap()).unwrap();
        let (_, g_hi) = gershgorin_bounds(&a);
        assert_eq!(g_hi, 52.0);
        let (lo, hi) = lanczos_extremes(&a, &Identity, 20, 3).unwrap();
        assert!(hi <= g_hi);
        assert!(lo > 0.0);
    }

    #[test]
    fn too_few_steps_is_an_error() {
        let a = CsrMatrix::identity(3);
        assert!(estimate_interval(&a, &Identity, 1, 0).is_err());
    }

    #[test]
    fn widened_lanczos_contains_exact_interval() {
        let (poisson, _) = poisson27(&PoissonSpec::cube(8).unwrap()).unwrap();
        let mut mats = vec![poisson];
        for s in 0..3 {
            mats.push(random_spd(150, 100 + s));
        }
        for a in &mats {
            let exact = dense_eigendecomposition(a).unwrap();
            let (lo, hi) = (exact.values[0], *exact.values.last().unwrap());
            for seed in 0..20 {
                let est = estimate_interval(a, &Identity, 20, seed).unwrap();
                assert!(est.contains(lo, hi), "seed {seed}: {est:?} vs [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn preconditioned_lanczos_targets_scaled_operator() {
        let a = random_spd(120, 7);
        let m = Jacobi::new(&a).unwrap();
        // D^{-1/2} A D^{-1/2} has the spectrum of D^{-1} A
        let d = a.diagonal();
        let mut dense = a.to_dense();
        for i in 0..a.n() {
            for j in 0..a.n() {
                dense[(i, j)] /= (d[i] * d[j]).sqrt();
            }
        }
        let exact = symmetric_eigen_sorted(dense);
        let (lo, hi) = (exact.values[0], *exact.values.last().unwrap());
        let est = estimate_interval(&a, &m, 40, 1).unwrap();
        assert!(est.contains(lo, hi));
        let (rlo, rhi) = lanczos_extremes(&a, &m, 120, 1).unwrap();
        assert!((rlo - lo).abs() < 1e-8 * hi && (rhi - hi).abs() < 1e-8 * hi);
    }

    #[test]
    fn eigendecomposition_cases() {
        let a = CsrMatrix::from_diagonal(&[3.0, 1.0]).unwrap();
        let e = dense_eigendecomposition(&a).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] - 3.0).abs() < 1e-15);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[(0, 1)].abs() - 1.0).abs() < 1e-15);

        let a = CsrMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)])
            .unwrap();
        let e = dense_eigendecomposition(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        assert!((v0[0].abs() - h).abs() < 1e-14 && (v0[0] - v0[1]).abs() < 1e-14);
        assert!((v1[0].abs() - h).abs() < 1e-14 && (v1[0] + v1[1]).abs() < 1e-14);
    }

    #[test]
    fn eigendecomposition_residual_random_spd() {
        let a = random_spd(50, 42);
        let e = dense_eigendecomposition(&a).unwrap();
        let d = a.to_dense();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let res = (&d * &e.vectors - &e.vectors * lam).norm();
        let n = a.n() as f64;
        let tol = 100.0 * f64::EPSILON * n * d.norm();
        assert!(res <= tol);
        let orth = (e.vectors.transpose() * &e.vectors - DMatrix::identity(50, 50)).norm();
        assert!(orth <= tol);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn guard_rejects_large_matrices() {
        let a = CsrMatrix::identity(DENSE_ANALYSIS_LIMIT + 1);
        assert!(matches!(
            dense_eigendecomposition(&a),
            Err(Error::TooLarge { .. })
        ));
    }
}
