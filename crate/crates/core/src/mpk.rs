//! Matrix power kernel for the Chebyshev block basis.
//!
//! Given a residual `r` the kernel produces
//! `Z = [z_1, ..., z_s]` with `z_j = M^{-1} T_{j-1}(Â) r` (polynomial in the
//! preconditioned operator) and `P = [r, A z_1, ..., A z_s]`, where
//! `Â = (2A - (λmax + λmin) I) / (λmax - λmin)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::precond::Preconditioner;
use crate::sparse::{CsrMatrix, VectorBlock};
use crate::spectral::SpectrumEstimate;

/// Chebyshev recurrence coefficients for a spectral interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevParams {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `2 / (λmax - λmin)`
    pub alpha: f64,
    /// `(λmax + λmin) / (λmax - λmin)`
    pub sigma: f64,
    pub gamma: f64,
}

impl ChebyshevParams {
    pub fn new(lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda_min > 0.0) || !(lambda_max > lambda_min) || !lambda_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Chebyshev interval needs 0 < λmin < λmax, got [{lambda_min}, {lambda_max}]"
            )));
        }
        let width = lambda_max - lambda_min;
        Ok(Self {
            lambda_min,
            lambda_max,
            alpha: 2.0 / width,
            sigma: (lambda_max + lambda_min) / width,
            gamma: 1.0,
        })
    }

    pub fn from_estimate(e: &SpectrumEstimate) -> Result<Self> {
        Self::new(e.lambda_min, e.lambda_max)
    }

    /// Image of `lambda` under the affine map onto `[-1, 1]`.
    pub fn map(&self, lambda: f64) -> f64 {
        (2.0 * lambda - (self.lambda_max + self.lambda_min)) / (self.lambda_max - self.lambda_min)
    }
}

/// Output of [`mpk_chebyshev`].
#[derive(Debug, Clone)]
pub struct MpkOutput {
    /// `n x s` basis block.
    pub z: VectorBlock,
    /// `n x (s+1)` block `[r, A z_1, ..., A z_s]`.
    pub p: VectorBlock,
}

fn finite_or(column: usize, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::BasisBreakdown { column })
    }
}

/// Builds the Chebyshev basis and product block from `r`.
///
/// The first recurrence step uses `(α, σ)` and later steps `(2α, 2σ, γ)`,
/// matching `T_1(x) = x` and `T_{j+1}(x) = 2x T_j(x) - T_{j-1}(x)`. Each
/// shifted product is followed by one preconditioner application.
pub fn mpk_chebyshev(
    a: &CsrMatrix,
    r: &[f64],
    s: usize,
    precond: &dyn Preconditioner,
    params: &ChebyshevParams,
) -> Result<MpkOutput> {
    if s == 0 {
        return Err(Error::InvalidParameter("step size s must be >= 1".into()));
    }
    let n = a.n();
    check_dim("mpk_chebyshev", n, r.len())?;
    let mut z = VectorBlock::zeros(n, s);
    let mut p = VectorBlock::zeros(n, s + 1);
    let ChebyshevParams {
        alpha,
        sigma,
        gamma,
        ..
    } = *params;

    // zp_{q-1}, zp_q
    let mut zp_prev: Vec<f64>;
    let mut zp_cur: Vec<f64> = r.to_vec();
    p.col_mut(0).copy_from_slice(r);
    finite_or(0, r)?;
    precond.apply_into(&zp_cur, z.col_mut(0))?;
    finite_or(0, z.col(0))?;

    if s > 1 {
        a.spmv_into(z.col(0), p.col_mut(1))?;
        let zp2: Vec<f64> = p
            .col(1)
            .iter()
            .zip(&zp_cur)
            .map(|(&pv, &zv)| alpha * pv - sigma * zv)
            .collect();
        zp_prev = std::mem::replace(&mut zp_cur, zp2);
        precond.apply_into(&zp_cur, z.col_mut(1))?;
        finite_or(1, z.col(1))?;

        for q in 2..s {
            // p_{q+1} = A z_q  (1-based), i.e. column q of P from column q-1 of Z
            a.spmv_into(z.col(q - 1), p.col_mut(q))?;
            let next: Vec<f64> = p
                .col(q)
                .iter()
                .zip(zp_cur.iter().zip(&zp_prev))
                .map(|(&pv, (&zc, &zpv))| 2.0 * alpha * pv - 2.0 * sigma * zc - gamma * zpv)
                .collect();
            zp_prev = std::mem::replace(&mut zp_cur, next);
            precond.apply_into(&zp_cur, z.col_mut(q))?;
            finite_or(q, z.col(q))?;
        }
    }
    a.spmv_into(z.col(s - 1), p.col_mut(s))?;
    for j in 1..=s {
        finite_or(j, p.col(j))?;
    }
    Ok(MpkOutput { z, p })
}

/// Scalar Chebyshev values `T_0(x), ..., T_pmax(x)` by the three-term recurrence.
pub fn chebyshev_values(x: f64, p_max: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(p_max + 1);
    t.push(1.0);
    if p_max >= 1 {
        t.push(x);
    }
    for p in 2..=p_max {
        let v = 2.0 * x * t[p - 1] - t[p - 2];
        t.push(v);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precond::{Identity, Jacobi};
    use crate::problems::{poisson27, PoissonSpec};
    use crate::sparse::norm2;
    use crate::spectral::dense_eigendecomposition;
    use nalgebra::DVector;

    /// `T_j(Â) r` through the eigendecomposition: `V T_j(Λ̂) V^T r`.
    fn dense_chebyshev_oracle(
        a: &CsrMatrix,
        r: &[f64],
        s: usize,
        params: &ChebyshevParams,
    ) -> Vec<Vec<f64>> {
        let eig = dense_eigendecomposition(a).unwrap();
        let c = eig.vectors.transpose() * DVector::from_column_slice(r);
        (0..s)
            .map(|j| {
                let scaled = DVector::from_iterator(
                    c.len(),
                    c.iter().zip(&eig.values).map(|(&cl, &lam)| {
                        // trig form, independent of the recurrence
                        let x = params.map(lam).clamp(-1.0, 1.0);
                        cl * (j as f64 * x.acos()).cos()
                    }),
                );
                (&eig.vectors * scaled).iter().copied().collect()
            })
            .collect()
    }

    #[test]
    fn params_from_interval() {
        let p = ChebyshevParams::new(1.0, 3.0).unwrap();
        assert_eq!((p.alpha, p.sigma, p.gamma), (1.0, 2.0, 1.0));
        assert_eq!(p.map(1.0), -1.0);
        assert_eq!(p.map(3.0), 1.0);
        assert!(ChebyshevParams::new(2.0, 2.0).is_err());
        assert!(ChebyshevParams::new(0.0, 2.0).is_err());
    }

    #[test]
    fn single_step_is_residual_and_product() {
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let params = ChebyshevParams::new(1.0, 3.0).unwrap();
        let out = mpk_chebyshev(&a, &[2.0, -1.0], 1, &Identity, &params).unwrap();
        assert_eq!(out.z.col(0), &[2.0, -1.0]);
        assert_eq!(out.p.col(0), &[2.0, -1.0]);
        assert_eq!(out.p.col(1), &[2.0, -3.0]);
    }

    #[test]
    fn diag_1_3_hand_values() {
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let params = ChebyshevParams::new(1.0, 3.0).unwrap();
        let out = mpk_chebyshev(&a, &[1.0, 1.0], 3, &Identity, &params).unwrap();
        assert_eq!(out.z.col(0), &[1.0, 1.0]);
        assert_eq!(out.z.col(1), &[-1.0, 1.0]);
        assert_eq!(out.z.col(2), &[1.0, 1.0]);
        let oracle = dense_chebyshev_oracle(&a, &[1.0, 1.0], 3, &params);
        for j in 0..3 {
            for i in 0..2 {
                assert!((out.z.col(j)[i] - oracle[j][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn polynomial_identity_on_poisson() {
        let (a, b) = poisson27(&PoissonSpec::cube(6).unwrap()).unwrap();
        let eig = dense_eigendecomposition(&a).unwrap();
        let params = ChebyshevParams::new(eig.values[0], *eig.values.last().unwrap()).unwrap();
        let r: Vec<f64> = b.iter().enumerate().map(|(i, _)| ((i * 7919) % 13) as f64 - 6.0).collect();
        let s = 10;
        let out = mpk_chebyshev(&a, &r, s, &Identity, &params).unwrap();
        let oracle = dense_chebyshev_oracle(&a, &r, s, &params);
        let a_norm = eig.values.last().unwrap().abs();
        let tol = 100.0 * f64::EPSILON * s as f64 * a_norm * norm2(&r);
        let rn = norm2(&r);
        for j in 0..s {
            let diff: Vec<f64> = out.z.col(j).iter().zip(&oracle[j]).map(|(x, y)| x - y).collect();
            assert!(norm2(&diff) <= tol, "column {j}: {}", norm2(&diff));
            // |T_j| <= 1 on [-1, 1]
            assert!(norm2(out.z.col(j)) <= (1.0 + 100.0 * f64::EPSILON * s as f64) * rn);
        }
        // shape and product structure
        assert_eq!(out.z.k(), s);
        assert_eq!(out.p.k(), s + 1);
        assert!(out.p.col(0).iter().zip(&r).all(|(x, y)| x.to_bits() == y.to_bits()));
        for j in 0..s {
            assert_eq!(out.p.col(j + 1), a.spmv(out.z.col(j)).unwrap().as_slice());
        }
    }

    #[test]
    fn preconditioned_products_follow_basis() {
        let (a, b) = poisson27(&PoissonSpec::new(4, 3, 3).unwrap()).unwrap();
        let m = Jacobi::new(&a).unwrap();
        let params = ChebyshevParams::new(0.1, 2.0).unwrap();
        let out = mpk_chebyshev(&a, &b, 4, &m, &params).unwrap();
        assert_eq!(out.z.col(0), m.apply(&b).unwrap().as_slice());
        for j in 0..4 {
            assert_eq!(out.p.col(j + 1), a.spmv(out.z.col(j)).unwrap().as_slice());
        }
    }

    #[test]
    fn breakdown_reports_column() {
        let a = CsrMatrix::from_diagonal(&[1e300, 1.0]).unwrap();
        let params = ChebyshevParams::new(1e-300, 2e-300).unwrap();
        let err = mpk_chebyshev(&a, &[1.0, 1.0], 3, &Identity, &params).unwrap_err();
        assert!(matches!(err, Error::BasisBreakdown { .. }));
        assert!(mpk_chebyshev(&a, &[1.0], 2, &Identity, &params).is_err());
        assert!(mpk_chebyshev(&a, &[1.0, 1.0], 0, &Identity, &params).is_err());
    }

    #[test]
    fn scalar_recurrence_matches_trig_form() {
        for &x in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            let t = chebyshev_values(x, 20);
            for (p, v) in t.iter().enumerate() {
                assert!((v - (p as f64 * f64::acos(x)).cos()).abs() < 1e-13);
            }
        }
    }
}
