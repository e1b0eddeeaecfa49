//! Reduced Gram systems `W = Q^T A Q`: assembly, forward Gauss-Seidel (FGS)
//! solves, the Cholesky reference solve and analysis helpers.
//!
//! FGS uses the splitting `W = D + L + L^T` with the true diagonal `D`. On a
//! diagonally normalized system `D = I` and a sweep is
//! `(I + L) x_new = m - L^T x_old`. The analysis routines (`fgs_rate`,
//! `fgs_residual_oracle`, `ruhe_equivalence_check`) expect the normalized form.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sparse::{
    apply_to_block, block_gram, cholesky_factor, mgs_orthogonalize_first, norm2, CsrMatrix,
    InnerProduct, SmallDense, VectorBlock,
};
use crate::spectral::{dense_eigendecomposition, DENSE_ANALYSIS_LIMIT};

/// Symmetric positive (semi)definite Gram matrix with its splitting.
#[derive(Debug, Clone)]
pub struct GramSystem {
    w: SmallDense,
    diag: Vec<f64>,
    normalized: bool,
    /// `false` marks a deflated direction (numerically zero diagonal or pivot).
    active: Vec<bool>,
    deflation_tol: f64,
}

impl GramSystem {
    /// `W = sym(Q^T AQ)`; any non-positive diagonal entry is an error.
    pub fn assemble(q: &VectorBlock, aq: &VectorBlock) -> Result<Self> {
        Self::assemble_with_tolerance(q, aq, 0.0)
    }

    /// Like [`GramSystem::assemble`], but diagonal entries with
    /// `|W_jj| <= tol * max_i W_ii` are deflated instead of rejected. The
    /// solves then leave those coefficients at zero.
    pub fn assemble_with_tolerance(q: &VectorBlock, aq: &VectorBlock, tol: f64) -> Result<Self> {
        check_dim("GramSystem::assemble", q.k(), aq.k())?;
        let raw = block_gram(q, aq)?;
        let s = raw.rows();
        let mut w = SmallDense::zeros(s, s)?;
        for j in 0..s {
            for i in 0..s {
                w.set(i, j, 0.5 * (raw.get(i, j) + raw.get(j, i)));
            }
        }
        Self::build(w, false, tol)
    }

    /// Wraps an existing symmetric matrix (strict: positive diagonal required).
    pub fn from_matrix(w: SmallDense) -> Result<Self> {
        if !w.is_symmetric() {
            return Err(Error::InvalidMatrix("Gram matrix must be symmetric".into()));
        }
        let normalized = (0..w.rows()).all(|i| w.get(i, i) == 1.0);
        Self::build(w, normalized, 0.0)
    }

    fn build(w: SmallDense, normalized: bool, tol: f64) -> Result<Self> {
        let s = w.rows();
        if s == 0 {
            return Err(Error::InvalidParameter("empty Gram system".into()));
        }
        let diag: Vec<f64> = (0..s).map(|i| w.get(i, i)).collect();
        let dmax = diag.iter().fold(0.0f64, |m, &d| m.max(d));
        let cut = tol * dmax;
        let mut active = vec![true; s];
        for (i, &d) in diag.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::NonFinite("Gram diagonal"));
            }
            if d > cut && d > 0.0 {
                continue;
            }
            if tol > 0.0 && d.abs() <= cut {
                active[i] = false;
            } else {
                return Err(Error::NotSpd { index: i, value: d });
            }
        }
        if !active.iter().any(|&a| a) {
            return Err(Error::NotSpd {
                index: 0,
                value: dmax,
            });
        }
        Ok(Self {
            w,
            diag,
            normalized,
            active,
            deflation_tol: tol,
        })
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn w(&self) -> &SmallDense {
        &self.w
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn deflated_count(&self) -> usize {
        self.active.iter().filter(|a| !**a).count()
    }

    /// Symmetric diagonal scaling `D^{-1/2} W D^{-1/2}` with an exactly unit diagonal.
    pub fn normalized(&self) -> Result<GramSystem> {
        if self.deflated_count() > 0 {
            return Err(Error::NotSpd {
                index: self.active.iter().position(|a| !a).unwrap_or(0),
                value: 0.0,
            });
        }
        let s = self.dim();
        let scale: Vec<f64> = self.diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut w = SmallDense::zeros(s, s)?;
        for j in 0..s {
            for i in 0..s {
                let v = if i == j {
                    1.0
                } else {
                    self.w.get(i, j) * scale[i] * scale[j]
                };
                w.set(i, j, v);
            }
        }
        Ok(GramSystem {
            w,
            diag: vec![1.0; s],
            normalized: true,
            active: vec![true; s],
            deflation_tol: self.deflation_tol,
        })
    }

    /// Strictly lower triangular part `L`.
    pub fn strict_lower(&self) -> SmallDense {
        let s = self.dim();
        let mut l = SmallDense::zeros(s, s).expect("bounded by W");
        for j in 0..s {
            for i in j + 1..s {
                l.set(i, j, self.w.get(i, j));
            }
        }
        l
    }

    /// Spectral condition number `λmax / λmin` of `W` (infinite when singular).
    pub fn condition_number(&self) -> f64 {
        condition_number(&self.w)
    }

    fn relative_residual(&self, rhs: &SmallDense, x: &SmallDense) -> Result<f64> {
        let rhs_norm = rhs.frobenius_norm();
        if rhs_norm == 0.0 {
            return Ok(0.0);
        }
        let res = rhs.sub(&self.w.matmul(x)?)?;
        Ok(res.frobenius_norm() / rhs_norm)
    }
}

/// Forward Gauss-Seidel settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgsConfig {
    /// Number of sweeps.
    pub nu: usize,
    /// Accept right-hand sides with more than one column.
    pub multi_rhs: bool,
}

impl FgsConfig {
    pub fn new(nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidParameter("FGS needs at least one sweep".into()));
        }
        Ok(Self {
            nu,
            multi_rhs: true,
        })
    }
}

impl Default for FgsConfig {
    fn default() -> Self {
        Self {
            nu: 30,
            multi_rhs: true,
        }
    }
}

/// Result of an (in)exact Gram solve.
#[derive(Debug, Clone)]
pub struct GramSolution {
    pub x: SmallDense,
    /// `||rhs - W x||_F / ||rhs||_F`
    pub rel_residual: f64,
}

/// `nu` forward Gauss-Seidel sweeps from `x = 0`, column by column.
pub fn fgs_solve(g: &GramSystem, rhs: &SmallDense, cfg: &FgsConfig) -> Result<GramSolution> {
    let s = g.dim();
    check_dim("fgs_solve", s, rhs.rows())?;
    if cfg.nu == 0 {
        return Err(Error::InvalidParameter("FGS needs at least one sweep".into()));
    }
    if rhs.cols() > 1 && !cfg.multi_rhs {
        return Err(Error::InvalidParameter(
            "multiple right-hand sides disabled in FgsConfig".into(),
        ));
    }
    let mut x = SmallDense::zeros(s, rhs.cols())?;
    if rhs.frobenius_norm() == 0.0 {
        return Ok(GramSolution {
            x,
            rel_residual: 0.0,
        });
    }
    let w = &g.w;
    for c in 0..rhs.cols() {
        let m = rhs.col(c);
        let xc = x.col_mut(c);
        for _ in 0..cfg.nu {
            for i in 0..s {
                if !g.active[i] {
                    continue;
                }
                let mut acc = m[i];
                for j in 0..s {
                    if j != i {
                        acc -= w.get(i, j) * xc[j];
                    }
                }
                xc[i] = acc / g.diag[i];
            }
        }
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("FGS iterate"));
    }
    let rel_residual = g.relative_residual(rhs, &x)?;
    Ok(GramSolution { x, rel_residual })
}

/// Reference solve by Cholesky factorization of `W`.
///
/// Deflated directions, and pivots below the system's deflation tolerance
/// relative to the corresponding diagonal, are skipped so that the solve
/// acts on the numerically independent part of the basis.
pub fn cholesky_solve(g: &GramSystem, rhs: &SmallDense) -> Result<GramSolution> {
    let s = g.dim();
    check_dim("cholesky_solve", s, rhs.rows())?;
    let w = &g.w;
    let mut l = SmallDense::zeros(s, s)?;
    let mut keep = g.active.clone();
    for j in 0..s {
        if !keep[j] {
            continue;
        }
        let mut d = w.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        let cut = g.deflation_tol * g.diag[j];
        if !(d > cut) || !(d > 0.0) {
            if g.deflation_tol > 0.0 && d >= -cut {
                keep[j] = false;
                continue;
            }
            return Err(Error::NotSpd { index: j, value: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..s {
            let mut v = w.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / ljj);
        }
    }
    let mut x = rhs.clone();
    for c in 0..x.cols() {
        let b = x.col_mut(c);
        for i in 0..s {
            if !keep[i] {
                b[i] = 0.0;
                continue;
            }
            let mut v = b[i];
            for k in 0..i {
                v -= l.get(i, k) * b[k];
            }
            b[i] = v / l.get(i, i);
        }
        for i in (0..s).rev() {
            if !keep[i] {
                continue;
            }
            let mut v = b[i];
            for k in i + 1..s {
                v -= l.get(k, i) * b[k];
            }
            b[i] = v / l.get(i, i);
        }
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Cholesky solve"));
    }
    let rel_residual = g.relative_residual(rhs, &x)?;
    Ok(GramSolution { x, rel_residual })
}

fn require_normalized(g: &GramSystem, op: &str) -> Result<()> {
    if g.is_normalized() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{op} needs a diagonally normalized Gram system"
        )))
    }
}

/// Solves `(I + L) y = v` in place (forward substitution, unit diagonal).
fn unit_lower_solve(l: &SmallDense, v: &mut [f64]) {
    for i in 0..v.len() {
        let mut acc = v[i];
        for k in 0..i {
            acc -= l.get(i, k) * v[k];
        }
        v[i] = acc;
    }
}

/// Closed-form FGS residual `(-1)^nu (L^T (I+L)^{-1})^nu m` on a normalized system.
pub fn fgs_residual_oracle(g: &GramSystem, m: &[f64], nu: usize) -> Result<Vec<f64>> {
    require_normalized(g, "fgs_residual_oracle")?;
    check_dim("fgs_residual_oracle", g.dim(), m.len())?;
    let l = g.strict_lower();
    let s = g.dim();
    let mut r = m.to_vec();
    for _ in 0..nu {
        unit_lower_solve(&l, &mut r);
        // r <- -L^T r
        let next: Vec<f64> = (0..s)
            .map(|i| -(i + 1..s).map(|k| l.get(k, i) * r[k]).sum::<f64>())
            .collect();
        r = next;
    }
    Ok(r)
}

/// Spectral norm and spectral radius of `L^T (I + L)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgsRate {
    pub spectral_norm: f64,
    pub spectral_radius: f64,
}

/// Dense `L^T (I + L)^{-1}` of a normalized system.
pub fn fgs_residual_operator(g: &GramSystem) -> Result<DMatrix<f64>> {
    require_normalized(g, "fgs_residual_operator")?;
    let s = g.dim();
    let l = g.strict_lower();
    let mut inv = DMatrix::zeros(s, s);
    for c in 0..s {
        let mut e = vec![0.0; s];
        e[c] = 1.0;
        unit_lower_solve(&l, &mut e);
        for i in 0..s {
            inv[(i, c)] = e[i];
        }
    }
    Ok(l.to_nalgebra().transpose() * inv)
}

pub fn fgs_rate(g: &GramSystem) -> Result<FgsRate> {
    let op = fgs_residual_operator(g)?;
    let spectral_norm = op.clone().singular_values().max();
    let spectral_radius = op
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(FgsRate {
        spectral_norm,
        spectral_radius,
    })
}

/// Deviation between one FGS sweep on `W alpha = e_1` (mapped back through `P`)
/// and one MGS pass of `p_1` against the remaining columns.
pub fn ruhe_equivalence_check(p: &VectorBlock, inner: InnerProduct<'_>) -> Result<f64> {
    let s = p.k();
    let w_raw = inner.gram(p)?;
    // the columns are taken as normalized: W = I + L + L^T
    let mut w = SmallDense::zeros(s, s)?;
    for j in 0..s {
        for i in 0..s {
            let v = if i == j {
                1.0
            } else if i > j {
                w_raw.get(i, j)
            } else {
                w_raw.get(j, i)
            };
            w.set(i, j, v);
        }
    }
    if cholesky_factor(&w_raw.scaled(1.0)).is_err() || cholesky_factor(&w).is_err() {
        return Err(Error::RankDeficient);
    }
    let g = GramSystem::from_matrix(w)?;
    let mut e1 = vec![0.0; s];
    e1[0] = 1.0;
    let sol = fgs_solve(&g, &SmallDense::column_vector(&e1)?, &FgsConfig::new(1)?)?;
    let via_fgs = p.mul_vec(sol.x.col(0))?;
    let via_mgs = mgs_orthogonalize_first(p, inner)?;
    let diff: Vec<f64> = via_fgs.iter().zip(&via_mgs).map(|(a, b)| a - b).collect();
    Ok(norm2(&diff))
}

/// `(κ₂(W), κ₂(A^{1/2} Q))` after scaling the columns of `Q` to unit `A`-norm.
pub fn gram_kappa_check(q: &VectorBlock, a: &CsrMatrix) -> Result<(f64, f64)> {
    if a.n() > DENSE_ANALYSIS_LIMIT {
        return Err(Error::TooLarge {
            n: a.n(),
            limit: DENSE_ANALYSIS_LIMIT,
        });
    }
    check_dim("gram_kappa_check", a.n(), q.n())?;
    let aq = apply_to_block(a, q)?;
    let mut cols = Vec::with_capacity(q.k());
    for j in 0..q.k() {
        let nrm = crate::sparse::dot(q.col(j), aq.col(j)).sqrt();
        if !(nrm > 0.0) {
            return Err(Error::ZeroNorm { column: j });
        }
        cols.push(q.col(j).iter().map(|v| v / nrm).collect::<Vec<f64>>());
    }
    let qn = VectorBlock::from_columns(&cols)?;
    let g = GramSystem::assemble(&qn, &apply_to_block(a, &qn)?)?;
    let kappa_w = g.condition_number();

    let eig = dense_eigendecomposition(a)?;
    let sqrt_vals = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|v| v.max(0.0).sqrt()),
    ));
    let a_half = &eig.vectors * sqrt_vals * eig.vectors.transpose();
    let qd = DMatrix::from_column_slice(qn.n(), qn.k(), qn.data());
    let sv = (a_half * qd).singular_values();
    let kappa_f = sv.max() / sv.min();
    Ok((kappa_w, kappa_f))
}

/// `λmax / λmin` of a small symmetric matrix; infinite when not positive definite.
pub fn condition_number(w: &SmallDense) -> f64 {
    let eig = SymmetricEigen::new(w.to_nalgebra());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}
