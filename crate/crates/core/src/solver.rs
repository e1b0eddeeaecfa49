//! The s-step preconditioned conjugate gradient iteration (PCG-S), the
//! classical PCG baseline and inexact-Gram monitoring.
//!
//! PCG-S aggregates `s` Chebyshev directions per outer iteration. Each outer
//! iteration assembles one Gram system `W = Q^T A Q` and solves it twice: once
//! for the step coefficients `α` and once, with `s` right-hand sides, for the
//! A-conjugation coefficients `β`. The residual is carried by recurrence.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gram::{cholesky_solve, fgs_solve, FgsConfig, GramSolution, GramSystem};
use crate::mpk::{mpk_chebyshev, ChebyshevParams, MpkOutput};
use crate::precond::Preconditioner;
use crate::sparse::{axpy, block_gram, block_update, dot, norm2, CsrMatrix, SmallDense, VectorBlock};
use crate::spectral::{estimate_interval, SpectrumEstimate};

/// Largest supported step size.
pub const MAX_STEP: usize = 64;

/// Default relative threshold below which a Gram direction counts as dependent.
pub const DEFAULT_DEFLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramSolver {
    Fgs,
    Cholesky,
}

impl std::str::FromStr for GramSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgs" => Ok(GramSolver::Fgs),
            "cholesky" => Ok(GramSolver::Cholesky),
            other => Err(Error::InvalidParameter(format!("unknown Gram solver '{other}'"))),
        }
    }
}

/// Where the Chebyshev interval comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumChoice {
    /// Preconditioned Lanczos, run once before the first basis is built.
    Auto { steps: usize, seed: u64 },
    Fixed(SpectrumEstimate),
}

impl Default for SpectrumChoice {
    fn default() -> Self {
        SpectrumChoice::Auto { steps: 30, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub s: usize,
    /// Relative residual target `||r|| <= tol ||b||`.
    pub tol: f64,
    pub max_outer: usize,
    pub fgs: FgsConfig,
    pub gram_solver: GramSolver,
    pub spectrum: SpectrumChoice,
    /// Gram directions with diagonal (or Cholesky pivot) below
    /// `deflation_tol` times the largest diagonal get a zero coefficient.
    pub deflation_tol: f64,
    /// Also compute `||b - A x|| / ||b||` each outer iteration (extra SpMV,
    /// not included in the operation counts).
    pub track_true_residual: bool,
    /// Record `κ₂(W)` each outer iteration.
    pub record_kappa: bool,
}

impl SolverConfig {
    pub fn new(s: usize, tol: f64) -> Result<Self> {
        let cfg = Self {
            s,
            tol,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.s > MAX_STEP {
            return Err(Error::OutOfRange {
                what: "s",
                value: self.s as f64,
                range: format!("[1, {MAX_STEP}]"),
            });
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter("max_outer must be >= 1".into()));
        }
        if self.fgs.nu == 0 {
            return Err(Error::InvalidParameter("FGS needs at least one sweep".into()));
        }
        if !(self.deflation_tol >= 0.0) || self.deflation_tol >= 1.0 {
            return Err(Error::InvalidParameter("deflation_tol must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            s: 4,
            tol: 1e-6,
            max_outer: 1000,
            fgs: FgsConfig::default(),
            gram_solver: GramSolver::Fgs,
            spectrum: SpectrumChoice::default(),
            deflation_tol: DEFAULT_DEFLATION_TOL,
            track_true_residual: false,
            record_kappa: false,
        }
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// Recurrence residual `||r|| / ||b||` after the update.
    pub rel_residual: f64,
    /// Relative Gram residual of the `α` solve (zero for PCG).
    pub delta_alpha: f64,
    /// Relative Gram residual of the `β` solve; absent once converged.
    pub delta_beta: Option<f64>,
    pub kappa: Option<f64>,
    pub true_rel_residual: Option<f64>,
    /// Number of Gram directions deflated this iteration.
    pub deflated: usize,
}

/// Kernel invocation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub spmv: usize,
    pub precond: usize,
    /// Allreduce-equivalent global reductions (two per iteration).
    pub allreduce: usize,
    /// Length-`n` inner products.
    pub dot: usize,
    /// Length-`n` vector updates.
    pub axpy: usize,
    pub mpk_calls: usize,
    /// FGS sweeps, counted per right-hand side.
    pub fgs_sweeps: usize,
}

/// Floating-point operation tallies by kernel category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopTally {
    pub vector_updates: f64,
    pub dot_products: f64,
    /// Replicated small dense work (Gram solves).
    pub gram_solve: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    PcgS { s: usize, gram_solver: GramSolver },
    Pcg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub converged: bool,
    pub outer_iters: usize,
    pub initial_rel_residual: f64,
    pub history: Vec<OuterRecord>,
    pub counts: OpCounts,
    pub flops: FlopTally,
    pub spectrum: Option<SpectrumEstimate>,
}

impl SolveReport {
    /// `[||r0||/||b||, ||r1||/||b||, ...]`, of length `outer_iters + 1`.
    pub fn residual_history(&self) -> Vec<f64> {
        std::iter::once(self.initial_rel_residual)
            .chain(self.history.iter().map(|h| h.rel_residual))
            .collect()
    }

    pub fn final_rel_residual(&self) -> f64 {
        self.history
            .last()
            .map_or(self.initial_rel_residual, |h| h.rel_residual)
    }

    /// Largest Gram residual over both solves of every iteration.
    pub fn max_delta(&self) -> f64 {
        self.history.iter().fold(0.0f64, |m, h| {
            m.max(h.delta_alpha).max(h.delta_beta.unwrap_or(0.0))
        })
    }
}

/// State handed to observers after each iteration's solution update.
pub struct IterView<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub r: &'a [f64],
    /// Search block and Gram system of this PCG-S iteration (absent for PCG).
    pub q: Option<&'a VectorBlock>,
    pub gram: Option<&'a GramSystem>,
}

fn rel(v: f64, b_norm: f64) -> f64 {
    if b_norm > 0.0 {
        v / b_norm
    } else {
        v
    }
}

fn initial_state(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    counts: &mut OpCounts,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n();
    check_dim("solve: rhs", n, b.len())?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    match x0 {
        Some(x0) if x0.iter().any(|&v| v != 0.0) => {
            check_dim("solve: x0", n, x0.len())?;
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("initial guess"));
            }
            let ax = a.spmv(x0)?;
            counts.spmv += 1;
            let r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            Ok((x0.to_vec(), r))
        }
        Some(x0) => {
            check_dim("solve: x0", n, x0.len())?;
            Ok((vec![0.0; n], b.to_vec()))
        }
        None => Ok((vec![0.0; n], b.to_vec())),
    }
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], b_norm: f64) -> Result<f64> {
    let ax = a.spmv(x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    Ok(rel(norm2(&r), b_norm))
}

fn breakdown(outer: usize, e: Error) -> Error {
    match e {
        Error::NotSpd { index, value } => Error::SolverBreakdown {
            outer,
            reason: format!("Gram matrix not positive definite (pivot {index} = {value:e})"),
        },
        Error::NonFinite(what) => Error::SolverBreakdown {
            outer,
            reason: format!("non-finite values in {what}"),
        },
        other => other,
    }
}

/// PCG-S. `x0 = None` starts from zero.
pub fn pcg_s_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    pcg_s_solve_observed(a, b, x0, m, cfg, |_| {})
}

/// [`pcg_s_solve`] with a callback after each outer iteration.
pub fn pcg_s_solve_observed<F>(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(&IterView<'_>),
{
    cfg.validate()?;
    let n = a.n();
    let s = cfg.s;
    let nf = n as f64;
    let mut counts = OpCounts::default();
    let mut flops = FlopTally::default();
    let (mut x, mut r) = initial_state(a, b, x0, &mut counts)?;
    let b_norm = norm2(b);
    let r_norm = norm2(&r);
    let mut report = SolveReport {
        method: Method::PcgS {
            s,
            gram_solver: cfg.gram_solver,
        },
        converged: false,
        outer_iters: 0,
        initial_rel_residual: rel(r_norm, b_norm),
        history: Vec::new(),
        counts,
        flops,
        spectrum: None,
    };
    if r_norm <= cfg.tol * b_norm || r_norm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }

    let spectrum = match cfg.spectrum {
        SpectrumChoice::Fixed(e) => e,
        SpectrumChoice::Auto { steps, seed } => estimate_interval(a, m, steps, seed)?,
    };
    report.spectrum = Some(spectrum);
    let params = ChebyshevParams::from_estimate(&spectrum)?;
    log::debug!(
        "PCG-S s={s}: Chebyshev interval [{:.4e}, {:.4e}]",
        params.lambda_min,
        params.lambda_max
    );

    let mpk = |r: &[f64], counts: &mut OpCounts, flops: &mut FlopTally| -> Result<MpkOutput> {
        let out = mpk_chebyshev(a, r, s, m, &params)?;
        counts.mpk_calls += 1;
        counts.spmv += s;
        counts.precond += s;
        // zp_2 takes two vector updates, later recurrence steps three
        let updates = if s > 1 { 2 + 3 * (s - 2) } else { 0 };
        counts.axpy += updates;
        flops.vector_updates += 2.0 * nf * updates as f64;
        Ok(out)
    };

    let first = mpk(&r, &mut counts, &mut flops)?;
    let mut q = first.z;
    let mut aq = first.p.columns(1, s + 1);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let solve = |g: &GramSystem, rhs: &SmallDense, counts: &mut OpCounts, flops: &mut FlopTally| {
        match cfg.gram_solver {
            GramSolver::Fgs => {
                counts.fgs_sweeps += cfg.fgs.nu * rhs.cols();
                flops.gram_solve += (cfg.fgs.nu * rhs.cols() * 2 * s * s) as f64;
                fgs_solve(g, rhs, &cfg.fgs)
            }
            GramSolver::Cholesky => {
                flops.gram_solve += (s * s * s) as f64 / 3.0 + (rhs.cols() * 2 * s * s) as f64;
                cholesky_solve(g, rhs)
            }
        }
    };

    for k in 1..=cfg.max_outer {
        let g = GramSystem::assemble_with_tolerance(&q, &aq, cfg.deflation_tol)
            .map_err(|e| breakdown(k, e))?;
        let b1 = q.tr_mul_vec(&r)?;
        counts.dot += s * s + s;
        flops.dot_products += 2.0 * nf * (s * s + s) as f64;

        let GramSolution {
            x: alpha,
            rel_residual: delta_alpha,
        } = solve(&g, &SmallDense::column_vector(&b1)?, &mut counts, &mut flops)
            .map_err(|e| breakdown(k, e))?;
        let alpha = alpha.col(0).to_vec();
        let dx = q.mul_vec(&alpha)?;
        let dr = aq.mul_vec(&alpha)?;
        axpy(1.0, &dx, &mut x);
        axpy(-1.0, &dr, &mut r);
        counts.axpy += 2 * s;
        flops.vector_updates += 4.0 * nf * s as f64;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(breakdown(k, Error::NonFinite("residual recurrence")));
        }

        let r_norm = norm2(&r);
        let rel_res = rel(r_norm, b_norm);
        let converged = r_norm <= cfg.tol * b_norm;
        let mut record = OuterRecord {
            iter: k,
            rel_residual: rel_res,
            delta_alpha,
            delta_beta: None,
            kappa: cfg.record_kappa.then(|| g.condition_number()),
            true_rel_residual: None,
            deflated: g.deflated_count(),
        };
        if cfg.track_true_residual {
            record.true_rel_residual = Some(true_residual(a, b, &x, b_norm)?);
        }
        observe(&IterView {
            iter: k,
            x: &x,
            r: &r,
            q: Some(&q),
            gram: Some(&g),
        });
        report.outer_iters = k;
        if converged {
            report.history.push(record);
            report.converged = true;
            break;
        }
        if best.as_ref().is_none_or(|(bn, _)| r_norm < *bn) {
            best = Some((r_norm, x.clone()));
        }
        if k == cfg.max_outer {
            report.history.push(record);
            break;
        }

        let next = mpk(&r, &mut counts, &mut flops)?;
        let aq_new = next.p.columns(1, s + 1);
        let b2 = block_gram(&q, &aq_new)?.scaled(-1.0);
        counts.dot += s * s;
        flops.dot_products += 2.0 * nf * (s * s) as f64;
        let beta_sol = solve(&g, &b2, &mut counts, &mut flops).map_err(|e| breakdown(k, e))?;
        record.delta_beta = Some(beta_sol.rel_residual);
        report.history.push(record);
        q = block_update(&next.z, &q, &beta_sol.x)?;
        aq = block_update(&aq_new, &aq, &beta_sol.x)?;
        counts.axpy += 2 * s * s;
        flops.vector_updates += 4.0 * nf * (s * s) as f64;
    }

    counts.allreduce = 2 * report.outer_iters;
    report.counts = counts;
    report.flops = flops;
    if !report.converged {
        log::warn!(
            "PCG-S did not converge in {} outer iterations (rel. residual {:.3e})",
            report.outer_iters,
            report.final_rel_residual()
        );
        if let Some((_, xb)) = best {
            x = xb;
        }
    }
    Ok((x, report))
}

/// Classical preconditioned CG: one SpMV, one preconditioner application,
/// three vector updates, two inner products and two reductions per iteration.
pub fn pcg_solve(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    pcg_solve_observed(a, b, x0, m, tol, max_iter, |_| {})
}

pub fn pcg_solve_observed<F>(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    m: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
    mut observe: F,
) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(&IterView<'_>),
{
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
    }
    let nf = a.n() as f64;
    let mut counts = OpCounts::default();
    let mut flops = FlopTally::default();
    let (mut x, mut r) = initial_state(a, b, x0, &mut counts)?;
    let b_norm = norm2(b);
    let r_norm = norm2(&r);
    let mut report = SolveReport {
        method: Method::Pcg,
        converged: false,
        outer_iters: 0,
        initial_rel_residual: rel(r_norm, b_norm),
        history: Vec::new(),
        counts,
        flops,
        spectrum: None,
    };
    if r_norm <= tol * b_norm || r_norm == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let mut z = m.apply(&r)?;
    counts.precond += 1;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 1..=max_iter {
        let q = a.spmv(&p)?;
        counts.spmv += 1;
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !(rz > 0.0) {
            return Err(Error::SolverBreakdown {
                outer: k,
                reason: format!("non-positive curvature (p^T A p = {pq:e}, r^T z = {rz:e})"),
            });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let r_norm = norm2(&r);
        report.outer_iters = k;
        report.history.push(OuterRecord {
            iter: k,
            rel_residual: rel(r_norm, b_norm),
            delta_alpha: 0.0,
            delta_beta: None,
            kappa: None,
            true_rel_residual: None,
            deflated: 0,
        });
        observe(&IterView {
            iter: k,
            x: &x,
            r: &r,
            q: None,
            gram: None,
        });
        counts.dot += 2;
        counts.axpy += 3;
        flops.dot_products += 4.0 * nf;
        flops.vector_updates += 6.0 * nf;
        if !r_norm.is_finite() {
            return Err(Error::SolverBreakdown {
                outer: k,
                reason: "non-finite residual".into(),
            });
        }
        if r_norm <= tol * b_norm {
            report.converged = true;
            break;
        }
        if best.as_ref().is_none_or(|(bn, _)| r_norm < *bn) {
            best = Some((r_norm, x.clone()));
        }
        if k == max_iter {
            break;
        }
        m.apply_into(&r, &mut z)?;
        counts.precond += 1;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    counts.allreduce = 2 * report.outer_iters;
    report.counts = counts;
    report.flops = flops;
    if !report.converged {
        if let Some((_, xb)) = best {
            x = xb;
        }
    }
    Ok((x, report))
}

/// Summary of the inexact-Gram heuristic `N_outer · max δ ≲ cap`.
///
/// The verdict uses the larger of the `α` and `β` Gram residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InexactVerdict {
    pub max_delta_alpha: f64,
    pub max_delta_beta: f64,
    pub max_delta: f64,
    /// `N_outer · max δ`
    pub budget: f64,
    pub cap: f64,
    pub pass: bool,
}

pub fn monitor_inexact(report: &SolveReport, delta_cap: f64) -> InexactVerdict {
    let max_delta_alpha = report.history.iter().fold(0.0f64, |m, h| m.max(h.delta_alpha));
    let max_delta_beta = report
        .history
        .iter()
        .fold(0.0f64, |m, h| m.max(h.delta_beta.unwrap_or(0.0)));
    let max_delta = max_delta_alpha.max(max_delta_beta);
    let budget = report.outer_iters as f64 * max_delta;
    InexactVerdict {
        max_delta_alpha,
        max_delta_beta,
        max_delta,
        budget,
        cap: delta_cap,
        pass: budget <= delta_cap,
    }
}
