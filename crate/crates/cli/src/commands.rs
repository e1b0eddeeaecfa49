//! Subcommand implementations.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use chebstep::gram::{fgs_rate, gram_kappa_check};
use chebstep::moments::{
    chebyshev_block, conditioning_experiment, log_log_slope, normalized_gram_bound_check,
    verify_gram_structure, BasisKind, GramStructureCheck, MomentInner, NormalizedBoundCheck,
};
use chebstep::perf_model::{
    cost_breakdown, delta_grid, p_crit_table, CostBreakdown, MachineParams, ModelQuery, PCritRow,
    ProblemSize,
};
use chebstep::problems::{poisson27, read_matrix_market, PoissonSpec};
use chebstep::solver::{
    monitor_inexact, pcg_s_solve, pcg_s_solve_observed, pcg_solve, FlopTally, InexactVerdict,
    Method, OpCounts, SolveReport, SpectrumChoice,
};
use chebstep::sparse::{dot, norm2};
use chebstep::spectral::{
    exact_interval, estimate_interval, gershgorin_interval, SpectrumMethod, DENSE_ANALYSIS_LIMIT,
};
use chebstep::{
    ChebyshevParams, CsrMatrix, FgsConfig, GramSolver, Identity, Jacobi, Preconditioner,
    SolverConfig, SpectrumEstimate,
};

use crate::args::{
    CommonArgs, CompareArgs, GramAnalysisArgs, GramArg, MethodArg, MomentsArgs, PerfModelArgs,
    PrecondArg, RhsArg, SolveArgs, SolverArgs, SpectrumArg,
};
use crate::table::{write_summary, Cell, Table};

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

/// Linear system assembled from the problem arguments.
struct Problem {
    a: CsrMatrix,
    b: Vec<f64>,
    source: String,
}

#[derive(Serialize)]
struct ProblemInfo<'a> {
    source: &'a str,
    n: usize,
    nnz: usize,
    rhs: &'static str,
}

impl Problem {
    fn info(&self, rhs: RhsArg) -> ProblemInfo<'_> {
        ProblemInfo {
            source: &self.source,
            n: self.a.n(),
            nnz: self.a.nnz(),
            rhs: match rhs {
                RhsArg::Ones => "ones",
                RhsArg::Random => "random",
            },
        }
    }
}

fn load_problem(common: &CommonArgs) -> anyhow::Result<Problem> {
    let (a, source) = match (&common.problem.poisson, &common.problem.matrix) {
        (Some(dims), None) => {
            let spec = PoissonSpec::new(dims[0], dims[1], dims[2])?;
            let (a, _) = poisson27(&spec)?;
            (a, format!("poisson27 {}x{}x{}", dims[0], dims[1], dims[2]))
        }
        (None, Some(path)) => {
            let a = read_matrix_market(path)
                .with_context(|| format!("reading {}", path.display()))?;
            (a, format!("matrix-market {}", path.display()))
        }
        _ => bail!("exactly one of --poisson or --matrix is required"),
    };
    let n = a.n();
    let b = match common.rhs {
        RhsArg::Ones => vec![1.0; n],
        RhsArg::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    };
    log::info!("problem {source}: n = {n}, nnz = {}", a.nnz());
    Ok(Problem { a, b, source })
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn build_precond(a: &CsrMatrix, kind: PrecondArg) -> anyhow::Result<Box<dyn Preconditioner>> {
    Ok(match kind {
        PrecondArg::Identity => Box::new(Identity),
        PrecondArg::Jacobi => Box::new(Jacobi::new(a)?),
    })
}

/// `D^{-1/2} A D^{-1/2}`, which has the spectrum of the Jacobi-preconditioned operator.
fn jacobi_scaled(a: &CsrMatrix, m: &Jacobi) -> anyhow::Result<CsrMatrix> {
    let scale: Vec<f64> = m.inv_diag().iter().map(|d| d.sqrt()).collect();
    let mut values = a.values().to_vec();
    for i in 0..a.n() {
        let range = a.row_offsets()[i]..a.row_offsets()[i + 1];
        for k in range {
            values[k] *= scale[i] * scale[a.col_indices()[k]];
        }
    }
    Ok(CsrMatrix::new(
        a.n(),
        a.row_offsets().to_vec(),
        a.col_indices().to_vec(),
        values,
    )?)
}

fn resolve_interval(
    a: &CsrMatrix,
    precond: PrecondArg,
    m: &dyn Preconditioner,
    choice: SpectrumArg,
    interval: Option<&[f64]>,
    steps: usize,
    seed: u64,
) -> anyhow::Result<SpectrumEstimate> {
    if let Some(iv) = interval {
        return Ok(SpectrumEstimate::new(
            iv[0],
            iv[1],
            SpectrumMethod::Supplied,
            1.0,
            1.0,
        )?);
    }
    let op = match precond {
        PrecondArg::Identity => None,
        PrecondArg::Jacobi => Some(jacobi_scaled(a, &Jacobi::new(a)?)?),
    };
    let target = op.as_ref().unwrap_or(a);
    let est = match choice {
        SpectrumArg::Lanczos => estimate_interval(a, m, steps, seed)?,
        SpectrumArg::Exact => exact_interval(target)?,
        SpectrumArg::Gershgorin => gershgorin_interval(target)?,
    };
    log::info!(
        "Chebyshev interval [{:e}, {:e}] ({:?})",
        est.lambda_min,
        est.lambda_max,
        est.method
    );
    Ok(est)
}

#[derive(Serialize)]
struct SolverSettings {
    tol: f64,
    max_outer: usize,
    nu: usize,
    precond: &'static str,
    seed: u64,
}

fn settings(s: &SolverArgs, seed: u64) -> SolverSettings {
    SolverSettings {
        tol: s.tol,
        max_outer: s.max_outer as usize,
        nu: s.nu as usize,
        precond: match s.precond {
            PrecondArg::Identity => "identity",
            PrecondArg::Jacobi => "jacobi",
        },
        seed,
    }
}

fn gram_solver(g: GramArg) -> GramSolver {
    match g {
        GramArg::Fgs => GramSolver::Fgs,
        GramArg::Cholesky => GramSolver::Cholesky,
    }
}

fn solver_config(
    s: usize,
    args: &SolverArgs,
    gram: GramSolver,
    spectrum: SpectrumEstimate,
) -> anyhow::Result<SolverConfig> {
    let cfg = SolverConfig {
        max_outer: args.max_outer as usize,
        fgs: FgsConfig::new(args.nu as usize)?,
        gram_solver: gram,
        spectrum: SpectrumChoice::Fixed(spectrum),
        ..SolverConfig::new(s, args.tol)?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn true_rel_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> anyhow::Result<f64> {
    let ax = a.spmv(x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    let bn = norm2(b);
    Ok(if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) })
}

fn history_table(name: &'static str, report: &SolveReport) -> Table {
    let mut t = Table::new(name, &["k", "rel_res", "delta_alpha", "delta_beta"]);
    for h in &report.history {
        t.push(vec![
            h.iter.into(),
            h.rel_residual.into(),
            h.delta_alpha.into(),
            h.delta_beta.into(),
        ]);
    }
    t
}

#[derive(Serialize)]
struct RunSummary {
    method: Method,
    converged: bool,
    outer_iters: usize,
    /// Krylov dimension reached: `s` per outer iteration.
    krylov_dim: usize,
    initial_rel_residual: f64,
    final_rel_residual: f64,
    true_rel_residual: f64,
    counts: OpCounts,
    flops: FlopTally,
    inexact: Option<InexactVerdict>,
}

fn run_summary(report: &SolveReport, true_res: f64) -> RunSummary {
    let (step, inexact) = match report.method {
        Method::PcgS { s, gram_solver } => (
            s,
            (gram_solver == GramSolver::Fgs).then(|| monitor_inexact(report, 1.0)),
        ),
        Method::Pcg => (1, None),
    };
    RunSummary {
        method: report.method,
        converged: report.converged,
        outer_iters: report.outer_iters,
        krylov_dim: report.outer_iters * step,
        initial_rel_residual: report.initial_rel_residual,
        final_rel_residual: report.final_rel_residual(),
        true_rel_residual: true_res,
        counts: report.counts,
        flops: report.flops,
        inexact,
    }
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    schema: &'static str,
    problem: ProblemInfo<'a>,
    settings: SolverSettings,
    spectrum: SpectrumEstimate,
    run: RunSummary,
}

pub fn solve(args: &SolveArgs) -> anyhow::Result<Outcome> {
    let common = &args.common;
    let problem = load_problem(common)?;
    prepare_out(&common.out)?;
    let m = build_precond(&problem.a, args.solver.precond)?;
    let spectrum = resolve_interval(
        &problem.a,
        args.solver.precond,
        m.as_ref(),
        args.solver.spectrum,
        args.solver.interval.as_deref(),
        args.solver.lanczos_steps,
        common.seed,
    )?;
    let (x, report) = match args.method {
        MethodArg::PcgS => {
            let cfg = solver_config(args.s, &args.solver, gram_solver(args.gram), spectrum)?;
            pcg_s_solve(&problem.a, &problem.b, None, m.as_ref(), &cfg)?
        }
        MethodArg::Pcg => pcg_solve(
            &problem.a,
            &problem.b,
            None,
            m.as_ref(),
            args.solver.tol,
            args.solver.max_outer as usize,
        )?,
    };
    let true_res = true_rel_residual(&problem.a, &problem.b, &x)?;
    log::info!(
        "{:?}: converged = {}, iterations = {}, final residual = {:e}",
        report.method,
        report.converged,
        report.outer_iters,
        report.final_rel_residual()
    );

    history_table("solve_history", &report).write(&common.out, common.format)?;
    if args.write_solution {
        let mut t = Table::new("solution", &["i", "x"]);
        for (i, v) in x.iter().enumerate() {
            t.push(vec![i.into(), (*v).into()]);
        }
        t.write(&common.out, common.format)?;
    }
    let summary = SolveSummary {
        schema: "chebstep solve-summary v1",
        problem: problem.info(common.rhs),
        settings: settings(&args.solver, common.seed),
        spectrum,
        run: run_summary(&report, true_res),
    };
    write_summary(&common.out, "solve_summary", &summary)?;
    println!(
        "converged={} iterations={} rel_res={:e}",
        report.converged,
        report.outer_iters,
        report.final_rel_residual()
    );
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    schema: &'static str,
    problem: ProblemInfo<'a>,
    settings: SolverSettings,
    spectrum: SpectrumEstimate,
    runs: Vec<RunSummary>,
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<Outcome> {
    let common = &args.common;
    let s_values = &args.s_range.0;
    let problem = load_problem(common)?;
    prepare_out(&common.out)?;
    let m = build_precond(&problem.a, args.solver.precond)?;
    let spectrum = resolve_interval(
        &problem.a,
        args.solver.precond,
        m.as_ref(),
        args.solver.spectrum,
        args.solver.interval.as_deref(),
        args.solver.lanczos_steps,
        common.seed,
    )?;
    let s_max = *s_values.iter().max().expect("parser rejects empty ranges");

    let mut runs = Vec::new();
    let pcg_cap = args.solver.max_outer as usize * s_max;
    let (x, pcg) = pcg_solve(&problem.a, &problem.b, None, m.as_ref(), args.solver.tol, pcg_cap)?;
    let true_res = true_rel_residual(&problem.a, &problem.b, &x)?;
    runs.push((pcg, true_res));
    for &s in s_values {
        for gram in [GramSolver::Cholesky, GramSolver::Fgs] {
            let cfg = solver_config(s, &args.solver, gram, spectrum)?;
            let (x, report) = pcg_s_solve(&problem.a, &problem.b, None, m.as_ref(), &cfg)?;
            let true_res = true_rel_residual(&problem.a, &problem.b, &x)?;
            log::info!(
                "s = {s}, {gram:?}: {} outer iterations, converged = {}",
                report.outer_iters,
                report.converged
            );
            runs.push((report, true_res));
        }
    }

    let mut t = Table::new(
        "compare_history",
        &["method", "s", "k", "krylov_dim", "rel_res", "delta_alpha", "delta_beta"],
    );
    for (report, _) in &runs {
        let (label, s) = match report.method {
            Method::Pcg => ("pcg", 1),
            Method::PcgS {
                s,
                gram_solver: GramSolver::Cholesky,
            } => ("pcgs-cholesky", s),
            Method::PcgS {
                s,
                gram_solver: GramSolver::Fgs,
            } => ("pcgs-fgs", s),
        };
        for h in &report.history {
            t.push(vec![
                label.into(),
                s.into(),
                h.iter.into(),
                (h.iter * s).into(),
                h.rel_residual.into(),
                h.delta_alpha.into(),
                h.delta_beta.into(),
            ]);
        }
    }
    t.write(&common.out, common.format)?;

    let all_converged = runs.iter().all(|(r, _)| r.converged);
    let summary = CompareSummary {
        schema: "chebstep compare-summary v1",
        problem: problem.info(common.rhs),
        settings: settings(&args.solver, common.seed),
        spectrum,
        runs: runs.iter().map(|(r, t)| run_summary(r, *t)).collect(),
    };
    write_summary(&common.out, "compare_summary", &summary)?;
    for run in &summary.runs {
        println!(
            "{} converged={} iterations={} krylov_dim={}",
            serde_json::to_string(&run.method)?,
            run.converged,
            run.outer_iters,
            run.krylov_dim
        );
    }
    Ok(if all_converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

/// Per-iteration quantities collected by the gram-analysis observer.
struct GramSnapshot {
    k: usize,
    w: Vec<f64>,
    w_normalized: Option<Vec<f64>>,
    dim: usize,
    kappa_w: f64,
    kappa_normalized: Option<f64>,
    fgs_norm: Option<f64>,
    fgs_radius: Option<f64>,
    kappa_a_half_q: Option<f64>,
    deflated: usize,
}

#[derive(Serialize)]
struct GramSummary<'a> {
    schema: &'static str,
    problem: ProblemInfo<'a>,
    settings: SolverSettings,
    spectrum: SpectrumEstimate,
    /// Columns needing a dense eigendecomposition of `A` are only filled
    /// when `n` does not exceed this limit.
    dense_analysis_limit: usize,
    dense_columns_present: bool,
    run: RunSummary,
}

pub fn gram_analysis(args: &GramAnalysisArgs) -> anyhow::Result<Outcome> {
    let common = &args.common;
    let problem = load_problem(common)?;
    prepare_out(&common.out)?;
    let m = build_precond(&problem.a, args.solver.precond)?;
    let spectrum = resolve_interval(
        &problem.a,
        args.solver.precond,
        m.as_ref(),
        args.solver.spectrum,
        args.solver.interval.as_deref(),
        args.solver.lanczos_steps,
        common.seed,
    )?;
    let cfg = solver_config(args.s, &args.solver, gram_solver(args.gram), spectrum)?;
    let dense_ok = problem.a.n() <= DENSE_ANALYSIS_LIMIT;
    if !dense_ok {
        log::warn!(
            "n = {} exceeds the dense analysis limit {DENSE_ANALYSIS_LIMIT}; kappa_a_half_q is omitted",
            problem.a.n()
        );
    }

    let mut snaps: Vec<GramSnapshot> = Vec::new();
    let mut first_err: Option<chebstep::Error> = None;
    let (x, report) = pcg_s_solve_observed(&problem.a, &problem.b, None, m.as_ref(), &cfg, |v| {
        let (Some(q), Some(g)) = (v.q, v.gram) else {
            return;
        };
        let s = g.dim();
        let normalized = g.normalized().ok();
        let rate = normalized.as_ref().and_then(|n| fgs_rate(n).ok());
        let kappa_a_half_q = if dense_ok && g.deflated_count() == 0 {
            match gram_kappa_check(q, &problem.a) {
                Ok((_, k)) => Some(k),
                Err(e) => {
                    log::warn!("outer {}: kappa(A^1/2 Q) unavailable: {e}", v.iter);
                    None
                }
            }
        } else {
            None
        };
        if first_err.is_none() && !g.w().data().iter().all(|x| x.is_finite()) {
            first_err = Some(chebstep::Error::NonFinite("Gram matrix"));
        }
        snaps.push(GramSnapshot {
            k: v.iter,
            w: g.w().data().to_vec(),
            w_normalized: normalized.as_ref().map(|n| n.w().data().to_vec()),
            dim: s,
            kappa_w: g.condition_number(),
            kappa_normalized: normalized.as_ref().map(|n| n.condition_number()),
            fgs_norm: rate.map(|r| r.spectral_norm),
            fgs_radius: rate.map(|r| r.spectral_radius),
            kappa_a_half_q,
            deflated: g.deflated_count(),
        });
    })?;
    if let Some(e) = first_err {
        return Err(e.into());
    }
    let true_res = true_rel_residual(&problem.a, &problem.b, &x)?;

    let mut entries = Table::new("gram_entries", &["k", "i", "j", "w", "w_normalized"]);
    let mut iters = Table::new(
        "gram_iterations",
        &[
            "k",
            "s",
            "rel_res",
            "delta_alpha",
            "delta_beta",
            "kappa_w",
            "kappa_w_normalized",
            "fgs_norm",
            "fgs_radius",
            "kappa_a_half_q",
            "deflated",
        ],
    );
    for (snap, h) in snaps.iter().zip(&report.history) {
        // column-major storage
        for j in 0..snap.dim {
            for i in 0..snap.dim {
                let idx = i + j * snap.dim;
                entries.push(vec![
                    snap.k.into(),
                    (i + 1).into(),
                    (j + 1).into(),
                    snap.w[idx].into(),
                    snap.w_normalized.as_ref().map(|w| w[idx]).into(),
                ]);
            }
        }
        iters.push(vec![
            snap.k.into(),
            snap.dim.into(),
            h.rel_residual.into(),
            h.delta_alpha.into(),
            h.delta_beta.into(),
            snap.kappa_w.into(),
            snap.kappa_normalized.into(),
            snap.fgs_norm.into(),
            snap.fgs_radius.into(),
            snap.kappa_a_half_q.into(),
            snap.deflated.into(),
        ]);
    }
    entries.write(&common.out, common.format)?;
    iters.write(&common.out, common.format)?;
    let summary = GramSummary {
        schema: "chebstep gram-summary v1",
        problem: problem.info(common.rhs),
        settings: settings(&args.solver, common.seed),
        spectrum,
        dense_analysis_limit: DENSE_ANALYSIS_LIMIT,
        dense_columns_present: dense_ok,
        run: run_summary(&report, true_res),
    };
    write_summary(&common.out, "gram_summary", &summary)?;
    println!(
        "converged={} iterations={} max_delta={:e}",
        report.converged,
        report.outer_iters,
        report.max_delta()
    );
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

#[derive(Serialize)]
struct PerfSummary {
    schema: &'static str,
    machine: MachineParams,
    c: f64,
    n: Option<f64>,
    nu: usize,
    p_crit: Vec<PCritRow>,
}

pub fn perf_model(args: &PerfModelArgs) -> anyhow::Result<Outcome> {
    let machine = MachineParams::new(args.alpha_lat, args.t_flop)?;
    if machine.alpha_lat == 0.0 {
        bail!("the critical process count is undefined for --alpha-lat 0");
    }
    prepare_out(&args.out)?;
    let s_values = &args.s_range.0;
    let rows = p_crit_table(s_values, args.nu, args.c, &machine)?;

    let mut table = Table::new("pcrit", &["s", "nu", "log2_p_crit", "p_crit"]);
    for row in &rows {
        let (lg, p) = match row.crit {
            Some(c) => (Cell::Num(c.log2_p), Cell::Int(c.p)),
            None => (Cell::from("n/a"), Cell::from("n/a")),
        };
        table.push(vec![row.s.into(), args.nu.into(), lg, p]);
    }
    table.write(&args.out, args.format)?;

    let p_values = &args.p_range.0;
    let grid_table = |name: &'static str, size: ProblemSize| -> anyhow::Result<Table> {
        let mut t = Table::new(name, &["p", "log2_p", "s", "delta"]);
        for pt in delta_grid(p_values, s_values, args.nu, size, &machine)? {
            t.push(vec![pt.p.into(), pt.p.log2().into(), pt.s.into(), pt.delta.into()]);
        }
        Ok(t)
    };
    grid_table("delta_weak", ProblemSize::Local(args.c))?.write(&args.out, args.format)?;
    if let Some(n) = args.n {
        grid_table("delta_strong", ProblemSize::Global(n))?.write(&args.out, args.format)?;
    }

    let mut breakdown = Table::new(
        "cost_breakdown",
        &[
            "p",
            "s",
            "method",
            "spmv",
            "precond",
            "allreduce_count",
            "allreduce",
            "local_flops",
            "gram_solve",
            "total",
        ],
    );
    let size = args.n.map_or(ProblemSize::Local(args.c), ProblemSize::Global);
    for &s in s_values {
        for &p in p_values {
            let q = ModelQuery {
                p,
                s,
                nu: args.nu,
                size,
            };
            let CostBreakdown { pcg, pcg_s } = cost_breakdown(&q, &machine)?;
            for (label, c) in [("pcg", pcg), ("pcgs", pcg_s)] {
                breakdown.push(vec![
                    p.into(),
                    s.into(),
                    label.into(),
                    c.spmv.into(),
                    c.precond.into(),
                    c.allreduce_count.into(),
                    c.allreduce.into(),
                    c.local_flops.into(),
                    c.gram_solve.into(),
                    c.total().into(),
                ]);
            }
        }
    }
    breakdown.write(&args.out, args.format)?;

    write_summary(
        &args.out,
        "perf_summary",
        &PerfSummary {
            schema: "chebstep perf-summary v1",
            machine,
            c: args.c,
            n: args.n,
            nu: args.nu,
            p_crit: rows.clone(),
        },
    )?;
    for row in &rows {
        match row.crit {
            Some(c) => println!("s={} log2_p_crit={:.4} p_crit={}", row.s, c.log2_p, c.p),
            None => println!("s={} p_crit=n/a", row.s),
        }
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct MomentsSummary<'a> {
    schema: &'static str,
    problem: ProblemInfo<'a>,
    spectrum: SpectrumEstimate,
    /// `max_p |μ_p| / μ_0` over the Euclidean moments (at most 1 in exact arithmetic).
    max_moment_ratio: f64,
    /// Moment prediction of the Gram matrices (absent above the dense analysis limit).
    structure_euclidean: Option<GramStructureCheck>,
    structure_a_inner: Option<GramStructureCheck>,
    normalized_bound: Option<NormalizedBoundCheck>,
    /// Least-squares slope of log κ against log s for the Chebyshev basis over `s >= 4`.
    chebyshev_kappa_slope: Option<f64>,
}

pub fn moments(args: &MomentsArgs) -> anyhow::Result<Outcome> {
    let common = &args.common;
    let problem = load_problem(common)?;
    prepare_out(&common.out)?;
    let a = &problem.a;
    let r0 = &problem.b;
    let spectrum = resolve_interval(
        a,
        PrecondArg::Identity,
        &Identity,
        args.spectrum,
        None,
        args.lanczos_steps,
        common.seed,
    )?;
    let params = ChebyshevParams::from_estimate(&spectrum)?;
    let s_values = &args.s_range.0;
    let s_max = *s_values.iter().max().expect("parser rejects empty ranges");

    let p_max = 2 * s_max;
    let block = chebyshev_block(a, r0, p_max + 1, &params)?;
    let ar0 = a.spmv(r0)?;
    let mu: Vec<f64> = (0..=p_max).map(|p| dot(r0, block.col(p))).collect();
    let mu_a: Vec<f64> = (0..=p_max).map(|p| dot(&ar0, block.col(p))).collect();
    let mut t = Table::new("moments", &["p", "mu", "mu_tilde", "mu_a", "mu_a_tilde"]);
    for p in 0..=p_max {
        t.push(vec![
            p.into(),
            mu[p].into(),
            (mu[p] / mu[0]).into(),
            mu_a[p].into(),
            (mu_a[p] / mu_a[0]).into(),
        ]);
    }
    t.write(&common.out, common.format)?;
    let max_moment_ratio = mu.iter().fold(0.0f64, |m, v| m.max(v.abs())) / mu[0];

    let mono = conditioning_experiment(a, r0, s_values, BasisKind::Monomial, &params)?;
    let cheb = conditioning_experiment(a, r0, s_values, BasisKind::Chebyshev, &params)?;
    let mut t = Table::new("conditioning", &["s", "kappa_monomial", "kappa_chebyshev"]);
    for (m, c) in mono.iter().zip(&cheb) {
        t.push(vec![m.s.into(), m.kappa.into(), c.kappa.into()]);
    }
    t.write(&common.out, common.format)?;
    let slope_pts: Vec<(f64, f64)> = cheb
        .iter()
        .filter(|r| r.s >= 4)
        .map(|r| (r.s as f64, r.kappa))
        .collect();

    let dense_ok = a.n() <= DENSE_ANALYSIS_LIMIT;
    let structure = |inner| {
        if dense_ok {
            verify_gram_structure(a, r0, s_max, inner).map(Some)
        } else {
            Ok(None)
        }
    };
    let summary = MomentsSummary {
        schema: "chebstep moments-summary v1",
        problem: problem.info(common.rhs),
        spectrum,
        max_moment_ratio,
        structure_euclidean: structure(MomentInner::Euclidean)?,
        structure_a_inner: structure(MomentInner::AInner)?,
        normalized_bound: normalized_gram_bound_check(a, r0, s_max, &params, MomentInner::Euclidean)
            .ok(),
        chebyshev_kappa_slope: log_log_slope(&slope_pts),
    };
    write_summary(&common.out, "moments_summary", &summary)?;
    println!(
        "max|mu_p|/mu_0={:.6} kappa_monomial(s={s_max})={:e} kappa_chebyshev(s={s_max})={:e}",
        max_moment_ratio,
        mono.iter().find(|r| r.s == s_max).map_or(f64::NAN, |r| r.kappa),
        cheb.iter().find(|r| r.s == s_max).map_or(f64::NAN, |r| r.kappa)
    );
    Ok(Outcome::Success)
}
