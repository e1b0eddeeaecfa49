//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "chebstep",
    version,
    about = "Chebyshev-basis s-step PCG experiments",
    long_about = "Chebyshev-basis s-step PCG experiments.\n\n\
        Exit codes: 0 success/converged, 2 not converged, 1 runtime error, 64 usage error.\n\
        Set CHEBSTEP_LOG (e.g. CHEBSTEP_LOG=debug) for diagnostics on stderr."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one system and write the convergence history.
    Solve(SolveArgs),
    /// Classical PCG against PCG-S with Cholesky and FGS Gram solves.
    Compare(CompareArgs),
    /// Per-iteration dump of the Gram matrices seen by PCG-S.
    GramAnalysis(GramAnalysisArgs),
    /// Critical process counts and cost differences of the latency model.
    PerfModel(PerfModelArgs),
    /// Chebyshev moments and basis conditioning of the initial residual.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GramArg {
    Fgs,
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    Identity,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumArg {
    /// Preconditioned Lanczos estimate, widened by 0.9 / 1.1.
    Lanczos,
    /// Dense eigenvalues of M^{-1}A (small problems only).
    Exact,
    /// Gershgorin discs of M^{-1}A.
    Gershgorin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RhsArg {
    Ones,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    PcgS,
    Pcg,
}

/// Where the linear system comes from.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ProblemArgs {
    /// 27-point Poisson operator on an NX x NY x NZ interior grid.
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
    pub poisson: Option<Vec<usize>>,
    /// Symmetric positive definite Matrix Market file.
    #[arg(long, value_name = "PATH")]
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Right-hand side: all ones or seeded uniform(-1, 1).
    #[arg(long, value_enum, default_value_t = RhsArg::Ones)]
    pub rhs: RhsArg,
    /// Seed for the Lanczos start vector and random right-hand sides.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Format of tabular outputs; summaries are always JSON.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = PrecondArg::Identity)]
    pub precond: PrecondArg,
    /// FGS sweeps per Gram solve.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    pub nu: u32,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-6, value_parser = positive_f64)]
    pub tol: f64,
    /// Iteration cap (outer iterations for PCG-S).
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_outer: u32,
    /// Source of the Chebyshev interval.
    #[arg(long, value_enum, default_value_t = SpectrumArg::Lanczos)]
    pub spectrum: SpectrumArg,
    /// Fixed Chebyshev interval; overrides --spectrum.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
    /// Lanczos steps for the interval estimate.
    #[arg(long, default_value_t = 30)]
    pub lanczos_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Step size.
    #[arg(long, default_value_t = 4)]
    pub s: usize,
    #[arg(long, value_enum, default_value_t = GramArg::Fgs)]
    pub gram: GramArg,
    #[arg(long, value_enum, default_value_t = MethodArg::PcgS)]
    pub method: MethodArg,
    /// Also write the final iterate as `<out>/solution.<ext>`.
    #[arg(long)]
    pub write_solution: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Step sizes: `LO..HI` (inclusive) or a comma list.
    #[arg(long = "s-range", default_value = "1..6", value_parser = parse_s_range)]
    pub s_range: SRange,
}

#[derive(Debug, Clone, Args)]
pub struct GramAnalysisArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 6)]
    pub s: usize,
    #[arg(long, value_enum, default_value_t = GramArg::Fgs)]
    pub gram: GramArg,
}

#[derive(Debug, Clone, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Step sizes for the conditioning comparison.
    #[arg(long = "s-range", default_value = "1..12", value_parser = parse_s_range)]
    pub s_range: SRange,
    /// Source of the Chebyshev interval.
    #[arg(long, value_enum, default_value_t = SpectrumArg::Exact)]
    pub spectrum: SpectrumArg,
    #[arg(long, default_value_t = 30)]
    pub lanczos_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PerfModelArgs {
    /// Allreduce latency unit in seconds.
    #[arg(long, default_value_t = 1e-6)]
    pub alpha_lat: f64,
    /// Seconds per flop.
    #[arg(long, default_value_t = 1e-13)]
    pub t_flop: f64,
    /// Unknowns per process for the weak-scaling table and grid.
    #[arg(long, default_value_t = 8.0e6)]
    pub c: f64,
    /// Global unknowns; also emits a strong-scaling grid.
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub nu: usize,
    /// Step sizes of the table and grids.
    #[arg(long = "s-range", default_value = "2..10", value_parser = parse_s_range)]
    pub s_range: SRange,
    /// Process counts of the grids: `LO..HI` over powers of two, or a comma list.
    #[arg(long = "p-range", default_value = "2..1048576", value_parser = parse_p_range)]
    pub p_range: PRange,
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SRange(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct PRange(pub Vec<f64>);

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {v}"))
    }
}

pub fn parse_s_range(s: &str) -> Result<SRange, String> {
    let values: Vec<usize> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad value '{t}': {e}")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(format!("s-range '{s}' is empty"));
    }
    if values.contains(&0) {
        return Err("step sizes must be >= 1".into());
    }
    Ok(SRange(values))
}

pub fn parse_p_range(s: &str) -> Result<PRange, String> {
    let values: Vec<f64> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
        if !(lo >= 1.0) || !hi.is_finite() {
            return Err("process counts must be >= 1".into());
        }
        std::iter::successors(Some(lo), |p| Some(p * 2.0))
            .take_while(|p| *p <= hi)
            .collect()
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad value '{t}': {e}")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(format!("p-range '{s}' is empty"));
    }
    if values.iter().any(|p| !(*p >= 1.0)) {
        return Err("process counts must be >= 1".into());
    }
    Ok(PRange(values))
}
