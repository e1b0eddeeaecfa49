//! Latency–bandwidth cost model comparing one PCG-S outer iteration with
//! `s` classical PCG iterations.
//!
//! An allreduce on `P` processes costs `α_lat · log₂P`, a local flop costs
//! `t_flop`, and SpMV / preconditioner applications cost `t_spmv` / `t_prec`
//! (they appear `s` times in both methods and cancel in the difference).
//!
//! The difference in time per `s` search directions is
//!
//! ```text
//! Δ = 2 α_lat (1 - s) log₂P + s(7s - 9)/2 · m · t_flop + ν (s² + 2s) t_flop
//! ```
//!
//! with `m = n / P` under strong scaling and `m = c` under weak scaling.
//! Negative values mean PCG-S is faster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Machine constants of the cost model (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    pub alpha_lat: f64,
    pub t_flop: f64,
    pub t_spmv: f64,
    pub t_prec: f64,
}

impl MachineParams {
    /// Latency and flop time only; SpMV and preconditioner times are zero.
    pub fn new(alpha_lat: f64, t_flop: f64) -> Result<Self> {
        let m = Self {
            alpha_lat,
            t_flop,
            t_spmv: 0.0,
            t_prec: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_apply_times(mut self, t_spmv: f64, t_prec: f64) -> Result<Self> {
        self.t_spmv = t_spmv;
        self.t_prec = t_prec;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("alpha_lat", self.alpha_lat),
            ("t_flop", self.t_flop),
            ("t_spmv", self.t_spmv),
            ("t_prec", self.t_prec),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::OutOfRange {
                    what,
                    value: v,
                    range: "[0, inf)".into(),
                });
            }
        }
        Ok(())
    }
}

impl Default for MachineParams {
    /// `α_lat = 1 µs`, `t_flop = 0.1 ns`.
    fn default() -> Self {
        Self {
            alpha_lat: 1e-6,
            t_flop: 1e-13,
            t_spmv: 0.0,
            t_prec: 0.0,
        }
    }
}

/// Problem size seen by the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scaling", content = "value", rename_all = "lowercase")]
pub enum ProblemSize {
    /// Global unknown count `n` (strong scaling, `n / P` per process).
    Global(f64),
    /// Unknowns per process `c` (weak scaling).
    Local(f64),
}

/// One point of the model: process count, step size, sweep count, size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelQuery {
    pub p: f64,
    pub s: usize,
    pub nu: usize,
    pub size: ProblemSize,
}

impl ModelQuery {
    pub fn strong(p: f64, s: usize, nu: usize, n: f64) -> Self {
        Self {
            p,
            s,
            nu,
            size: ProblemSize::Global(n),
        }
    }

    pub fn weak(p: f64, s: usize, nu: usize, c: f64) -> Self {
        Self {
            p,
            s,
            nu,
            size: ProblemSize::Local(c),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s < 1 {
            return Err(Error::InvalidParameter("step size s must be >= 1".into()));
        }
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(Error::OutOfRange {
                what: "P",
                value: self.p,
                range: "[1, inf)".into(),
            });
        }
        let size = match self.size {
            ProblemSize::Global(v) | ProblemSize::Local(v) => v,
        };
        if !(size >= 0.0) || !size.is_finite() {
            return Err(Error::OutOfRange {
                what: "problem size",
                value: size,
                range: "[0, inf)".into(),
            });
        }
        Ok(())
    }

    /// Unknowns per process.
    pub fn local_size(&self) -> f64 {
        match self.size {
            ProblemSize::Global(n) => n / self.p,
            ProblemSize::Local(c) => c,
        }
    }

    pub fn log2_p(&self) -> f64 {
        self.p.log2()
    }
}

fn delta_terms(q: &ModelQuery, m: &MachineParams) -> (f64, f64, f64) {
    let s = q.s as f64;
    let nu = q.nu as f64;
    let comm = 2.0 * m.alpha_lat * (1.0 - s) * q.log2_p();
    let local = s * (7.0 * s - 9.0) / 2.0 * q.local_size() * m.t_flop;
    let gram = nu * (s * s + 2.0 * s) * m.t_flop;
    (comm, local, gram)
}

/// `Δ` for whichever scaling regime `q.size` describes.
pub fn delta(q: &ModelQuery, m: &MachineParams) -> Result<f64> {
    q.validate()?;
    m.validate()?;
    let (comm, local, gram) = delta_terms(q, m);
    Ok(comm + local + gram)
}

/// Strong-scaling difference; `q` must carry a global size.
pub fn delta_strong(q: &ModelQuery, m: &MachineParams) -> Result<f64> {
    match q.size {
        ProblemSize::Global(_) => delta(q, m),
        ProblemSize::Local(_) => Err(Error::InvalidParameter(
            "delta_strong needs a global problem size".into(),
        )),
    }
}

/// Weak-scaling difference; `q` must carry a per-process size.
pub fn delta_weak(q: &ModelQuery, m: &MachineParams) -> Result<f64> {
    match q.size {
        ProblemSize::Local(_) => delta(q, m),
        ProblemSize::Global(_) => Err(Error::InvalidParameter(
            "delta_weak needs a per-process problem size".into(),
        )),
    }
}

/// Crossover process count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PCrit {
    pub log2_p: f64,
    /// `2^log2_p` rounded to the nearest integer.
    pub p: u64,
}

/// Process count at which the weak-scaling difference vanishes.
pub fn p_crit(s: usize, nu: usize, c: f64, m: &MachineParams) -> Result<PCrit> {
    m.validate()?;
    if s <= 1 {
        return Err(Error::InvalidParameter(format!(
            "critical process count needs s > 1, got s = {s}"
        )));
    }
    if m.alpha_lat == 0.0 {
        return Err(Error::InvalidParameter(
            "critical process count is undefined for zero latency".into(),
        ));
    }
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::OutOfRange {
            what: "c",
            value: c,
            range: "[0, inf)".into(),
        });
    }
    let sf = s as f64;
    let nu = nu as f64;
    let log2_p = m.t_flop * (c * sf * (7.0 * sf - 9.0) / 2.0 + nu * (sf * sf + 2.0 * sf))
        / (2.0 * m.alpha_lat * (sf - 1.0));
    if log2_p >= 63.0 {
        return Err(Error::OutOfRange {
            what: "log2 P_crit",
            value: log2_p,
            range: "[0, 63)".into(),
        });
    }
    Ok(PCrit {
        log2_p,
        p: log2_p.exp2().round() as u64,
    })
}

/// One row of the critical process count table; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PCritRow {
    pub s: usize,
    pub crit: Option<PCrit>,
}

/// Critical process counts for each `s`; rows with `s ≤ 1` are marked absent.
///
/// A zero latency makes every row undefined and is reported as an error.
pub fn p_crit_table(s_values: &[usize], nu: usize, c: f64, m: &MachineParams) -> Result<Vec<PCritRow>> {
    s_values
        .iter()
        .map(|&s| {
            if s <= 1 {
                Ok(PCritRow { s, crit: None })
            } else {
                p_crit(s, nu, c, m).map(|crit| PCritRow { s, crit: Some(crit) })
            }
        })
        .collect()
}

/// Weak-scaling setting of the reference crossover table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakScalingSetup {
    pub c: f64,
    pub nu: usize,
    pub machine: MachineParams,
}

impl Default for WeakScalingSetup {
    /// `c = 200³` unknowns per process, `ν = 30`, default machine.
    fn default() -> Self {
        Self {
            c: 200f64.powi(3),
            nu: 30,
            machine: MachineParams::default(),
        }
    }
}

/// Itemized time of one method over `s` search directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodCost {
    pub spmv: f64,
    pub precond: f64,
    /// Number of allreduce operations.
    pub allreduce_count: f64,
    pub allreduce: f64,
    /// Vector updates and local parts of inner products.
    pub local_flops: f64,
    /// Gram solves (zero for classical PCG).
    pub gram_solve: f64,
}

impl MethodCost {
    pub fn total(&self) -> f64 {
        self.spmv + self.precond + self.allreduce + self.local_flops + self.gram_solve
    }
}

/// `s` classical PCG iterations next to one PCG-S outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub pcg: MethodCost,
    pub pcg_s: MethodCost,
}

impl CostBreakdown {
    /// `pcg_s.total() - pcg.total()`, equal to [`delta`].
    pub fn difference(&self) -> f64 {
        self.pcg_s.total() - self.pcg.total()
    }

    pub fn allreduce_ratio(&self) -> f64 {
        self.pcg.allreduce_count / self.pcg_s.allreduce_count
    }
}

pub fn cost_breakdown(q: &ModelQuery, m: &MachineParams) -> Result<CostBreakdown> {
    q.validate()?;
    m.validate()?;
    let s = q.s as f64;
    let nu = q.nu as f64;
    let lat = m.alpha_lat * q.log2_p();
    let local = q.local_size();
    let pcg = MethodCost {
        spmv: s * m.t_spmv,
        precond: s * m.t_prec,
        allreduce_count: 2.0 * s,
        allreduce: 2.0 * s * lat,
        // 3 axpy + 2 dot = 8 flops per entry per iteration
        local_flops: 8.0 * s * local * m.t_flop,
        gram_solve: 0.0,
    };
    let pcg_s = MethodCost {
        spmv: s * m.t_spmv,
        precond: s * m.t_prec,
        allreduce_count: 2.0,
        allreduce: 2.0 * lat,
        local_flops: 3.5 * (s * s + s) * local * m.t_flop,
        gram_solve: nu * (s * s + 2.0 * s) * m.t_flop,
    };
    Ok(CostBreakdown { pcg, pcg_s })
}

/// `Δ` at one `(P, s)` grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub p: f64,
    pub s: usize,
    pub delta: f64,
}

/// `Δ` over the Cartesian product of process counts and step sizes
/// (row-major in `s`, then `P`).
pub fn delta_grid(
    p_values: &[f64],
    s_values: &[usize],
    nu: usize,
    size: ProblemSize,
    m: &MachineParams,
) -> Result<Vec<DeltaPoint>> {
    let mut out = Vec::with_capacity(p_values.len() * s_values.len());
    for &s in s_values {
        for &p in p_values {
            let q = ModelQuery { p, s, nu, size };
            out.push(DeltaPoint {
                p,
                s,
                delta: delta(&q, m)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_setup() -> (f64, usize, MachineParams) {
        (8.0e6, 30, MachineParams::new(1e-6, 1e-13).unwrap())
    }

    #[test]
    fn crossover_rows() {
        let (c, nu, m) = table_setup();
        let r2 = p_crit(2, nu, c, &m).unwrap();
        // 1e-13 (8e6 * 5 + 240) / 2e-6 = 2.000012
        assert!((r2.log2_p - 2.000012).abs() < 1e-9);
        assert_eq!(r2.p, 4);
        let r5 = p_crit(5, nu, c, &m).unwrap();
        assert!((r5.log2_p - 6.5).abs() < 1e-3);
        assert_eq!(r5.p, 91);
        let r10 = p_crit(10, nu, c, &m).unwrap();
        assert!((r10.log2_p - 13.556).abs() < 1e-3);
        assert!(r10.p.abs_diff(12040) <= 1);
    }

    #[test]
    fn crossover_guards() {
        let (c, nu, m) = table_setup();
        assert!(p_crit(1, nu, c, &m).is_err());
        assert!(p_crit(0, nu, c, &m).is_err());
        let no_latency = MachineParams::new(0.0, 1e-13).unwrap();
        assert!(p_crit(4, nu, c, &no_latency).is_err());
        assert!(MachineParams::new(-1.0, 1e-13).is_err());
        let rows = p_crit_table(&[1, 2, 3], nu, c, &m).unwrap();
        assert!(rows[0].crit.is_none());
        assert_eq!(rows[1].crit.unwrap().p, 4);
        assert!(p_crit_table(&[2], nu, c, &no_latency).is_err());
    }

    #[test]
    fn strong_scaling_plug_in() {
        let m = MachineParams::new(1e-6, 1e-13).unwrap();
        let q = ModelQuery::strong(32.0, 2, 30, 500f64.powi(3));
        // communication: 2e-6 * (-1) * 5; local: 2*5/2 * 1.25e8/32 * 1e-13;
        // gram: 30 * 8 * 1e-13
        let expect = -1e-5 + 5.0 * 3_906_250.0 * 1e-13 + 240.0 * 1e-13;
        assert!((delta_strong(&q, &m).unwrap() - expect).abs() < 1e-20);
        assert!(delta_weak(&q, &m).is_err());
    }

    #[test]
    fn single_step_has_no_communication_term() {
        let m = MachineParams::new(1e-6, 1e-13).unwrap();
        for p in [2.0, 64.0, 1e6] {
            let q = ModelQuery::strong(p, 1, 30, 1e6);
            let expect = (-(1e6 / p) + 90.0) * 1e-13;
            assert!((delta_strong(&q, &m).unwrap() - expect).abs() < 1e-22);
            let w = ModelQuery::weak(p, 1, 30, 1e3);
            assert!((delta_weak(&w, &m).unwrap() - (-1e3 + 90.0) * 1e-13).abs() < 1e-22);
        }
    }

    #[test]
    fn strong_delta_decreases_with_p() {
        let m = MachineParams::default();
        let n = 500f64.powi(3);
        let vals: Vec<f64> = (5..=9)
            .map(|k| delta_strong(&ModelQuery::strong((1u32 << k) as f64, 6, 30, n), &m).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn strong_delta_approaches_communication_term() {
        let m = MachineParams::default();
        let q = ModelQuery::strong(2f64.powi(20), 6, 30, 1e6);
        let comm = 2.0 * m.alpha_lat * (1.0 - 6.0) * 20.0;
        let d = delta_strong(&q, &m).unwrap();
        assert!(((d - comm) / comm).abs() < 1e-5);
    }

    #[test]
    fn breakdown_matches_delta() {
        let m = MachineParams::new(1e-6, 1e-13)
            .unwrap()
            .with_apply_times(3e-4, 1e-4)
            .unwrap();
        for s in 1..=10 {
            for q in [
                ModelQuery::strong(128.0, s, 30, 1e8),
                ModelQuery::weak(300.0, s, 7, 8e6),
            ] {
                let b = cost_breakdown(&q, &m).unwrap();
                let d = delta(&q, &m).unwrap();
                assert!((b.difference() - d).abs() <= 1e-12 * b.pcg.total().max(1e-12));
                assert_eq!(b.allreduce_ratio(), s as f64);
                assert_eq!(b.pcg.spmv, b.pcg_s.spmv);
            }
        }
        let zero = MachineParams::new(0.0, 0.0).unwrap();
        let b = cost_breakdown(&ModelQuery::strong(64.0, 4, 30, 1e6), &zero).unwrap();
        assert_eq!(b.pcg.total(), 0.0);
        assert_eq!(b.pcg_s.total(), 0.0);
    }

    #[test]
    fn grid_layout() {
        let m = MachineParams::default();
        let g = delta_grid(&[2.0, 4.0], &[2, 3, 4], 30, ProblemSize::Local(8e6), &m).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!((g[1].p, g[1].s), (4.0, 2));
        assert!(delta_grid(&[0.5], &[2], 30, ProblemSize::Local(1.0), &m).is_err());
    }
}
