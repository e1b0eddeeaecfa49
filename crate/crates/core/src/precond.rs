//! Preconditioner interface and the two built-in preconditioners.

use crate::error::{check_dim, Error, Result};
use crate::sparse::CsrMatrix;

/// Action `v -> M^{-1} v` of an SPD preconditioner `M`.
pub trait Preconditioner: Send + Sync {
    fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()>;

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    fn name(&self) -> &'static str;

    /// Whether `apply` is the identity map, which lets callers skip copies.
    fn is_identity(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Preconditioner for Identity {
    fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("Identity::apply", v.len(), out.len())?;
        out.copy_from_slice(v);
        Ok(())
    }

    fn name(&self) -> &'static str {
        "identity"
    }

    fn is_identity(&self) -> bool {
        true
    }
}

/// Diagonal (Jacobi) scaling `M = diag(A)`.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        a.check_positive_diagonal()?;
        Ok(Self {
            inv_diag: a.diagonal().iter().map(|d| 1.0 / d).collect(),
        })
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }
}

impl Preconditioner for Jacobi {
    fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim("Jacobi::apply", self.inv_diag.len(), v.len())?;
        check_dim("Jacobi::apply", v.len(), out.len())?;
        for ((o, &x), &d) in out.iter_mut().zip(v).zip(&self.inv_diag) {
            *o = d * x;
        }
        Ok(())
    }

    fn name(&self) -> &'static str {
        "jacobi"
    }
}

/// Preconditioner selection by name, as used by configuration layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecondKind {
    Identity,
    Jacobi,
}

impl PrecondKind {
    pub fn build(self, a: &CsrMatrix) -> Result<Box<dyn Preconditioner>> {
        Ok(match self {
            PrecondKind::Identity => Box::new(Identity),
            PrecondKind::Jacobi => Box::new(Jacobi::new(a)?),
        })
    }
}

impl std::str::FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(PrecondKind::Identity),
            "jacobi" => Ok(PrecondKind::Jacobi),
            other => Err(Error::InvalidParameter(format!("unknown preconditioner '{other}'"))),
        }
    }
}
