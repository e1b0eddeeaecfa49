//! Chebyshev-moment analysis of Gram matrices.
//!
//! For `A = V Λ V^T`, `c = V^T r0` and mapped eigenvalues `λ̂ = map(λ)`, the
//! Chebyshev moments are `μ_p = Σ_ℓ |c_ℓ|² T_p(λ̂_ℓ)`, and the Gram matrix of the
//! basis `S = [T_0(Â) r0, ..., T_s(Â) r0]` is
//! `(S^T S)_ij = ½ (μ_{i+j-2} + μ_{|i-j|})`. With the energy inner product the
//! same structure holds for `μ^A_p = Σ_ℓ |c_ℓ|² λ_ℓ T_p(λ̂_ℓ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mpk::{chebyshev_values, ChebyshevParams};
use crate::sparse::{apply_to_block, block_gram, dot, CsrMatrix, SmallDense, VectorBlock};
use crate::spectral::{dense_eigendecomposition, DENSE_ANALYSIS_LIMIT};

/// Inner product used for a Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentInner {
    Euclidean,
    AInner,
}

/// Discrete spectral measure `Σ_ℓ w_ℓ δ(t - λ̂_ℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    /// Unmapped eigenvalues (ascending); absent for synthetic measures.
    eigenvalues: Option<Vec<f64>>,
    weights: Vec<f64>,
    nodes: Vec<f64>,
}

impl SpectralMeasure {
    /// Measure induced by `(A, r0)` under the affine map of `params`.
    pub fn from_operator(a: &CsrMatrix, r0: &[f64], params: &ChebyshevParams) -> Result<Self> {
        check_dim("SpectralMeasure::from_operator", a.n(), r0.len())?;
        let eig = dense_eigendecomposition(a)?;
        let c = eig.vectors.transpose() * DVector::from_column_slice(r0);
        let weights: Vec<f64> = c.iter().map(|v| v * v).collect();
        let nodes = eig.values.iter().map(|&l| params.map(l)).collect();
        Ok(Self {
            eigenvalues: Some(eig.values),
            weights,
            nodes,
        })
    }

    /// Synthetic measure on mapped nodes. Nodes must lie in `[-1-ε, 1+ε]`.
    pub fn from_nodes(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim("SpectralMeasure::from_nodes", nodes.len(), weights.len())?;
        let eps = 10.0 * f64::EPSILON;
        if let Some(&t) = nodes.iter().find(|t| !(t.abs() <= 1.0 + eps)) {
            return Err(Error::OutOfRange {
                what: "node",
                value: t,
                range: "[-1, 1]".into(),
            });
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::OutOfRange {
                what: "weight",
                value: w,
                range: "[0, inf)".into(),
            });
        }
        Ok(Self {
            eigenvalues: None,
            weights,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// `Σ w_ℓ`, which equals `||r0||²` for operator measures.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn accumulate_moments(nodes: &[f64], weights: impl Iterator<Item = f64>, p_max: usize) -> Vec<f64> {
    let mut mu = vec![0.0; p_max + 1];
    for (&t, w) in nodes.iter().zip(weights) {
        // three-term recurrence, so nodes marginally outside [-1, 1] stay finite
        let (mut prev, mut cur) = (1.0, t);
        mu[0] += w;
        if p_max >= 1 {
            mu[1] += w * t;
        }
        for m in mu.iter_mut().skip(2) {
            let next = 2.0 * t * cur - prev;
            prev = cur;
            cur = next;
            *m += w * cur;
        }
    }
    mu
}

/// `μ_0, ..., μ_{p_max}`.
pub fn chebyshev_moments(measure: &SpectralMeasure, p_max: usize) -> Vec<f64> {
    accumulate_moments(&measure.nodes, measure.weights.iter().copied(), p_max)
}

/// `μ^A_p = Σ w_ℓ λ_ℓ T_p(λ̂_ℓ)`; needs an operator-induced measure.
pub fn a_weighted_moments(measure: &SpectralMeasure, p_max: usize) -> Result<Vec<f64>> {
    let lambdas = measure.eigenvalues.as_ref().ok_or_else(|| {
        Error::InvalidParameter("energy moments need the unmapped eigenvalues".into())
    })?;
    Ok(accumulate_moments(
        &measure.nodes,
        measure.weights.iter().zip(lambdas).map(|(w, l)| w * l),
        p_max,
    ))
}

/// Moments of the requested kind.
pub fn moments_for(measure: &SpectralMeasure, inner: MomentInner, p_max: usize) -> Result<Vec<f64>> {
    match inner {
        MomentInner::Euclidean => Ok(chebyshev_moments(measure, p_max)),
        MomentInner::AInner => a_weighted_moments(measure, p_max),
    }
}

/// Columns `T_0(Â) r, ..., T_{k-1}(Â) r` by the vector recurrence (no preconditioner).
pub fn chebyshev_block(
    a: &CsrMatrix,
    r: &[f64],
    k: usize,
    params: &ChebyshevParams,
) -> Result<VectorBlock> {
    check_dim("chebyshev_block", a.n(), r.len())?;
    let mapped = |v: &[f64]| -> Result<Vec<f64>> {
        let av = a.spmv(v)?;
        Ok(av
            .iter()
            .zip(v)
            .map(|(x, y)| params.alpha * x - params.sigma * y)
            .collect())
    };
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    if k >= 1 {
        cols.push(r.to_vec());
    }
    if k >= 2 {
        cols.push(mapped(r)?);
    }
    for j in 2..k {
        let m = mapped(&cols[j - 1])?;
        let next = m
            .iter()
            .zip(&cols[j - 2])
            .map(|(x, y)| 2.0 * x - y)
            .collect();
        cols.push(next);
    }
    if cols.is_empty() {
        return Err(Error::InvalidParameter("empty basis".into()));
    }
    VectorBlock::from_columns(&cols)
}

/// Columns `r, Â r, ..., Â^{k-1} r`.
pub fn monomial_block(
    a: &CsrMatrix,
    r: &[f64],
    k: usize,
    params: &ChebyshevParams,
) -> Result<VectorBlock> {
    check_dim("monomial_block", a.n(), r.len())?;
    if k == 0 {
        return Err(Error::InvalidParameter("empty basis".into()));
    }
    let mut cols: Vec<Vec<f64>> = vec![r.to_vec()];
    for j in 1..k {
        let av = a.spmv(&cols[j - 1])?;
        let next = av
            .iter()
            .zip(&cols[j - 1])
            .map(|(x, y)| params.alpha * x - params.sigma * y)
            .collect();
        cols.push(next);
    }
    VectorBlock::from_columns(&cols)
}

fn gram_of(a: &CsrMatrix, s: &VectorBlock, inner: MomentInner) -> Result<SmallDense> {
    match inner {
        MomentInner::Euclidean => block_gram(s, s),
        MomentInner::AInner => block_gram(s, &apply_to_block(a, s)?),
    }
}

/// Outcome of [`verify_gram_structure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramStructureCheck {
    /// `max_ij |W_ij - ½(μ_{i+j-2} + μ_{|i-j|})|`
    pub max_deviation: f64,
    /// Same maximum restricted to the diagonal `½(μ_0 + μ_{2i-2})`.
    pub diag_deviation: f64,
    /// `max_ij |W_ij|`
    pub w_max: f64,
    /// `μ_0` of the selected kind.
    pub mu0: f64,
}

/// Compares the directly assembled Gram matrix of `[T_0(Â) r0, ..., T_s(Â) r0]`
/// against its moment prediction. The map uses the exact spectral interval.
pub fn verify_gram_structure(
    a: &CsrMatrix,
    r0: &[f64],
    s: usize,
    inner: MomentInner,
) -> Result<GramStructureCheck> {
    if a.n() > DENSE_ANALYSIS_LIMIT {
        return Err(Error::TooLarge {
            n: a.n(),
            limit: DENSE_ANALYSIS_LIMIT,
        });
    }
    check_dim("verify_gram_structure", a.n(), r0.len())?;
    let eig = dense_eigendecomposition(a)?;
    let params = ChebyshevParams::new(eig.values[0], eig.values[eig.values.len() - 1])?;
    let measure = SpectralMeasure::from_operator(a, r0, &params)?;
    let mu = moments_for(&measure, inner, 2 * s)?;
    let basis = chebyshev_block(a, r0, s + 1, &params)?;
    let w = gram_of(a, &basis, inner)?;
    let (mut max_dev, mut diag_dev) = (0.0f64, 0.0f64);
    for i in 0..=s {
        for j in 0..=s {
            let pred = 0.5 * (mu[i + j] + mu[i.abs_diff(j)]);
            let d = (w.get(i, j) - pred).abs();
            max_dev = max_dev.max(d);
            if i == j {
                diag_dev = diag_dev.max(d);
            }
        }
    }
    Ok(GramStructureCheck {
        max_deviation: max_dev,
        diag_deviation: diag_dev,
        w_max: w.max_abs(),
        mu0: mu[0],
    })
}

/// Outcome of [`normalized_gram_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBoundCheck {
    /// `max_{i≠j} |(W_c)_ij| / bound_ij`
    pub worst_ratio: f64,
    /// Position `(i, j)` (0-based) of the worst ratio.
    pub worst_at: (usize, usize),
    /// `max_{i≠j} |(W_c)_ij|`
    pub max_offdiag: f64,
    /// Same ratio with `W / μ_0` in place of the diagonally normalized matrix.
    pub worst_ratio_mu0: f64,
    /// Normalized moments `μ̃_0, ..., μ̃_{2s-2}`.
    pub mu_tilde: Vec<f64>,
}

/// Entrywise check of `|(W_c)_ij| <= ½(|μ̃_{|i-j|}| + |μ̃_{i+j-2}|)` for the
/// diagonally normalized Gram matrix of `[T_0(Â) r0, ..., T_{s-1}(Â) r0]`.
///
/// Moments come from `r0^T T_p(Â) r0` (or `r0^T A T_p(Â) r0`), so no dense
/// eigendecomposition is needed and the check runs at any size.
///
/// The inequality is exact for `W / μ_0` (triangle inequality on the moment
/// formula) but not for the diagonally normalized matrix: `W_ii = ½(μ_0 +
/// μ_{2i-2})` may be much smaller than `μ_0`, e.g. the `(1,2)` entry has ratio
/// `(½(1 + μ̃_2))^{-1/2}`. Both ratios are reported.
pub fn normalized_gram_bound_check(
    a: &CsrMatrix,
    r0: &[f64],
    s: usize,
    params: &ChebyshevParams,
    inner: MomentInner,
) -> Result<NormalizedBoundCheck> {
    if s == 0 {
        return Err(Error::InvalidParameter("s must be >= 1".into()));
    }
    let p_max = 2 * s - 2;
    let full = chebyshev_block(a, r0, p_max + 1, params)?;
    let weight: Vec<f64> = match inner {
        MomentInner::Euclidean => r0.to_vec(),
        MomentInner::AInner => a.spmv(r0)?,
    };
    let mu: Vec<f64> = (0..=p_max).map(|p| dot(&weight, full.col(p))).collect();
    if !(mu[0] > 0.0) {
        return Err(Error::ZeroNorm { column: 0 });
    }
    let mu_tilde: Vec<f64> = mu.iter().map(|m| m / mu[0]).collect();
    let w = gram_of(a, &full.columns(0, s), inner)?;
    let d: Vec<f64> = (0..s).map(|i| w.get(i, i)).collect();
    if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NotSpd { index: i, value: d[i] });
    }
    let mut out = NormalizedBoundCheck {
        worst_ratio: 0.0,
        worst_at: (0, 0),
        max_offdiag: 0.0,
        worst_ratio_mu0: 0.0,
        mu_tilde,
    };
    // entries at roundoff level are treated as zero
    let floor = 100.0 * f64::EPSILON;
    for i in 0..s {
        for j in 0..s {
            if i == j {
                continue;
            }
            let wc = (w.get(i, j) / (d[i] * d[j]).sqrt()).abs();
            out.max_offdiag = out.max_offdiag.max(wc);
            let bound = 0.5 * (out.mu_tilde[i.abs_diff(j)].abs() + out.mu_tilde[i + j].abs());
            let ratio_of = |v: f64| {
                if v <= floor {
                    0.0
                } else if bound <= floor {
                    f64::INFINITY
                } else {
                    v / bound
                }
            };
            let ratio = ratio_of(wc);
            out.worst_ratio_mu0 = out.worst_ratio_mu0.max(ratio_of((w.get(i, j) / mu[0]).abs()));
            if ratio > out.worst_ratio {
                out.worst_ratio = ratio;
                out.worst_at = (i, j);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Monomial,
    Chebyshev,
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monomial" => Ok(BasisKind::Monomial),
            "chebyshev" => Ok(BasisKind::Chebyshev),
            other => Err(Error::InvalidParameter(format!("unknown basis '{other}'"))),
        }
    }
}

/// One row of the conditioning table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRow {
    pub s: usize,
    /// `κ₂` of the diagonally normalized energy Gram matrix; infinite on collapse.
    pub kappa: f64,
}

/// `κ₂` of the diagonally normalized `Z^T A Z` for each requested `s`.
pub fn conditioning_experiment(
    a: &CsrMatrix,
    r0: &[f64],
    s_values: &[usize],
    basis: BasisKind,
    params: &ChebyshevParams,
) -> Result<Vec<ConditioningRow>> {
    if s_values.is_empty() {
        return Err(Error::InvalidParameter("empty s range".into()));
    }
    let s_max = *s_values.iter().max().expect("non-empty");
    if s_values.contains(&0) {
        return Err(Error::InvalidParameter("s must be >= 1".into()));
    }
    let z = match basis {
        BasisKind::Monomial => monomial_block(a, r0, s_max, params)?,
        BasisKind::Chebyshev => chebyshev_block(a, r0, s_max, params)?,
    };
    let w_full = gram_of(a, &z, MomentInner::AInner)?;
    s_values
        .iter()
        .map(|&s| {
            let mut wn = DMatrix::zeros(s, s);
            let mut collapsed = false;
            for i in 0..s {
                if !(w_full.get(i, i) > 0.0) || !w_full.get(i, i).is_finite() {
                    collapsed = true;
                }
            }
            if !collapsed {
                for j in 0..s {
                    for i in 0..s {
                        wn[(i, j)] = w_full.get(i, j)
                            / (w_full.get(i, i) * w_full.get(j, j)).sqrt();
                    }
                }
            }
            let kappa = if collapsed {
                f64::INFINITY
            } else {
                let e = SymmetricEigen::new(wn).eigenvalues;
                let (lo, hi) = (e.min(), e.max());
                if lo > 0.0 && hi.is_finite() {
                    hi / lo
                } else {
                    f64::INFINITY
                }
            };
            Ok(ConditioningRow { s, kappa })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Clustered spectral density on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub centers: Vec<f64>,
    /// Cluster half-width `δ`.
    pub half_width: f64,
    /// Cluster weights `W_a`, summing to one.
    pub weights: Vec<f64>,
    /// Bounds `M_a >= ||φ''||_{L1}` on each cluster interval.
    pub smoothness: Vec<f64>,
}

impl ClusterSpec {
    pub fn new(
        centers: Vec<f64>,
        half_width: f64,
        weights: Vec<f64>,
        smoothness: Vec<f64>,
    ) -> Result<Self> {
        let k = centers.len();
        if k == 0 {
            return Err(Error::InvalidParameter("at least one cluster required".into()));
        }
        check_dim("ClusterSpec: weights", k, weights.len())?;
        check_dim("ClusterSpec: smoothness", k, smoothness.len())?;
        if !(half_width > 0.0) {
            return Err(Error::InvalidParameter("cluster half-width must be > 0".into()));
        }
        if centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("cluster centers must be ascending".into()));
        }
        for &c in &centers {
            if !(c - half_width >= -1.0 && c + half_width <= 1.0) {
                return Err(Error::OutOfRange {
                    what: "cluster interval",
                    value: c,
                    range: format!("[-1 + {half_width}, 1 - {half_width}]"),
                });
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidParameter(
                "cluster weights must be non-negative and sum to 1".into(),
            ));
        }
        if smoothness.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("smoothness bounds must be >= 0".into()));
        }
        let spec = Self {
            centers,
            half_width,
            weights,
            smoothness,
        };
        if spec.separation() <= 2.0 * half_width {
            return Err(Error::InvalidParameter(format!(
                "clusters overlap: separation {} <= 2 * half-width {}",
                spec.separation(),
                half_width
            )));
        }
        Ok(spec)
    }

    /// Raised-cosine bumps `φ_a(t) = W_a/δ · (1 + cos(π (t - ν_a)/δ)) / 2`,
    /// for which `||φ_a''||_{L1} = 2π W_a / δ²` exactly.
    pub fn raised_cosine(centers: Vec<f64>, half_width: f64, weights: Vec<f64>) -> Result<Self> {
        let m = weights
            .iter()
            .map(|w| 2.0 * std::f64::consts::PI * w / (half_width * half_width))
            .collect();
        Self::new(centers, half_width, weights, m)
    }

    /// `Δ = min_{a≠b} |ν_a - ν_b|` (infinite for a single cluster).
    pub fn separation(&self) -> f64 {
        self.centers
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `C_Δ = Σ M_a + 2 W_tot / Δ²`.
    pub fn c_delta(&self) -> f64 {
        let delta = self.separation();
        let cross = if delta.is_finite() {
            2.0 * self.total_weight() / (delta * delta)
        } else {
            0.0
        };
        self.smoothness.iter().sum::<f64>() + cross
    }

    /// `Σ_a W_a T_p(ν_a)`.
    pub fn center_moment(&self, p: usize) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * chebyshev_values(c, p)[p])
            .sum()
    }

    /// Discretizes the raised-cosine density with a midpoint rule of
    /// `nodes_per_cluster` points per cluster (weights renormalized to `W_a`).
    pub fn discretize_raised_cosine(&self, nodes_per_cluster: usize) -> Result<SpectralMeasure> {
        if nodes_per_cluster == 0 {
            return Err(Error::InvalidParameter("need at least one node per cluster".into()));
        }
        let d = self.half_width;
        let h = 2.0 * d / nodes_per_cluster as f64;
        let mut nodes = Vec::with_capacity(nodes_per_cluster * self.centers.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (&c, &wa) in self.centers.iter().zip(&self.weights) {
            let local: Vec<(f64, f64)> = (0..nodes_per_cluster)
                .map(|k| {
                    let u = -d + (k as f64 + 0.5) * h;
                    let phi = 0.5 * (1.0 + (std::f64::consts::PI * u / d).cos());
                    (c + u, phi)
                })
                .collect();
            let total: f64 = local.iter().map(|(_, p)| p).sum();
            for (t, p) in local {
                nodes.push(t.clamp(-1.0, 1.0));
                weights.push(wa * p / total);
            }
        }
        SpectralMeasure::from_nodes(nodes, weights)
    }
}

/// Result of [`cluster_bound_eval`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterBound {
    /// `C_Δ / p² + ½ W_tot`
    pub bound: f64,
    pub c_delta: f64,
    /// `p δ W_tot`, the bound on `|μ̃_p - Σ_a W_a T_p(ν_a)|`.
    pub center_residual_bound: f64,
}

/// Evaluates the clustered-moment bound at `p`, valid for `1 <= p <= 1/(2δ)`.
pub fn cluster_bound_eval(spec: &ClusterSpec, p: usize) -> Result<ClusterBound> {
    let p_limit = 1.0 / (2.0 * spec.half_width);
    if p == 0 || p as f64 > p_limit * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            what: "p",
            value: p as f64,
            range: format!("[1, 1/(2δ)] = [1, {p_limit}]"),
        });
    }
    let c_delta = spec.c_delta();
    let pf = p as f64;
    let w_tot = spec.total_weight();
    Ok(ClusterBound {
        bound: c_delta / (pf * pf) + 0.5 * w_tot,
        c_delta,
        center_residual_bound: pf * spec.half_width * w_tot,
    })
}

/// Node distributions for the decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayDensity {
    /// Equispaced midpoints on `[-1, 1]`, equal weights.
    Uniform,
    /// Chebyshev points `cos(π (i + ½)/n)`, equal weights.
    Chebyshev,
    Custom(SpectralMeasure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    /// `(p, μ_p, μ̃_p)`
    pub rows: Vec<(usize, f64, f64)>,
    /// `max_{p>=1} |μ̃_p|`
    pub max_abs_tilde: f64,
    /// Fitted `q` in `|μ̃_p| ~ p^{-q}` over `p >= 2` with `|μ̃_p| >= 1e-10`.
    pub fitted_exponent: Option<f64>,
}

/// Normalized Chebyshev moments of a discretized density.
pub fn moment_decay_experiment(density: &DecayDensity, n: usize, p_max: usize) -> Result<DecayTable> {
    let measure = match density {
        DecayDensity::Uniform | DecayDensity::Chebyshev => {
            if n == 0 || n > 1_000_000 {
                return Err(Error::OutOfRange {
                    what: "n",
                    value: n as f64,
                    range: "[1, 1e6]".into(),
                });
            }
            let nodes: Vec<f64> = (0..n)
                .map(|i| match density {
                    DecayDensity::Uniform => -1.0 + (2 * i + 1) as f64 / n as f64,
                    _ => (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos(),
                })
                .collect();
            SpectralMeasure::from_nodes(nodes, vec![1.0 / n as f64; n])?
        }
        DecayDensity::Custom(m) => m.clone(),
    };
    let mu = chebyshev_moments(&measure, p_max);
    let mu0 = mu[0];
    if !(mu0 > 0.0) {
        return Err(Error::ZeroNorm { column: 0 });
    }
    let rows: Vec<(usize, f64, f64)> = mu.iter().enumerate().map(|(p, &m)| (p, m, m / mu0)).collect();
    let max_abs_tilde = rows.iter().skip(1).fold(0.0f64, |m, r| m.max(r.2.abs()));
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.0 >= 2 && r.2.abs() >= 1e-10)
        .map(|r| (r.0 as f64, r.2.abs()))
        .collect();
    Ok(DecayTable {
        rows,
        max_abs_tilde,
        fitted_exponent: log_log_slope(&fit).map(|s| -s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{poisson27, PoissonSpec};
    use crate::sparse::norm2;
    use crate::spectral::exact_interval;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn exact_params(a: &CsrMatrix) -> ChebyshevParams {
        let e = exact_interval(a).unwrap();
        ChebyshevParams::new(e.lambda_min, e.lambda_max).unwrap()
    }

    #[test]
    fn point_and_two_node_moments() {
        let m = SpectralMeasure::from_nodes(vec![1.0], vec![1.0]).unwrap();
        assert!(chebyshev_moments(&m, 10).iter().all(|&v| v == 1.0));
        let m = SpectralMeasure::from_nodes(vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        for (p, v) in chebyshev_moments(&m, 9).iter().enumerate() {
            assert_eq!(*v, if p % 2 == 0 { 2.0 } else { 0.0 });
        }
        assert!(SpectralMeasure::from_nodes(vec![1.5], vec![1.0]).is_err());
        assert!(SpectralMeasure::from_nodes(vec![0.5], vec![-1.0]).is_err());
        assert!(a_weighted_moments(&m, 3).is_err());
    }

    #[test]
    fn operator_measure_mass_and_bound() {
        let (a, _) = poisson27(&PoissonSpec::cube(5).unwrap()).unwrap();
        let r = random_vec(a.n(), 3);
        let m = SpectralMeasure::from_operator(&a, &r, &exact_params(&a)).unwrap();
        let rr = dot(&r, &r);
        assert!((m.total_weight() - rr).abs() <= 1e-12 * rr);
        let eps = 10.0 * f64::EPSILON;
        assert!(m.nodes().iter().all(|t| t.abs() <= 1.0 + eps));
        let mu = chebyshev_moments(&m, 40);
        assert!((mu[0] - rr).abs() <= 1e-12 * rr);
        assert!(mu.iter().all(|v| v.abs() <= rr * (1.0 + 1e-12)));
    }

    #[test]
    fn moments_match_vector_inner_products() {
        let (a, _) = poisson27(&PoissonSpec::cube(8).unwrap()).unwrap();
        let r = random_vec(a.n(), 11);
        let params = exact_params(&a);
        let mu = chebyshev_moments(&SpectralMeasure::from_operator(&a, &r, &params).unwrap(), 20);
        // T_p(Â) r from the solver's matrix power kernel
        let out = crate::mpk::mpk_chebyshev(&a, &r, 21, &crate::precond::Identity, &params).unwrap();
        let rr = dot(&r, &r);
        for p in 0..=20 {
            assert!((dot(&r, out.z.col(p)) - mu[p]).abs() <= 1e-11 * rr, "p={p}");
        }
    }

    #[test]
    fn structure_hand_cases() {
        // measure with nodes ±1: A = diag(1, 3), r = [1, 1]
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let chk = verify_gram_structure(&a, &[1.0, 1.0], 1, MomentInner::Euclidean).unwrap();
        assert_eq!(chk.mu0, 2.0);
        assert!(chk.max_deviation <= 1e-14);
        let basis = chebyshev_block(&a, &[1.0, 1.0], 2, &exact_params(&a)).unwrap();
        let w = block_gram(&basis, &basis).unwrap();
        assert_eq!(w.data(), &[2.0, 0.0, 0.0, 2.0]);
        let chk = verify_gram_structure(&a, &[1.0, 1.0], 4, MomentInner::AInner).unwrap();
        assert!(chk.max_deviation <= 1e-13);
    }

    #[test]
    fn structure_on_poisson_both_inners() {
        let (a, _) = poisson27(&PoissonSpec::cube(8).unwrap()).unwrap();
        let r = random_vec(a.n(), 5);
        for inner in [MomentInner::Euclidean, MomentInner::AInner] {
            let chk = verify_gram_structure(&a, &r, 10, inner).unwrap();
            assert!(chk.max_deviation <= 1e-10 * chk.w_max, "{inner:?}");
            assert!(chk.diag_deviation <= 1e-10 * chk.w_max);
        }
        let big = CsrMatrix::identity(DENSE_ANALYSIS_LIMIT + 1);
        assert!(matches!(
            verify_gram_structure(&big, &vec![1.0; big.n()], 2, MomentInner::Euclidean),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn normalized_bound_diagonal_gram() {
        // Chebyshev nodes with equal weights: μ_p = 0 for 0 < p < 2n
        let n = 8;
        let nodes: Vec<f64> = (0..n)
            .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / n as f64).cos())
            .collect();
        let a = CsrMatrix::from_diagonal(&nodes.iter().map(|t| t + 2.0).collect::<Vec<_>>()).unwrap();
        let params = ChebyshevParams::new(1.0, 3.0).unwrap();
        let chk = normalized_gram_bound_check(&a, &vec![1.0; n], 6, &params, MomentInner::Euclidean)
            .unwrap();
        assert_eq!(chk.worst_ratio, 0.0);
        assert!(chk.max_offdiag <= 1e-13);
    }

    #[test]
    fn normalized_bound_on_poisson() {
        let (a, _) = poisson27(&PoissonSpec::cube(16).unwrap()).unwrap();
        let r = random_vec(a.n(), 9);
        let est = crate::spectral::estimate_interval(&a, &crate::precond::Identity, 30, 0).unwrap();
        let params = ChebyshevParams::from_estimate(&est).unwrap();
        for inner in [MomentInner::Euclidean, MomentInner::AInner] {
            let chk = normalized_gram_bound_check(&a, &r, 8, &params, inner).unwrap();
            assert!(chk.worst_ratio_mu0 <= 1.0 + 1e-8);
            assert!(chk.max_offdiag <= 1.0 + 1e-12);
            assert!(chk.mu_tilde.iter().all(|m| m.abs() <= 1.0 + 1e-12));
            // (1,2) entry: the diagonal scaling inflates the ratio by (½(1 + μ̃_2))^{-1/2}
            let two = normalized_gram_bound_check(&a, &r, 2, &params, inner).unwrap();
            let expected = (0.5 * (1.0 + two.mu_tilde[2])).sqrt().recip();
            assert!((two.worst_ratio - expected).abs() <= 1e-10 * expected);
        }
    }

    #[test]
    fn normalized_bound_cases() {
        // eigenvector start: one node, exact equality in every entry
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        let params = exact_params(&a);
        let chk = normalized_gram_bound_check(&a, &[0.0, 0.0, 1.0], 4, &params, MomentInner::Euclidean)
            .unwrap();
        assert!((chk.worst_ratio - 1.0).abs() <= 1e-12);
        // two nodes ±1 with equal weights: same magnitudes on both sides
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let chk = normalized_gram_bound_check(&a, &[1.0, 1.0], 4, &exact_params(&a), MomentInner::Euclidean)
            .unwrap();
        assert!((chk.worst_ratio - 1.0).abs() <= 1e-12);
        assert!((chk.max_offdiag - 1.0).abs() <= 1e-12 || chk.max_offdiag <= 1e-12);
    }

    #[test]
    fn conditioning_contrast() {
        let (a, r) = poisson27(&PoissonSpec::cube(8).unwrap()).unwrap();
        let params = exact_params(&a);
        let s_values: Vec<usize> = (1..=12).collect();
        let cheb = conditioning_experiment(&a, &r, &s_values, BasisKind::Chebyshev, &params).unwrap();
        let mono = conditioning_experiment(&a, &r, &s_values, BasisKind::Monomial, &params).unwrap();
        assert!((cheb[0].kappa - 1.0).abs() < 1e-12 && (mono[0].kappa - 1.0).abs() < 1e-12);
        // T_0 and T_1 coincide with the first two monomials
        assert!((cheb[1].kappa - mono[1].kappa).abs() <= 1e-10 * cheb[1].kappa);
        for s in 5..=12 {
            assert!(mono[s - 1].kappa > 10.0 * cheb[s - 1].kappa, "s={s}");
        }
        assert!(conditioning_experiment(&a, &r, &[], BasisKind::Monomial, &params).is_err());
    }

    #[test]
    fn cluster_bound_cases() {
        let single = ClusterSpec::raised_cosine(vec![0.0], 1e-3, vec![1.0]).unwrap();
        assert_eq!(single.separation(), f64::INFINITY);
        for p in 1..=10 {
            let b = cluster_bound_eval(&single, p).unwrap();
            assert!(b.bound > chebyshev_values(0.0, p)[p].abs());
        }
        assert!(cluster_bound_eval(&single, 501).is_err());
        assert!(cluster_bound_eval(&single, 0).is_err());

        let two = ClusterSpec::new(vec![-0.5, 0.5], 0.1, vec![0.5, 0.5], vec![0.01, 0.01]).unwrap();
        assert!((two.c_delta() - 2.02).abs() < 1e-12);
        let measure = ClusterSpec::raised_cosine(vec![-0.5, 0.5], 0.1, vec![0.5, 0.5])
            .unwrap()
            .discretize_raised_cosine(400)
            .unwrap();
        let mu = chebyshev_moments(&measure, 5);
        for p in 1..=5 {
            let b = cluster_bound_eval(&two, p).unwrap();
            assert!((mu[p] - two.center_moment(p)).abs() <= b.center_residual_bound);
        }
        assert!(ClusterSpec::raised_cosine(vec![0.0, 0.1], 0.1, vec![0.5, 0.5]).is_err());
        assert!(ClusterSpec::raised_cosine(vec![0.5, 0.0], 0.1, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn raised_cosine_smoothness_constant() {
        // midpoint evaluation of ||φ''||_L1 against 2πW/δ²
        let d = 0.05;
        assert!(ClusterSpec::raised_cosine(vec![0.2], d, vec![0.3]).is_err());
        let spec = ClusterSpec::raised_cosine(vec![0.2], d, vec![1.0]).unwrap();
        let k = 20_000;
        let h = 2.0 * d / k as f64;
        let pi = std::f64::consts::PI;
        let l1: f64 = (0..k)
            .map(|i| {
                let u = -d + (i as f64 + 0.5) * h;
                (1.0 / d * 0.5 * (pi / d).powi(2) * (pi * u / d).cos()).abs() * h
            })
            .sum();
        assert!((l1 - spec.smoothness[0]).abs() <= 1e-6 * l1);
    }

    #[test]
    fn decay_uniform_and_chebyshev() {
        let t = moment_decay_experiment(&DecayDensity::Uniform, 100_000, 50).unwrap();
        assert!(t.max_abs_tilde <= 1.0 + 10.0 * f64::EPSILON);
        for r in t.rows.iter().filter(|r| r.0 >= 2 && r.0 % 2 == 0) {
            let exact = 1.0 / (1.0 - (r.0 * r.0) as f64);
            assert!((r.2 - exact).abs() <= 1e-6, "p={}", r.0);
        }
        let evens: Vec<f64> = t.rows.iter().filter(|r| r.0 >= 2 && r.0 % 2 == 0).map(|r| r.2.abs()).collect();
        assert!(evens.windows(2).all(|w| w[1] < w[0]));
        assert!(t.fitted_exponent.unwrap() >= 1.0);

        let c = moment_decay_experiment(&DecayDensity::Chebyshev, 100_000, 50).unwrap();
        assert!(c.max_abs_tilde <= 1e-3);
        assert!(moment_decay_experiment(&DecayDensity::Uniform, 0, 5).is_err());
    }

    #[test]
    fn block_builders() {
        let a = CsrMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let p = exact_params(&a);
        let m = monomial_block(&a, &[1.0, 1.0], 3, &p).unwrap();
        assert_eq!(m.col(2), &[1.0, 1.0]);
        let c = chebyshev_block(&a, &[1.0, 1.0], 3, &p).unwrap();
        assert_eq!(c.col(1), &[-1.0, 1.0]);
        assert_eq!(c.col(2), &[1.0, 1.0]);
        assert!(norm2(c.col(0)) > 0.0);
    }
}
