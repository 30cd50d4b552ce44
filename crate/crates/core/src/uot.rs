//! Anchor matching by entropic unbalanced optimal transport.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::PipelineConfig;

/// Floor on the Welsch bandwidth.
pub const MIN_BETA: f64 = 1e-9;

/// Welsch costs between source anchors (rows) and edit anchors (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub d: DMatrix<f64>,
    pub beta: f64,
    pub d_med: f64,
}

/// `D_ij = 1 − exp(−‖pᵢ − pⱼ‖² / (2β²))` with `β = γ · median distance`.
pub fn welsch_cost(src: &[Vec3], edit: &[Vec3], gamma: f64) -> Result<CostMatrix> {
    if src.is_empty() || edit.is_empty() {
        return Err(Error::EmptyAnchorSet);
    }
    let (n, m) = (src.len(), edit.len());
    let dist = DMatrix::from_fn(n, m, |i, j| (src[i] - edit[j]).norm());
    let mut sorted: Vec<f64> = dist.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let d_med = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    let beta = (gamma * d_med).max(MIN_BETA);
    let d = dist.map(|r| 1.0 - (-r * r / (2.0 * beta * beta)).exp());
    Ok(CostMatrix { d, beta, d_med })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for SinkhornConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            lambda0: c.lambda0,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            gamma: c.gamma,
            max_iters: c.sinkhorn_max_iters,
            tol: c.sinkhorn_tol,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda0, self.lambda1, self.lambda2, self.gamma, self.tol];
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "Sinkhorn weights, gamma and tol must be positive and finite, max_iters non-zero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub p: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm change of the log scalings in the last iteration.
    pub marginal_err: f64,
    /// `marginal_err` after every iteration.
    pub residuals: Vec<f64>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Unbalanced Sinkhorn on log scalings `f = log u`, `g = log v`:
/// `f ← ρ₁ (log a − LSE_j(−D/λ₀ + g))`, `g ← ρ₂ (log b − LSE_i(−D/λ₀ + f))`
/// with `ρₖ = λₖ / (λₖ + λ₀)` and uniform marginals `a`, `b`.
pub fn sinkhorn_uot(d: &DMatrix<f64>, config: &SinkhornConfig) -> Result<TransportPlan> {
    config.validate()?;
    let (n, m) = d.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyAnchorSet);
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvariantViolation("cost matrix has non-finite entries".into()));
    }
    // row-major and column-major copies of −D/λ₀
    let rows: Vec<f64> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| -d[(i, j)] / config.lambda0).collect();
    let cols: Vec<f64> = d.iter().map(|v| -v / config.lambda0).collect();
    let rho1 = config.lambda1 / (config.lambda1 + config.lambda0);
    let rho2 = config.lambda2 / (config.lambda2 + config.lambda0);
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let new_f: Vec<f64> = rows
            .par_chunks(m)
            .map(|row| rho1 * (log_a - log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj))))
            .collect();
        let new_g: Vec<f64> = cols
            .par_chunks(n)
            .map(|col| rho2 * (log_b - log_sum_exp(col.iter().zip(&new_f).map(|(k, fi)| k + fi))))
            .collect();
        let change = f
            .iter()
            .zip(&new_f)
            .chain(g.iter().zip(&new_g))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        f = new_f;
        g = new_g;
        residuals.push(change);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let p = DMatrix::from_fn(n, m, |i, j| (f[i] + rows[i * m + j] + g[j]).exp());
    if !converged {
        log::warn!("Sinkhorn stopped after {} iterations, residual {:.3e}", residuals.len(), residuals.last().copied().unwrap_or(f64::NAN));
    }
    Ok(TransportPlan {
        p,
        converged,
        iterations: residuals.len(),
        marginal_err: residuals.last().copied().unwrap_or(0.0),
        residuals,
    })
}

/// For each edit anchor `j`, the source anchor `i` carrying the most mass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    pub corr: Vec<usize>,
}

/// Column-wise argmax; the lowest row index wins ties.
pub fn extract_correspondence(p: &DMatrix<f64>) -> CorrespondenceMap {
    let corr = (0..p.ncols())
        .map(|j| {
            let mut best = 0;
            for i in 1..p.nrows() {
                if p[(i, j)] > p[(best, j)] {
                    best = i;
                }
            }
            best
        })
        .collect();
    CorrespondenceMap { corr }
}
