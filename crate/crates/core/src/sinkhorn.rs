//! Entropic optimal-transport view: alternating column/row normalization
//! of the positive kernel `exp(z)`, convergence measurement toward the
//! doubly stochastic set, and the closed-form solution of the row-only
//! constrained problem.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{exp_stable_cols, normalize_cols, row_normalize, Matrix};

/// Default convergence tolerance on the doubly-stochastic residual.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration budget.
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Outcome of a Sinkhorn run.
#[derive(Clone, Debug)]
pub struct SinkhornReport {
    /// The last iterate; doubly stochastic up to `tol` when `converged`.
    pub matrix: Matrix,
    /// Completed column+row normalization rounds.
    pub iterations: usize,
    /// Doubly-stochastic residual after each round; non-increasing on
    /// positive kernels.
    pub residual_history: Vec<f64>,
    /// Whether the residual dropped below the tolerance within budget.
    pub converged: bool,
}

/// Alternating column-then-row normalization of `exp(z)`, starting from
/// the per-column max-stabilized exponential kernel.
///
/// The first round reproduces the doubly-normalized attention weights
/// bit for bit — both run the same two normalization primitives on the
/// same stabilized kernel.
pub fn sinkhorn_run(z: &Matrix, max_iters: usize, tol: f64) -> Result<SinkhornReport> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument { context: "max_iters must be at least 1" });
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidArgument { context: "tolerance must be positive and finite" });
    }
    z.check_finite("sinkhorn kernel")?;
    let mut pi = exp_stable_cols(z, None)?;
    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        let xi = normalize_cols(&pi)?;
        pi = row_normalize(&xi)?;
        iterations += 1;
        let r = ds_residual(&pi);
        residual_history.push(r);
        if r < tol {
            converged = true;
            break;
        }
    }
    Ok(SinkhornReport { matrix: pi, iterations, residual_history, converged })
}

/// Entropic transport objective `sum(p * cost) + sum(p * ln p)` with the
/// cost taken as the negated logits; `0 * ln 0` counts as 0.
pub fn transport_objective(p: &Matrix, z: &Matrix) -> Result<f64> {
    if p.shape() != z.shape() {
        return Err(Error::ShapeMismatch { op: "transport objective", left: p.shape(), right: z.shape() });
    }
    let mut total = 0.0;
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let v = p.get(i, j);
            if v < 0.0 {
                return Err(Error::NegativeEntry { context: "transport plan", row: i, col: j });
            }
            if v > 1.0 + 1e-12 {
                return Err(Error::InvalidArgument {
                    context: "transport plan entries must lie in [0, 1]",
                });
            }
            if v > 0.0 {
                total += v * (-z.get(i, j)) + v * libm::log(v);
            }
        }
    }
    Ok(total)
}

/// Exact minimizer of the transport objective when only the row-sum
/// constraints are kept: a row softmax, computed here through per-row
/// log-partition functions as an independent route to the same weights.
pub fn unas_closed_form(z: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let row = z.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
        let log_partition = max + libm::log(sum);
        for j in 0..z.cols() {
            out.set(i, j, libm::exp(z.get(i, j) - log_partition));
        }
    }
    out
}

/// Distance from double stochasticity: the largest row-sum deviation from
/// 1 plus the largest column-sum deviation from 1.
pub fn ds_residual(p: &Matrix) -> f64 {
    let mut worst_row = 0.0_f64;
    for i in 0..p.rows() {
        let sum: f64 = p.row(i).iter().sum();
        worst_row = worst_row.max((sum - 1.0).abs());
    }
    let mut worst_col = 0.0_f64;
    for j in 0..p.cols() {
        let mut sum = 0.0;
        for i in 0..p.rows() {
            sum += p.get(i, j);
        }
        worst_col = worst_col.max((sum - 1.0).abs());
    }
    worst_row + worst_col
}
