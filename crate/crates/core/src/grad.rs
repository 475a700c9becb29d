//! Hand-derived backward passes for the three schemes, and a central
//! finite-difference harness that verifies them.
//!
//! Both normalizations are plain compositions, so the chain rule gives
//! closed forms. For a row softmax `pi = softmax_row(z)` with upstream
//! gradient `g`:
//!
//! ```text
//! dz_ij = pi_ij * (g_ij - sum_j' g_ij' pi_ij')
//! ```
//!
//! The doubly-normalized weights `pi = row_normalize(xi)`,
//! `xi = softmax_col(z)` compose the row-normalization Jacobian (with row
//! sums `r_i` of `xi`) with the column-softmax Jacobian:
//!
//! ```text
//! dxi_ij = (g_ij - sum_j' g_ij' pi_ij') / r_i
//! dz_ij  = xi_ij * (dxi_ij - sum_i' dxi_i'j xi_i'j)
//! ```
//!
//! The hybrid pass blends the two and adds the mixing-weight gradient
//! `d_u = sum_ij (pi_d - pi_u)_ij * g_ij`, chained through the logistic
//! parameterization.

use alloc::vec::Vec;

use crate::attention::{attention_forward, ForwardCache, HeadParams, Scheme};
use crate::error::{Error, Result};
use crate::matrix::{Mask, Matrix};

/// Gradients of a scalar loss with respect to every forward input: the
/// feature matrix, each head's transforms, and each head's raw
/// (pre-logistic) hybrid weight. For the pure schemes `d_u` is zero.
#[derive(Clone, Debug)]
pub struct GradBundle {
    pub d_x: Matrix,
    pub d_q: Vec<Matrix>,
    pub d_k: Vec<Matrix>,
    pub d_v: Vec<Matrix>,
    pub d_u: Vec<f64>,
}

/// Backward through the row-softmax weights.
pub fn unas_backward(cache: &ForwardCache, d_y: &Matrix) -> Result<GradBundle> {
    expect_scheme(cache, Scheme::Unas)?;
    backward_any(cache, d_y)
}

/// Backward through the column-then-row normalized weights.
pub fn dnas_backward(cache: &ForwardCache, d_y: &Matrix) -> Result<GradBundle> {
    expect_scheme(cache, Scheme::Dnas)?;
    backward_any(cache, d_y)
}

/// Backward through the hybrid weights, including the mixing weight.
pub fn hnas_backward(cache: &ForwardCache, d_y: &Matrix) -> Result<GradBundle> {
    expect_scheme(cache, Scheme::Hnas)?;
    backward_any(cache, d_y)
}

fn expect_scheme(cache: &ForwardCache, want: Scheme) -> Result<()> {
    if cache.scheme != want {
        return Err(Error::CacheScheme { cached: cache.scheme.name(), requested: want.name() });
    }
    Ok(())
}

/// Row-softmax vector-Jacobian product: `dz = pi * (g - rowdot)`.
fn unas_vjp(pi: &Matrix, g: &Matrix) -> Matrix {
    let mut dz = Matrix::zeros(pi.rows(), pi.cols());
    for i in 0..pi.rows() {
        let mut rowdot = 0.0;
        for j in 0..pi.cols() {
            rowdot += g.get(i, j) * pi.get(i, j);
        }
        for j in 0..pi.cols() {
            dz.set(i, j, pi.get(i, j) * (g.get(i, j) - rowdot));
        }
    }
    dz
}

/// Column-softmax-then-row-normalize vector-Jacobian product.
///
/// Masked entries carry `xi = 0`, so their logit gradients come out exactly
/// zero without special-casing.
fn dnas_vjp(xi: &Matrix, pi: &Matrix, g: &Matrix) -> Matrix {
    let (rows, cols) = xi.shape();
    let mut dxi = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let mut r = 0.0;
        let mut rowdot = 0.0;
        for j in 0..cols {
            r += xi.get(i, j);
            rowdot += g.get(i, j) * pi.get(i, j);
        }
        for j in 0..cols {
            dxi.set(i, j, (g.get(i, j) - rowdot) / r);
        }
    }
    let mut dz = Matrix::zeros(rows, cols);
    for j in 0..cols {
        let mut coldot = 0.0;
        for i in 0..rows {
            coldot += dxi.get(i, j) * xi.get(i, j);
        }
        for i in 0..rows {
            dz.set(i, j, xi.get(i, j) * (dxi.get(i, j) - coldot));
        }
    }
    dz
}

fn add_into(acc: &mut Matrix, m: &Matrix) {
    for i in 0..acc.rows() {
        for j in 0..acc.cols() {
            acc.set(i, j, acc.get(i, j) + m.get(i, j));
        }
    }
}

fn backward_any(cache: &ForwardCache, d_y: &Matrix) -> Result<GradBundle> {
    let x = &cache.x;
    let s = x.rows();
    let width = x.cols();
    if d_y.shape() != (s, width) {
        return Err(Error::ShapeMismatch {
            op: "backward upstream gradient",
            left: (s, width),
            right: d_y.shape(),
        });
    }
    let heads = cache.heads.len();
    let d_h = width / heads;
    let mut d_x = Matrix::zeros(s, width);
    let mut d_q = Vec::with_capacity(heads);
    let mut d_k = Vec::with_capacity(heads);
    let mut d_v = Vec::with_capacity(heads);
    let mut d_u = Vec::with_capacity(heads);
    for (h, hc) in cache.heads.iter().enumerate() {
        // Upstream gradient restricted to this head's output columns.
        let mut g_y = Matrix::zeros(s, d_h);
        for i in 0..s {
            for j in 0..d_h {
                g_y.set(i, j, d_y.get(i, h * d_h + j));
            }
        }
        let d_pi = g_y.matmul(&hc.v.transpose())?;
        let d_vfeat = hc.pi.transpose().matmul(&g_y)?;
        let (d_z, d_u_raw) = match cache.scheme {
            Scheme::Unas => (unas_vjp(&hc.pi, &d_pi), 0.0),
            Scheme::Dnas => {
                let xi = hc.xi.as_ref().expect("dnas cache holds xi");
                (dnas_vjp(xi, &hc.pi, &d_pi), 0.0)
            }
            Scheme::Hnas => {
                let xi = hc.xi.as_ref().expect("hnas cache holds xi");
                let pi_u = hc.pi_u.as_ref().expect("hnas cache holds pi_u");
                let pi_d = hc.pi_d.as_ref().expect("hnas cache holds pi_d");
                let dz_d = dnas_vjp(xi, pi_d, &d_pi);
                let dz_u = unas_vjp(pi_u, &d_pi);
                let dz = crate::attention::blend(&dz_d, &dz_u, hc.u);
                let mut d_u_mapped = 0.0;
                for i in 0..s {
                    for j in 0..s {
                        d_u_mapped += (pi_d.get(i, j) - pi_u.get(i, j)) * d_pi.get(i, j);
                    }
                }
                (dz, d_u_mapped * hc.u * (1.0 - hc.u))
            }
        };
        let d_qfeat = d_z.matmul(&hc.k)?;
        let d_kfeat = d_z.transpose().matmul(&hc.q)?;
        d_q.push(d_qfeat.transpose().matmul(x)?);
        d_k.push(d_kfeat.transpose().matmul(x)?);
        d_v.push(d_vfeat.transpose().matmul(x)?);
        add_into(&mut d_x, &d_qfeat.matmul(&hc.wq)?);
        add_into(&mut d_x, &d_kfeat.matmul(&hc.wk)?);
        add_into(&mut d_x, &d_vfeat.matmul(&hc.wv)?);
        d_u.push(d_u_raw);
    }
    Ok(GradBundle { d_x, d_q, d_k, d_v, d_u })
}

/// Floor for the relative-error denominator, guarding against division
/// blowups where both gradients are near zero.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares an analytic gradient against central finite differences over
/// every scalar parameter and returns the worst relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn finite_diff_check<F>(
    mut forward: F,
    params: &[f64],
    analytic: &[f64],
    step: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidArgument { context: "finite-difference step must be positive and finite" });
    }
    if analytic.len() != params.len() {
        return Err(Error::InvalidArgument {
            context: "analytic gradient length must match parameter count",
        });
    }
    let mut buf = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        buf[i] = params[i] + step;
        let up = forward(&buf)?;
        buf[i] = params[i] - step;
        let down = forward(&buf)?;
        buf[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteScalar { context: "finite-difference probe" });
        }
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

/// End-to-end gradient check for a full attention forward pass.
///
/// The scalar loss is `sum(loss_weights . output)`; the analytic gradients
/// come from the scheme's backward pass, and every entry of `x`, the head
/// transforms, and the raw hybrid weights is probed by central differences.
/// Returns the worst relative error.
pub fn check_attention_gradients(
    x: &Matrix,
    params: &[HeadParams],
    scheme: Scheme,
    mask: Option<&Mask>,
    loss_weights: &Matrix,
    step: f64,
) -> Result<f64> {
    check_attention_gradients_scaled(x, params, scheme, mask, loss_weights, step, 1.0)
}

/// [`check_attention_gradients`] with the analytic gradient multiplied by
/// `analytic_scale` before the comparison. Scales other than 1 deliberately
/// corrupt the gradient; they exist so harnesses can prove the check would
/// catch a wrong backward pass.
pub fn check_attention_gradients_scaled(
    x: &Matrix,
    params: &[HeadParams],
    scheme: Scheme,
    mask: Option<&Mask>,
    loss_weights: &Matrix,
    step: f64,
    analytic_scale: f64,
) -> Result<f64> {
    if !analytic_scale.is_finite() {
        return Err(Error::InvalidArgument { context: "analytic scale must be finite" });
    }
    let out = attention_forward(x, params, scheme, mask)?;
    if loss_weights.shape() != out.output.shape() {
        return Err(Error::ShapeMismatch {
            op: "loss weights",
            left: out.output.shape(),
            right: loss_weights.shape(),
        });
    }
    let grads = match scheme {
        Scheme::Unas => unas_backward(&out.cache, loss_weights)?,
        Scheme::Dnas => dnas_backward(&out.cache, loss_weights)?,
        Scheme::Hnas => hnas_backward(&out.cache, loss_weights)?,
    };

    let (s, width) = x.shape();
    let d_h = params[0].head_dim();
    let block = d_h * width;
    let mut flat = Vec::new();
    flat.extend_from_slice(x.data());
    for p in params {
        flat.extend_from_slice(p.q.data());
        flat.extend_from_slice(p.k.data());
        flat.extend_from_slice(p.v.data());
        flat.push(p.raw_hybrid_weight());
    }
    let mut analytic = Vec::new();
    analytic.extend_from_slice(grads.d_x.data());
    for h in 0..params.len() {
        analytic.extend_from_slice(grads.d_q[h].data());
        analytic.extend_from_slice(grads.d_k[h].data());
        analytic.extend_from_slice(grads.d_v[h].data());
        analytic.push(grads.d_u[h]);
    }
    for g in &mut analytic {
        *g *= analytic_scale;
    }

    let heads = params.len();
    let rebuild_and_eval = |flat: &[f64]| -> Result<f64> {
        let x = Matrix::from_vec(s, width, flat[..s * width].to_vec())?;
        let mut rebuilt = Vec::with_capacity(heads);
        let mut off = s * width;
        for _ in 0..heads {
            let q = Matrix::from_vec(d_h, width, flat[off..off + block].to_vec())?;
            let k = Matrix::from_vec(d_h, width, flat[off + block..off + 2 * block].to_vec())?;
            let v = Matrix::from_vec(d_h, width, flat[off + 2 * block..off + 3 * block].to_vec())?;
            let raw = flat[off + 3 * block];
            off += 3 * block + 1;
            rebuilt.push(HeadParams::new(q, k, v)?.with_raw_hybrid_weight(raw)?);
        }
        let out = attention_forward(&x, &rebuilt, scheme, mask)?;
        let mut loss = 0.0;
        for (a, b) in out.output.data().iter().zip(loss_weights.data()) {
            loss += a * b;
        }
        Ok(loss)
    };
    finite_diff_check(rebuild_and_eval, &flat, &analytic, step)
}
