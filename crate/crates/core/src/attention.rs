//! Forward passes for the three weight-normalization schemes, in single-
//! and multi-head form.
//!
//! UNAS normalizes logits once across each row (standard softmax
//! attention). DNAS normalizes down each column first and then across each
//! row, which guarantees every column of the result keeps total mass at
//! least 1/S. HNAS blends the two with a per-head weight `u`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{col_softmax, row_normalize, row_softmax, Mask, Matrix};

/// Which normalization scheme a forward or backward pass runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Unas,
    Dnas,
    Hnas,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Unas => "unas",
            Scheme::Dnas => "dnas",
            Scheme::Hnas => "hnas",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unas" => Ok(Scheme::Unas),
            "dnas" => Ok(Scheme::Dnas),
            "hnas" => Ok(Scheme::Hnas),
            _ => Err(Error::InvalidArgument { context: "scheme must be unas, dnas, or hnas" }),
        }
    }
}

/// Logistic map sending an unconstrained real into (0, 1); the endpoints
/// are reached exactly at minus/plus infinity.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Inverse of [`sigmoid`] on [0, 1]; 0 and 1 map to the infinities.
pub(crate) fn logit(u: f64) -> f64 {
    libm::log(u) - libm::log(1.0 - u)
}

/// Per-head parameters: query/key/value transforms (each `d_h x D`) and the
/// hybrid mixing weight, stored as an unconstrained real so gradient steps
/// keep the mapped weight inside [0, 1].
#[derive(Clone, Debug)]
pub struct HeadParams {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    u_raw: f64,
}

impl HeadParams {
    /// Builds a head whose three transforms must share one `d_h x D` shape.
    /// The hybrid weight starts at 0.5 (raw parameter 0).
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self> {
        if q.shape() != k.shape() {
            return Err(Error::ShapeMismatch { op: "head transforms", left: q.shape(), right: k.shape() });
        }
        if q.shape() != v.shape() {
            return Err(Error::ShapeMismatch { op: "head transforms", left: q.shape(), right: v.shape() });
        }
        Ok(HeadParams { q, k, v, u_raw: 0.0 })
    }

    /// Sets the hybrid weight directly on the [0, 1] scale.
    pub fn with_hybrid_weight(mut self, u: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::HybridWeight { value: u });
        }
        self.u_raw = logit(u);
        Ok(self)
    }

    /// Sets the raw (pre-logistic) hybrid parameter.
    pub fn with_raw_hybrid_weight(mut self, raw: f64) -> Result<Self> {
        if raw.is_nan() {
            return Err(Error::InvalidArgument { context: "raw hybrid weight must not be NaN" });
        }
        self.u_raw = raw;
        Ok(self)
    }

    /// The mixing weight on the [0, 1] scale.
    pub fn hybrid_weight(&self) -> f64 {
        sigmoid(self.u_raw)
    }

    /// The unconstrained parameter behind [`Self::hybrid_weight`].
    pub fn raw_hybrid_weight(&self) -> f64 {
        self.u_raw
    }

    /// Rows of the transforms: the per-head feature width.
    pub fn head_dim(&self) -> usize {
        self.q.rows()
    }

    /// Columns of the transforms: the model width they project from.
    pub fn model_dim(&self) -> usize {
        self.q.cols()
    }
}

/// Result of a forward pass: one weight matrix per head, the concatenated
/// output features, and the intermediates the backward pass needs.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    /// Final attention weights, one `S x S` matrix per head.
    pub weights: Vec<Matrix>,
    /// Concatenated head outputs, `S x D`.
    pub output: Matrix,
    pub cache: ForwardCache,
}

/// Intermediates retained from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub(crate) scheme: Scheme,
    pub(crate) x: Matrix,
    pub(crate) mask: Option<Mask>,
    pub(crate) heads: Vec<HeadCache>,
}

impl ForwardCache {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    /// Pre-normalization logits of one head.
    pub fn head_logits(&self, head: usize) -> &Matrix {
        &self.heads[head].z
    }

    /// Final weights of one head.
    pub fn head_weights(&self, head: usize) -> &Matrix {
        &self.heads[head].pi
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    /// Effective and raw mixing weight of one head: `(u, u_raw)` with
    /// `u = sigmoid(u_raw)`. Pure schemes pin `u` to 0 or 1.
    pub fn head_hybrid_weight(&self, head: usize) -> (f64, f64) {
        (self.heads[head].u, self.heads[head].u_raw)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct HeadCache {
    /// The head's transforms, needed to push gradients back to `x`.
    pub(crate) wq: Matrix,
    pub(crate) wk: Matrix,
    pub(crate) wv: Matrix,
    /// Projected features `q = x wq^T` and friends.
    pub(crate) q: Matrix,
    pub(crate) k: Matrix,
    pub(crate) v: Matrix,
    pub(crate) z: Matrix,
    pub(crate) xi: Option<Matrix>,
    pub(crate) pi_u: Option<Matrix>,
    pub(crate) pi_d: Option<Matrix>,
    pub(crate) pi: Matrix,
    pub(crate) u: f64,
    pub(crate) u_raw: f64,
}

/// Dot-product logits `z[i][j] = q_i . k_j` for row sets `q` and `k`.
pub fn logits(q: &Matrix, k: &Matrix) -> Result<Matrix> {
    if q.cols() != k.cols() {
        return Err(Error::ShapeMismatch { op: "logits", left: q.shape(), right: k.shape() });
    }
    q.matmul(&k.transpose())
}

/// Upper-normalized weights: one softmax across each row of the logits.
pub fn unas_weights(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    row_softmax(z, mask)
}

/// Doubly-normalized weights: softmax down each column, then renormalize
/// each row. Rows are stochastic and every unmasked column keeps total mass
/// at least 1/S.
pub fn dnas_weights(z: &Matrix, mask: Option<&Mask>) -> Result<Matrix> {
    if let Some(m) = mask {
        if m.shape() != z.shape() {
            return Err(Error::ShapeMismatch { op: "mask", left: z.shape(), right: m.shape() });
        }
        // Catch fully masked rows here so the caller sees a mask error, not
        // a zero-row artifact of the intermediate.
        for i in 0..m.rows() {
            if (0..m.cols()).all(|j| !m.allowed(i, j)) {
                return Err(Error::MaskedRow { row: i });
            }
        }
    }
    row_normalize(&col_softmax(z, mask)?)
}

/// Hybrid weights `u * dnas + (1 - u) * unas`. The endpoints reproduce the
/// pure schemes bitwise.
pub fn hnas_weights(z: &Matrix, u: f64, mask: Option<&Mask>) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::HybridWeight { value: u });
    }
    let pi_u = unas_weights(z, mask)?;
    let pi_d = dnas_weights(z, mask)?;
    Ok(blend(&pi_d, &pi_u, u))
}

/// `u * pi_d + (1 - u) * pi_u`, elementwise.
pub(crate) fn blend(pi_d: &Matrix, pi_u: &Matrix, u: f64) -> Matrix {
    let mut out = Matrix::zeros(pi_d.rows(), pi_d.cols());
    for i in 0..pi_d.rows() {
        for j in 0..pi_d.cols() {
            out.set(i, j, u * pi_d.get(i, j) + (1.0 - u) * pi_u.get(i, j));
        }
    }
    out
}

fn validate_heads(x: &Matrix, params: &[HeadParams]) -> Result<usize> {
    if params.is_empty() {
        return Err(Error::InvalidArgument { context: "at least one head is required" });
    }
    let d_h = params[0].head_dim();
    for p in params {
        if p.head_dim() != d_h || p.model_dim() != x.cols() {
            return Err(Error::ShapeMismatch {
                op: "head transforms",
                left: (d_h, x.cols()),
                right: (p.head_dim(), p.model_dim()),
            });
        }
    }
    if d_h * params.len() != x.cols() {
        return Err(Error::HeadGeometry {
            head_dim: d_h,
            heads: params.len(),
            model_dim: x.cols(),
        });
    }
    Ok(d_h)
}

/// Multi-head forward pass.
///
/// Per head: `q = x Q^T`, `k = x K^T`, `v = x V^T`, weights from the chosen
/// scheme, `y = pi v`; head outputs are concatenated along the feature axis
/// in head order.
pub fn attention_forward(
    x: &Matrix,
    params: &[HeadParams],
    scheme: Scheme,
    mask: Option<&Mask>,
) -> Result<AttentionOutput> {
    let d_h = validate_heads(x, params)?;
    if let Some(m) = mask {
        if m.shape() != (x.rows(), x.rows()) {
            return Err(Error::ShapeMismatch {
                op: "mask",
                left: (x.rows(), x.rows()),
                right: m.shape(),
            });
        }
    }
    let s = x.rows();
    let mut output = Matrix::zeros(s, x.cols());
    let mut weights = Vec::with_capacity(params.len());
    let mut heads = Vec::with_capacity(params.len());
    for (h, p) in params.iter().enumerate() {
        let q = x.matmul(&p.q.transpose())?;
        let k = x.matmul(&p.k.transpose())?;
        let v = x.matmul(&p.v.transpose())?;
        let z = logits(&q, &k)?;
        let u = p.hybrid_weight();
        let (pi, xi, pi_u, pi_d) = match scheme {
            Scheme::Unas => (unas_weights(&z, mask)?, None, None, None),
            Scheme::Dnas => {
                let xi = col_softmax(&z, mask)?;
                let pi = row_normalize(&xi)?;
                (pi, Some(xi), None, None)
            }
            Scheme::Hnas => {
                let pi_u = unas_weights(&z, mask)?;
                let xi = col_softmax(&z, mask)?;
                let pi_d = row_normalize(&xi)?;
                let pi = blend(&pi_d, &pi_u, u);
                (pi, Some(xi), Some(pi_u), Some(pi_d))
            }
        };
        let y = pi.matmul(&v)?;
        for i in 0..s {
            for j in 0..d_h {
                output.set(i, h * d_h + j, y.get(i, j));
            }
        }
        weights.push(pi.clone());
        heads.push(HeadCache {
            wq: p.q.clone(),
            wk: p.k.clone(),
            wv: p.v.clone(),
            q,
            k,
            v,
            z,
            xi,
            pi_u,
            pi_d,
            pi,
            u,
            u_raw: p.raw_hybrid_weight(),
        });
    }
    Ok(AttentionOutput {
        weights,
        output,
        cache: ForwardCache { scheme, x: x.clone(), mask: mask.cloned(), heads },
    })
}

/// Zero-padded full-width query transform for one head.
///
/// The result is `D x D`, all zero except rows `[h*d_h, (h+1)*d_h)`, which
/// hold the head's transform. Against a shared full-width key transform,
/// the padded queries reproduce the head's logits exactly: the zero rows
/// contribute nothing to any dot product.
pub fn padded_query_transform(qh: &Matrix, h: usize, heads: usize) -> Result<Matrix> {
    let d_h = qh.rows();
    let d = qh.cols();
    if h >= heads {
        return Err(Error::HeadIndex { head: h, heads });
    }
    if d_h * heads != d {
        return Err(Error::HeadGeometry { head_dim: d_h, heads, model_dim: d });
    }
    let mut out = Matrix::zeros(d, d);
    for i in 0..d_h {
        for j in 0..d {
            out.set(h * d_h + i, j, qh.get(i, j));
        }
    }
    Ok(out)
}
