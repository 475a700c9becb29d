//! Seeded sample generators shared by the CLI and the test suite. Every
//! generator is a pure function of its seed, so reruns are byte-identical.

use attnlab_core::{HeadParams, Matrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Scale applied to sampled head transforms. Keeps logits moderate so
/// central finite differences stay well above roundoff noise.
pub const TRANSFORM_SCALE: f64 = 0.35;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sampled shape is nonempty")
}

/// Random logit matrix with standard-normal entries.
pub fn logit_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    normal_matrix(rng, rows, cols, 1.0)
}

/// Two seeded isotropic Gaussian clusters in the plane: `n0` points around
/// `center0` (label 0) followed by `n1` around `center1` (label 1), each
/// coordinate drawn with the given variance.
pub fn two_cluster_cloud(
    seed: u64,
    n0: usize,
    center0: [f64; 2],
    n1: usize,
    center1: [f64; 2],
    variance: f64,
) -> (Matrix, Vec<u8>) {
    let mut rng = rng(seed);
    let sd = variance.sqrt();
    let mut data = Vec::with_capacity(2 * (n0 + n1));
    let mut labels = Vec::with_capacity(n0 + n1);
    for (n, center, label) in [(n0, center0, 0u8), (n1, center1, 1u8)] {
        for _ in 0..n {
            data.push(center[0] + sd * rng.sample::<f64, _>(StandardNormal));
            data.push(center[1] + sd * rng.sample::<f64, _>(StandardNormal));
            labels.push(label);
        }
    }
    let points = Matrix::from_vec(n0 + n1, 2, data).expect("cluster counts are positive");
    (points, labels)
}

/// One gradient-check fixture: features `x` (`s x d`), per-head transforms
/// at [`TRANSFORM_SCALE`], hybrid weights at the logistic midpoint, and the
/// random loss weights defining the scalar probe loss.
pub fn gradcheck_fixture(
    seed: u64,
    s: usize,
    d: usize,
    heads: usize,
) -> (Matrix, Vec<HeadParams>, Matrix) {
    let mut rng = rng(seed);
    let x = normal_matrix(&mut rng, s, d, 1.0);
    let d_h = d / heads;
    let mut params = Vec::with_capacity(heads);
    for _ in 0..heads {
        let q = normal_matrix(&mut rng, d_h, d, TRANSFORM_SCALE);
        let k = normal_matrix(&mut rng, d_h, d, TRANSFORM_SCALE);
        let v = normal_matrix(&mut rng, d_h, d, TRANSFORM_SCALE);
        params.push(
            HeadParams::new(q, k, v)
                .expect("sampled shapes agree")
                .with_hybrid_weight(0.5)
                .expect("midpoint weight is valid"),
        );
    }
    let loss_weights = normal_matrix(&mut rng, s, d, 1.0);
    (x, params, loss_weights)
}
