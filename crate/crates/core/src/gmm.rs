//! Mixture-of-Gaussians reading of the attention weights.
//!
//! With unit-variance isotropic components and cluster priors proportional
//! to `exp(0.5 * ||center||^2)`, posterior responsibilities reduce exactly
//! to a softmax of dot-product logits: the squared-norm terms cancel
//! against the priors. The two directions correspond to the two schemes —
//! keys as centers explaining the queries (row softmax), or queries as
//! centers explaining the keys (column softmax), whose responsibility-
//! weighted mean update is the doubly-normalized step.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{col_softmax, row_normalize, row_softmax, Matrix};

/// Which side of the attention pairing acts as the mixture centers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Keys (lower-layer features) are the centers; queries are the data.
    /// Responsibilities come out one row per datum, normalized across
    /// centers, i.e. row-stochastic.
    LowerAsCenters,
    /// Queries (upper-layer features) are the centers; keys are the data.
    /// Responsibilities come out one row per center, normalized down each
    /// data column, i.e. column-stochastic.
    UpperAsCenters,
}

/// A unit-variance isotropic Gaussian mixture: centers, data, and one
/// prior per center. Priors must be nonnegative and sum to 1.
#[derive(Clone, Debug)]
pub struct GmmConfig {
    pub direction: Direction,
    pub centers: Matrix,
    pub data: Matrix,
    pub priors: Vec<f64>,
}

impl GmmConfig {
    pub fn new(
        direction: Direction,
        centers: Matrix,
        data: Matrix,
        priors: Vec<f64>,
    ) -> Result<Self> {
        if centers.cols() != data.cols() {
            return Err(Error::ShapeMismatch {
                op: "mixture feature width",
                left: centers.shape(),
                right: data.shape(),
            });
        }
        validate_priors(&priors, centers.rows())?;
        Ok(GmmConfig { direction, centers, data, priors })
    }
}

pub(crate) fn validate_priors(priors: &[f64], centers: usize) -> Result<()> {
    if priors.len() != centers {
        return Err(Error::PriorsLength { expected: centers, found: priors.len() });
    }
    let mut sum = 0.0;
    for (i, &p) in priors.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite { context: "priors", row: i, col: 0 });
        }
        if p < 0.0 {
            return Err(Error::NegativeEntry { context: "priors", row: i, col: 0 });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::PriorsSum { sum });
    }
    Ok(())
}

/// Priors proportional to `exp(0.5 * ||row||^2)`, one per row, computed as
/// a stable softmax of the half squared norms.
pub fn default_priors(vectors: &Matrix) -> Vec<f64> {
    let energies: Vec<f64> = (0..vectors.rows())
        .map(|i| 0.5 * vectors.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let max = energies.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = energies.iter().map(|&e| libm::exp(e - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Log prior plus Gaussian log kernel for datum row `d` against center row
/// `c`, leaving out the shared `(2*pi)^(-dim/2)` factor.
fn log_weight(cfg: &GmmConfig, d: usize, c: usize) -> f64 {
    let prior = cfg.priors[c];
    if prior == 0.0 {
        f64::NEG_INFINITY
    } else {
        libm::log(prior) - 0.5 * sq_dist(cfg.data.row(d), cfg.centers.row(c))
    }
}

/// Total log-likelihood of the data under the mixture, evaluated through
/// log-sum-exp.
pub fn log_likelihood(cfg: &GmmConfig) -> f64 {
    let dim = cfg.data.cols() as f64;
    let mut total = 0.0;
    for d in 0..cfg.data.rows() {
        let mut max = f64::NEG_INFINITY;
        for c in 0..cfg.centers.rows() {
            max = max.max(log_weight(cfg, d, c));
        }
        let mut sum = 0.0;
        for c in 0..cfg.centers.rows() {
            sum += libm::exp(log_weight(cfg, d, c) - max);
        }
        total += max + libm::log(sum);
    }
    total - cfg.data.rows() as f64 * 0.5 * dim * libm::log(2.0 * core::f64::consts::PI)
}

/// Posterior responsibilities, oriented so that queries index rows and
/// keys index columns in both directions (see [`Direction`]).
pub fn responsibilities(cfg: &GmmConfig) -> Matrix {
    match cfg.direction {
        Direction::LowerAsCenters => {
            let mut l = Matrix::zeros(cfg.data.rows(), cfg.centers.rows());
            for d in 0..cfg.data.rows() {
                for c in 0..cfg.centers.rows() {
                    l.set(d, c, log_weight(cfg, d, c));
                }
            }
            row_softmax(&l, None).expect("softmax of finite log-weights")
        }
        Direction::UpperAsCenters => {
            let mut l = Matrix::zeros(cfg.centers.rows(), cfg.data.rows());
            for c in 0..cfg.centers.rows() {
                for d in 0..cfg.data.rows() {
                    l.set(c, d, log_weight(cfg, d, c));
                }
            }
            col_softmax(&l, None).expect("softmax of finite log-weights")
        }
    }
}

/// One upper-normalized mean update: every query moves to the
/// responsibility-weighted mean of the keys, with the keys acting as
/// mixture centers under the given priors.
pub fn fixed_point_unas(q: &Matrix, k: &Matrix, priors: &[f64]) -> Result<Matrix> {
    let cfg = GmmConfig::new(Direction::LowerAsCenters, k.clone(), q.clone(), priors.to_vec())?;
    let resp = responsibilities(&cfg);
    resp.matmul(k)
}

/// One doubly-normalized mean update: responsibilities are computed with
/// the queries as centers (priors over queries), then renormalized across
/// each query row before averaging the keys.
pub fn fixed_point_dnas(q: &Matrix, k: &Matrix, priors: &[f64]) -> Result<Matrix> {
    let cfg = GmmConfig::new(Direction::UpperAsCenters, q.clone(), k.clone(), priors.to_vec())?;
    let xi = responsibilities(&cfg);
    let pi = row_normalize(&xi)?;
    pi.matmul(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{attention_forward, logits, HeadParams, Scheme};

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    struct TestRng(u64);

    impl TestRng {
        fn next_f64(&mut self) -> f64 {
            self.0 ^= self.0 << 13;
            self.0 ^= self.0 >> 7;
            self.0 ^= self.0 << 17;
            let mantissa = (self.0.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11) as f64;
            mantissa / (1u64 << 53) as f64 * 2.0 - 1.0
        }

        fn matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
            let data = (0..rows * cols).map(|_| self.next_f64() * scale).collect();
            Matrix::from_vec(rows, cols, data).unwrap()
        }
    }

    #[test]
    fn default_priors_oracles() {
        // Equal norms: uniform.
        let p = default_priors(&mat(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        // Norms 0 and 2: softmax(0, 2).
        let p = default_priors(&mat(2, 2, &[0.0, 0.0, 2.0, 0.0]));
        let e2 = 2.0_f64.exp();
        assert!((p[0] - 1.0 / (1.0 + e2)).abs() < 1e-15);
        assert!((p[1] - e2 / (1.0 + e2)).abs() < 1e-15);
        assert!((p[0] - 0.11920292202211755).abs() < 1e-12);
        // Single row.
        assert_eq!(default_priors(&mat(1, 3, &[4.0, 5.0, 6.0])), alloc::vec![1.0]);
    }

    #[test]
    fn config_validates_priors() {
        let c = mat(2, 1, &[0.0, 1.0]);
        let d = mat(1, 1, &[0.5]);
        assert!(matches!(
            GmmConfig::new(Direction::LowerAsCenters, c.clone(), d.clone(), alloc::vec![1.0]),
            Err(Error::PriorsLength { expected: 2, found: 1 })
        ));
        assert!(matches!(
            GmmConfig::new(Direction::LowerAsCenters, c.clone(), d.clone(), alloc::vec![0.7, 0.7]),
            Err(Error::PriorsSum { .. })
        ));
        assert!(matches!(
            GmmConfig::new(Direction::LowerAsCenters, c, d, alloc::vec![1.5, -0.5]),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn likelihood_at_the_mean() {
        // One center sitting on the datum, prior 1: density is
        // (2*pi)^(-d/2), so the log-likelihood is -d/2 * ln(2*pi).
        for dim in [1usize, 2, 3] {
            let center = Matrix::zeros(1, dim);
            let cfg = GmmConfig::new(
                Direction::LowerAsCenters,
                center.clone(),
                center,
                alloc::vec![1.0],
            )
            .unwrap();
            let expect = -(dim as f64) / 2.0 * (2.0 * core::f64::consts::PI).ln();
            assert!((log_likelihood(&cfg) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn likelihood_is_mirror_symmetric() {
        let datum = mat(1, 1, &[0.0]);
        let a = GmmConfig::new(
            Direction::LowerAsCenters,
            mat(2, 1, &[1.3, -1.3]),
            datum.clone(),
            alloc::vec![0.5, 0.5],
        )
        .unwrap();
        let b = GmmConfig::new(
            Direction::LowerAsCenters,
            mat(2, 1, &[-1.3, 1.3]),
            datum,
            alloc::vec![0.5, 0.5],
        )
        .unwrap();
        assert!((log_likelihood(&a) - log_likelihood(&b)).abs() < 1e-15);
    }

    #[test]
    fn likelihood_matches_naive_summation() {
        let mut rng = TestRng(5);
        let centers = rng.matrix(3, 2, 1.0);
        let data = rng.matrix(4, 2, 1.0);
        let priors = alloc::vec![0.2, 0.5, 0.3];
        let cfg =
            GmmConfig::new(Direction::LowerAsCenters, centers.clone(), data.clone(), priors.clone())
                .unwrap();
        let mut naive = 0.0;
        for d in 0..4 {
            let mut p = 0.0;
            for c in 0..3 {
                let q = sq_dist(data.row(d), centers.row(c));
                p += priors[c] * (2.0 * core::f64::consts::PI).powf(-1.0) * (-0.5 * q).exp();
            }
            naive += p.ln();
        }
        assert!((log_likelihood(&cfg) - naive).abs() < 1e-10);
    }

    #[test]
    fn default_prior_responsibilities_reduce_to_softmax() {
        // The half-squared-norm priors cancel the norm terms in the
        // Gaussian kernel exactly, for arbitrary (not just equal) norms.
        let mut rng = TestRng(17);
        let q = rng.matrix(4, 3, 1.5);
        let k = rng.matrix(5, 3, 1.5);
        let z = logits(&q, &k).unwrap();

        let cfg = GmmConfig::new(
            Direction::LowerAsCenters,
            k.clone(),
            q.clone(),
            default_priors(&k),
        )
        .unwrap();
        let resp = responsibilities(&cfg);
        let soft = row_softmax(&z, None).unwrap();
        for (a, b) in resp.data().iter().zip(soft.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }

        let cfg = GmmConfig::new(
            Direction::UpperAsCenters,
            q.clone(),
            k.clone(),
            default_priors(&q),
        )
        .unwrap();
        let resp = responsibilities(&cfg);
        let soft = col_softmax(&z, None).unwrap();
        for (a, b) in resp.data().iter().zip(soft.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn single_center_takes_all_responsibility() {
        let cfg = GmmConfig::new(
            Direction::LowerAsCenters,
            mat(1, 2, &[3.0, 1.0]),
            mat(3, 2, &[0.0, 0.0, 1.0, 1.0, -2.0, 0.5]),
            alloc::vec![1.0],
        )
        .unwrap();
        assert!(responsibilities(&cfg).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn uniform_priors_differ_from_softmax_by_the_norm_term() {
        // With uniform (not norm-matched) priors, responsibilities follow
        // the raw density ratios instead of the dot-product softmax.
        let k = mat(2, 1, &[0.0, 2.0]);
        let q = mat(1, 1, &[0.0]);
        let cfg = GmmConfig::new(
            Direction::LowerAsCenters,
            k.clone(),
            q.clone(),
            alloc::vec![0.5, 0.5],
        )
        .unwrap();
        let resp = responsibilities(&cfg);
        // Density ratio: exp(0)/ (exp(0)+exp(-2)) for the near center.
        let expect = 1.0 / (1.0 + (-2.0_f64).exp());
        assert!((resp.get(0, 0) - expect).abs() < 1e-15);
        // The softmax of logits would be uniform here (z = 0 row).
        let soft = row_softmax(&logits(&q, &k).unwrap(), None).unwrap();
        assert!((soft.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((resp.get(0, 0) - soft.get(0, 0)).abs() > 0.2);
    }

    #[test]
    fn fixed_point_jumps_to_a_single_center() {
        let k = mat(1, 2, &[2.0, -1.0]);
        let q = mat(3, 2, &[0.0, 0.0, 5.0, 5.0, -1.0, 2.0]);
        let up = fixed_point_unas(&q, &k, &[1.0]).unwrap();
        for i in 0..3 {
            assert_eq!(up.row(i), k.row(0));
        }
        let up = fixed_point_dnas(&q, &k, &default_priors(&q)).unwrap();
        for i in 0..3 {
            assert_eq!(up.row(i), k.row(0));
        }
    }

    #[test]
    fn symmetric_midpoint_is_fixed() {
        let k = mat(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let q = mat(1, 2, &[0.0, 0.0]);
        let up = fixed_point_unas(&q, &k, &default_priors(&k)).unwrap();
        assert!(up.data().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn fixed_point_matches_attention_with_identity_transforms() {
        let mut rng = TestRng(23);
        let x = rng.matrix(4, 2, 1.0);
        let id = Matrix::identity(2);
        let params = [HeadParams::new(id.clone(), id.clone(), id.clone()).unwrap()];
        let priors = default_priors(&x);

        let fp = fixed_point_unas(&x, &x, &priors).unwrap();
        let att = attention_forward(&x, &params, Scheme::Unas, None).unwrap();
        for (a, b) in fp.data().iter().zip(att.output.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }

        let fp = fixed_point_dnas(&x, &x, &priors).unwrap();
        let att = attention_forward(&x, &params, Scheme::Dnas, None).unwrap();
        for (a, b) in fp.data().iter().zip(att.output.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn one_dnas_step_rarely_lowers_the_likelihood() {
        // The doubly-normalized update is the exact mean M-step when the
        // queries are the centers, so the data log-likelihood should not
        // decrease. Multi-step monotonicity is not guaranteed, so this is
        // measured and reported rather than asserted per instance.
        let mut violations = 0;
        let mut checked = 0;
        for seed in 1..=20u64 {
            let mut rng = TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1);
            let q = rng.matrix(4, 2, 1.0);
            let k = rng.matrix(6, 2, 1.0);
            let priors = default_priors(&q);
            let before = log_likelihood(
                &GmmConfig::new(Direction::UpperAsCenters, q.clone(), k.clone(), priors.clone())
                    .unwrap(),
            );
            let q2 = fixed_point_dnas(&q, &k, &priors).unwrap();
            let after = log_likelihood(
                &GmmConfig::new(Direction::UpperAsCenters, q2, k.clone(), priors.clone()).unwrap(),
            );
            checked += 1;
            if after < before - 1e-10 {
                violations += 1;
            }
        }
        assert_eq!(checked, 20);
        if violations > 0 {
            std::println!("dnas ascent violations: {violations}/20");
        }
    }

    #[test]
    fn one_dimensional_two_cluster_steps_match_the_closed_forms() {
        // Balanced clusters at +/-1 (equal masses): one upper-normalized
        // step leaves the centers 2*tanh(1) apart.
        let x = mat(2, 1, &[1.0, -1.0]);
        let up = fixed_point_unas(&x, &x, &default_priors(&x)).unwrap();
        let dist = up.get(0, 0) - up.get(1, 0);
        assert!((dist - 2.0 * 1.0_f64.tanh()).abs() < 1e-14, "{dist}");

        // Mass ratio 10: replicate the heavy cluster point. One doubly-
        // normalized step keeps the centers much farther apart than the
        // upper-normalized step does.
        let mut pts = alloc::vec![1.0; 10];
        pts.push(-1.0);
        let x = Matrix::from_vec(11, 1, pts).unwrap();
        let priors = default_priors(&x);
        let up_d = fixed_point_dnas(&x, &x, &priors).unwrap();
        let dist_d = up_d.get(0, 0) - up_d.get(10, 0);
        assert!((dist_d - 1.411642138288099).abs() < 1e-10, "{dist_d}");
        let up_u = fixed_point_unas(&x, &x, &priors).unwrap();
        let dist_u = up_u.get(0, 0) - up_u.get(10, 0);
        assert!((dist_u - 0.8231456801434297).abs() < 1e-10, "{dist_u}");
    }
}
