//! Mode-collapse analysis: closed-form distances between two cluster
//! centers after one attention step in the idealized 1-D two-cluster
//! setting, and multi-step 2-D point-cloud simulations driven by the
//! Gaussian-mixture fixed-point updates.
//!
//! Two point-mass clusters of mass ratio `r` sit at `+a` and `-a`; the
//! inter-cluster kernel weight is `s = exp(-2a^2)`. One upper-normalized
//! step leaves the centers
//!
//! ```text
//! 2 r (1 - s^2) a / ((1 + r s) (r + s))
//! ```
//!
//! apart, while the doubly-normalized step, with `q = (r + s)/(r s + 1)`,
//! keeps them at
//!
//! ```text
//! 2 q r (1 - s^2) a / ((q + r s) (r + s q))
//! ```
//!
//! which is never smaller, with equality at `r = 1`.

use alloc::vec::Vec;

use crate::attention::Scheme;
use crate::error::{Error, Result};
use crate::gmm::{default_priors, fixed_point_dnas, fixed_point_unas};
use crate::matrix::Matrix;

/// Two 1-D point-mass clusters at `+a` and `-a` with mass ratio `r`.
#[derive(Clone, Copy, Debug)]
pub struct TwoClusterSpec {
    a: f64,
    r: f64,
}

impl TwoClusterSpec {
    /// Half center distance `a >= 0` and mass ratio `r > 0`.
    pub fn new(a: f64, r: f64) -> Result<Self> {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidArgument { context: "half distance a must be finite and nonnegative" });
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidArgument { context: "mass ratio r must be finite and positive" });
        }
        Ok(TwoClusterSpec { a, r })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Inter-cluster kernel weight `exp(-2a^2)`, in (0, 1] for `a >= 0`.
    pub fn s(&self) -> f64 {
        libm::exp(-2.0 * self.a * self.a)
    }

    /// Column-mass correction `(r + s)/(r s + 1)`; exactly 1 at `r = 1`.
    pub fn q(&self) -> f64 {
        let s = self.s();
        (self.r + s) / (self.r * s + 1.0)
    }
}

/// Distance between the cluster centers after one upper-normalized step.
pub fn center_distance_unas(spec: &TwoClusterSpec) -> f64 {
    let s = spec.s();
    let r = spec.r();
    2.0 * r * (1.0 - s * s) * spec.a() / ((1.0 + r * s) * (r + s))
}

/// Distance between the cluster centers after one doubly-normalized step.
/// Shares its term ordering with [`center_distance_unas`] so the two agree
/// bitwise at `r = 1`, where `q` evaluates to exactly 1.
pub fn center_distance_dnas(spec: &TwoClusterSpec) -> f64 {
    let s = spec.s();
    let r = spec.r();
    let q = spec.q();
    (2.0 * q) * r * (1.0 - s * s) * spec.a() / ((q + r * s) * (r + s * q))
}

/// One row of a ratio sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub unas_dist: f64,
    pub dnas_dist: f64,
}

/// Evaluates both closed forms over a grid of mass ratios at fixed `a`.
pub fn sweep_ratio(a: f64, r_values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(r_values.len());
    for &r in r_values {
        let spec = TwoClusterSpec::new(a, r)?;
        rows.push(SweepRow {
            r,
            unas_dist: center_distance_unas(&spec),
            dnas_dist: center_distance_dnas(&spec),
        });
    }
    Ok(rows)
}

/// Per-step cluster metrics of a 2-D simulation.
#[derive(Clone, Copy, Debug)]
pub struct StepMetrics {
    /// Distance between the two label-wise centroids.
    pub between_dist: f64,
    /// Largest pairwise distance inside cluster 0.
    pub spread_0: f64,
    /// Largest pairwise distance inside cluster 1.
    pub spread_1: f64,
}

/// Snapshots and metrics from a multi-step 2-D simulation; entry 0 is the
/// initial cloud, so there is one snapshot and metric row per step plus
/// one.
#[derive(Clone, Debug)]
pub struct CollapseTrajectory {
    pub snapshots: Vec<Matrix>,
    pub labels: Vec<u8>,
    pub metrics: Vec<StepMetrics>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn cluster_metrics(points: &Matrix, labels: &[u8]) -> StepMetrics {
    let mut centroid = [[0.0_f64; 2]; 2];
    let mut count = [0usize; 2];
    for (i, &l) in labels.iter().enumerate() {
        centroid[l as usize][0] += points.get(i, 0);
        centroid[l as usize][1] += points.get(i, 1);
        count[l as usize] += 1;
    }
    for l in 0..2 {
        centroid[l][0] /= count[l] as f64;
        centroid[l][1] /= count[l] as f64;
    }
    let between_dist = dist(&centroid[0], &centroid[1]);
    let mut spread = [0.0_f64; 2];
    for i in 0..points.rows() {
        for j in (i + 1)..points.rows() {
            if labels[i] == labels[j] {
                let d = dist(points.row(i), points.row(j));
                let l = labels[i] as usize;
                spread[l] = spread[l].max(d);
            }
        }
    }
    StepMetrics { between_dist, spread_0: spread[0], spread_1: spread[1] }
}

/// Runs `steps` self-attention updates on a 2-D point cloud, treating the
/// points as both queries and keys with identity transforms and the
/// norm-matched default priors, and records cluster metrics after every
/// step.
pub fn simulate_2d(
    points: &Matrix,
    labels: &[u8],
    steps: usize,
    scheme: Scheme,
) -> Result<CollapseTrajectory> {
    if points.cols() != 2 {
        return Err(Error::InvalidArgument { context: "simulation points must be 2-D" });
    }
    if labels.len() != points.rows() {
        return Err(Error::InvalidArgument { context: "one label per point is required" });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument { context: "labels must be 0 or 1" });
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::InvalidArgument { context: "both cluster labels must appear" });
    }
    let update = match scheme {
        Scheme::Unas => fixed_point_unas,
        Scheme::Dnas => fixed_point_dnas,
        Scheme::Hnas => {
            return Err(Error::InvalidArgument {
                context: "collapse simulation supports unas and dnas",
            })
        }
    };
    let mut snapshots = Vec::with_capacity(steps + 1);
    let mut metrics = Vec::with_capacity(steps + 1);
    let mut current = points.clone();
    snapshots.push(current.clone());
    metrics.push(cluster_metrics(&current, labels));
    for _ in 0..steps {
        let priors = default_priors(&current);
        current = update(&current, &current, &priors)?;
        snapshots.push(current.clone());
        metrics.push(cluster_metrics(&current, labels));
    }
    Ok(CollapseTrajectory { snapshots, labels: labels.to_vec(), metrics })
}
