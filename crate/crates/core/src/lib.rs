//! Numerical core for comparing attention weight-normalization schemes:
//! row-stochastic (upper-normalized), doubly-normalized, and hybrid
//! blends, together with their Gaussian-mixture and optimal-transport
//! readings, explaining-away diagnostics, and mode-collapse analysis.
//!
//! The crate is `no_std` (with `alloc`) and fully deterministic: the same
//! inputs produce bitwise-identical outputs on every run.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attention;
pub mod collapse;
pub mod diagnostics;
pub mod error;
pub mod gmm;
pub mod grad;
pub mod matrix;
pub mod sinkhorn;

pub use attention::{
    attention_forward, dnas_weights, hnas_weights, logits, padded_query_transform, unas_weights,
    AttentionOutput, ForwardCache, HeadParams, Scheme,
};
pub use collapse::{
    center_distance_dnas, center_distance_unas, simulate_2d, sweep_ratio, CollapseTrajectory,
    StepMetrics, SweepRow, TwoClusterSpec,
};
pub use diagnostics::{
    analyze, column_mass_lower_bound, ExplainAwayReport, Histogram, DEFAULT_BINS, DEFAULT_EPSILON,
};
pub use error::{Error, Result};
pub use gmm::{
    default_priors, fixed_point_dnas, fixed_point_unas, log_likelihood, responsibilities,
    Direction, GmmConfig,
};
pub use grad::{
    check_attention_gradients, check_attention_gradients_scaled, dnas_backward, finite_diff_check,
    hnas_backward, unas_backward, GradBundle, REL_ERROR_FLOOR,
};
pub use matrix::{col_softmax, row_normalize, row_softmax, Mask, Matrix};
pub use sinkhorn::{
    ds_residual, sinkhorn_run, transport_objective, unas_closed_form, SinkhornReport,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
