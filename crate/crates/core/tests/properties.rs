//! Randomized invariant checks for the normalization schemes, the
//! transport iteration, and the collapse closed forms.

use attnlab_core::{
    center_distance_dnas, center_distance_unas, col_softmax, dnas_weights, ds_residual,
    hnas_weights, row_normalize, row_softmax, sinkhorn_run, transport_objective, unas_weights,
    Matrix, TwoClusterSpec,
};
use proptest::prelude::*;

fn logit_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-30.0..30.0_f64, rows * cols)
        .prop_map(move |data| Matrix::from_vec(rows, cols, data).unwrap())
}

fn shape_and_logits() -> impl Strategy<Value = Matrix> {
    (1..6_usize, 1..6_usize)
        .prop_flat_map(|(r, c)| logit_matrix(r, c))
}

proptest! {
    #[test]
    fn row_softmax_rows_are_stochastic(z in shape_and_logits()) {
        let p = row_softmax(&z, None).unwrap();
        for i in 0..p.rows() {
            let sum: f64 = p.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
    }

    #[test]
    fn col_softmax_columns_are_stochastic(z in shape_and_logits()) {
        let p = col_softmax(&z, None).unwrap();
        for j in 0..p.cols() {
            let sum: f64 = (0..p.rows()).map(|i| p.get(i, j)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn row_softmax_is_shift_invariant(z in logit_matrix(3, 4), shift in -20.0..20.0_f64) {
        let shifted = Matrix::from_vec(
            3,
            4,
            (0..12).map(|idx| z.data()[idx] + shift).collect(),
        ).unwrap();
        let a = row_softmax(&z, None).unwrap();
        let b = row_softmax(&shifted, None).unwrap();
        for idx in 0..12 {
            prop_assert!((a.data()[idx] - b.data()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn dnas_columns_keep_the_guaranteed_mass(z in shape_and_logits()) {
        let p = dnas_weights(&z, None).unwrap();
        let floor = 1.0 / p.cols() as f64;
        for j in 0..p.cols() {
            let mass: f64 = (0..p.rows()).map(|i| p.get(i, j)).sum();
            prop_assert!(mass >= floor - 1e-12, "column {j} mass {mass} below {floor}");
        }
    }

    #[test]
    fn dnas_ignores_per_column_shifts(z in logit_matrix(3, 3), shifts in prop::collection::vec(-15.0..15.0_f64, 3)) {
        let shifted = Matrix::from_vec(
            3,
            3,
            (0..9).map(|idx| z.data()[idx] + shifts[idx % 3]).collect(),
        ).unwrap();
        let a = dnas_weights(&z, None).unwrap();
        let b = dnas_weights(&shifted, None).unwrap();
        for idx in 0..9 {
            prop_assert!((a.data()[idx] - b.data()[idx]).abs() < 1e-11);
        }
    }

    #[test]
    fn hybrid_endpoints_reproduce_the_pure_schemes_bitwise(z in logit_matrix(4, 4)) {
        let u = unas_weights(&z, None).unwrap();
        let d = dnas_weights(&z, None).unwrap();
        let h0 = hnas_weights(&z, 0.0, None).unwrap();
        let h1 = hnas_weights(&z, 1.0, None).unwrap();
        for idx in 0..16 {
            prop_assert_eq!(h0.data()[idx].to_bits(), u.data()[idx].to_bits());
            prop_assert_eq!(h1.data()[idx].to_bits(), d.data()[idx].to_bits());
        }
    }

    #[test]
    fn hybrid_rows_are_stochastic_for_any_blend(z in logit_matrix(3, 5), u in 0.0..=1.0_f64) {
        let p = hnas_weights(&z, u, None).unwrap();
        for i in 0..p.rows() {
            let sum: f64 = p.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn row_normalize_is_idempotent_on_random_positives(
        data in prop::collection::vec(1e-6..10.0_f64, 12),
    ) {
        let m = Matrix::from_vec(3, 4, data).unwrap();
        let once = row_normalize(&m).unwrap();
        let twice = row_normalize(&once).unwrap();
        for idx in 0..12 {
            prop_assert!((once.data()[idx] - twice.data()[idx]).abs() < 1e-15);
        }
    }

    #[test]
    fn collapse_distances_are_ordered_and_bounded(a in 0.01..4.0_f64, log_r in -2.0..2.0_f64) {
        let spec = TwoClusterSpec::new(a, 10.0_f64.powf(log_r)).unwrap();
        let u = center_distance_unas(&spec);
        let d = center_distance_dnas(&spec);
        prop_assert!(u >= 0.0 && d >= 0.0);
        prop_assert!(d >= u - 1e-12);
        prop_assert!(u <= 2.0 * a + 1e-12);
        prop_assert!(d <= 2.0 * a + 1e-12);
    }

    #[test]
    fn sinkhorn_limit_beats_random_doubly_stochastic_mixtures(
        z in logit_matrix(2, 2),
        t in 0.0..=1.0_f64,
    ) {
        let report = sinkhorn_run(&z, 3000, 1e-13).unwrap();
        prop_assume!(report.converged);
        // Any 2x2 doubly stochastic matrix is t I + (1-t) (J - I).
        let candidate = Matrix::from_vec(2, 2, vec![t, 1.0 - t, 1.0 - t, t]).unwrap();
        let best = transport_objective(&report.matrix, &z).unwrap();
        let other = transport_objective(&candidate, &z).unwrap();
        prop_assert!(best <= other + 1e-6, "limit {best} above candidate {other}");
    }

    #[test]
    fn sinkhorn_residuals_shrink_toward_the_tolerance(z in logit_matrix(3, 3)) {
        let report = sinkhorn_run(&z, 5000, 1e-10).unwrap();
        prop_assume!(report.converged);
        prop_assert!(ds_residual(&report.matrix) < 1e-9);
        let last = *report.residual_history.last().unwrap();
        prop_assert!(last < 1e-10);
    }
}
