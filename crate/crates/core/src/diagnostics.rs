//! Explaining-away measurement: how much total attention mass each
//! lower-layer position (column) retains, which columns fall below the
//! starvation threshold, and the log-mass histogram used to visualize the
//! distribution. Doubly-normalized weights keep every column at or above
//! 1/S; single row softmax has no such floor.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default starvation threshold on column mass.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Default histogram bin count.
pub const DEFAULT_BINS: usize = 50;

/// Histogram over the natural log of column masses: `edges` has one more
/// entry than `counts`, and the last edge is always 0 (mass 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Column-mass analysis of one row-stochastic weight matrix.
#[derive(Clone, Debug)]
pub struct ExplainAwayReport {
    /// Total incoming weight per column.
    pub column_mass: Vec<f64>,
    /// Whether each column's mass fell below `epsilon`.
    pub explained_away: Vec<bool>,
    /// The threshold the classification used.
    pub epsilon: f64,
    /// True when the smallest column mass is at least `1/S` (up to 1e-12),
    /// the floor every doubly-normalized weight matrix must satisfy.
    pub lower_bound_ok: bool,
    /// Distribution of `ln(column mass)`; zero masses land in the lowest
    /// bin, masses above 1 in the highest.
    pub log_mass_histogram: Histogram,
}

/// Analyzes the column masses of a row-stochastic matrix.
///
/// The histogram spans `[min observed log-mass, 0]`, widened to unit width
/// when no column falls below mass 1.
pub fn analyze(p: &Matrix, epsilon: f64, bins: usize) -> Result<ExplainAwayReport> {
    if bins == 0 {
        return Err(Error::InvalidArgument { context: "histogram needs at least one bin" });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument { context: "epsilon must be positive and finite" });
    }
    for i in 0..p.rows() {
        let mut sum = 0.0;
        for j in 0..p.cols() {
            let v = p.get(i, j);
            if v < 0.0 {
                return Err(Error::NegativeEntry { context: "attention weights", row: i, col: j });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::NotRowStochastic { row: i, sum });
        }
    }

    let mut column_mass = Vec::with_capacity(p.cols());
    for j in 0..p.cols() {
        let mut mass = 0.0;
        for i in 0..p.rows() {
            mass += p.get(i, j);
        }
        column_mass.push(mass);
    }
    let explained_away: Vec<bool> = column_mass.iter().map(|&m| m < epsilon).collect();
    let min_mass = column_mass.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let lower_bound_ok = min_mass >= column_mass_lower_bound(p.cols()) - 1e-12;

    // Lowest finite log mass spans the histogram; all-zero masses cannot
    // happen for a row-stochastic input (total mass equals the row count).
    let mut lo = f64::INFINITY;
    for &m in &column_mass {
        if m > 0.0 {
            lo = lo.min(libm::log(m));
        }
    }
    if !(lo < 0.0) {
        lo = -1.0;
    }
    let hi = 0.0;
    let mut edges = Vec::with_capacity(bins + 1);
    for i in 0..=bins {
        edges.push(lo + (hi - lo) * i as f64 / bins as f64);
    }
    let mut counts = alloc::vec![0usize; bins];
    for &m in &column_mass {
        let idx = if m == 0.0 {
            0
        } else {
            let x = libm::log(m);
            if x >= hi {
                bins - 1
            } else if x <= lo {
                0
            } else {
                let raw = ((x - lo) / (hi - lo) * bins as f64) as usize;
                raw.min(bins - 1)
            }
        };
        counts[idx] += 1;
    }

    Ok(ExplainAwayReport {
        column_mass,
        explained_away,
        epsilon,
        lower_bound_ok,
        log_mass_histogram: Histogram { edges, counts },
    })
}

/// The guaranteed floor on doubly-normalized column mass: `1/S` for `S`
/// lower-layer positions.
pub fn column_mass_lower_bound(s: usize) -> f64 {
    assert!(s > 0, "at least one position is required");
    1.0 / s as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{dnas_weights, unas_weights};

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn uniform_matrix_is_healthy() {
        let p = mat(4, 4, &[0.25; 16]);
        let rep = analyze(&p, DEFAULT_EPSILON, 10).unwrap();
        assert!(rep.column_mass.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        assert!(rep.explained_away.iter().all(|&e| !e));
        assert!(rep.lower_bound_ok);
        assert_eq!(rep.log_mass_histogram.counts.iter().sum::<usize>(), 4);
        assert_eq!(*rep.log_mass_histogram.edges.last().unwrap(), 0.0);
        assert_eq!(rep.log_mass_histogram.edges.len(), 11);
    }

    #[test]
    fn starved_column_is_flagged() {
        let z = mat(2, 2, &[25.0, 0.0, 25.0, 0.0]);
        let p = unas_weights(&z, None).unwrap();
        let rep = analyze(&p, DEFAULT_EPSILON, DEFAULT_BINS).unwrap();
        assert_eq!(rep.explained_away, alloc::vec![false, true]);
        assert!(rep.column_mass[1] < 1e-8);
        let m = (-25.0_f64).exp();
        assert!((rep.column_mass[1] - 2.0 * m / (1.0 + m)).abs() < 1e-22);
        assert!(!rep.lower_bound_ok);

        let d = dnas_weights(&z, None).unwrap();
        let rep = analyze(&d, DEFAULT_EPSILON, DEFAULT_BINS).unwrap();
        assert!(rep.explained_away.iter().all(|&e| !e));
        assert!(rep.lower_bound_ok);
    }

    #[test]
    fn total_mass_equals_row_count() {
        let z = mat(3, 3, &[0.4, -1.2, 2.0, 0.0, 1.7, -0.3, 2.2, 0.5, 1.1]);
        for p in [unas_weights(&z, None).unwrap(), dnas_weights(&z, None).unwrap()] {
            let rep = analyze(&p, DEFAULT_EPSILON, DEFAULT_BINS).unwrap();
            let total: f64 = rep.column_mass.iter().sum();
            assert!((total - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_stochastic_input_naming_the_row() {
        let p = mat(2, 2, &[0.5, 0.4, 1.0, 0.0]);
        match analyze(&p, DEFAULT_EPSILON, DEFAULT_BINS).unwrap_err() {
            Error::NotRowStochastic { row, sum } => {
                assert_eq!(row, 0);
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(
            analyze(&mat(1, 2, &[1.2, -0.2]), DEFAULT_EPSILON, DEFAULT_BINS),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn histogram_spans_min_log_mass_to_zero() {
        // Column masses 1.5 and 0.5: the span is [ln 0.5, 0].
        let p = mat(2, 2, &[0.75, 0.25, 0.75, 0.25]);
        let rep = analyze(&p, DEFAULT_EPSILON, 4).unwrap();
        let h = &rep.log_mass_histogram;
        assert!((h.edges[0] - 0.5_f64.ln()).abs() < 1e-15);
        assert_eq!(*h.edges.last().unwrap(), 0.0);
        // Mass 0.5 sits on the lower edge (bin 0); mass 1.5 clamps into
        // the top bin.
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[3], 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn analyze_validates_arguments() {
        let p = mat(1, 1, &[1.0]);
        assert!(matches!(analyze(&p, 1e-8, 0), Err(Error::InvalidArgument { .. })));
        assert!(matches!(analyze(&p, -1.0, 5), Err(Error::InvalidArgument { .. })));
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(column_mass_lower_bound(1), 1.0);
        assert_eq!(column_mass_lower_bound(2), 0.5);
        assert_eq!(column_mass_lower_bound(100), 0.01);
        // On the log scale used by the histogram, the 100-position floor
        // sits at -ln(100).
        assert!((column_mass_lower_bound(100).ln() + 100.0_f64.ln()).abs() < 1e-15);
    }
}
