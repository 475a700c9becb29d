//! File formats: JSON matrix/mask/parameter schemas and the CSV artifact
//! writers. All floats in CSV carry 17 significant digits so files
//! round-trip exactly and reruns are byte-identical.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use attnlab_core::{CollapseTrajectory, Histogram, Mask, Matrix, SweepRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum FileError {
    Io { path: PathBuf, err: std::io::Error },
    Parse { path: PathBuf, err: serde_json::Error },
    Invalid { path: PathBuf, reason: String },
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileError::Io { path, err } => write!(f, "{}: {err}", path.display()),
            FileError::Parse { path, err } => write!(f, "{}: {err}", path.display()),
            FileError::Invalid { path, reason } => write!(f, "{}: {reason}", path.display()),
        }
    }
}

impl std::error::Error for FileError {}

/// On-disk matrix schema: row-major `data` of length `rows * cols`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixFile { rows: m.rows(), cols: m.cols(), data: m.data().to_vec() }
    }

    pub fn into_matrix(self, path: &Path) -> Result<Matrix, FileError> {
        let m = Matrix::from_vec(self.rows, self.cols, self.data).map_err(|e| {
            FileError::Invalid { path: path.to_path_buf(), reason: e.to_string() }
        })?;
        m.check_finite("matrix file").map_err(|e| FileError::Invalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(m)
    }
}

/// On-disk mask schema: row-major booleans, `true` = participates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaskFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

/// One head's transforms; `u` is the optional hybrid mixing weight.
#[derive(Clone, Debug, Deserialize)]
pub struct HeadSpecFile {
    pub q: MatrixFile,
    pub k: MatrixFile,
    pub v: MatrixFile,
    #[serde(default)]
    pub u: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ParamsFile {
    pub heads: Vec<HeadSpecFile>,
}

/// Output of the feature-mode forward pass: per-head weights plus the
/// concatenated output features.
#[derive(Serialize)]
pub struct AttnOutputFile {
    pub weights: Vec<MatrixFile>,
    pub output: MatrixFile,
}

/// Column-mass diagnostics report (the histogram goes to CSV).
#[derive(Serialize)]
pub struct ReportFile {
    pub column_mass: Vec<f64>,
    pub explained_away: Vec<bool>,
    pub epsilon: f64,
    pub lower_bound_ok: bool,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path)
        .map_err(|err| FileError::Io { path: path.to_path_buf(), err })?;
    serde_json::from_str(&text).map_err(|err| FileError::Parse { path: path.to_path_buf(), err })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|err| FileError::Parse { path: path.to_path_buf(), err })?;
    text.push('\n');
    fs::write(path, text).map_err(|err| FileError::Io { path: path.to_path_buf(), err })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, FileError> {
    read_json::<MatrixFile>(path)?.into_matrix(path)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), FileError> {
    write_json(path, &MatrixFile::from_matrix(m))
}

pub fn read_mask(path: &Path) -> Result<Mask, FileError> {
    let file: MaskFile = read_json(path)?;
    Mask::from_vec(file.rows, file.cols, file.data)
        .map_err(|e| FileError::Invalid { path: path.to_path_buf(), reason: e.to_string() })
}

/// 17 significant digits: enough for exact f64 round trips.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<(), FileError> {
    let mut text = String::with_capacity(header.len() + 1 + rows.len() * 32);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text).map_err(|err| FileError::Io { path: path.to_path_buf(), err })
}

/// Residual history, one row per completed iteration.
pub fn write_history_csv(path: &Path, history: &[f64]) -> Result<(), FileError> {
    let rows: Vec<String> = history
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{},{}", i + 1, fmt_float(*r)))
        .collect();
    write_lines(path, "iter,residual", &rows)
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<(), FileError> {
    let rows: Vec<String> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!("{},{},{}", fmt_float(hist.edges[i]), fmt_float(hist.edges[i + 1]), c)
        })
        .collect();
    write_lines(path, "bin_left,bin_right,count", &rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), FileError> {
    let lines: Vec<String> = rows
        .iter()
        .map(|row| {
            format!(
                "{},{},{}",
                fmt_float(row.r),
                fmt_float(row.unas_dist),
                fmt_float(row.dnas_dist)
            )
        })
        .collect();
    write_lines(path, "r,unas_dist,dnas_dist", &lines)
}

pub fn write_trajectory_csv(path: &Path, t: &CollapseTrajectory) -> Result<(), FileError> {
    let mut lines = Vec::new();
    for (step, snap) in t.snapshots.iter().enumerate() {
        for i in 0..snap.rows() {
            lines.push(format!(
                "{},{},{},{},{}",
                step,
                i,
                t.labels[i],
                fmt_float(snap.get(i, 0)),
                fmt_float(snap.get(i, 1))
            ));
        }
    }
    write_lines(path, "step,point_id,label,x,y", &lines)
}

pub fn write_metrics_csv(path: &Path, t: &CollapseTrajectory) -> Result<(), FileError> {
    let lines: Vec<String> = t
        .metrics
        .iter()
        .enumerate()
        .map(|(step, m)| {
            format!(
                "{},{},{},{}",
                step,
                fmt_float(m.between_dist),
                fmt_float(m.spread_0),
                fmt_float(m.spread_1)
            )
        })
        .collect();
    write_lines(path, "step,between_dist,spread_0,spread_1", &lines)
}

/// Log-likelihood trace: row 0 is the state before any update.
pub fn write_loglik_csv(path: &Path, values: &[f64]) -> Result<(), FileError> {
    let rows: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(step, v)| format!("{step},{}", fmt_float(*v)))
        .collect();
    write_lines(path, "step,log_likelihood", &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.7775887729928043e-11, 12345.6789] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn matrix_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = Matrix::from_vec(2, 3, vec![1.0, 0.25, -3.5, 0.0, 1e-12, 7.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_json_rejects_bad_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#).unwrap();
        let err = read_matrix(&path).unwrap_err();
        assert!(err.to_string().contains("m.json"));
        fs::write(&path, r#"{"rows":1,"cols":1,"data":[null]}"#).unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let err = read_matrix(Path::new("/no/such/file.json")).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.json"));
    }

    #[test]
    fn csv_headers_match_the_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let hist_path = dir.path().join("h.csv");
        write_history_csv(&hist_path, &[0.5, 0.25]).unwrap();
        let text = fs::read_to_string(&hist_path).unwrap();
        assert!(text.starts_with("iter,residual\n1,"));
        assert_eq!(text.lines().count(), 3);

        let hg = Histogram { edges: vec![-2.0, -1.0, 0.0], counts: vec![1, 3] };
        let hg_path = dir.path().join("hg.csv");
        write_histogram_csv(&hg_path, &hg).unwrap();
        let text = fs::read_to_string(&hg_path).unwrap();
        assert!(text.starts_with("bin_left,bin_right,count\n"));
        assert!(text.trim_end().ends_with(",3"));
    }
}
