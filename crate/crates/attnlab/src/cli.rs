//! Command-line front end: argument parsing, config-file merging, dispatch
//! into the library, and artifact writing.
//!
//! Every subcommand accepts `--config path.json` holding the same keys as
//! its flags; explicit flags win over config values, and built-in defaults
//! fill whatever remains. Exit codes: 0 success, 1 failed check (gradient
//! check over threshold), 2 input or usage error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use attnlab_core::{
    analyze, attention_forward, check_attention_gradients_scaled, default_priors, dnas_weights,
    fixed_point_dnas, fixed_point_unas, hnas_weights, log_likelihood, simulate_2d, sinkhorn_run,
    sweep_ratio, unas_weights, Direction, GmmConfig, HeadParams, Matrix, Scheme, DEFAULT_BINS,
    DEFAULT_EPSILON, DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::formats::{
    self, AttnOutputFile, FileError, HeadSpecFile, MatrixFile, ParamsFile, ReportFile,
};
use crate::sample;

/// Failures the front end distinguishes by exit code.
#[derive(Debug)]
pub enum CmdError {
    /// Bad input or usage: exit code 2.
    Input(String),
    /// A requested check ran and failed: exit code 1.
    Check(String),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Input(_) => 2,
            CmdError::Check(_) => 1,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Input(msg) | CmdError::Check(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CmdError {}

impl From<FileError> for CmdError {
    fn from(e: FileError) -> Self {
        CmdError::Input(e.to_string())
    }
}

impl From<attnlab_core::Error> for CmdError {
    fn from(e: attnlab_core::Error) -> Self {
        CmdError::Input(e.to_string())
    }
}

pub type CmdResult<T> = Result<T, CmdError>;

#[derive(Parser)]
#[command(
    name = "attnlab",
    version,
    about = "Numerical laboratory for attention weight normalization: scheme forward passes, \
             alternating-normalization transport iterations, column-mass diagnostics, \
             Gaussian-mixture fixed points, mode-collapse analytics, and gradient checks."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Compute attention weights (and, with features, outputs) for a scheme.
    Attn(AttnArgs),
    /// Alternate column/row normalization toward the doubly stochastic limit.
    Sinkhorn(SinkhornArgs),
    /// Column-mass diagnostics: explained-away flags and a log-mass histogram.
    Diagnose(DiagnoseArgs),
    /// Apply Gaussian-mixture fixed-point updates to query rows.
    Gmm(GmmArgs),
    /// Mode-collapse analytics: closed-form sweeps and 2-D simulations.
    Collapse(CollapseCmd),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

pub fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Attn(args) => cmd_attn(args),
        Command::Sinkhorn(args) => cmd_sinkhorn(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Gmm(args) => cmd_gmm(args),
        Command::Collapse(cmd) => match cmd.mode {
            CollapseMode::Sweep(args) => cmd_collapse_sweep(args),
            CollapseMode::Simulate(args) => cmd_collapse_simulate(args),
        },
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> CmdResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => Ok(formats::read_json(p)?),
    }
}

fn require<T>(value: Option<T>, name: &str) -> CmdResult<T> {
    value.ok_or_else(|| CmdError::Input(format!("missing required option --{name}")))
}

fn parse_scheme(s: &str) -> CmdResult<Scheme> {
    Scheme::from_str(s).map_err(|e| CmdError::Input(e.to_string()))
}

/// A point in the plane, written on the command line as "x,y".
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(transparent)]
pub struct Point2(pub [f64; 2]);

fn parse_point(s: &str) -> Result<Point2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"x,y\", got \"{s}\""));
    }
    let x: f64 = parts[0].trim().parse().map_err(|_| format!("bad coordinate \"{}\"", parts[0]))?;
    let y: f64 = parts[1].trim().parse().map_err(|_| format!("bad coordinate \"{}\"", parts[1]))?;
    Ok(Point2([x, y]))
}

/// A comma-separated list of floats on the command line.
#[derive(Clone, Debug, Deserialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

fn parse_float_list(s: &str) -> Result<FloatList, String> {
    let mut values = Vec::new();
    for part in s.split(',') {
        values.push(part.trim().parse::<f64>().map_err(|_| format!("bad number \"{part}\""))?);
    }
    Ok(FloatList(values))
}

// ---------------------------------------------------------------------------
// attn

#[derive(Args)]
pub struct AttnArgs {
    /// Normalization scheme: unas, dnas, or hnas.
    #[arg(long)]
    scheme: Option<String>,
    /// Hybrid mixing weight in [0, 1]; used by hnas only.
    #[arg(long)]
    u: Option<f64>,
    /// Logits matrix JSON (logits mode; excludes --x/--params).
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Feature matrix JSON (feature mode; requires --params).
    #[arg(long)]
    x: Option<PathBuf>,
    /// Head parameter JSON: {"heads":[{"q":…,"k":…,"v":…,"u":…}, …]}.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Boolean mask JSON; true entries participate.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Output JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttnConfig {
    scheme: Option<String>,
    u: Option<f64>,
    logits: Option<PathBuf>,
    x: Option<PathBuf>,
    params: Option<PathBuf>,
    mask: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn cmd_attn(args: AttnArgs) -> CmdResult<()> {
    let cfg: AttnConfig = load_config(&args.config)?;
    let scheme = parse_scheme(&require(args.scheme.or(cfg.scheme), "scheme")?)?;
    let u = args.u.or(cfg.u).unwrap_or(0.5);
    let logits_path = args.logits.or(cfg.logits);
    let x_path = args.x.or(cfg.x);
    let params_path = args.params.or(cfg.params);
    let mask_path = args.mask.or(cfg.mask);
    let out = require(args.out.or(cfg.out), "out")?;

    let mask = match &mask_path {
        Some(p) => Some(formats::read_mask(p)?),
        None => None,
    };

    match (logits_path, x_path, params_path) {
        (Some(zp), None, None) => {
            let z = formats::read_matrix(&zp)?;
            let weights = match scheme {
                Scheme::Unas => unas_weights(&z, mask.as_ref())?,
                Scheme::Dnas => dnas_weights(&z, mask.as_ref())?,
                Scheme::Hnas => hnas_weights(&z, u, mask.as_ref())?,
            };
            formats::write_matrix(&out, &weights)?;
            println!("wrote {} weights for a {}x{} logit matrix", scheme.name(), z.rows(), z.cols());
            Ok(())
        }
        (None, Some(xp), Some(pp)) => {
            let x = formats::read_matrix(&xp)?;
            let file: ParamsFile = formats::read_json(&pp)?;
            if file.heads.is_empty() {
                return Err(CmdError::Input(format!(
                    "{}: parameter file lists no heads",
                    pp.display()
                )));
            }
            let mut heads = Vec::with_capacity(file.heads.len());
            for spec in file.heads {
                heads.push(head_from_spec(spec, &pp, u)?);
            }
            let fwd = attention_forward(&x, &heads, scheme, mask.as_ref())?;
            let payload = AttnOutputFile {
                weights: fwd.weights.iter().map(MatrixFile::from_matrix).collect(),
                output: MatrixFile::from_matrix(&fwd.output),
            };
            formats::write_json(&out, &payload)?;
            println!(
                "wrote {} weights and outputs for {} head(s) over {} positions",
                scheme.name(),
                fwd.weights.len(),
                x.rows()
            );
            Ok(())
        }
        _ => Err(CmdError::Input(
            "provide either --logits, or both --x and --params".to_string(),
        )),
    }
}

fn head_from_spec(spec: HeadSpecFile, path: &Path, default_u: f64) -> CmdResult<HeadParams> {
    let q = spec.q.into_matrix(path)?;
    let k = spec.k.into_matrix(path)?;
    let v = spec.v.into_matrix(path)?;
    Ok(HeadParams::new(q, k, v)?.with_hybrid_weight(spec.u.unwrap_or(default_u))?)
}

// ---------------------------------------------------------------------------
// sinkhorn

#[derive(Args)]
pub struct SinkhornArgs {
    /// Logits matrix JSON; the kernel is exp(logits).
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Iteration budget (default 1000).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Convergence tolerance on the stochasticity residual (default 1e-6).
    #[arg(long)]
    tol: Option<f64>,
    /// Output JSON path for the final matrix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output CSV path for the residual history.
    #[arg(long)]
    history: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SinkhornConfig {
    logits: Option<PathBuf>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    history: Option<PathBuf>,
}

fn cmd_sinkhorn(args: SinkhornArgs) -> CmdResult<()> {
    let cfg: SinkhornConfig = load_config(&args.config)?;
    let logits = require(args.logits.or(cfg.logits), "logits")?;
    let max_iters = args.max_iters.or(cfg.max_iters).unwrap_or(DEFAULT_MAX_ITERS);
    let tol = args.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    let out = require(args.out.or(cfg.out), "out")?;
    let history = require(args.history.or(cfg.history), "history")?;

    let z = formats::read_matrix(&logits)?;
    let report = sinkhorn_run(&z, max_iters, tol)?;
    formats::write_matrix(&out, &report.matrix)?;
    formats::write_history_csv(&history, &report.residual_history)?;
    let residual = report.residual_history.last().copied().unwrap_or(0.0);
    if report.converged {
        println!("converged after {} iteration(s), residual {:.3e}", report.iterations, residual);
    } else {
        println!(
            "stopped at the {}-iteration budget, residual {:.3e}",
            report.iterations, residual
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Row-stochastic weight matrix JSON to analyze.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Explained-away threshold on column mass (default 1e-8).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Histogram bin count (default 50).
    #[arg(long)]
    bins: Option<usize>,
    /// Output JSON path for the report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output CSV path for the log-mass histogram.
    #[arg(long)]
    histogram: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseConfig {
    weights: Option<PathBuf>,
    epsilon: Option<f64>,
    bins: Option<usize>,
    report: Option<PathBuf>,
    histogram: Option<PathBuf>,
}

fn cmd_diagnose(args: DiagnoseArgs) -> CmdResult<()> {
    let cfg: DiagnoseConfig = load_config(&args.config)?;
    let weights = require(args.weights.or(cfg.weights), "weights")?;
    let epsilon = args.epsilon.or(cfg.epsilon).unwrap_or(DEFAULT_EPSILON);
    let bins = args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS);
    let report_path = require(args.report.or(cfg.report), "report")?;
    let histogram_path = require(args.histogram.or(cfg.histogram), "histogram")?;

    let p = formats::read_matrix(&weights)?;
    let rep = analyze(&p, epsilon, bins)?;
    let starved = rep.explained_away.iter().filter(|&&e| e).count();
    let min_mass = rep.column_mass.iter().cloned().fold(f64::INFINITY, f64::min);
    formats::write_json(
        &report_path,
        &ReportFile {
            column_mass: rep.column_mass,
            explained_away: rep.explained_away,
            epsilon: rep.epsilon,
            lower_bound_ok: rep.lower_bound_ok,
        },
    )?;
    formats::write_histogram_csv(&histogram_path, &rep.log_mass_histogram)?;
    println!(
        "{starved} of {} column(s) explained away at epsilon {:.1e}; minimum column mass {:.3e}",
        p.cols(),
        epsilon,
        min_mass
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gmm

#[derive(Args)]
pub struct GmmArgs {
    /// Fixed-point scheme: unas or dnas.
    #[arg(long)]
    scheme: Option<String>,
    /// Query matrix JSON (rows are updated in place).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Key matrix JSON (fixed).
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Optional priors JSON array; defaults to norm-matched priors.
    #[arg(long)]
    priors: Option<PathBuf>,
    /// Number of fixed-point steps (default 1).
    #[arg(long)]
    steps: Option<usize>,
    /// Output JSON path for the final queries.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV path for the per-step log-likelihood trace.
    #[arg(long)]
    loglik: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmConfigFile {
    scheme: Option<String>,
    queries: Option<PathBuf>,
    keys: Option<PathBuf>,
    priors: Option<PathBuf>,
    steps: Option<usize>,
    out: Option<PathBuf>,
    loglik: Option<PathBuf>,
}

fn cmd_gmm(args: GmmArgs) -> CmdResult<()> {
    let cfg: GmmConfigFile = load_config(&args.config)?;
    let scheme = parse_scheme(&require(args.scheme.or(cfg.scheme), "scheme")?)?;
    if scheme == Scheme::Hnas {
        return Err(CmdError::Input(
            "the mixture fixed point is defined for unas and dnas".to_string(),
        ));
    }
    let queries_path = require(args.queries.or(cfg.queries), "queries")?;
    let keys_path = require(args.keys.or(cfg.keys), "keys")?;
    let priors_path = args.priors.or(cfg.priors);
    let steps = args.steps.or(cfg.steps).unwrap_or(1);
    let out = require(args.out.or(cfg.out), "out")?;
    let loglik_path = args.loglik.or(cfg.loglik);

    let mut q = formats::read_matrix(&queries_path)?;
    let k = formats::read_matrix(&keys_path)?;
    let fixed_priors: Option<Vec<f64>> = match &priors_path {
        Some(p) => Some(formats::read_json(p)?),
        None => None,
    };

    // Priors attach to the mixture centers: the keys when the keys explain
    // the queries (unas), the queries when the queries explain the keys
    // (dnas). Without explicit priors the norm-matched defaults are
    // recomputed from the current state each step.
    let priors_for = |q: &Matrix, k: &Matrix| -> Vec<f64> {
        match (&fixed_priors, scheme) {
            (Some(p), _) => p.clone(),
            (None, Scheme::Unas) => default_priors(k),
            _ => default_priors(q),
        }
    };
    let loglik_for = |q: &Matrix, k: &Matrix| -> CmdResult<f64> {
        let cfg = match scheme {
            Scheme::Unas => GmmConfig::new(
                Direction::LowerAsCenters,
                k.clone(),
                q.clone(),
                priors_for(q, k),
            )?,
            _ => GmmConfig::new(
                Direction::UpperAsCenters,
                q.clone(),
                k.clone(),
                priors_for(q, k),
            )?,
        };
        Ok(log_likelihood(&cfg))
    };

    let mut trace = vec![loglik_for(&q, &k)?];
    for _ in 0..steps {
        let priors = priors_for(&q, &k);
        q = match scheme {
            Scheme::Unas => fixed_point_unas(&q, &k, &priors)?,
            _ => fixed_point_dnas(&q, &k, &priors)?,
        };
        trace.push(loglik_for(&q, &k)?);
    }

    formats::write_matrix(&out, &q)?;
    if let Some(p) = loglik_path {
        formats::write_loglik_csv(&p, &trace)?;
    }
    println!(
        "{steps} {} fixed-point step(s); log-likelihood {:.6} -> {:.6}",
        scheme.name(),
        trace[0],
        trace[trace.len() - 1]
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// collapse

#[derive(Args)]
pub struct CollapseCmd {
    #[command(subcommand)]
    mode: CollapseMode,
}

#[derive(Subcommand)]
enum CollapseMode {
    /// Evaluate the closed-form center distances over a mass-ratio grid.
    Sweep(SweepArgs),
    /// Run multi-step self-attention updates on a 2-D two-cluster cloud.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Half distance between the cluster centers (default 1).
    #[arg(long)]
    a: Option<f64>,
    /// Comma-separated mass ratios (default: 81 log-spaced in [0.01, 100]).
    #[arg(long, value_parser = parse_float_list, allow_hyphen_values = true)]
    r_values: Option<FloatList>,
    /// Output CSV path for the sweep table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    a: Option<f64>,
    r_values: Option<FloatList>,
    out: Option<PathBuf>,
}

fn default_ratio_grid() -> Vec<f64> {
    // 81 log-spaced ratios covering 0.01 .. 100.
    (0..81).map(|i| 10.0_f64.powf(-2.0 + i as f64 * 0.05)).collect()
}

fn cmd_collapse_sweep(args: SweepArgs) -> CmdResult<()> {
    let cfg: SweepConfig = load_config(&args.config)?;
    let a = args.a.or(cfg.a).unwrap_or(1.0);
    let r_values =
        args.r_values.or(cfg.r_values).map(|l| l.0).unwrap_or_else(default_ratio_grid);
    let out = require(args.out.or(cfg.out), "out")?;

    let rows = sweep_ratio(a, &r_values)?;
    formats::write_sweep_csv(&out, &rows)?;
    println!("swept {} mass ratio(s) at half distance a = {a}", rows.len());
    Ok(())
}

#[derive(Args)]
struct SimulateArgs {
    /// Update scheme: unas or dnas.
    #[arg(long)]
    scheme: Option<String>,
    /// Number of self-attention steps (default 4).
    #[arg(long)]
    steps: Option<usize>,
    /// Seed for cluster sampling (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Points in cluster 0 (default 500).
    #[arg(long)]
    n0: Option<usize>,
    /// Points in cluster 1 (default 50).
    #[arg(long)]
    n1: Option<usize>,
    /// Center of cluster 0 as "x,y" (default "1.8,0.7").
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    center0: Option<Point2>,
    /// Center of cluster 1 as "x,y" (default "-1,-1").
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    center1: Option<Point2>,
    /// Per-coordinate sampling variance (default 0.1).
    #[arg(long)]
    variance: Option<f64>,
    /// Load points from a matrix JSON instead of sampling (needs --labels).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Labels JSON array of 0/1, one per loaded point.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output CSV path for the point trajectory.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Output CSV path for the per-step cluster metrics.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    scheme: Option<String>,
    steps: Option<usize>,
    seed: Option<u64>,
    n0: Option<usize>,
    n1: Option<usize>,
    center0: Option<Point2>,
    center1: Option<Point2>,
    variance: Option<f64>,
    points: Option<PathBuf>,
    labels: Option<PathBuf>,
    trajectory: Option<PathBuf>,
    metrics: Option<PathBuf>,
}

fn cmd_collapse_simulate(args: SimulateArgs) -> CmdResult<()> {
    let cfg: SimulateConfig = load_config(&args.config)?;
    let scheme = parse_scheme(&require(args.scheme.or(cfg.scheme), "scheme")?)?;
    let steps = args.steps.or(cfg.steps).unwrap_or(4);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let n0 = args.n0.or(cfg.n0).unwrap_or(500);
    let n1 = args.n1.or(cfg.n1).unwrap_or(50);
    let center0 = args.center0.or(cfg.center0).unwrap_or(Point2([1.8, 0.7])).0;
    let center1 = args.center1.or(cfg.center1).unwrap_or(Point2([-1.0, -1.0])).0;
    let variance = args.variance.or(cfg.variance).unwrap_or(0.1);
    let points_path = args.points.or(cfg.points);
    let labels_path = args.labels.or(cfg.labels);
    let trajectory = require(args.trajectory.or(cfg.trajectory), "trajectory")?;
    let metrics = require(args.metrics.or(cfg.metrics), "metrics")?;

    if !variance.is_finite() || variance <= 0.0 {
        return Err(CmdError::Input("variance must be positive and finite".to_string()));
    }

    let (points, labels) = match (points_path, labels_path) {
        (Some(pp), Some(lp)) => {
            let points = formats::read_matrix(&pp)?;
            let labels: Vec<u8> = formats::read_json(&lp)?;
            (points, labels)
        }
        (None, None) => sample::two_cluster_cloud(seed, n0, center0, n1, center1, variance),
        _ => {
            return Err(CmdError::Input(
                "--points and --labels must be given together".to_string(),
            ))
        }
    };

    let t = simulate_2d(&points, &labels, steps, scheme)?;
    formats::write_trajectory_csv(&trajectory, &t)?;
    formats::write_metrics_csv(&metrics, &t)?;
    let last = t.metrics.last().expect("trajectory has at least one step");
    let final_cloud = t.snapshots.last().expect("trajectory has at least one snapshot");
    println!(
        "{} after {steps} step(s): between-cluster distance {:.4}, max pairwise distance {:.4}",
        scheme.name(),
        last.between_dist,
        max_pairwise_distance(final_cloud)
    );
    Ok(())
}

/// Largest distance between any two rows; the whole cloud has merged when
/// this is near zero.
pub fn max_pairwise_distance(points: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..points.rows() {
        for j in (i + 1)..points.rows() {
            let mut d2 = 0.0;
            for c in 0..points.cols() {
                let d = points.get(i, c) - points.get(j, c);
                d2 += d * d;
            }
            worst = worst.max(d2.sqrt());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// gradcheck

#[derive(Args)]
pub struct GradcheckArgs {
    /// Base seed for the random fixtures (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Sequence length (default 4).
    #[arg(long)]
    s: Option<usize>,
    /// Model width (default 4; must be divisible by --heads).
    #[arg(long)]
    d: Option<usize>,
    /// Head count (default 2).
    #[arg(long)]
    heads: Option<usize>,
    /// Central-difference step (default 1e-5).
    #[arg(long)]
    step: Option<f64>,
    /// Maximum acceptable relative error (default 1e-5).
    #[arg(long)]
    threshold: Option<f64>,
    /// Instances per scheme, seeded seed, seed+1, … (default 1).
    #[arg(long)]
    instances: Option<usize>,
    /// Restrict to one scheme (default: check all three).
    #[arg(long)]
    scheme: Option<String>,
    /// Deliberately scale analytic gradients by 1.1 (harness sanity).
    #[arg(long)]
    corrupt: bool,
    /// JSON config file with the same keys; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradcheckConfig {
    seed: Option<u64>,
    s: Option<usize>,
    d: Option<usize>,
    heads: Option<usize>,
    step: Option<f64>,
    threshold: Option<f64>,
    instances: Option<usize>,
    scheme: Option<String>,
    corrupt: Option<bool>,
}

fn cmd_gradcheck(args: GradcheckArgs) -> CmdResult<()> {
    let cfg: GradcheckConfig = load_config(&args.config)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let s = args.s.or(cfg.s).unwrap_or(4);
    let d = args.d.or(cfg.d).unwrap_or(4);
    let heads = args.heads.or(cfg.heads).unwrap_or(2);
    let step = args.step.or(cfg.step).unwrap_or(1e-5);
    let threshold = args.threshold.or(cfg.threshold).unwrap_or(1e-5);
    let instances = args.instances.or(cfg.instances).unwrap_or(1).max(1);
    let corrupt = args.corrupt || cfg.corrupt.unwrap_or(false);
    let schemes: Vec<Scheme> = match args.scheme.or(cfg.scheme) {
        Some(name) => vec![parse_scheme(&name)?],
        None => vec![Scheme::Unas, Scheme::Dnas, Scheme::Hnas],
    };

    if s == 0 || d == 0 || heads == 0 {
        return Err(CmdError::Input("dimensions must be positive".to_string()));
    }
    if d % heads != 0 {
        return Err(CmdError::Input(format!(
            "model width {d} is not divisible by head count {heads}"
        )));
    }
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(CmdError::Input("threshold must be positive and finite".to_string()));
    }

    if s == 1 {
        println!("note: sequence length 1 pins every weight at 1, so logit gradients vanish");
    }
    if corrupt {
        println!("note: analytic gradients deliberately scaled by 1.1");
    }
    let scale = if corrupt { 1.1 } else { 1.0 };
    let mut worst_overall = 0.0_f64;
    for &scheme in &schemes {
        let mut worst = 0.0_f64;
        for i in 0..instances {
            let (x, params, loss_weights) =
                sample::gradcheck_fixture(seed.wrapping_add(i as u64), s, d, heads);
            let err = check_attention_gradients_scaled(
                &x,
                &params,
                scheme,
                None,
                &loss_weights,
                step,
                scale,
            )?;
            worst = worst.max(err);
        }
        println!(
            "scheme {}: max relative error {:.3e} over {instances} instance(s), threshold {:.1e}",
            scheme.name(),
            worst,
            threshold
        );
        worst_overall = worst_overall.max(worst);
    }
    if worst_overall < threshold {
        println!("gradient check passed");
        Ok(())
    } else {
        Err(CmdError::Check(format!(
            "gradient check failed: max relative error {worst_overall:.3e} is not below {threshold:.1e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_and_list_parsers() {
        assert_eq!(parse_point("1.8,0.7").unwrap().0, [1.8, 0.7]);
        assert_eq!(parse_point("-1,-1").unwrap().0, [-1.0, -1.0]);
        assert!(parse_point("1.0").is_err());
        assert!(parse_point("a,b").is_err());
        assert_eq!(parse_float_list("0.1, 1,10").unwrap().0, vec![0.1, 1.0, 10.0]);
        assert!(parse_float_list("1,,2").is_err());
    }

    #[test]
    fn default_grid_spans_four_decades() {
        let grid = default_ratio_grid();
        assert_eq!(grid.len(), 81);
        assert!((grid[0] - 0.01).abs() < 1e-12);
        assert!((grid[80] - 100.0).abs() < 1e-9);
        assert!((grid[40] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_codes_distinguish_input_from_check() {
        assert_eq!(CmdError::Input("x".into()).exit_code(), 2);
        assert_eq!(CmdError::Check("x".into()).exit_code(), 1);
    }

    #[test]
    fn max_pairwise_on_a_square() {
        let m = Matrix::from_vec(4, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((max_pairwise_distance(&m) - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cli_parses_every_subcommand() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from([
            "attnlab", "collapse", "simulate", "--scheme", "unas", "--center1", "-1,-1",
            "--trajectory", "t.csv", "--metrics", "m.csv",
        ])
        .unwrap();
        match cli.command {
            Command::Collapse(CollapseCmd { mode: CollapseMode::Simulate(a) }) => {
                assert_eq!(a.center1.unwrap().0, [-1.0, -1.0]);
            }
            _ => panic!("parsed into the wrong subcommand"),
        }
    }

    #[test]
    fn unused_center_flags_still_parse_against_loaded_points() {
        let cli = Cli::try_parse_from([
            "attnlab", "gradcheck", "--s", "1", "--d", "2", "--heads", "1",
        ])
        .unwrap();
        match cli.command {
            Command::Gradcheck(a) => assert_eq!(a.s, Some(1)),
            _ => panic!("parsed into the wrong subcommand"),
        }
    }
}
