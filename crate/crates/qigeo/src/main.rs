//! Command-line harness: property verification suites, holonomy
//! estimates, geodesic traces, and parameter-grid scans over
//! exponential-family quantum state manifolds.
//!
//! Exit codes: 0 all checks pass, 1 at least one check failed,
//! 2 configuration error, 3 numerical-environment error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use qigeo::calculus::{default_loop_steps, holonomy_formula, holonomy_loop};
use qigeo::config::Tolerances;
use qigeo::connection::{Geometry, ModelConnection, ModelConnectionKind};
use qigeo::error::{QigError, Result};
use qigeo::expfam::{ExpFamilyModel, Theta};
use qigeo::geodesic::{geodesic_diagnostics, integrate_geodesic, GeodesicState, GeodesicTrace};
use qigeo::matrix::max_abs;
use qigeo::report::{write_scan_csv, write_trace_csv, CheckRecord, VerificationReport};
use qigeo::verify::{run_verify, scan_grid, VerifyConfig};

#[derive(Parser)]
#[command(
    name = "qigeo",
    about = "Transport geometry of quantum exponential families: verification \
             suites, holonomy, geodesics, and field scans"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Model preset name (pauli2, pauli3, gellmann3, diag2) or path to
    /// a model JSON file.
    #[arg(long, global = true, default_value = "pauli2")]
    model: String,
    /// Comma-separated parameter point, e.g. "0.3,0.5".
    #[arg(long, global = true, default_value = "0.3,0.5")]
    theta: String,
    /// Connection family.
    #[arg(long, global = true, default_value = "alpha", value_parser = ["m", "dual", "alpha"])]
    connection: String,
    /// Interpolation weight for --connection alpha.
    #[arg(long, global = true, default_value_t = 0.0)]
    alpha: f64,
    /// Finite-difference step for all derivative estimates.
    #[arg(long, global = true, default_value_t = 1e-4)]
    fd_step: f64,
    /// Seed for all random draws; fully determines a run.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread budget for independent checks (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full property-check suite and emit a JSON report.
    Verify,
    /// Estimate the holonomy operator for a coordinate pair by both
    /// the loop and the potential-based estimator.
    Holonomy {
        /// First coordinate index (0-based).
        #[arg(long, default_value_t = 0)]
        p: usize,
        /// Second coordinate index (0-based).
        #[arg(long, default_value_t = 1)]
        q: usize,
    },
    /// Integrate the induced geodesic equation and emit the trace CSV.
    Geodesic {
        /// Comma-separated initial velocity, e.g. "1,0".
        #[arg(long, default_value = "1,0")]
        velocity: String,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        step: f64,
    },
    /// Evaluate metric entries and holonomy norms over a theta grid
    /// and emit CSV.
    Scan {
        /// Comma-separated lower corner of the grid.
        #[arg(long)]
        grid_min: String,
        /// Comma-separated upper corner of the grid.
        #[arg(long)]
        grid_max: String,
        /// Comma-separated point counts per axis.
        #[arg(long)]
        grid_counts: String,
    },
}

fn parse_floats(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| QigError::Config(format!("bad number {s:?}: {e}")))
        })
        .collect()
}

fn parse_counts(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| QigError::Config(format!("bad count {s:?}: {e}")))
        })
        .collect()
}

fn load_model(source: &str) -> Result<ExpFamilyModel> {
    if let Ok(model) = ExpFamilyModel::preset(source) {
        return Ok(model);
    }
    let path = std::path::Path::new(source);
    if !path.exists() {
        return Err(QigError::Config(format!(
            "model {source:?} is neither a preset nor an existing file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    ExpFamilyModel::from_json(&text)
}

fn build_config(common: &CommonArgs) -> Result<VerifyConfig> {
    let model = load_model(&common.model)?;
    let theta_vals = parse_floats(&common.theta)?;
    if theta_vals.len() != model.n_params() {
        return Err(QigError::Config(format!(
            "theta has {} entries but the model has {} parameters",
            theta_vals.len(),
            model.n_params()
        )));
    }
    let connection = match common.connection.as_str() {
        "m" => ModelConnectionKind::M,
        "dual" => ModelConnectionKind::Dual,
        "alpha" => ModelConnectionKind::Alpha(common.alpha),
        other => return Err(QigError::Config(format!("unknown connection {other:?}"))),
    };
    if !(common.fd_step.is_finite() && common.fd_step > 1e-12) {
        return Err(QigError::Config(
            "fd-step must be finite and larger than 1e-12".into(),
        ));
    }
    Ok(VerifyConfig {
        model,
        theta: Theta::from_vec(theta_vals),
        connection,
        fd_step: common.fd_step,
        seed: common.seed,
        workers: common.workers,
        tol: Tolerances::default(),
    })
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                f.write_all(b"\n")?;
            }
            Ok(())
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_verify(cfg: &VerifyConfig, out: &Option<PathBuf>) -> Result<bool> {
    let report = run_verify(cfg)?;
    emit(out, &report.to_json()?)?;
    Ok(report.all_pass())
}

fn cmd_holonomy(cfg: &VerifyConfig, p: usize, q: usize, out: &Option<PathBuf>) -> Result<bool> {
    let n = cfg.model.n_params();
    if n < 2 {
        return Err(QigError::NeedsTwoParameters { n });
    }
    if p >= n || q >= n || p == q {
        return Err(QigError::Config(format!(
            "coordinate pair ({p}, {q}) invalid for {n} parameters"
        )));
    }
    let geometry = std::sync::Arc::new(Geometry::new(cfg.model.clone(), {
        let mut t = cfg.tol.clone();
        t.fd_step = cfg.fd_step;
        t
    }));
    let conn = ModelConnection::new(geometry, cfg.connection);
    let formula = holonomy_formula(&conn, &cfg.theta, cfg.fd_step)?;
    let loop_est = holonomy_loop(&conn, &cfg.theta, p, q, &default_loop_steps())?;
    let formula_pq = &formula.components[p][q];
    let discrepancy = max_abs(&(&loop_est - formula_pq));
    let tol = 50.0 * (100.0 * cfg.fd_step * cfg.fd_step).max(1e-6);
    let records = vec![
        CheckRecord::new(
            "holonomy_formula_norm",
            "max-norm of the potential-based holonomy estimate",
            &cfg.theta.iter().copied().collect::<Vec<f64>>(),
            max_abs(formula_pq),
            f64::INFINITY,
        ),
        CheckRecord::new(
            "holonomy_loop_norm",
            "max-norm of the loop-defect holonomy estimate",
            &cfg.theta.iter().copied().collect::<Vec<f64>>(),
            max_abs(&loop_est),
            f64::INFINITY,
        ),
        CheckRecord::new(
            "holonomy_estimator_discrepancy",
            "the two holonomy estimators agree",
            &cfg.theta.iter().copied().collect::<Vec<f64>>(),
            discrepancy,
            tol,
        ),
    ];
    let report = VerificationReport::new("holonomy", cfg.echo(), records);
    let ok = report.all_pass();
    emit(out, &report.to_json()?)?;
    Ok(ok)
}

fn cmd_geodesic(
    cfg: &VerifyConfig,
    velocity: &str,
    horizon: f64,
    step: f64,
    out: &Option<PathBuf>,
) -> Result<bool> {
    let vel = parse_floats(velocity)?;
    if vel.len() != cfg.model.n_params() {
        return Err(QigError::Config(format!(
            "velocity has {} entries but the model has {} parameters",
            vel.len(),
            cfg.model.n_params()
        )));
    }
    let geometry = std::sync::Arc::new(Geometry::new(cfg.model.clone(), {
        let mut t = cfg.tol.clone();
        t.fd_step = cfg.fd_step;
        t
    }));
    let conn = ModelConnection::new(geometry.clone(), cfg.connection);
    let initial = GeodesicState::new(cfg.theta.clone(), DVector::from_vec(vel), 0.0)?;
    let stationary = initial.velocity.amax() == 0.0;
    let trace: GeodesicTrace = if stationary {
        // Stationary initial data: a single-point trace, trivially
        // conserved.
        GeodesicTrace {
            states: vec![initial],
            step,
            tangent_lengths: vec![0.0],
            expectations: vec![0.0],
            truncated: false,
        }
    } else {
        integrate_geodesic(&conn, &geometry, initial, horizon, step)?
    };
    let residual_a = if trace.states.len() >= 3 {
        geodesic_diagnostics(&conn, &geometry, &trace)?.residual_a
    } else {
        0.0
    };
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace, residual_a)?;
    emit(out, &String::from_utf8_lossy(&buf))?;
    Ok(!trace.truncated)
}

fn cmd_scan(
    cfg: &VerifyConfig,
    grid_min: &str,
    grid_max: &str,
    grid_counts: &str,
    out: &Option<PathBuf>,
) -> Result<bool> {
    let lo = parse_floats(grid_min)?;
    let hi = parse_floats(grid_max)?;
    let counts = parse_counts(grid_counts)?;
    let n = cfg.model.n_params();
    if lo.len() != n || hi.len() != n || counts.len() != n {
        return Err(QigError::Config(format!(
            "grid spec must have {n} entries per axis list"
        )));
    }
    // Cartesian grid; any zero count empties the grid.
    let total: usize = counts.iter().product();
    let mut grid = Vec::with_capacity(total);
    if total > 0 {
        let mut idx = vec![0usize; n];
        loop {
            let point: Vec<f64> = (0..n)
                .map(|a| {
                    if counts[a] == 1 {
                        lo[a]
                    } else {
                        lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / (counts[a] - 1) as f64
                    }
                })
                .collect();
            grid.push(Theta::from_vec(point));
            let mut axis = 0;
            loop {
                if axis == n {
                    break;
                }
                idx[axis] += 1;
                if idx[axis] < counts[axis] {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
            if axis == n {
                break;
            }
        }
    }
    let rows = scan_grid(cfg, &grid);
    let clean = rows.iter().all(|r| r.flag.is_empty());
    let mut buf = Vec::new();
    write_scan_csv(&mut buf, n, &rows)?;
    emit(out, &String::from_utf8_lossy(&buf))?;
    Ok(clean)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let cfg = build_config(&cli.common)?;
    match &cli.command {
        Command::Verify => cmd_verify(&cfg, &cli.common.out),
        Command::Holonomy { p, q } => cmd_holonomy(&cfg, *p, *q, &cli.common.out),
        Command::Geodesic {
            velocity,
            horizon,
            step,
        } => cmd_geodesic(&cfg, velocity, *horizon, *step, &cli.common.out),
        Command::Scan {
            grid_min,
            grid_max,
            grid_counts,
        } => cmd_scan(&cfg, grid_min, grid_max, grid_counts, &cli.common.out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
