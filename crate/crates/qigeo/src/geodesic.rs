//! Autoparallel operator fields, the induced geodesic equation
//! thetaddot^r = -Gamma^r_{qp} thetadot^q thetadot^p, its fixed-step
//! fourth-order integration, and the tangent-length diagnostics along
//! the resulting traces.

use nalgebra::DVector;

use crate::calculus::{covariant_derivative, vector_potential};
use crate::connection::{Connection, Geometry};
use crate::error::{QigError, Result};
use crate::expfam::Theta;
use crate::matrix::{c, dagger, identity, max_abs, CMat};
use crate::metric::{christoffel, metric_tensor};
use crate::path::CurvePath;

/// One point of a geodesic trajectory in parameter space.
#[derive(Debug, Clone)]
pub struct GeodesicState {
    pub theta: Theta,
    pub velocity: DVector<f64>,
    pub time: f64,
}

impl GeodesicState {
    pub fn new(theta: Theta, velocity: DVector<f64>, time: f64) -> Result<Self> {
        if !theta.iter().chain(velocity.iter()).all(|v| v.is_finite()) {
            return Err(QigError::NonFinite);
        }
        Ok(Self {
            theta,
            velocity,
            time,
        })
    }
}

/// Integrated trajectory with the conserved-quantity candidate
/// g_pq thetadot^p thetadot^q and the potential expectations
/// (A_p, I) recorded at every state.
#[derive(Debug, Clone)]
pub struct GeodesicTrace {
    pub states: Vec<GeodesicState>,
    pub step: f64,
    pub tangent_lengths: Vec<f64>,
    /// max_p |(A_p, I)| per state; the conservation statement is
    /// conditional on these vanishing.
    pub expectations: Vec<f64>,
    /// Set when integration stopped early; states holds the partial
    /// trace up to the failure.
    pub truncated: bool,
}

impl GeodesicTrace {
    /// Relative drift of the tangent length over the whole trace.
    pub fn tangent_length_drift(&self) -> f64 {
        let first = self.tangent_lengths.first().copied().unwrap_or(0.0);
        let scale = first.abs().max(1e-300);
        self.tangent_lengths
            .iter()
            .map(|v| (v - first).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Max over sampled (s, t) pairs of the normalized transport defect
/// ‖Pi^t_s X(gamma_s) − X(gamma_t) Pi^t_s‖.
pub fn autoparallel_residual(
    conn: &dyn Connection,
    field: &dyn Fn(&Theta) -> Result<CMat>,
    path: &CurvePath,
    sample_count: usize,
) -> Result<f64> {
    if sample_count < 2 {
        return Err(QigError::Config(
            "autoparallel sampling needs at least two points".into(),
        ));
    }
    let ts: Vec<f64> = (0..sample_count)
        .map(|k| k as f64 / (sample_count - 1) as f64)
        .collect();
    let mut pairs: Vec<(f64, f64)> = ts.windows(2).map(|w| (w[0], w[1])).collect();
    for &t in &ts[1..] {
        pairs.push((0.0, t));
    }
    let mut worst = 0.0f64;
    for (s, t) in pairs {
        let pi = conn.transport(path, s, t)?;
        let xs = field(&path.point(s))?;
        let xt = field(&path.point(t))?;
        let defect = &pi.matrix * &xs - &xt * &pi.matrix;
        let scale = max_abs(&xs).max(max_abs(&xt)).max(1.0);
        worst = worst.max(max_abs(&defect) / scale);
    }
    Ok(worst)
}

fn acceleration(
    conn: &dyn Connection,
    geometry: &Geometry,
    theta: &Theta,
    velocity: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = conn.param_dim();
    let gamma = christoffel(conn, geometry, theta, geometry.tol.fd_step)?;
    // Free motion needs no metric: with vanishing lower symbols the
    // raised ones vanish in any nondegenerate completion.
    if gamma.lower.iter().all(|v| v.abs() < 1e-10) {
        return Ok(DVector::zeros(n));
    }
    if gamma.upper.is_none() {
        let g = {
            let ctx = geometry.context(theta)?;
            let a = vector_potential(conn, theta, geometry.tol.fd_step)?;
            metric_tensor(&ctx, &a, geometry.tol.g_floor)?
        };
        return Err(QigError::DegenerateMetric {
            min_eigenvalue: g.min_eigenvalue,
            floor: geometry.tol.g_floor,
        });
    }
    let mut acc = DVector::<f64>::zeros(n);
    for r in 0..n {
        let mut v = 0.0;
        for q in 0..n {
            for p in 0..n {
                v -= gamma.upper_at(q, p, r)? * velocity[q] * velocity[p];
            }
        }
        acc[r] = v;
    }
    Ok(acc)
}

/// One classical fourth-order step of the second-order system with a
/// caller-supplied acceleration field. The geodesic integrator routes
/// through this with the Christoffel contraction as the field.
pub fn rk4_step(
    state: &GeodesicState,
    step: f64,
    accel: &dyn Fn(&Theta, &DVector<f64>) -> Result<DVector<f64>>,
) -> Result<GeodesicState> {
    let (th, v) = (&state.theta, &state.velocity);
    let k1v = accel(th, v)?;
    let k1x = v.clone();
    let th2 = th + &k1x * (step / 2.0);
    let v2 = v + &k1v * (step / 2.0);
    let k2v = accel(&th2, &v2)?;
    let k2x = v2;
    let th3 = th + &k2x * (step / 2.0);
    let v3 = v + &k2v * (step / 2.0);
    let k3v = accel(&th3, &v3)?;
    let k3x = v3;
    let th4 = th + &k3x * step;
    let v4 = v + &k3v * step;
    let k4v = accel(&th4, &v4)?;
    let k4x = v4;
    let new_theta = th + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (step / 6.0);
    let new_velocity = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (step / 6.0);
    GeodesicState::new(new_theta, new_velocity, state.time + step)
}

/// One integration step of the induced geodesic equation, with the
/// connection coefficients re-evaluated at every internal stage.
pub fn geodesic_step(
    conn: &dyn Connection,
    geometry: &Geometry,
    state: &GeodesicState,
    step: f64,
) -> Result<GeodesicState> {
    rk4_step(state, step, &|th, v| acceleration(conn, geometry, th, v))
}

fn observe(
    conn: &dyn Connection,
    geometry: &Geometry,
    state: &GeodesicState,
) -> Result<(f64, f64)> {
    let ctx = geometry.context(&state.theta)?;
    let a = vector_potential(conn, &state.theta, geometry.tol.fd_step)?;
    let g = metric_tensor(&ctx, &a, geometry.tol.g_floor)?;
    let mut length = 0.0;
    for p in 0..conn.param_dim() {
        for q in 0..conn.param_dim() {
            length += g.g[(p, q)] * state.velocity[p] * state.velocity[q];
        }
    }
    let id = identity(ctx.dim() * ctx.dim());
    let expectation = a
        .components
        .iter()
        .map(|ap| ctx.inner_product(ap, &id).norm())
        .fold(0.0, f64::max);
    Ok((length, expectation))
}

/// Fixed-step trace of the geodesic starting at `initial`. On a
/// mid-trace failure the partial trace is returned with the
/// `truncated` flag set.
pub fn integrate_geodesic(
    conn: &dyn Connection,
    geometry: &Geometry,
    initial: GeodesicState,
    horizon: f64,
    step: f64,
) -> Result<GeodesicTrace> {
    if step <= 0.0 || horizon <= 0.0 {
        return Err(QigError::Config(
            "geodesic horizon and step must be positive".into(),
        ));
    }
    let n_steps = (horizon / step).round() as usize;
    if n_steps == 0 {
        return Err(QigError::Config("horizon shorter than one step".into()));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut tangent_lengths = Vec::with_capacity(n_steps + 1);
    let mut expectations = Vec::with_capacity(n_steps + 1);
    let mut truncated = false;
    let mut current = initial;
    for k in 0..=n_steps {
        match observe(conn, geometry, &current) {
            Ok((len, ex)) => {
                tangent_lengths.push(len);
                expectations.push(ex);
                states.push(current.clone());
            }
            Err(_) => {
                truncated = true;
                break;
            }
        }
        if k == n_steps {
            break;
        }
        match geodesic_step(conn, geometry, &current, step) {
            Ok(next) => current = next,
            Err(_) => {
                truncated = true;
                break;
            }
        }
    }
    if states.is_empty() {
        return Err(QigError::NonFinite);
    }
    Ok(GeodesicTrace {
        states,
        step,
        tangent_lengths,
        expectations,
        truncated,
    })
}

/// Diagnostics for a trace: (a) drift of the contracted potential
/// thetadot^p A_p against its initial value conjugated by the formal
/// evolution, (b) the transport equation dA_p/dt = (i/hbar)[A_p, H_t]
/// with H_t = thetadot^q A_q checked by finite differences in trace
/// time, and (c) the per-component formal solution
/// A_p(t) = U_t A_p(0) U_t^dagger with U_t = exp(-i t H_0 / hbar).
#[derive(Debug, Clone)]
pub struct GeodesicDiagnostics {
    pub residual_a: f64,
    pub residual_b: f64,
    pub residual_c: f64,
    pub tangent_length_drift: f64,
    pub max_expectation: f64,
}

pub fn geodesic_diagnostics(
    conn: &dyn Connection,
    geometry: &Geometry,
    trace: &GeodesicTrace,
) -> Result<GeodesicDiagnostics> {
    let n = conn.param_dim();
    let fd = geometry.tol.fd_step;
    let m = trace.states.len();
    if m < 3 {
        return Err(QigError::Config(
            "diagnostics need at least three trace states".into(),
        ));
    }
    // Subsample so long traces stay affordable: every state for short
    // traces, roughly 17 points otherwise, always including both ends.
    let stride = (m / 16).max(1);
    let mut idx: Vec<usize> = (0..m).step_by(stride).collect();
    if *idx.last().unwrap() != m - 1 {
        idx.push(m - 1);
    }

    let pot = |state: &GeodesicState| -> Result<Vec<CMat>> {
        Ok(vector_potential(conn, &state.theta, fd)?.components)
    };
    let contracted = |a: &[CMat], state: &GeodesicState| -> CMat {
        let dim = a[0].nrows();
        let mut h = CMat::zeros(dim, dim);
        for p in 0..n {
            h += a[p].map(|z| z * state.velocity[p]);
        }
        h
    };

    let a0 = pot(&trace.states[0])?;
    let h0 = contracted(&a0, &trace.states[0]);
    let hbar = conn.hbar();
    let scale = max_abs(&h0).max(1.0);

    let mut residual_a = 0.0f64;
    let mut residual_c = 0.0f64;
    for &k in &idx {
        let state = &trace.states[k];
        let t = state.time - trace.states[0].time;
        let u = (h0.map(|z| z * c(0.0, -t / hbar))).exp();
        let udag = dagger(&u);
        let a_t = pot(state)?;
        let h_t = contracted(&a_t, state);
        residual_a = residual_a.max(max_abs(&(&h_t - &u * &h0 * &udag)) / scale);
        for p in 0..n {
            let formal = &u * &a0[p] * &udag;
            let s = max_abs(&a0[p]).max(1.0);
            residual_c = residual_c.max(max_abs(&(&a_t[p] - formal)) / s);
        }
    }

    // (b): central difference of A_p along the trace at interior
    // subsampled states vs the commutator right-hand side.
    let mut residual_b = 0.0f64;
    for &k in &idx {
        if k == 0 || k + 1 >= m {
            continue;
        }
        let prev = pot(&trace.states[k - 1])?;
        let here = pot(&trace.states[k])?;
        let next = pot(&trace.states[k + 1])?;
        let h_t = contracted(&here, &trace.states[k]);
        for p in 0..n {
            let dt = trace.states[k + 1].time - trace.states[k - 1].time;
            let deriv = (&next[p] - &prev[p]).map(|z| z / dt);
            let rhs = crate::matrix::commutator(&here[p], &h_t).map(|z| z * c(0.0, 1.0 / hbar));
            let s = max_abs(&here[p]).max(1.0);
            residual_b = residual_b.max(max_abs(&(deriv - rhs)) / s);
        }
    }

    Ok(GeodesicDiagnostics {
        residual_a,
        residual_b,
        residual_c,
        tangent_length_drift: trace.tangent_length_drift(),
        max_expectation: trace.expectations.iter().copied().fold(0.0, f64::max),
    })
}

/// Residual of the defining property that the covariant derivative of
/// an autoparallel field along the path velocity vanishes.
pub fn directional_covariant_norm(
    conn: &dyn Connection,
    field: &dyn Fn(&Theta) -> Result<CMat>,
    path: &CurvePath,
    t: f64,
    fd_step: f64,
) -> Result<f64> {
    let theta = path.point(t);
    let vel = path.velocity(t);
    let n = conn.param_dim();
    let dim = field(&theta)?.nrows();
    let mut total = CMat::zeros(dim, dim);
    for p in 0..n {
        let d = covariant_derivative(conn, field, &theta, p, fd_step)?;
        total += d.map(|z| z * vel[p]);
    }
    Ok(max_abs(&total))
}
