//! Numerical differentiation layer on top of parallel transport: the
//! quantum vector potential A_p = i hbar d/dt Pi(gamma_p^theta)^t_0 at
//! t = 0, covariant derivatives, the force tensor F_pq, holonomy
//! operators by two independent estimators, curvature commutators, and
//! the relations tying a connection's potentials to its dual's.
//!
//! All derivatives are central differences with one Richardson
//! extrapolation level, D = (4 d(h/2) - d(h)) / 3.

use num_complex::Complex64;

use crate::connection::{Connection, Geometry};
use crate::error::{QigError, Result};
use crate::expfam::Theta;
use crate::matrix::{commutator, dagger, identity, invert, max_abs, CMat};
use crate::path::CurvePath;

/// The components A_p at one parameter point.
#[derive(Debug, Clone)]
pub struct VectorPotential {
    pub components: Vec<CMat>,
    pub theta: Theta,
    pub hbar: f64,
    pub fd_step: f64,
}

/// Antisymmetric tensor of operators indexed by parameter pairs.
#[derive(Debug, Clone)]
pub struct OperatorTensor {
    pub components: Vec<Vec<CMat>>,
    pub theta: Theta,
}

impl OperatorTensor {
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.components.len();
        let mut worst = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                worst = worst.max(max_abs(
                    &(&self.components[p][q] + &self.components[q][p]),
                ));
            }
        }
        worst
    }

    pub fn max_norm(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .map(max_abs)
            .fold(0.0, f64::max)
    }
}

pub type ForceTensor = OperatorTensor;
pub type HolonomyTensor = OperatorTensor;

fn check_step(fd_step: f64) -> Result<()> {
    if fd_step < 1e-12 {
        return Err(QigError::StepUnderflow { step: fd_step });
    }
    Ok(())
}

/// i hbar times the t-derivative of transport along `path` at t = 0.
fn transport_derivative(conn: &dyn Connection, path: &CurvePath, fd_step: f64) -> Result<CMat> {
    check_step(fd_step)?;
    let diff = |h: f64| -> Result<CMat> {
        let fwd = conn.transport(path, 0.0, h)?.matrix;
        let bwd = conn.transport(path, 0.0, -h)?.matrix;
        Ok((fwd - bwd).map(|z| z / (2.0 * h)))
    };
    let d1 = diff(fd_step)?;
    let d2 = diff(fd_step / 2.0)?;
    let rich = d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0);
    let ih = Complex64::new(0.0, conn.hbar());
    Ok(rich.map(|z| z * ih))
}

/// A_p(theta) for every parameter direction p.
pub fn vector_potential(
    conn: &dyn Connection,
    theta: &Theta,
    fd_step: f64,
) -> Result<VectorPotential> {
    let n = conn.param_dim();
    let mut components = Vec::with_capacity(n);
    for p in 0..n {
        let line = CurvePath::coordinate_line(theta, p);
        components.push(transport_derivative(conn, &line, fd_step)?);
    }
    Ok(VectorPotential {
        components,
        theta: theta.clone(),
        hbar: conn.hbar(),
        fd_step,
    })
}

/// i hbar times the derivative of transport along the straight line
/// with direction v; equals v^p A_p when the potential is linear in
/// the direction.
pub fn directional_potential(
    conn: &dyn Connection,
    theta: &Theta,
    v: &Theta,
    fd_step: f64,
) -> Result<CMat> {
    let line = CurvePath::segment(theta, &(theta + v));
    transport_derivative(conn, &line, fd_step)
}

/// nabla_p X = dX/dtheta^p + (i/hbar) [A_p, X].
pub fn covariant_derivative(
    conn: &dyn Connection,
    field: &dyn Fn(&Theta) -> Result<CMat>,
    theta: &Theta,
    p: usize,
    fd_step: f64,
) -> Result<CMat> {
    check_step(fd_step)?;
    let diff = |h: f64| -> Result<CMat> {
        let mut tp = theta.clone();
        tp[p] += h;
        let mut tm = theta.clone();
        tm[p] -= h;
        Ok((field(&tp)? - field(&tm)?).map(|z| z / (2.0 * h)))
    };
    let d1 = diff(fd_step)?;
    let d2 = diff(fd_step / 2.0)?;
    let grad = d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0);
    let a = vector_potential(conn, theta, fd_step)?;
    let coef = Complex64::new(0.0, 1.0 / conn.hbar());
    Ok(grad + commutator(&a.components[p], &field(theta)?).map(|z| z * coef))
}

/// All parameter-derivatives of the potential: out[q][p] is
/// dA_p / dtheta^q.
fn potential_gradient(
    conn: &dyn Connection,
    theta: &Theta,
    fd_step: f64,
) -> Result<Vec<Vec<CMat>>> {
    check_step(fd_step)?;
    let n = conn.param_dim();
    let shifted = |q: usize, h: f64| -> Result<Vec<CMat>> {
        let mut th = theta.clone();
        th[q] += h;
        Ok(vector_potential(conn, &th, fd_step)?.components)
    };
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let diff = |h: f64| -> Result<Vec<CMat>> {
            let fwd = shifted(q, h)?;
            let bwd = shifted(q, -h)?;
            Ok(fwd
                .into_iter()
                .zip(bwd)
                .map(|(f, b)| (f - b).map(|z| z / (2.0 * h)))
                .collect())
        };
        let d1 = diff(fd_step)?;
        let d2 = diff(fd_step / 2.0)?;
        out.push(
            d1.into_iter()
                .zip(d2)
                .map(|(a, b)| b.map(|z| z * (4.0 / 3.0)) - a.map(|z| z / 3.0))
                .collect(),
        );
    }
    Ok(out)
}

/// F_pq = dA_p/dtheta^q - dA_q/dtheta^p.
pub fn force_tensor(conn: &dyn Connection, theta: &Theta, fd_step: f64) -> Result<ForceTensor> {
    let grad = potential_gradient(conn, theta, fd_step)?;
    let n = conn.param_dim();
    let mut components = vec![vec![CMat::zeros(conn.lifted_dim(), conn.lifted_dim()); n]; n];
    for p in 0..n {
        for q in 0..n {
            components[p][q] = &grad[q][p] - &grad[p][q];
        }
    }
    Ok(OperatorTensor {
        components,
        theta: theta.clone(),
    })
}

/// H_pq = F_pq - (i/hbar) [A_p, A_q].
pub fn holonomy_formula(
    conn: &dyn Connection,
    theta: &Theta,
    fd_step: f64,
) -> Result<HolonomyTensor> {
    let f = force_tensor(conn, theta, fd_step)?;
    let a = vector_potential(conn, theta, fd_step)?;
    let n = conn.param_dim();
    let coef = Complex64::new(0.0, 1.0 / conn.hbar());
    let mut components = f.components;
    for p in 0..n {
        for q in 0..n {
            components[p][q] -=
                commutator(&a.components[p], &a.components[q]).map(|z| z * coef);
        }
    }
    Ok(OperatorTensor {
        components,
        theta: theta.clone(),
    })
}

/// Transport around the closed coordinate rectangle with side
/// parameters (s, t):
/// L(s, t) = Pi_p^{0<-s} Pi_q^{0<-t}|_{theta+s e_p}
///           Pi_p^{s<-0}|_{theta+t e_q} Pi_q^{t<-0}.
fn rectangle_loop(
    conn: &dyn Connection,
    theta: &Theta,
    p: usize,
    q: usize,
    s: f64,
    t: f64,
) -> Result<CMat> {
    let line_q0 = CurvePath::coordinate_line(theta, q);
    let first = conn.transport(&line_q0, 0.0, t)?.matrix;
    let mut th_t = theta.clone();
    th_t[q] += t;
    let line_p1 = CurvePath::coordinate_line(&th_t, p);
    let second = conn.transport(&line_p1, 0.0, s)?.matrix;
    let mut th_s = theta.clone();
    th_s[p] += s;
    let line_q1 = CurvePath::coordinate_line(&th_s, q);
    let third = conn.transport(&line_q1, t, 0.0)?.matrix;
    let fourth = conn.transport(&line_p0(theta, p), s, 0.0)?.matrix;
    Ok(fourth * third * second * first)
}

fn line_p0(theta: &Theta, p: usize) -> CurvePath {
    CurvePath::coordinate_line(theta, p)
}

/// Loop estimator for the holonomy operator H_pq: the second-order
/// defect i hbar (L(s, s) - I) / s^2, extrapolated over a halving
/// sequence of side lengths with two Richardson levels (the raw
/// estimate converges at first order).
pub fn holonomy_loop(
    conn: &dyn Connection,
    theta: &Theta,
    p: usize,
    q: usize,
    s_steps: &[f64],
) -> Result<CMat> {
    if conn.param_dim() < 2 {
        return Err(QigError::NeedsTwoParameters {
            n: conn.param_dim(),
        });
    }
    if s_steps.len() < 2 {
        return Err(QigError::Config(
            "holonomy_loop needs at least two side lengths".into(),
        ));
    }
    for w in s_steps.windows(2) {
        if (w[1] - w[0] / 2.0).abs() > 1e-12 * w[0].abs() {
            return Err(QigError::Config(
                "holonomy_loop side lengths must halve".into(),
            ));
        }
    }
    let dim = conn.lifted_dim();
    let ih = Complex64::new(0.0, conn.hbar());
    let mut raw = Vec::with_capacity(s_steps.len());
    for &s in s_steps {
        let l = rectangle_loop(conn, theta, p, q, s, s)?;
        raw.push((l - identity(dim)).map(|z| z * (ih / (s * s))));
    }
    // Divergence guard on the raw sequence.
    let diffs: Vec<f64> = raw
        .windows(2)
        .map(|w| max_abs(&(&w[1] - &w[0])))
        .collect();
    if diffs.len() >= 2 {
        let first = diffs[0];
        let last = *diffs.last().unwrap();
        if last > 4.0 * first && last > 1e-6 {
            return Err(QigError::EstimatorDiverged { residuals: diffs });
        }
    }
    // Richardson level one removes the O(s) error, level two the
    // O(s^2) error.
    let lvl1: Vec<CMat> = raw
        .windows(2)
        .map(|w| w[1].map(|z| z * 2.0) - &w[0])
        .collect();
    if lvl1.len() < 2 {
        return Ok(lvl1.into_iter().next().unwrap());
    }
    let lvl2: Vec<CMat> = lvl1
        .windows(2)
        .map(|w| (w[1].map(|z| z * 4.0) - &w[0]).map(|z| z / 3.0))
        .collect();
    Ok(lvl2.into_iter().last().unwrap())
}

/// Default halving sequence of rectangle side lengths.
pub fn default_loop_steps() -> Vec<f64> {
    vec![0.02, 0.01, 0.005, 0.0025]
}

/// (nabla_p nabla_q - nabla_q nabla_p) X at theta.
pub fn curvature_commutator(
    conn: &dyn Connection,
    field: &(dyn Fn(&Theta) -> Result<CMat> + Sync),
    theta: &Theta,
    p: usize,
    q: usize,
    fd_step: f64,
) -> Result<CMat> {
    let inner = |outer_idx: usize, inner_idx: usize, th: &Theta| -> Result<CMat> {
        let g = |t: &Theta| covariant_derivative(conn, field, t, inner_idx, fd_step);
        covariant_derivative(conn, &g, th, outer_idx, fd_step).map(|m| {
            let _ = outer_idx;
            m
        })
    };
    let pq = inner(p, q, theta)?;
    let qp = inner(q, p, theta)?;
    Ok(pq - qp)
}

/// Max-norm residual of the dual-potential relation
/// T A*_p T^{-1} - T^{-1} A_p^dag T + i hbar T^{-1} (d_p T^2) T^{-1}
/// over all components p.
pub fn dual_potential_residual(
    conn: &dyn Connection,
    dual: &dyn Connection,
    geometry: &Geometry,
    theta: &Theta,
    fd_step: f64,
) -> Result<f64> {
    check_step(fd_step)?;
    let a = vector_potential(conn, theta, fd_step)?;
    let a_star = vector_potential(dual, theta, fd_step)?;
    let ctx = geometry.context(theta)?;
    let t = ctx.t_power(1.0);
    let t_inv = ctx.t_power(-1.0);
    let ih = Complex64::new(0.0, conn.hbar());
    let n = conn.param_dim();
    let mut worst = 0.0f64;
    for p in 0..n {
        // d_p T^2 by central difference of the gauge-free matrix
        // rho^{-1/2} (x) I, with one Richardson level.
        let diff = |h: f64| -> Result<CMat> {
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let fwd = geometry.context(&tp)?.t_power(2.0);
            let bwd = geometry.context(&tm)?.t_power(2.0);
            Ok((fwd - bwd).map(|z| z / (2.0 * h)))
        };
        let d1 = diff(fd_step)?;
        let d2 = diff(fd_step / 2.0)?;
        let grad_t2 = d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0);
        let lhs = &t * &a_star.components[p] * &t_inv;
        let mid = &t_inv * dagger(&a.components[p]) * &t;
        let tail = (&t_inv * grad_t2 * &t_inv).map(|z| z * ih);
        worst = worst.max(max_abs(&(lhs - mid + tail)));
    }
    Ok(worst)
}

/// Max-norm residual of T H*_pq T^{-1} = T^{-1} H_pq T over all pairs.
pub fn dual_holonomy_residual(
    conn: &dyn Connection,
    dual: &dyn Connection,
    geometry: &Geometry,
    theta: &Theta,
    fd_step: f64,
) -> Result<f64> {
    let h = holonomy_formula(conn, theta, fd_step)?;
    let h_star = holonomy_formula(dual, theta, fd_step)?;
    let ctx = geometry.context(theta)?;
    let t = ctx.t_power(1.0);
    let t_inv = ctx.t_power(-1.0);
    let n = conn.param_dim();
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            let lhs = &t * &h_star.components[p][q] * &t_inv;
            let rhs = &t_inv * &h.components[p][q] * &t;
            worst = worst.max(max_abs(&(lhs - rhs)));
        }
    }
    Ok(worst)
}

/// Residual of the transport Schroedinger equation i hbar dOmega/dt =
/// gammadot^p A_p Omega at path parameter `t`, for connections that
/// move the purification covariantly. Omega values are taken from one
/// continuation chain so their relative phase is well defined.
pub fn schroedinger_residual(
    conn: &dyn Connection,
    geometry: &Geometry,
    path: &CurvePath,
    t: f64,
    fd_step: f64,
) -> Result<f64> {
    check_step(fd_step)?;
    let h = fd_step;
    let chain = geometry.walk_chain(path, 0.0, &[t - h, t - h / 2.0, t, t + h / 2.0, t + h])?;
    let d1 = (&chain[4].omega - &chain[0].omega).map(|z| z / (2.0 * h));
    let d2 = (&chain[3].omega - &chain[1].omega).map(|z| z / h);
    let d_omega = d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0);
    let ih = Complex64::new(0.0, conn.hbar());
    let lhs = d_omega.map(|z| z * ih);
    let a = vector_potential(conn, &path.point(t), fd_step)?;
    let v = path.velocity(t);
    let dim = conn.lifted_dim();
    let mut ham = CMat::zeros(dim, dim);
    for p in 0..conn.param_dim() {
        ham += a.components[p].map(|z| z * v[p]);
    }
    let rhs = &ham * &chain[2].omega;
    Ok((lhs - rhs).norm())
}

/// Defining property of the covariant derivative: the derivative of
/// the transported field d/dt [Pi^{s<-t} X(gamma_t) Pi^{t<-s}] at
/// t = s equals nabla_{gammadot} X. Returns the max-norm residual.
pub fn covariant_defining_residual(
    conn: &dyn Connection,
    field: &(dyn Fn(&Theta) -> Result<CMat> + Sync),
    path: &CurvePath,
    s: f64,
    fd_step: f64,
) -> Result<f64> {
    check_step(fd_step)?;
    let transported = |t: f64| -> Result<CMat> {
        let back = conn.transport(path, t, s)?.matrix;
        Ok(&back * field(&path.point(t))? * invert(&back)?)
    };
    let diff = |h: f64| -> Result<CMat> {
        Ok((transported(s + h)? - transported(s - h)?).map(|z| z / (2.0 * h)))
    };
    let d1 = diff(fd_step)?;
    let d2 = diff(fd_step / 2.0)?;
    let lhs = d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0);
    let theta = path.point(s);
    let v = path.velocity(s);
    let dim = conn.lifted_dim();
    let mut rhs = CMat::zeros(dim, dim);
    for p in 0..conn.param_dim() {
        rhs += covariant_derivative(conn, field, &theta, p, fd_step)?.map(|z| z * v[p]);
    }
    Ok(max_abs(&(lhs - rhs)))
}
