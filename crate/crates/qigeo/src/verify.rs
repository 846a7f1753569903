//! The property-check registry behind the `verify` command: each
//! check evaluates one identity of the transport geometry as a
//! residual against a pinned tolerance and reports honestly — checks
//! whose hypotheses fail on the worked model fail in the report
//! rather than being skipped or loosened.

use std::sync::Arc;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::calculus::{
    curvature_commutator, default_loop_steps, dual_holonomy_residual, dual_potential_residual,
    holonomy_formula, holonomy_loop, vector_potential,
};
use crate::config::Tolerances;
use crate::connection::{
    synthetic_nonproduct_connection, Connection, DualConnection, Geometry, ModelConnection,
    ModelConnectionKind, ProductFormConnection,
};
use crate::error::Result;
use crate::expfam::{density, ExpFamilyModel, Theta};
use crate::geodesic::{autoparallel_residual, integrate_geodesic, GeodesicState};
use crate::gns::lift;
use crate::matrix::{
    c, commutator, dagger, identity, invert, kubo_transform, max_abs, CMat,
};
use crate::metric::gauge_shift_defect;
use crate::path::CurvePath;
use crate::report::{CheckRecord, VerificationReport};
use crate::rng;

/// Everything a verification run needs; the seed fully determines all
/// random draws.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub model: ExpFamilyModel,
    pub theta: Theta,
    pub connection: ModelConnectionKind,
    pub fd_step: f64,
    pub seed: u64,
    pub workers: usize,
    pub tol: Tolerances,
}

impl VerifyConfig {
    pub fn echo(&self) -> serde_json::Value {
        json!({
            "model": self.model.preset_name().unwrap_or("custom"),
            "dim_hilbert": self.model.dim_hilbert(),
            "n_params": self.model.n_params(),
            "theta": self.theta.iter().copied().collect::<Vec<f64>>(),
            "connection": self.connection.label(),
            "fd_step": self.fd_step,
            "seed": self.seed,
            "workers": self.workers,
        })
    }

    fn geometry(&self) -> Arc<Geometry> {
        let mut tol = self.tol.clone();
        tol.fd_step = self.fd_step;
        Arc::new(Geometry::new(self.model.clone(), tol))
    }

    fn fd_tol(&self) -> f64 {
        (100.0 * self.fd_step * self.fd_step).max(1e-6)
    }
}

type CheckFn = fn(&VerifyConfig, u64) -> Vec<CheckRecord>;

/// Registry of all checks in report order.
pub fn registry() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("duality", check_duality as CheckFn),
        ("alpha_family", check_alpha_family),
        ("adjoint", check_adjoint),
        ("holonomy_product_form", check_holonomy_product_form),
        ("holonomy_estimators", check_holonomy_estimators),
        ("curvature_commutator", check_curvature),
        ("dual_holonomy", check_dual_holonomy),
        ("dual_potential", check_dual_potential),
        ("kubo", check_kubo),
        ("gns_identity", check_gns_identity),
        ("commutative_reduction", check_commutative_reduction),
        ("autoparallel_algebra", check_autoparallel_algebra),
        ("geodesic_conservation", check_geodesic_conservation),
        ("gauge_invariance", check_gauge_invariance),
    ]
}

/// Runs every registered check under the configured worker budget and
/// assembles the report. Record order is the registry order no matter
/// how the work is scheduled.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerificationReport> {
    let checks = registry();
    let jobs: Vec<(usize, &'static str, CheckFn)> = checks
        .iter()
        .enumerate()
        .map(|(i, (n, f))| (i, *n, *f))
        .collect();
    let run_all = || -> Vec<Vec<CheckRecord>> {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(i, _, f)| f(
                cfg,
                cfg.seed
                    .wrapping_add((*i as u64).wrapping_mul(0x9e3779b97f4a7c15)),
            ))
            .collect()
    };
    let nested = if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| crate::error::QigError::Config(format!("worker pool: {e}")))?;
        pool.install(run_all)
    } else {
        run_all()
    };
    let records: Vec<CheckRecord> = nested.into_iter().flatten().collect();
    Ok(VerificationReport::new("verify", cfg.echo(), records))
}

fn theta_vec(theta: &Theta) -> Vec<f64> {
    theta.iter().copied().collect()
}

fn connection_of(cfg: &VerifyConfig, geometry: Arc<Geometry>) -> ModelConnection {
    ModelConnection::new(geometry, cfg.connection)
}

fn random_points(r: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Theta> {
    (0..count).map(|_| rng::random_theta(r, n, 0.6)).collect()
}

/// |(Pi-hat X, Pi-hat-star Y)_t − (X, Y)_s| / scale over random
/// segments and operator pairs.
fn check_duality(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "pairing of transported operators under a connection and its dual \
                    reproduces the pairing at the start point";
    let body = |cfg: &VerifyConfig, seed: u64| -> Result<f64> {
        let geometry = cfg.geometry();
        let conn = connection_of(cfg, geometry.clone());
        let dual = conn.dual();
        let mut r = rng::seeded(seed);
        let n = cfg.model.dim_hilbert();
        let mut worst = 0.0f64;
        for start in random_points(&mut r, cfg.model.n_params(), 5) {
            let end = rng::random_theta(&mut r, cfg.model.n_params(), 0.6);
            let path = CurvePath::segment(&start, &end);
            let pi = conn.transport(&path, 0.0, 1.0)?;
            let pi_star = dual.transport(&path, 0.0, 1.0)?;
            let cs = geometry.context(&start)?;
            let ct = geometry.context(&end)?;
            for _ in 0..4 {
                let x = rng::random_lifted(&mut r, n);
                let y = rng::random_lifted(&mut r, n);
                let lhs = ct.inner_product(&pi.conjugate(&x)?, &pi_star.conjugate(&y)?);
                let rhs = cs.inner_product(&x, &y);
                let scale = rhs.norm().max(1.0);
                worst = worst.max((lhs - rhs).norm() / scale);
            }
        }
        Ok(worst)
    };
    match body(cfg, seed) {
        Ok(res) => vec![CheckRecord::new(
            "duality",
            property,
            &theta_vec(&cfg.theta),
            res,
            1e-7,
        )],
        Err(e) => vec![CheckRecord::failed("duality", property, &e)],
    }
}

/// Pairing identity between the weight-interpolated transport and its
/// mirror image, plus the endpoint identity that the mirror of the
/// unitary transport is the mixture transport.
fn check_alpha_family(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let geometry = cfg.geometry();
    let n = cfg.model.dim_hilbert();
    let mut r = rng::seeded(seed);
    let start = rng::random_theta(&mut r, cfg.model.n_params(), 0.5);
    let end = rng::random_theta(&mut r, cfg.model.n_params(), 0.5);
    let path = CurvePath::segment(&start, &end);
    for alpha in [-1.0f64, -0.5, 0.0, 0.5, 1.0] {
        let property = format!(
            "pairing duality between the weight-{alpha} and weight-{} transports",
            -alpha
        );
        let mut body = || -> Result<f64> {
            let ca = ModelConnection::new(geometry.clone(), ModelConnectionKind::Alpha(alpha));
            let cb = ModelConnection::new(geometry.clone(), ModelConnectionKind::Alpha(-alpha));
            let pa = ca.transport(&path, 0.0, 1.0)?;
            let pb = cb.transport(&path, 0.0, 1.0)?;
            let cs = geometry.context(&start)?;
            let ct = geometry.context(&end)?;
            let mut worst = 0.0f64;
            for _ in 0..4 {
                let x = rng::random_lifted(&mut r, n);
                let y = rng::random_lifted(&mut r, n);
                let lhs = ct.inner_product(&pa.conjugate(&x)?, &pb.conjugate(&y)?);
                let rhs = cs.inner_product(&x, &y);
                worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1.0));
            }
            Ok(worst)
        };
        out.push(match body() {
            Ok(res) => CheckRecord::new(
                format!("alpha_family({alpha})"),
                property.clone(),
                &theta_vec(&cfg.theta),
                res,
                1e-7,
            ),
            Err(e) => CheckRecord::failed(format!("alpha_family({alpha})"), property, &e),
        });
    }
    let endpoint_property = "the dual of the unitary transport equals the mixture transport";
    let endpoint = || -> Result<f64> {
        let m = ModelConnection::new(geometry.clone(), ModelConnectionKind::Alpha(-1.0));
        let unit = ModelConnection::new(geometry.clone(), ModelConnectionKind::Dual);
        let star = DualConnection::new(unit, geometry.clone());
        let a = m.transport(&path, 0.0, 1.0)?.matrix;
        let b = star.transport(&path, 0.0, 1.0)?.matrix;
        Ok(max_abs(&(a - b)))
    };
    out.push(match endpoint() {
        Ok(res) => CheckRecord::new(
            "alpha_endpoint",
            endpoint_property,
            &theta_vec(&cfg.theta),
            res,
            1e-8,
        ),
        Err(e) => CheckRecord::failed("alpha_endpoint", endpoint_property, &e),
    });
    out
}

/// (Pi-hat X, Y)_t = (X, Z-hat Y)_s with Z = T_s^{-2} Pi^dag T_t^2.
fn check_adjoint(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "the pairing adjoint of the lifted transport is conjugation by \
                    T_s^-2 Pi^dag T_t^2";
    let body = || -> Result<f64> {
        let geometry = cfg.geometry();
        let conn = connection_of(cfg, geometry.clone());
        let mut r = rng::seeded(seed);
        let n = cfg.model.dim_hilbert();
        let mut worst = 0.0f64;
        for start in random_points(&mut r, cfg.model.n_params(), 3) {
            let end = rng::random_theta(&mut r, cfg.model.n_params(), 0.6);
            let path = CurvePath::segment(&start, &end);
            let pi = conn.transport(&path, 0.0, 1.0)?.matrix;
            let cs = geometry.context(&start)?;
            let ct = geometry.context(&end)?;
            let z = cs.t_power(-2.0) * dagger(&pi) * ct.t_power(2.0);
            for _ in 0..4 {
                let x = rng::random_lifted(&mut r, n);
                let y = rng::random_lifted(&mut r, n);
                let lhs = ct.inner_product(&crate::connection::lift_transport(&pi, &x)?, &y);
                let rhs = cs.inner_product(&x, &crate::connection::lift_transport(&z, &y)?);
                worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1.0));
            }
        }
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "adjoint",
            property,
            &theta_vec(&cfg.theta),
            res,
            1e-7,
        )],
        Err(e) => vec![CheckRecord::failed("adjoint", property, &e)],
    }
}

/// Product-form transports carry no holonomy; the generated reference
/// connection carries plenty (sensitivity guard).
fn check_holonomy_product_form(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let tol = cfg.fd_tol();
    let m_prop = "the mixture transport has vanishing holonomy operators";
    let m_body = || -> Result<f64> {
        let geometry = cfg.geometry();
        let conn = ModelConnection::new(geometry, ModelConnectionKind::M);
        if conn.param_dim() < 2 {
            return Ok(0.0);
        }
        Ok(holonomy_formula(&conn, &cfg.theta, cfg.fd_step)?.max_norm())
    };
    out.push(match m_body() {
        Ok(res) => CheckRecord::new(
            "holonomy_m_vanishes",
            m_prop,
            &theta_vec(&cfg.theta),
            res,
            10.0 * tol,
        ),
        Err(e) => CheckRecord::failed("holonomy_m_vanishes", m_prop, &e),
    });

    let v_prop = "a random product-form transport has vanishing holonomy operators";
    let v_body = || -> Result<f64> {
        let mut r = rng::seeded(seed);
        let g1 = rng::random_matrix(&mut r, 4).map(|z| z * 0.08);
        let g2 = rng::random_matrix(&mut r, 4).map(|z| z * 0.08);
        let conn = ProductFormConnection::new(2, 4, move |th: &Theta| {
            Ok(identity(4) + g1.map(|z| z * th[0]) + g2.map(|z| z * th[1]))
        });
        Ok(holonomy_formula(&conn, &Theta::from_vec(vec![0.2, -0.3]), cfg.fd_step)?.max_norm())
    };
    out.push(match v_body() {
        Ok(res) => CheckRecord::new(
            "holonomy_product_vanishes",
            v_prop,
            &[0.2, -0.3],
            res,
            10.0 * tol,
        ),
        Err(e) => CheckRecord::failed("holonomy_product_vanishes", v_prop, &e),
    });

    let s_prop = "the generated reference connection shows holonomy well above noise \
                  (sensitivity guard)";
    let s_body = || -> Result<f64> {
        let (conn, _, _, _) = synthetic_nonproduct_connection();
        let h = holonomy_formula(&conn, &Theta::from_vec(vec![0.3, 0.5]), cfg.fd_step)?;
        let norm = h.max_norm();
        // Pass iff norm > 100 tol: report the shortfall as residual.
        Ok((100.0 * tol - norm).max(0.0))
    };
    out.push(match s_body() {
        Ok(res) => CheckRecord::new("holonomy_sensitivity", s_prop, &[0.3, 0.5], res, 0.0),
        Err(e) => CheckRecord::failed("holonomy_sensitivity", s_prop, &e),
    });
    out
}

/// Loop estimator vs formula estimator on the generated connection.
fn check_holonomy_estimators(cfg: &VerifyConfig, _seed: u64) -> Vec<CheckRecord> {
    let property = "small-rectangle loop defect and the potential-based formula give the \
                    same holonomy operators";
    let body = || -> Result<f64> {
        let (conn, _, _, _) = synthetic_nonproduct_connection();
        let th = Theta::from_vec(vec![0.3, 0.5]);
        let formula = holonomy_formula(&conn, &th, cfg.fd_step)?;
        let loop_est = holonomy_loop(&conn, &th, 0, 1, &default_loop_steps())?;
        Ok(max_abs(&(&loop_est - &formula.components[0][1])))
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "holonomy_estimators",
            property,
            &[0.3, 0.5],
            res,
            50.0 * cfg.fd_tol(),
        )],
        Err(e) => vec![CheckRecord::failed("holonomy_estimators", property, &e)],
    }
}

/// i hbar (nabla_p nabla_q - nabla_q nabla_p) X = [H_pq, X] on random
/// operator fields over the generated connection.
fn check_curvature(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "the antisymmetrized second covariant derivative is commutation with \
                    the holonomy operator";
    let body = || -> Result<f64> {
        let (conn, _, _, _) = synthetic_nonproduct_connection();
        let th = Theta::from_vec(vec![0.3, 0.5]);
        let h = holonomy_formula(&conn, &th, cfg.fd_step)?;
        let mut r = rng::seeded(seed);
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let b0 = rng::random_matrix(&mut r, 4);
            let b1 = rng::random_matrix(&mut r, 4);
            let b2 = rng::random_matrix(&mut r, 4);
            let field = move |t: &Theta| -> Result<CMat> {
                Ok(&b0 + b1.map(|z| z * t[0]) + b2.map(|z| z * t[1]))
            };
            let x = field(&th)?;
            let comm = curvature_commutator(&conn, &field, &th, 0, 1, cfg.fd_step)?;
            let lhs = comm.map(|z| z * c(0.0, conn.hbar()));
            let rhs = commutator(&h.components[0][1], &x);
            let scale = max_abs(&x).max(1.0);
            worst = worst.max(max_abs(&(lhs - rhs)) / scale);
        }
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "curvature_commutator",
            property,
            &[0.3, 0.5],
            res,
            100.0 * cfg.fd_tol(),
        )],
        Err(e) => vec![CheckRecord::failed("curvature_commutator", property, &e)],
    }
}

/// T H* T^{-1} = T^{-1} H T on both the density-manifold connection
/// (both sides vanish) and the generated connection.
fn check_dual_holonomy(cfg: &VerifyConfig, _seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let geometry = cfg.geometry();
    let p1 = "holonomy of the mixture transport and of its dual both vanish and are \
              conjugate to each other";
    let b1 = || -> Result<f64> {
        let conn = ModelConnection::new(geometry.clone(), ModelConnectionKind::M);
        if conn.param_dim() < 2 {
            return Ok(0.0);
        }
        let dual = conn.dual();
        dual_holonomy_residual(&conn, &dual, &geometry, &cfg.theta, cfg.fd_step)
    };
    out.push(match b1() {
        Ok(res) => CheckRecord::new(
            "dual_holonomy_model",
            p1,
            &theta_vec(&cfg.theta),
            res,
            50.0 * cfg.fd_tol(),
        ),
        Err(e) => CheckRecord::failed("dual_holonomy_model", p1, &e),
    });

    let p2 = "holonomy of the generated connection is metric-conjugate to the holonomy \
              of its dual";
    let b2 = || -> Result<f64> {
        let (conn, _, _, _) = synthetic_nonproduct_connection();
        let th = Theta::from_vec(vec![0.3, 0.5]);
        let dual = DualConnection::new(conn, geometry.clone());
        let (conn2, _, _, _) = synthetic_nonproduct_connection();
        dual_holonomy_residual(&conn2, &dual, &geometry, &th, cfg.fd_step)
    };
    out.push(match b2() {
        Ok(res) => CheckRecord::new(
            "dual_holonomy_generated",
            p2,
            &[0.3, 0.5],
            res,
            50.0 * cfg.fd_tol(),
        ),
        Err(e) => CheckRecord::failed("dual_holonomy_generated", p2, &e),
    });
    out
}

/// T A* T^{-1} − T^{-1} A^dag T + i hbar T^{-1} (d_p T^2) T^{-1} = 0.
fn check_dual_potential(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "the vector potentials of a connection and of its dual satisfy the \
                    metric-weighted conjugation relation";
    let body = || -> Result<f64> {
        let geometry = cfg.geometry();
        let conn = connection_of(cfg, geometry.clone());
        let dual = conn.dual();
        let mut r = rng::seeded(seed);
        let mut worst =
            dual_potential_residual(&conn, &dual, &geometry, &cfg.theta, cfg.fd_step)?;
        for th in random_points(&mut r, cfg.model.n_params(), 4) {
            worst = worst
                .max(dual_potential_residual(&conn, &dual, &geometry, &th, cfg.fd_step)?);
        }
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "dual_potential",
            property,
            &theta_vec(&cfg.theta),
            res,
            50.0 * cfg.fd_tol(),
        )],
        Err(e) => vec![CheckRecord::failed("dual_potential", property, &e)],
    }
}

/// The four algebraic identities of the density-weighted transform
/// plus closed form vs quadrature.
fn check_kubo(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "the density-weighted transform satisfies its four algebraic \
                    identities and matches direct quadrature";
    let body = || -> Result<f64> {
        let rho = density(&cfg.model, &cfg.theta, &cfg.tol)?;
        let h = rho.hermitian();
        let n = rho.dim();
        let mut r = rng::seeded(seed);
        let mut worst = 0.0f64;
        // [I]^K = rho.
        let ki = kubo_transform(h, &identity(n), &cfg.tol)?;
        worst = worst.max(max_abs(&(&ki - rho.as_mat())));
        for _ in 0..5 {
            let x = rng::random_matrix(&mut r, n);
            let y = rng::random_matrix(&mut r, n);
            let kx = kubo_transform(h, &x, &cfg.tol)?;
            let scale = max_abs(&x).max(1.0);
            // Adjoint compatibility: [X^dag]^K = ([X]^K)^dag.
            let kxd = kubo_transform(h, &dagger(&x), &cfg.tol)?;
            worst = worst.max(max_abs(&(&kxd - dagger(&kx))) / scale);
            // Trace symmetry: Tr([X]^K Y) = Tr(X [Y]^K).
            let ky = kubo_transform(h, &y, &cfg.tol)?;
            let t1 = (&kx * &y).trace();
            let t2 = (&x * &ky).trace();
            worst = worst.max((t1 - t2).norm() / t1.norm().max(1.0));
            // Tr [X]^K = Tr rho X.
            let t3 = kx.trace();
            let t4 = (rho.as_mat() * &x).trace();
            worst = worst.max((t3 - t4).norm() / t4.norm().max(1.0));
        }
        if worst > 1e-10 {
            return Ok(worst);
        }
        // Quadrature cross-check at looser tolerance, folded in scaled
        // so that a quadrature mismatch > 1e-7 also fails the 1e-10
        // gate: residual contribution = quad_defect * 1e-3.
        let x = rng::random_matrix(&mut r, n);
        let kx = kubo_transform(h, &x, &cfg.tol)?;
        let mut quad = CMat::zeros(n, n);
        let steps = 2000usize;
        for k in 0..=steps {
            let u = k as f64 / steps as f64;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            let left = crate::matrix::matrix_function(h, |p| p.powf(u))?;
            let right = crate::matrix::matrix_function(h, |p| p.powf(1.0 - u))?;
            quad += (left.as_mat() * &x * right.as_mat()).map(|z| z * (w / steps as f64));
        }
        let qd = max_abs(&(&kx - &quad)) / max_abs(&x).max(1.0);
        Ok(worst.max(if qd > 1e-7 { qd * 1e-3 } else { 0.0 }))
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "kubo",
            property,
            &theta_vec(&cfg.theta),
            res,
            1e-10,
        )],
        Err(e) => vec![CheckRecord::failed("kubo", property, &e)],
    }
}

/// Tr rho B = (B (x) I Omega, Omega) in the plain doubled-space dot
/// product.
fn check_gns_identity(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "expectations of the density equal purified-vector matrix elements";
    let body = || -> Result<f64> {
        let geometry = cfg.geometry();
        let mut r = rng::seeded(seed);
        let n = cfg.model.dim_hilbert();
        let mut worst = 0.0f64;
        let mut points = vec![cfg.theta.clone()];
        points.extend(random_points(&mut r, cfg.model.n_params(), 4));
        for th in points {
            let ctx = geometry.context(&th)?;
            let rho = density(&cfg.model, &th, &cfg.tol)?;
            for _ in 0..4 {
                let b = rng::random_matrix(&mut r, n);
                let lifted = lift(&b);
                let lhs = (rho.as_mat() * &b).trace();
                let v = &lifted * &ctx.omega;
                let rhs = ctx.omega.dotc(&v);
                worst = worst.max((lhs - rhs).norm());
            }
        }
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "gns_identity",
            property,
            &theta_vec(&cfg.theta),
            res,
            1e-10,
        )],
        Err(e) => vec![CheckRecord::failed("gns_identity", property, &e)],
    }
}

/// On a model of commuting generators the unitary transport is the
/// identity on arbitrary paths (the classical dually-flat limit).
fn check_commutative_reduction(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "for commuting generators the dual transport is the identity";
    let body = || -> Result<f64> {
        let model = ExpFamilyModel::preset("diag2")?;
        let geometry = Arc::new(Geometry::new(model, cfg.tol.clone()));
        let conn = ModelConnection::new(geometry, ModelConnectionKind::Dual);
        let mut r = rng::seeded(seed);
        let mut worst = 0.0f64;
        for _ in 0..4 {
            let a = rng::random_theta(&mut r, 2, 0.7);
            let b = rng::random_theta(&mut r, 2, 0.7);
            let path = CurvePath::segment(&a, &b);
            for (s, t) in [(0.0, 1.0), (0.2, 0.9), (1.0, 0.0)] {
                let pi = conn.transport(&path, s, t)?.matrix;
                worst = worst.max(max_abs(&(pi - identity(4))));
            }
        }
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "commutative_reduction",
            property,
            &[],
            res,
            1e-8,
        )],
        Err(e) => vec![CheckRecord::failed("commutative_reduction", property, &e)],
    }
}

/// Sums, products, and adjoints of autoparallel fields stay
/// autoparallel.
fn check_autoparallel_algebra(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "autoparallel operator fields form an involutive algebra";
    let body = || -> Result<f64> {
        let geometry = cfg.geometry();
        // Unitary product-form transport built from the canonical
        // basis-change factor; defining transport and fields from the
        // same single-point factor keeps the check independent of the
        // eigenvector sign convention (the continuation gauge of the
        // full manifold transport can differ from the canonical one by
        // signs on paths where an eigenvector's dominant entry flips).
        let dim = cfg.model.dim_hilbert().pow(2);
        let factor = {
            let g = geometry.clone();
            move |th: &Theta| -> Result<CMat> {
                ModelConnection::new(g.clone(), ModelConnectionKind::Dual).product_factor(th)
            }
        };
        let conn = {
            let f = factor.clone();
            ProductFormConnection::new(cfg.model.n_params(), dim, move |th| f(th))
        };
        let mut r = rng::seeded(seed);
        let a1 = rng::random_matrix(&mut r, dim);
        let a2 = rng::random_matrix(&mut r, dim);
        let start = rng::random_theta(&mut r, cfg.model.n_params(), 0.4);
        let end = rng::random_theta(&mut r, cfg.model.n_params(), 0.4);
        let path = CurvePath::segment(&start, &end);
        let mk = |a: CMat| {
            let f = factor.clone();
            move |th: &Theta| -> Result<CMat> {
                let v = f(th)?;
                Ok(&v * &a * invert(&v)?)
            }
        };
        let f1 = mk(a1);
        let f2 = mk(a2);
        let product = |th: &Theta| -> Result<CMat> { Ok(f1(th)? * f2(th)?) };
        let sum = |th: &Theta| -> Result<CMat> { Ok(f1(th)? + f2(th)?) };
        let adjoint = |th: &Theta| -> Result<CMat> { Ok(dagger(&f1(th)?)) };
        let mut worst = autoparallel_residual(&conn, &f1, &path, 4)?;
        worst = worst.max(autoparallel_residual(&conn, &product, &path, 4)?);
        worst = worst.max(autoparallel_residual(&conn, &sum, &path, 4)?);
        worst = worst.max(autoparallel_residual(&conn, &adjoint, &path, 4)?);
        Ok(worst)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "autoparallel_algebra",
            property,
            &theta_vec(&cfg.theta),
            res,
            2e-7,
        )],
        Err(e) => vec![CheckRecord::failed("autoparallel_algebra", property, &e)],
    }
}

/// Tangent-length conservation for the self-paired transport, with
/// the non-conserving mixture control. Quick variant of the full
/// acceptance instance: horizon 0.25, step 1/64.
fn check_geodesic_conservation(cfg: &VerifyConfig, _seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let geometry = cfg.geometry();
    if cfg.model.n_params() != 2 {
        out.push(CheckRecord::new(
            "geodesic_conservation",
            "skipped: instance defined for two-parameter models",
            &theta_vec(&cfg.theta),
            0.0,
            1.0,
        ));
        return out;
    }
    let start = || GeodesicState::new(Theta::from_vec(vec![0.2, 0.1]), DVector::from_vec(vec![1.0, 0.0]), 0.0);
    let p1 = "tangent length is constant along self-paired-transport geodesics \
              (conditional on vanishing potential expectations, which are reported)";
    let b1 = || -> Result<(f64, f64)> {
        let conn = ModelConnection::new(geometry.clone(), ModelConnectionKind::Alpha(0.0));
        let trace = integrate_geodesic(&conn, &geometry, start()?, 0.25, 1.0 / 64.0)?;
        let max_exp = trace.expectations.iter().copied().fold(0.0, f64::max);
        Ok((trace.tangent_length_drift(), max_exp))
    };
    out.push(match b1() {
        Ok((drift, max_exp)) => CheckRecord::new(
            "geodesic_conservation",
            format!("{p1}; max potential expectation along trace = {max_exp:.3e}"),
            &[0.2, 0.1],
            drift,
            1e-4,
        ),
        Err(e) => CheckRecord::failed("geodesic_conservation", p1, &e),
    });
    let p2 = "control: the mixture transport visibly violates conservation on the \
              same initial data (drift must exceed 1e-2)";
    let b2 = || -> Result<f64> {
        let conn = ModelConnection::new(geometry.clone(), ModelConnectionKind::M);
        let trace = integrate_geodesic(&conn, &geometry, start()?, 0.25, 1.0 / 64.0)?;
        Ok((1e-2 - trace.tangent_length_drift()).max(0.0))
    };
    out.push(match b2() {
        Ok(res) => CheckRecord::new("geodesic_conservation_control", p2, &[0.2, 0.1], res, 0.0),
        Err(e) => CheckRecord::failed("geodesic_conservation_control", p2, &e),
    });
    out
}

/// Metric invariance under an abelian shift of the potential.
fn check_gauge_invariance(cfg: &VerifyConfig, seed: u64) -> Vec<CheckRecord> {
    let property = "the metric tensor is unchanged by scalar gauge shifts of the \
                    vector potential";
    let body = || -> Result<f64> {
        let geometry = cfg.geometry();
        let conn = connection_of(cfg, geometry.clone());
        let ctx = geometry.context(&cfg.theta)?;
        let a = vector_potential(&conn, &cfg.theta, cfg.fd_step)?;
        let mut r = rng::seeded(seed);
        let grad: Vec<f64> = (0..cfg.model.n_params())
            .map(|_| rng::random_theta(&mut r, 1, 1.0)[0])
            .collect();
        gauge_shift_defect(&ctx, &a, &grad, geometry.tol.g_floor)
    };
    match body() {
        Ok(res) => vec![CheckRecord::new(
            "gauge_invariance",
            property,
            &theta_vec(&cfg.theta),
            res,
            1e-8,
        )],
        Err(e) => vec![CheckRecord::failed("gauge_invariance", property, &e)],
    }
}

/// Scan support: metric entries, holonomy norms, and the weight
/// parameter over a grid of points. Failures are flagged per row and
/// the scan continues.
pub fn scan_grid(cfg: &VerifyConfig, grid: &[Theta]) -> Vec<crate::report::ScanRow> {
    let geometry = cfg.geometry();
    let conn = connection_of(cfg, geometry.clone());
    let n = cfg.model.n_params();
    let alpha = match cfg.connection {
        ModelConnectionKind::Alpha(a) => a,
        ModelConnectionKind::M => -1.0,
        ModelConnectionKind::Dual => 1.0,
    };
    grid.iter()
        .map(|th| {
            let body = || -> Result<(Vec<f64>, Vec<f64>)> {
                let ctx = geometry.context(th)?;
                let a = vector_potential(&conn, th, cfg.fd_step)?;
                let g = crate::metric::metric_tensor(&ctx, &a, geometry.tol.g_floor)?;
                let mut metric = Vec::with_capacity(n * n);
                for p in 0..n {
                    for q in 0..n {
                        metric.push(g.g[(p, q)]);
                    }
                }
                let mut hn = Vec::new();
                if n >= 2 {
                    let h = holonomy_formula(&conn, th, cfg.fd_step)?;
                    for p in 0..n {
                        for q in (p + 1)..n {
                            hn.push(max_abs(&h.components[p][q]));
                        }
                    }
                }
                Ok((metric, hn))
            };
            match body() {
                Ok((metric, holonomy_norms)) => crate::report::ScanRow {
                    theta: theta_vec(th),
                    metric,
                    holonomy_norms,
                    alpha,
                    flag: String::new(),
                },
                Err(e) => crate::report::ScanRow {
                    theta: theta_vec(th),
                    metric: vec![f64::NAN; n * n],
                    holonomy_norms: vec![f64::NAN; n * (n - 1) / 2],
                    alpha,
                    flag: format!("{e}"),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> VerifyConfig {
        VerifyConfig {
            model: ExpFamilyModel::preset("pauli2").unwrap(),
            theta: Theta::from_vec(vec![0.3, 0.5]),
            connection: ModelConnectionKind::Alpha(0.0),
            fd_step: 1e-4,
            seed: 42,
            workers: 2,
            tol: Tolerances::default(),
        }
    }

    #[test]
    fn full_suite_runs_and_is_deterministic() {
        let c = cfg();
        let r1 = run_verify(&c).unwrap();
        let mut c2 = cfg();
        c2.workers = 1;
        let r2 = run_verify(&c2).unwrap();
        // Same seed, different worker budget: identical records.
        let mut r2n = r2.clone();
        r2n.config = r1.config.clone();
        assert_eq!(
            serde_json::to_string(&r1.records).unwrap(),
            serde_json::to_string(&r2n.records).unwrap()
        );
        assert!(!r1.records.is_empty());
    }

    #[test]
    fn expected_check_outcomes_on_worked_model() {
        // The identities whose proofs need the metric operator to fix
        // the purified vector (T Omega = Omega) fail on this model,
        // where (I, I) > 1; everything else passes. The split is
        // asserted so a regression in either direction is caught.
        let report = run_verify(&cfg()).unwrap();
        let record = |name: &str| -> &CheckRecord {
            report
                .records
                .iter()
                .find(|r| r.check == name)
                .unwrap_or_else(|| panic!("missing check {name}"))
        };
        let outcome = |name: &str| -> bool { record(name).pass };
        for failing in [
            "duality",
            "adjoint",
            "gauge_invariance",
            "geodesic_conservation",
        ] {
            assert!(!outcome(failing), "{failing} unexpectedly passed");
        }
        for passing in [
            "alpha_endpoint",
            "holonomy_m_vanishes",
            "holonomy_product_vanishes",
            "holonomy_sensitivity",
            "holonomy_estimators",
            "curvature_commutator",
            "dual_holonomy_model",
            "dual_holonomy_generated",
            "dual_potential",
            "kubo",
            "gns_identity",
            "commutative_reduction",
            "autoparallel_algebra",
            "geodesic_conservation_control",
        ] {
            assert!(outcome(passing), "{passing} unexpectedly failed: {:?}", record(passing));
        }
        assert!(!report.all_pass());
    }

    #[test]
    fn scan_handles_failures_per_row() {
        let c = cfg();
        let grid = vec![
            Theta::from_vec(vec![0.2, 0.3]),
            // Exactly degenerate point for diagnoses: theta = 0 is the
            // maximally mixed state, fine; a symmetric point with a
            // genuine spectral degeneracy is harder to hit for pauli2,
            // so force a failure with a non-finite input instead.
            Theta::from_vec(vec![f64::NAN, 0.0]),
        ];
        let rows = scan_grid(&c, &grid);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].flag.is_empty());
        assert!(!rows[1].flag.is_empty());
    }

    #[test]
    fn different_seeds_differ() {
        let c1 = cfg();
        let mut c2 = cfg();
        c2.seed = 43;
        let r1 = run_verify(&c1).unwrap();
        let r2 = run_verify(&c2).unwrap();
        let res = |r: &VerificationReport| -> Vec<f64> {
            r.records.iter().map(|x| x.residual).collect()
        };
        assert_ne!(res(&r1), res(&r2));
    }
}
