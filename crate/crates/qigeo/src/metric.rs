//! Metric structure on parameter space: the tensor g_pq =
//! Re[(A_p, A_q) - (A_p, I)(I, A_q)] built from the quantum vector
//! potential, and connection coefficients Gamma_{qp,r} =
//! Re(nabla_q A_p, A_r) with index raising through g.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::calculus::{covariant_derivative, vector_potential, VectorPotential};
use crate::connection::{Connection, Geometry};
use crate::error::{QigError, Result};
use crate::expfam::Theta;
use crate::gns::GnsContext;
use crate::matrix::identity;

/// Real symmetric metric tensor at one parameter point.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    pub g: DMatrix<f64>,
    pub theta: Theta,
    /// Set when the smallest eigenvalue fell below the configured
    /// floor; index raising is refused in that case.
    pub degenerate: bool,
    pub min_eigenvalue: f64,
}

impl MetricTensor {
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        if self.degenerate {
            return Err(QigError::DegenerateMetric {
                min_eigenvalue: self.min_eigenvalue,
                floor: 0.0,
            });
        }
        self.g
            .clone()
            .try_inverse()
            .ok_or(QigError::DegenerateMetric {
                min_eigenvalue: self.min_eigenvalue,
                floor: 0.0,
            })
    }
}

/// g_pq = Re[(A_p, A_q) - (A_p, I)(I, A_q)] in the inner product of
/// the given context.
pub fn metric_tensor(
    ctx: &GnsContext,
    a: &VectorPotential,
    g_floor: f64,
) -> Result<MetricTensor> {
    let n = a.components.len();
    let dim = ctx.dim() * ctx.dim();
    let id = identity(dim);
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut a_dot_i = vec![Complex64::default(); n];
    for p in 0..n {
        a_dot_i[p] = ctx.inner_product(&a.components[p], &id);
    }
    for p in 0..n {
        for q in 0..n {
            let pq = ctx.inner_product(&a.components[p], &a.components[q]);
            let centered = pq - a_dot_i[p] * a_dot_i[q].conj();
            g[(p, q)] = centered.re;
        }
    }
    // Exact symmetrization; conjugate symmetry of the pairing makes
    // the antisymmetric part pure roundoff.
    let g = (&g + g.transpose()) * 0.5;
    let min_eigenvalue = g
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(MetricTensor {
        g,
        theta: a.theta.clone(),
        degenerate: min_eigenvalue < g_floor,
        min_eigenvalue,
    })
}

/// Shift of the metric under the abelian gauge change A_p -> A_p -
/// hbar (d_p phi) I. Returns the max-norm change of g; zero exactly
/// when the identity has unit pairing norm.
pub fn gauge_shift_defect(
    ctx: &GnsContext,
    a: &VectorPotential,
    phi_grad: &[f64],
    g_floor: f64,
) -> Result<f64> {
    let n = a.components.len();
    let dim = ctx.dim() * ctx.dim();
    let id = identity(dim);
    let mut shifted = a.clone();
    for p in 0..n {
        shifted.components[p] -= id.map(|z| z * (a.hbar * phi_grad[p]));
    }
    let g0 = metric_tensor(ctx, a, g_floor)?;
    let g1 = metric_tensor(ctx, &shifted, g_floor)?;
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            worst = worst.max((g1.g[(p, q)] - g0.g[(p, q)]).abs());
        }
    }
    Ok(worst)
}

/// Connection coefficients with both index positions. Storage is
/// flattened as [q][p][r] -> q n^2 + p n + r.
#[derive(Debug, Clone)]
pub struct ChristoffelSymbols {
    pub lower: Vec<f64>,
    pub upper: Option<Vec<f64>>,
    pub n: usize,
    pub theta: Theta,
}

impl ChristoffelSymbols {
    pub fn lower_at(&self, q: usize, p: usize, r: usize) -> f64 {
        self.lower[q * self.n * self.n + p * self.n + r]
    }

    pub fn upper_at(&self, q: usize, p: usize, r: usize) -> Result<f64> {
        let u = self.upper.as_ref().ok_or(QigError::DegenerateMetric {
            min_eigenvalue: f64::NAN,
            floor: f64::NAN,
        })?;
        Ok(u[q * self.n * self.n + p * self.n + r])
    }
}

/// Gamma_{qp,r} = Re(nabla_q A_p, A_r)_theta and its g-raised form.
/// The raised symbols are omitted (not an error) when the metric is
/// degenerate at theta.
pub fn christoffel(
    conn: &dyn Connection,
    geometry: &Geometry,
    theta: &Theta,
    fd_step: f64,
) -> Result<ChristoffelSymbols> {
    let n = conn.param_dim();
    let ctx = geometry.context(theta)?;
    let a = vector_potential(conn, theta, fd_step)?;
    let mut nabla = Vec::with_capacity(n * n);
    for q in 0..n {
        for p in 0..n {
            let field = |t: &Theta| -> Result<_> {
                Ok(vector_potential(conn, t, fd_step)?.components[p].clone())
            };
            nabla.push(covariant_derivative(conn, &field, theta, q, fd_step)?);
        }
    }
    let mut lower = vec![0.0f64; n * n * n];
    for q in 0..n {
        for p in 0..n {
            for r in 0..n {
                lower[q * n * n + p * n + r] = ctx
                    .inner_product(&nabla[q * n + p], &a.components[r])
                    .re;
            }
        }
    }
    let g = metric_tensor(&ctx, &a, geometry.tol.g_floor)?;
    let upper = if g.degenerate {
        None
    } else {
        let ginv = g.inverse()?;
        let mut u = vec![0.0f64; n * n * n];
        for q in 0..n {
            for p in 0..n {
                for r in 0..n {
                    let mut acc = 0.0;
                    for s in 0..n {
                        acc += ginv[(r, s)] * lower[q * n * n + p * n + s];
                    }
                    u[q * n * n + p * n + r] = acc;
                }
            }
        }
        Some(u)
    };
    Ok(ChristoffelSymbols {
        lower,
        upper,
        n,
        theta: theta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Tolerances;
    use crate::connection::{ModelConnection, ModelConnectionKind, ProductFormConnection};
    use crate::expfam::ExpFamilyModel;
    use crate::gns::gns_context;
    use crate::matrix::CMat;
    use crate::rng;
    use std::sync::Arc;

    fn theta2(a: f64, b: f64) -> Theta {
        Theta::from_vec(vec![a, b])
    }

    fn pauli_setup() -> (Arc<Geometry>, ModelConnection, GnsContext, Theta) {
        let geo = Arc::new(Geometry::new(
            ExpFamilyModel::preset("pauli2").unwrap(),
            Tolerances::default(),
        ));
        let conn = ModelConnection::new(geo.clone(), ModelConnectionKind::M);
        let th = theta2(0.3, 0.5);
        let ctx = gns_context(&geo.model, &th, None, &geo.tol).unwrap();
        (geo, conn, ctx, th)
    }

    #[test]
    fn metric_is_symmetric_psd_nondegenerate() {
        let (geo, conn, ctx, th) = pauli_setup();
        let a = vector_potential(&conn, &th, geo.tol.fd_step).unwrap();
        let g = metric_tensor(&ctx, &a, geo.tol.g_floor).unwrap();
        assert!((g.g[(0, 1)] - g.g[(1, 0)]).abs() < 1e-10);
        assert!(g.min_eigenvalue > 1e-8);
        assert!(!g.degenerate);
    }

    #[test]
    fn zero_potential_gives_zero_tensor() {
        let (geo, _, ctx, th) = pauli_setup();
        let a = VectorPotential {
            components: vec![CMat::zeros(4, 4), CMat::zeros(4, 4)],
            theta: th,
            hbar: 1.0,
            fd_step: geo.tol.fd_step,
        };
        let g = metric_tensor(&ctx, &a, geo.tol.g_floor).unwrap();
        assert!(g.g.iter().all(|&v| v.abs() < 1e-14));
        assert!(g.degenerate);
        assert!(g.inverse().is_err());
    }

    #[test]
    fn cauchy_schwarz_on_random_lifted_pairs() {
        let (_, _, ctx, _) = pauli_setup();
        let mut r = rng::seeded(11);
        for _ in 0..10 {
            let x = rng::random_lifted(&mut r, 2);
            let y = rng::random_lifted(&mut r, 2);
            let xy = ctx.inner_product(&x, &y).norm_sqr();
            let xx = ctx.inner_product(&x, &x).re;
            let yy = ctx.inner_product(&y, &y).re;
            assert!(xy <= xx * yy + 1e-10);
        }
    }

    #[test]
    fn gauge_shift_matches_identity_norm_expansion() {
        // With w = (I, I) != 1 the abelian shift changes g by
        // Re[c_q u_p (w - 1) + c_p conj(u_q) (w - 1)
        //    + c_p c_q w (1 - w)] per entry (hbar = 1). The defect
        // therefore vanishes exactly when w = 1 and not otherwise.
        let (geo, conn, ctx, th) = pauli_setup();
        let a = vector_potential(&conn, &th, geo.tol.fd_step).unwrap();
        let id = identity(4);
        let w = ctx.inner_product(&id, &id).re;
        let u: Vec<Complex64> = (0..2)
            .map(|p| ctx.inner_product(&a.components[p], &id))
            .collect();
        let c = [0.37, -0.52];
        let g0 = metric_tensor(&ctx, &a, geo.tol.g_floor).unwrap();
        let mut shifted = a.clone();
        for p in 0..2 {
            shifted.components[p] -= id.map(|z| z * c[p]);
        }
        let g1 = metric_tensor(&ctx, &shifted, geo.tol.g_floor).unwrap();
        for p in 0..2 {
            for q in 0..2 {
                let predict = (c[q] * u[p] * (w - 1.0)
                    + c[p] * u[q].conj() * (w - 1.0)
                    + Complex64::from(c[p] * c[q] * w * (1.0 - w)))
                .re;
                let got = g1.g[(p, q)] - g0.g[(p, q)];
                assert!((got - predict).abs() < 1e-10, "p={p} q={q}");
            }
        }
        // The defect itself is materially nonzero here because w > 1.
        let defect = gauge_shift_defect(&ctx, &a, &c, geo.tol.g_floor).unwrap();
        assert!(defect > 1e-4);
    }

    #[test]
    fn metric_against_pairing_oracle() {
        // Independent oracle: g_pq from transports differentiated at
        // two step sizes with Richardson, paired directly through T
        // and Omega without going through VectorPotential.
        let (geo, conn, ctx, th) = pauli_setup();
        let a = vector_potential(&conn, &th, geo.tol.fd_step).unwrap();
        let g = metric_tensor(&ctx, &a, geo.tol.g_floor).unwrap();

        let oracle_component = |p: usize| -> CMat {
            let line = crate::path::CurvePath::coordinate_line(&th, p);
            let diff = |h: f64| -> CMat {
                let fwd = conn.transport(&line, 0.0, h).unwrap().matrix;
                let bwd = conn.transport(&line, 0.0, -h).unwrap().matrix;
                (fwd - bwd).map(|z| z / (2.0 * h))
            };
            let d1 = diff(1e-3);
            let d2 = diff(5e-4);
            (d2.map(|z| z * (4.0 / 3.0)) - d1.map(|z| z / 3.0))
                .map(|z| z * Complex64::new(0.0, 1.0))
        };
        let id = identity(4);
        let oa: Vec<CMat> = (0..2).map(oracle_component).collect();
        for p in 0..2 {
            for q in 0..2 {
                let centered = ctx.inner_product(&oa[p], &oa[q])
                    - ctx.inner_product(&oa[p], &id) * ctx.inner_product(&id, &oa[q]);
                assert!((g.g[(p, q)] - centered.re).abs() < 1e-5);
            }
        }
        let _ = a;
    }

    #[test]
    fn christoffel_vanishes_for_constant_product_form() {
        let (geo, _, _, th) = pauli_setup();
        let v = identity(4).map(|z| z * 1.3);
        let conn = ProductFormConnection::new(2, 4, move |_| Ok(v.clone()));
        let gamma = christoffel(&conn, &geo, &th, geo.tol.fd_step).unwrap();
        for val in &gamma.lower {
            assert!(val.abs() < 1e-6);
        }
    }

    #[test]
    fn christoffel_upper_is_metric_contraction() {
        let (geo, conn, ctx, th) = pauli_setup();
        let gamma = christoffel(&conn, &geo, &th, geo.tol.fd_step).unwrap();
        let a = vector_potential(&conn, &th, geo.tol.fd_step).unwrap();
        let g = metric_tensor(&ctx, &a, geo.tol.g_floor).unwrap();
        let ginv = g.inverse().unwrap();
        for q in 0..2 {
            for p in 0..2 {
                for r in 0..2 {
                    let mut acc = 0.0;
                    for s in 0..2 {
                        acc += ginv[(r, s)] * gamma.lower_at(q, p, s);
                    }
                    assert!((gamma.upper_at(q, p, r).unwrap() - acc).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn christoffel_lower_is_real_storage() {
        // Realness holds by construction (Re applied); the storage
        // must be finite and populated.
        let (geo, conn, _, th) = pauli_setup();
        let gamma = christoffel(&conn, &geo, &th, geo.tol.fd_step).unwrap();
        assert_eq!(gamma.lower.len(), 8);
        assert!(gamma.lower.iter().all(|v| v.is_finite()));
        assert!(gamma.lower.iter().any(|v| v.abs() > 1e-6));
    }
}
