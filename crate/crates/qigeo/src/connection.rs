//! Parallel transport operators on the doubled space C^{N^2}.
//!
//! Four families are provided. The mixture transport of the density
//! manifold maps psi_i^s (x) psi_j^s to sqrt(p_i^t / p_i^s) psi_i^t
//! (x) psi_j^t and is realized in product form V(t) V(s)^{-1} with
//! V = (rho^{1/2} W) (x) W over the continuation gauge W. Its dual is
//! the unitary basis change (W_t W_s^dag) (x) (W_t W_s^dag). The
//! alpha family interpolates between them by metric-operator powers,
//! Pi_alpha = T_t^{alpha - 1} Pi_1 T_s^{1 - alpha}. Arbitrary
//! product-form connections and ODE-generated connections (transport
//! integrated from a Hermitian generator field) complete the zoo; the
//! latter is the only way to obtain nonzero holonomy.

use std::sync::Arc;

use crate::config::Tolerances;
use crate::error::{QigError, Result};
use crate::expfam::{ExpFamilyModel, Theta};
use crate::gns::{gns_context, GnsContext};
use crate::matrix::{c, cr, dagger, identity, invert, kron, CMat};
use crate::path::CurvePath;

/// Shared model + tolerance bundle; owns the continuation machinery
/// every transport needs.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub model: Arc<ExpFamilyModel>,
    pub tol: Tolerances,
}

impl Geometry {
    pub fn new(model: ExpFamilyModel, tol: Tolerances) -> Self {
        Geometry {
            model: Arc::new(model),
            tol,
        }
    }

    /// Fresh anchor context at a point (canonical gauge).
    pub fn context(&self, theta: &Theta) -> Result<GnsContext> {
        gns_context(&self.model, theta, None, &self.tol)
    }

    /// Continuation-advances `ctx` from path parameter `u` to
    /// `target`, bisecting the substep up to 20 times whenever the
    /// matching quality drops below overlap^2 = 0.9.
    fn advance(
        &self,
        path: &CurvePath,
        ctx: &mut GnsContext,
        u: &mut f64,
        target: f64,
    ) -> Result<()> {
        let mut halvings = 0usize;
        let mut next = target;
        loop {
            let attempt = gns_context(&self.model, &path.point(next), Some(ctx), &self.tol);
            match attempt {
                Ok(c) if c.min_overlap_sq > 0.9 => {
                    *ctx = c;
                    *u = next;
                    if (*u - target).abs() < 1e-15 {
                        return Ok(());
                    }
                    next = target;
                }
                Ok(c) => {
                    halvings += 1;
                    if halvings > 20 {
                        return Err(QigError::ContinuationLost {
                            overlap_sq: c.min_overlap_sq,
                        });
                    }
                    next = 0.5 * (*u + next);
                }
                Err(QigError::ContinuationLost { overlap_sq }) => {
                    halvings += 1;
                    if halvings > 20 {
                        return Err(QigError::ContinuationLost { overlap_sq });
                    }
                    next = 0.5 * (*u + next);
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Walks the continuation chain from path parameter `a` to `b`
    /// (anchoring at `a`) and returns the contexts at both ends.
    pub fn walk(&self, path: &CurvePath, a: f64, b: f64) -> Result<(GnsContext, GnsContext)> {
        let mut anchor = self.context(&path.point(a))?;
        if (b - a).abs() < 1e-15 {
            return Ok((anchor.clone(), anchor));
        }
        // At the maximally mixed state every basis diagonalizes rho,
        // but the limiting eigenbasis along the path is fixed by the
        // direction of departure; adopt the far end's canonical gauge
        // so the continuation can lock on.
        if anchor.is_uniform() {
            if let Ok(far) = self.context(&path.point(b)) {
                anchor = anchor.regauged(far.basis.clone());
            }
        }
        let steps = ((b - a).abs() * path.samples as f64).ceil().max(1.0) as usize;
        let mut ctx = anchor.clone();
        let mut u = a;
        let du = (b - a) / steps as f64;
        for k in 1..=steps {
            let target = if k == steps { b } else { a + du * k as f64 };
            self.advance(path, &mut ctx, &mut u, target)?;
        }
        Ok((anchor, ctx))
    }

    /// Contexts at several path parameters from one continuation
    /// chain anchored at `a`. Targets must be sorted ascending and not
    /// precede `a`. Sharing the chain keeps the basis gauge (and with
    /// it the phase of Omega) consistent across the returned contexts,
    /// which matters whenever Omega values are differenced.
    pub fn walk_chain(
        &self,
        path: &CurvePath,
        a: f64,
        targets: &[f64],
    ) -> Result<Vec<GnsContext>> {
        let mut anchor = self.context(&path.point(a))?;
        if anchor.is_uniform() {
            if let Some(&far) = targets.last() {
                if (far - a).abs() > 1e-15 {
                    if let Ok(ctx) = self.context(&path.point(far)) {
                        anchor = anchor.regauged(ctx.basis.clone());
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(targets.len());
        let mut ctx = anchor;
        let mut u = a;
        for &target in targets {
            if target < u - 1e-15 {
                return Err(QigError::Config(
                    "walk_chain targets must be ascending".into(),
                ));
            }
            if (target - u).abs() < 1e-15 {
                out.push(ctx.clone());
                continue;
            }
            let steps = ((target - u).abs() * path.samples as f64).ceil().max(1.0) as usize;
            let du = (target - u) / steps as f64;
            let start = u;
            for k in 1..=steps {
                let sub = if k == steps { target } else { start + du * k as f64 };
                self.advance(path, &mut ctx, &mut u, sub)?;
            }
            out.push(ctx.clone());
        }
        Ok(out)
    }

    /// Endpoint contexts for a transport query, sharing one chain
    /// anchored at min(s, t) so that opposite transports are exact
    /// inverses.
    pub fn endpoint_contexts(
        &self,
        path: &CurvePath,
        s: f64,
        t: f64,
    ) -> Result<(GnsContext, GnsContext)> {
        if s <= t {
            let (cs, ct) = self.walk(path, s, t)?;
            Ok((cs, ct))
        } else {
            let (ct, cs) = self.walk(path, t, s)?;
            Ok((cs, ct))
        }
    }
}

/// A transport operator Pi(gamma)^t_s with its metadata.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    pub matrix: CMat,
    pub s: f64,
    pub t: f64,
    pub kind: String,
}

impl TransportOperator {
    /// The lifted action Pi-hat X = Pi X Pi^{-1}.
    pub fn conjugate(&self, x: &CMat) -> Result<CMat> {
        let inv = invert(&self.matrix)?;
        Ok(&self.matrix * x * inv)
    }
}

/// Free-function form of the lifted action for a bare matrix.
pub fn lift_transport(pi: &CMat, x: &CMat) -> Result<CMat> {
    Ok(pi * x * invert(pi)?)
}

/// Anything that can transport along parameter-space curves.
pub trait Connection: Send + Sync {
    fn transport(&self, path: &CurvePath, s: f64, t: f64) -> Result<TransportOperator>;
    fn hbar(&self) -> f64;
    /// Number of manifold parameters.
    fn param_dim(&self) -> usize;
    /// Dimension N^2 of the doubled space the transports act on.
    fn lifted_dim(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelConnectionKind {
    /// Mixture transport sqrt(p^t/p^s) with basis change.
    M,
    /// Unitary dual, pure basis change.
    Dual,
    /// Metric-power interpolation; Alpha(1.0) is the unitary dual and
    /// Alpha(-1.0) the mixture transport.
    Alpha(f64),
}

impl ModelConnectionKind {
    pub fn label(&self) -> String {
        match self {
            ModelConnectionKind::M => "m".into(),
            ModelConnectionKind::Dual => "dual".into(),
            ModelConnectionKind::Alpha(a) => format!("alpha({a})"),
        }
    }
}

/// Transport families attached to an exponential-family manifold.
#[derive(Debug, Clone)]
pub struct ModelConnection {
    pub geometry: Arc<Geometry>,
    pub kind: ModelConnectionKind,
    pub hbar: f64,
}

impl ModelConnection {
    pub fn new(geometry: Arc<Geometry>, kind: ModelConnectionKind) -> Self {
        ModelConnection {
            geometry,
            kind,
            hbar: 1.0,
        }
    }

    pub fn with_hbar(mut self, hbar: f64) -> Self {
        self.hbar = hbar;
        self
    }

    /// The dual family: (Pi-hat X, Pi-hat-star Y)_t = (X, Y)_s defines
    /// M <-> Dual and Alpha(a) <-> Alpha(-a).
    pub fn dual(&self) -> ModelConnection {
        let kind = match self.kind {
            ModelConnectionKind::M => ModelConnectionKind::Dual,
            ModelConnectionKind::Dual => ModelConnectionKind::M,
            ModelConnectionKind::Alpha(a) => ModelConnectionKind::Alpha(-a),
        };
        ModelConnection {
            geometry: self.geometry.clone(),
            kind,
            hbar: self.hbar,
        }
    }

    fn v_matrix(ctx: &GnsContext) -> CMat {
        // (rho^{1/2} W) (x) W = (W diag(sqrt p)) (x) W.
        let n = ctx.dim();
        let mut wd = ctx.basis.clone();
        for i in 0..n {
            let w = cr(ctx.probs[i].sqrt());
            for a in 0..n {
                wd[(a, i)] *= w;
            }
        }
        kron(&wd, &ctx.basis)
    }

    fn v_inverse(ctx: &GnsContext) -> Result<CMat> {
        // (diag(1/sqrt p) W^dag) (x) W^dag, exact by unitarity.
        let n = ctx.dim();
        let mut wi = ctx.basis.adjoint();
        for i in 0..n {
            let p = ctx.probs[i];
            if p.sqrt() < 1e-154 {
                return Err(QigError::SingularMatrix {
                    condition: f64::INFINITY,
                });
            }
            let w = cr(1.0 / p.sqrt());
            for a in 0..n {
                wi[(i, a)] *= w;
            }
        }
        Ok(kron(&wi, &ctx.basis.adjoint()))
    }

    /// Single-point factor V(theta), in the canonical gauge, that
    /// realizes this transport as V(t) V(s)^{-1}: every family here is
    /// product form (for the weighted family the weight folds into the
    /// factor as T^{alpha-1} W (x) W).
    pub fn product_factor(&self, theta: &Theta) -> Result<CMat> {
        let ctx = self.geometry.context(theta)?;
        match self.kind {
            ModelConnectionKind::M => Ok(Self::v_matrix(&ctx)),
            ModelConnectionKind::Dual => Ok(kron(&ctx.basis, &ctx.basis)),
            ModelConnectionKind::Alpha(a) => {
                Ok(ctx.t_power(a - 1.0) * kron(&ctx.basis, &ctx.basis))
            }
        }
    }

    fn assemble(&self, cs: &GnsContext, ct: &GnsContext) -> Result<CMat> {
        match self.kind {
            ModelConnectionKind::M => Ok(Self::v_matrix(ct) * Self::v_inverse(cs)?),
            ModelConnectionKind::Dual => {
                let k = &ct.basis * cs.basis.adjoint();
                Ok(kron(&k, &k))
            }
            ModelConnectionKind::Alpha(a) => {
                let k = &ct.basis * cs.basis.adjoint();
                let dual = kron(&k, &k);
                Ok(ct.t_power(a - 1.0) * dual * cs.t_power(1.0 - a))
            }
        }
    }
}

impl Connection for ModelConnection {
    fn transport(&self, path: &CurvePath, s: f64, t: f64) -> Result<TransportOperator> {
        let (cs, ct) = self.geometry.endpoint_contexts(path, s, t)?;
        Ok(TransportOperator {
            matrix: self.assemble(&cs, &ct)?,
            s,
            t,
            kind: self.kind.label(),
        })
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn param_dim(&self) -> usize {
        self.geometry.model.n_params()
    }

    fn lifted_dim(&self) -> usize {
        let n = self.geometry.model.dim_hilbert();
        n * n
    }
}

/// Pi(gamma)^t_s = V(gamma_t) V(gamma_s)^{-1} for a user-supplied
/// invertible field V. Endpoint-only dependence makes composition
/// exact and holonomy zero.
pub struct ProductFormConnection {
    pub v: Arc<dyn Fn(&Theta) -> Result<CMat> + Send + Sync>,
    pub hbar: f64,
    pub n_params: usize,
    pub dim: usize,
}

impl ProductFormConnection {
    pub fn new(
        n_params: usize,
        dim: usize,
        v: impl Fn(&Theta) -> Result<CMat> + Send + Sync + 'static,
    ) -> Self {
        ProductFormConnection {
            v: Arc::new(v),
            hbar: 1.0,
            n_params,
            dim,
        }
    }
}

impl Connection for ProductFormConnection {
    fn transport(&self, path: &CurvePath, s: f64, t: f64) -> Result<TransportOperator> {
        let vt = (self.v)(&path.point(t))?;
        let vs = (self.v)(&path.point(s))?;
        Ok(TransportOperator {
            matrix: vt * invert(&vs)?,
            s,
            t,
            kind: "product_form".into(),
        })
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn param_dim(&self) -> usize {
        self.n_params
    }

    fn lifted_dim(&self) -> usize {
        self.dim
    }
}

/// Transport integrated from a generator field: i hbar dPi/du =
/// gammadot^p(u) A_p(gamma_u) Pi, Pi(s) = I, by classic fourth-order
/// Runge-Kutta. With a Hermitian field the transport is unitary; a
/// non-integrable field produces genuine holonomy.
pub struct GeneratedConnection {
    pub field: Arc<dyn Fn(&Theta) -> Result<Vec<CMat>> + Send + Sync>,
    pub hbar: f64,
    pub n_params: usize,
    pub dim: usize,
    /// Integration steps per unit of path parameter.
    pub steps_per_unit: usize,
}

impl GeneratedConnection {
    pub fn new(
        n_params: usize,
        dim: usize,
        field: impl Fn(&Theta) -> Result<Vec<CMat>> + Send + Sync + 'static,
    ) -> Self {
        GeneratedConnection {
            field: Arc::new(field),
            hbar: 1.0,
            n_params,
            dim,
            steps_per_unit: 200,
        }
    }

    fn rhs(&self, path: &CurvePath, u: f64, pi: &CMat) -> Result<CMat> {
        let a = (self.field)(&path.point(u))?;
        let v = path.velocity(u);
        let mut h = CMat::zeros(self.dim, self.dim);
        for p in 0..self.n_params {
            h += a[p].map(|z| z * v[p]);
        }
        // dPi/du = (-i/hbar) H Pi.
        let coef = num_complex::Complex64::new(0.0, -1.0 / self.hbar);
        Ok((h * pi).map(|z| z * coef))
    }
}

/// A fixed two-parameter generated connection on a 4-dimensional
/// lifted space whose generator field is A_1 = B_1 + theta_2 C,
/// A_2 = B_2. Its holonomy has the closed form
/// H_12 = C - (i/hbar) [A_1, A_2], nonzero by construction, which
/// makes it the reference instance for every curvature check that a
/// product-form transport would satisfy vacuously. Returns the
/// connection together with (B_1, B_2, C).
pub fn synthetic_nonproduct_connection() -> (GeneratedConnection, CMat, CMat, CMat) {
    let b1 = {
        let mut m = CMat::zeros(4, 4);
        m[(0, 1)] = c(0.0, -0.7);
        m[(1, 0)] = c(0.0, 0.7);
        m[(2, 3)] = cr(0.4);
        m[(3, 2)] = cr(0.4);
        m[(0, 0)] = cr(0.3);
        m
    };
    let b2 = {
        let mut m = CMat::zeros(4, 4);
        m[(0, 2)] = cr(0.5);
        m[(2, 0)] = cr(0.5);
        m[(1, 3)] = c(0.0, 0.3);
        m[(3, 1)] = c(0.0, -0.3);
        m[(3, 3)] = cr(-0.2);
        m
    };
    let c = {
        let mut m = CMat::zeros(4, 4);
        m[(0, 3)] = c(0.2, 0.1);
        m[(3, 0)] = c(0.2, -0.1);
        m[(1, 1)] = cr(0.6);
        m[(2, 2)] = cr(-0.6);
        m
    };
    let (b1c, b2c, cc) = (b1.clone(), b2.clone(), c.clone());
    let conn = GeneratedConnection::new(2, 4, move |th: &Theta| {
        Ok(vec![&b1c + cc.map(|z| z * th[1]), b2c.clone()])
    });
    (conn, b1, b2, c)
}

impl Connection for GeneratedConnection {
    fn transport(&self, path: &CurvePath, s: f64, t: f64) -> Result<TransportOperator> {
        let span = t - s;
        let mut pi = identity(self.dim);
        if span.abs() > 0.0 {
            let steps = ((span.abs() * self.steps_per_unit as f64).ceil() as usize).max(20);
            let du = span / steps as f64;
            let mut u = s;
            for _ in 0..steps {
                let k1 = self.rhs(path, u, &pi)?;
                let k2 = self.rhs(path, u + 0.5 * du, &(&pi + k1.map(|z| z * (0.5 * du))))?;
                let k3 = self.rhs(path, u + 0.5 * du, &(&pi + k2.map(|z| z * (0.5 * du))))?;
                let k4 = self.rhs(path, u + du, &(&pi + k3.map(|z| z * du)))?;
                pi += (k1 + k2.map(|z| z * 2.0) + k3.map(|z| z * 2.0) + k4).map(|z| z * (du / 6.0));
                u += du;
            }
        }
        Ok(TransportOperator {
            matrix: pi,
            s,
            t,
            kind: "generated".into(),
        })
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn param_dim(&self) -> usize {
        self.n_params
    }

    fn lifted_dim(&self) -> usize {
        self.dim
    }
}

/// Generic dual wrapper: Pi-star(gamma)^t_s = T_t^{-2}
/// [Pi(gamma)^s_t]^dag T_s^2, with the metric powers taken from the
/// underlying manifold geometry. For `ModelConnection` prefer
/// `ModelConnection::dual`, which is exact.
pub struct DualConnection<C: Connection> {
    pub base: C,
    pub geometry: Arc<Geometry>,
}

impl<C: Connection> DualConnection<C> {
    pub fn new(base: C, geometry: Arc<Geometry>) -> Self {
        DualConnection { base, geometry }
    }
}

impl<C: Connection> Connection for DualConnection<C> {
    fn transport(&self, path: &CurvePath, s: f64, t: f64) -> Result<TransportOperator> {
        let reverse = self.base.transport(path, t, s)?;
        let ct = self.geometry.context(&path.point(t))?;
        let cs = self.geometry.context(&path.point(s))?;
        Ok(TransportOperator {
            matrix: ct.t_power(-2.0) * dagger(&reverse.matrix) * cs.t_power(2.0),
            s,
            t,
            kind: format!("dual_of({})", reverse.kind),
        })
    }

    fn hbar(&self) -> f64 {
        self.base.hbar()
    }

    fn param_dim(&self) -> usize {
        self.base.param_dim()
    }

    fn lifted_dim(&self) -> usize {
        self.base.lifted_dim()
    }
}
