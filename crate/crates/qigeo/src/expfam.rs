//! The matrix exponential family rho_theta = exp(theta^k E_k -
//! alpha(theta)) over a set of linearly independent Hermitian
//! generators, with the log-partition function, perturbation paths,
//! and tangents through the Kubo transform.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{QigError, Result};
use crate::matrix::{cr, eig_hermitian, kubo_transform, matrix_function, CMat, HermitianMatrix};

pub type Theta = DVector<f64>;

/// A parameterized family of density matrices on C^N with n Hermitian
/// generators E_k. Generators must be linearly independent in the
/// Hilbert-Schmidt sense.
#[derive(Debug, Clone)]
pub struct ExpFamilyModel {
    dim_hilbert: usize,
    generators: Vec<HermitianMatrix>,
    preset: Option<String>,
}

impl ExpFamilyModel {
    pub fn new(generators: Vec<HermitianMatrix>) -> Result<Self> {
        let n = generators.len();
        if n == 0 {
            return Err(QigError::Config("model needs at least one generator".into()));
        }
        let dim = generators[0].dim();
        for g in &generators {
            if g.dim() != dim {
                return Err(QigError::DimensionMismatch {
                    expected: dim,
                    got: g.dim(),
                });
            }
        }
        // Gram matrix of the Hilbert-Schmidt inner product Tr E_j E_k.
        let mut gram = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let tr: Complex64 = (generators[j].as_mat() * generators[k].as_mat()).trace();
                gram[(j, k)] = tr.re;
            }
        }
        let min_eig = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        if min_eig <= 1e-10 {
            return Err(QigError::DependentGenerators {
                min_eigenvalue: min_eig,
            });
        }
        Ok(ExpFamilyModel {
            dim_hilbert: dim,
            generators,
            preset: None,
        })
    }

    /// Named generator sets: "pauli2" (sigma_x, sigma_z on C^2),
    /// "pauli3" (all three Pauli matrices), "gellmann3" (the eight
    /// Gell-Mann matrices on C^3), and "diag2" (commuting diagonal
    /// projectors, the classical limit).
    pub fn preset(name: &str) -> Result<Self> {
        let gens: Vec<CMat> = match name {
            "pauli2" => vec![pauli_x(), pauli_z()],
            "pauli3" => vec![pauli_x(), pauli_y(), pauli_z()],
            "gellmann3" => gell_mann(),
            "diag2" => {
                let mut e1 = CMat::zeros(2, 2);
                e1[(0, 0)] = cr(1.0);
                let mut e2 = CMat::zeros(2, 2);
                e2[(1, 1)] = cr(1.0);
                vec![e1, e2]
            }
            other => {
                return Err(QigError::Config(format!("unknown preset '{other}'")));
            }
        };
        let herm = gens
            .into_iter()
            .map(|g| HermitianMatrix::new(g, 1e-12))
            .collect::<Result<Vec<_>>>()?;
        let mut model = ExpFamilyModel::new(herm)?;
        model.preset = Some(name.to_string());
        Ok(model)
    }

    pub fn dim_hilbert(&self) -> usize {
        self.dim_hilbert
    }

    pub fn n_params(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[HermitianMatrix] {
        &self.generators
    }

    pub fn preset_name(&self) -> Option<&str> {
        self.preset.as_deref()
    }

    /// The exponent theta^k E_k.
    pub fn exponent(&self, theta: &Theta) -> Result<HermitianMatrix> {
        if theta.len() != self.n_params() {
            return Err(QigError::DimensionMismatch {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(QigError::NonFinite);
        }
        let n = self.dim_hilbert;
        let mut acc = CMat::zeros(n, n);
        for (k, g) in self.generators.iter().enumerate() {
            acc += g.as_mat().map(|z| z * theta[k]);
        }
        HermitianMatrix::symmetrize(acc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelSpec::from_model(self))?)
    }
}

/// A certified density matrix: Hermitian, strictly positive, trace 1.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: HermitianMatrix,
}

impl DensityMatrix {
    pub fn new(mat: HermitianMatrix, tol: &Tolerances) -> Result<Self> {
        let es = eig_hermitian(&mat)?;
        let min = es.min_value();
        if min <= tol.pd_floor {
            return Err(QigError::NotPositive {
                min_eigenvalue: min,
                floor: tol.pd_floor,
            });
        }
        let tr: f64 = es.values.iter().sum();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(QigError::Config(format!(
                "density trace {tr} deviates from 1 beyond 1e-10"
            )));
        }
        Ok(DensityMatrix { mat })
    }

    pub fn as_mat(&self) -> &CMat {
        self.mat.as_mat()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }
}

/// alpha(theta) = log Tr exp(theta^k E_k), evaluated with a
/// max-eigenvalue shift so large parameters cannot overflow.
pub fn log_partition(model: &ExpFamilyModel, theta: &Theta) -> Result<f64> {
    let h = model.exponent(theta)?;
    let es = eig_hermitian(&h)?;
    let top = es.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = es.values.iter().map(|&v| (v - top).exp()).sum();
    Ok(top + sum.ln())
}

/// rho_theta = exp(theta^k E_k - alpha(theta)).
pub fn density(model: &ExpFamilyModel, theta: &Theta, tol: &Tolerances) -> Result<DensityMatrix> {
    let h = model.exponent(theta)?;
    let alpha = log_partition(model, theta)?;
    let rho = matrix_function(&h, |x| (x - alpha).exp())?;
    DensityMatrix::new(rho, tol)
}

/// The normalized perturbation path t -> exp(theta^k E_k + tX -
/// alpha(theta) - zeta_X(t)). Returned as a closure over t together
/// with zeta_X for derivative checks.
pub struct PerturbedPath<'a> {
    model: &'a ExpFamilyModel,
    theta: Theta,
    x: HermitianMatrix,
    alpha: f64,
}

impl<'a> PerturbedPath<'a> {
    pub fn new(model: &'a ExpFamilyModel, theta: &Theta, x: HermitianMatrix) -> Result<Self> {
        let alpha = log_partition(model, theta)?;
        Ok(PerturbedPath {
            model,
            theta: theta.clone(),
            x,
            alpha,
        })
    }

    fn shifted_exponent(&self, t: f64) -> Result<HermitianMatrix> {
        let base = self.model.exponent(&self.theta)?;
        HermitianMatrix::symmetrize(base.as_mat() + self.x.as_mat().map(|z| z * t))
    }

    /// zeta_X(t) = log Tr exp(theta^k E_k + tX) - alpha(theta);
    /// zeta_X(0) = 0 by construction.
    pub fn zeta(&self, t: f64) -> Result<f64> {
        let h = self.shifted_exponent(t)?;
        let es = eig_hermitian(&h)?;
        let top = es.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = es.values.iter().map(|&v| (v - top).exp()).sum();
        Ok(top + sum.ln() - self.alpha)
    }

    pub fn at(&self, t: f64, tol: &Tolerances) -> Result<DensityMatrix> {
        let h = self.shifted_exponent(t)?;
        let z = self.zeta(t)?;
        let rho = matrix_function(&h, |x| (x - self.alpha - z).exp())?;
        DensityMatrix::new(rho, tol)
    }
}

/// Tangent of the perturbation path at t = 0:
/// rho-dot^X = [X]^K - (Tr rho X) rho.
pub fn tangent(
    model: &ExpFamilyModel,
    theta: &Theta,
    x: &HermitianMatrix,
    tol: &Tolerances,
) -> Result<CMat> {
    let rho = density(model, theta, tol)?;
    let k = kubo_transform(rho.hermitian(), x.as_mat(), tol)?;
    let mean: Complex64 = (rho.as_mat() * x.as_mat()).trace();
    Ok(k - rho.as_mat().map(|z| z * mean.re))
}

fn pauli_x() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 1)] = cr(1.0);
    m[(1, 0)] = cr(1.0);
    m
}

fn pauli_y() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 1)] = Complex64::new(0.0, -1.0);
    m[(1, 0)] = Complex64::new(0.0, 1.0);
    m
}

fn pauli_z() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = cr(1.0);
    m[(1, 1)] = cr(-1.0);
    m
}

fn gell_mann() -> Vec<CMat> {
    let mut out = Vec::with_capacity(8);
    let mut m = CMat::zeros(3, 3);
    m[(0, 1)] = cr(1.0);
    m[(1, 0)] = cr(1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(0, 1)] = Complex64::new(0.0, -1.0);
    m[(1, 0)] = Complex64::new(0.0, 1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = cr(1.0);
    m[(1, 1)] = cr(-1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(0, 2)] = cr(1.0);
    m[(2, 0)] = cr(1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(0, 2)] = Complex64::new(0.0, -1.0);
    m[(2, 0)] = Complex64::new(0.0, 1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(1, 2)] = cr(1.0);
    m[(2, 1)] = cr(1.0);
    out.push(m);
    let mut m = CMat::zeros(3, 3);
    m[(1, 2)] = Complex64::new(0.0, -1.0);
    m[(2, 1)] = Complex64::new(0.0, 1.0);
    out.push(m);
    let s = 1.0 / 3.0f64.sqrt();
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = cr(s);
    m[(1, 1)] = cr(s);
    m[(2, 2)] = cr(-2.0 * s);
    out.push(m);
    out
}

/// JSON wire format for models: N, generators as nested arrays of
/// [re, im] pairs, optional preset name.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<ExpFamilyModel> {
        if let Some(name) = &self.preset {
            if self.generators.is_empty() {
                return ExpFamilyModel::preset(name);
            }
        }
        let mut gens = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            if g.len() != self.n || g.iter().any(|row| row.len() != self.n) {
                return Err(QigError::Config(format!(
                    "generator shape does not match N = {}",
                    self.n
                )));
            }
            let mat = CMat::from_fn(self.n, self.n, |i, j| {
                Complex64::new(g[i][j][0], g[i][j][1])
            });
            gens.push(HermitianMatrix::new(mat, 1e-12)?);
        }
        let mut model = ExpFamilyModel::new(gens)?;
        model.preset = self.preset.clone();
        Ok(model)
    }

    pub fn from_model(model: &ExpFamilyModel) -> Self {
        let n = model.dim_hilbert();
        let generators = model
            .generators()
            .iter()
            .map(|g| {
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                let z = g.as_mat()[(i, j)];
                                [z.re, z.im]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ModelSpec {
            n,
            generators,
            preset: model.preset_name().map(str::to_string),
        }
    }
}

/// Central-difference partial derivative of alpha with respect to
/// theta^k, used by tests and the gradient of the metric operator.
pub fn log_partition_gradient(model: &ExpFamilyModel, theta: &Theta, h: f64) -> Result<Vec<f64>> {
    let n = model.n_params();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut tp = theta.clone();
        tp[k] += h;
        let mut tm = theta.clone();
        tm[k] -= h;
        out.push((log_partition(model, &tp)? - log_partition(model, &tm)?) / (2.0 * h));
    }
    Ok(out)
}
