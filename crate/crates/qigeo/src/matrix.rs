//! Dense complex linear algebra: Hermitian eigendecomposition, matrix
//! functions, Kronecker products, and the Kubo transform
//! [X]^K = int_0^1 rho^u X rho^{1-u} du. Everything else in the crate
//! is built on these primitives.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::Tolerances;
use crate::error::{QigError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

/// Max-norm (largest entry magnitude), the norm used by all residual
/// checks.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Inverts a general complex matrix, reporting a condition-number
/// estimate when inversion fails or the result is unreliable.
pub fn invert(a: &CMat) -> Result<CMat> {
    let norm_a = a.norm();
    match a.clone().try_inverse() {
        Some(inv) => {
            let cond = norm_a * inv.norm();
            if !cond.is_finite() || cond > 1e14 {
                return Err(QigError::SingularMatrix { condition: cond });
            }
            Ok(inv)
        }
        None => Err(QigError::SingularMatrix {
            condition: f64::INFINITY,
        }),
    }
}

/// Kronecker product a (x) b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// A square complex matrix certified Hermitian at construction and
/// stored in exactly symmetrized form (A + A^dag)/2.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    mat: CMat,
}

impl HermitianMatrix {
    pub fn new(a: CMat, tol: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(QigError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if !all_finite(&a) {
            return Err(QigError::NonFinite);
        }
        let adj = a.adjoint();
        let deviation = max_abs(&(&a - &adj));
        if deviation > tol {
            return Err(QigError::NotHermitian {
                deviation,
                tolerance: tol,
            });
        }
        let mat = (a + adj).map(|z| z * 0.5);
        Ok(HermitianMatrix { mat })
    }

    /// Symmetrizes unconditionally; for matrices Hermitian by
    /// construction (for example U diag(real) U^dag up to roundoff).
    pub fn symmetrize(a: CMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(QigError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if !all_finite(&a) {
            return Err(QigError::NonFinite);
        }
        let adj = a.adjoint();
        let mat = (a + adj).map(|z| z * 0.5);
        Ok(HermitianMatrix { mat })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut mat = CMat::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = cr(d);
        }
        HermitianMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> &CMat {
        &self.mat
    }

    pub fn into_mat(self) -> CMat {
        self.mat
    }
}

/// Spectral data of a Hermitian matrix: real eigenvalues in ascending
/// order and the matching unitary of column eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl EigenSystem {
    /// Rebuilds U diag(f(lambda)) U^dag.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut d = CMat::zeros(n, n);
        for (i, &v) in self.values.iter().enumerate() {
            d[(i, i)] = cr(f(v));
        }
        &self.vectors * d * self.vectors.adjoint()
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted
/// ascending. Verifies reconstruction and unitarity before returning.
pub fn eig_hermitian(a: &HermitianMatrix) -> Result<EigenSystem> {
    let mat = a.as_mat();
    let n = mat.nrows();
    let se = mat.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    let es = EigenSystem { values, vectors };

    let scale = max_abs(mat).max(1.0);
    let recon = es.apply(|x| x);
    if max_abs(&(&recon - mat)) > 1e-10 * scale {
        return Err(QigError::EigenFailure { norm: max_abs(mat) });
    }
    let gram = es.vectors.adjoint() * &es.vectors;
    if max_abs(&(&gram - &identity(n))) > 1e-10 {
        return Err(QigError::EigenFailure { norm: max_abs(mat) });
    }
    Ok(es)
}

/// Applies a real scalar function to a Hermitian matrix through its
/// spectrum. The function must be finite on every eigenvalue.
pub fn matrix_function(a: &HermitianMatrix, f: impl Fn(f64) -> f64) -> Result<HermitianMatrix> {
    let es = eig_hermitian(a)?;
    for &v in &es.values {
        let fv = f(v);
        if !fv.is_finite() {
            return Err(QigError::SpectrumDomain { eigenvalue: v });
        }
    }
    HermitianMatrix::symmetrize(es.apply(f))
}

/// Closed-form Kubo transform in the eigenbasis of rho. Matrix element
/// (i,j) is X~_ij (p_i - p_j)/(ln p_i - ln p_j), with the analytic
/// limit X~_ij p_i when the log-gap falls below kubo_degeneracy_tol.
pub fn kubo_transform(rho: &HermitianMatrix, x: &CMat, tol: &Tolerances) -> Result<CMat> {
    let n = rho.dim();
    if x.nrows() != n || x.ncols() != n {
        return Err(QigError::DimensionMismatch {
            expected: n,
            got: x.nrows(),
        });
    }
    let es = eig_hermitian(rho)?;
    let min = es.min_value();
    if min <= tol.pd_floor {
        return Err(QigError::NotPositive {
            min_eigenvalue: min,
            floor: tol.pd_floor,
        });
    }
    let logs: Vec<f64> = es.values.iter().map(|&p| p.ln()).collect();
    let u = &es.vectors;
    let mut xt = u.adjoint() * x * u;
    for i in 0..n {
        for j in 0..n {
            let gap = logs[i] - logs[j];
            let w = if gap.abs() > tol.kubo_degeneracy_tol {
                (es.values[i] - es.values[j]) / gap
            } else {
                es.values[i]
            };
            xt[(i, j)] *= cr(w);
        }
    }
    Ok(u * xt * u.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_complex(rng: &mut StdRng, n: usize) -> CMat {
        CMat::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn random_hermitian(rng: &mut StdRng, n: usize) -> HermitianMatrix {
        let a = random_complex(rng, n);
        HermitianMatrix::symmetrize(a).unwrap()
    }

    fn random_density(rng: &mut StdRng, n: usize) -> HermitianMatrix {
        let a = random_complex(rng, n);
        let pos = &a * a.adjoint() + identity(n).map(|z| z * 0.1);
        let tr: Complex64 = pos.trace();
        HermitianMatrix::symmetrize(pos.map(|z| z / tr)).unwrap()
    }

    #[test]
    fn eig_diagonal_matrix() {
        let a = HermitianMatrix::from_real_diag(&[2.0, 1.0]);
        let es = eig_hermitian(&a).unwrap();
        assert!((es.values[0] - 1.0).abs() < 1e-14);
        assert!((es.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eig_pauli_x_spectrum() {
        let mut sx = CMat::zeros(2, 2);
        sx[(0, 1)] = cr(1.0);
        sx[(1, 0)] = cr(1.0);
        let a = HermitianMatrix::new(sx, 1e-12).unwrap();
        let es = eig_hermitian(&a).unwrap();
        assert!((es.values[0] + 1.0).abs() < 1e-12);
        assert!((es.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstruction_random() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_hermitian(&mut rng, 4);
        let es = eig_hermitian(&a).unwrap();
        let recon = es.apply(|x| x);
        assert!(max_abs(&(recon - a.as_mat())) < 1e-10);
    }

    #[test]
    fn not_hermitian_rejected() {
        let mut a = CMat::zeros(2, 2);
        a[(0, 1)] = cr(1.0);
        match HermitianMatrix::new(a, 1e-12) {
            Err(QigError::NotHermitian { .. }) => {}
            other => panic!("expected NotHermitian, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn matrix_function_sqrt_diagonal() {
        let a = HermitianMatrix::from_real_diag(&[4.0, 9.0]);
        let r = matrix_function(&a, f64::sqrt).unwrap();
        assert!((r.as_mat()[(0, 0)].re - 2.0).abs() < 1e-12);
        assert!((r.as_mat()[(1, 1)].re - 3.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_function_exp_log_roundtrip() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = random_hermitian(&mut rng, 3);
        let e = matrix_function(&a, f64::exp).unwrap();
        let back = matrix_function(&e, f64::ln).unwrap();
        assert!(max_abs(&(back.as_mat() - a.as_mat())) < 1e-9);
    }

    #[test]
    fn matrix_function_fractional_power() {
        let mut rng = StdRng::seed_from_u64(13);
        let rho = random_density(&mut rng, 3);
        let q = matrix_function(&rho, |x| x.powf(0.25)).unwrap();
        let sq = q.as_mat() * q.as_mat();
        let sq2 = &sq * &sq;
        assert!(max_abs(&(sq2 - rho.as_mat())) < 1e-9);
    }

    #[test]
    fn matrix_function_log_rejects_nonpositive() {
        let a = HermitianMatrix::from_real_diag(&[1.0, -2.0]);
        match matrix_function(&a, f64::ln) {
            Err(QigError::SpectrumDomain { eigenvalue }) => {
                assert!((eigenvalue + 2.0).abs() < 1e-12)
            }
            other => panic!("expected SpectrumDomain, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn matrix_function_commutes_with_unitary_conjugation() {
        let mut rng = StdRng::seed_from_u64(17);
        let a = random_hermitian(&mut rng, 3);
        let h = random_hermitian(&mut rng, 3);
        // exp(iH) gives a random unitary.
        let es = eig_hermitian(&h).unwrap();
        let n = 3;
        let mut d = CMat::zeros(n, n);
        for (i, &v) in es.values.iter().enumerate() {
            d[(i, i)] = Complex64::from_polar(1.0, v);
        }
        let u = &es.vectors * d * es.vectors.adjoint();
        let conj = HermitianMatrix::symmetrize(&u * a.as_mat() * u.adjoint()).unwrap();
        let lhs = matrix_function(&conj, f64::exp).unwrap();
        let rhs = &u * matrix_function(&a, f64::exp).unwrap().into_mat() * u.adjoint();
        assert!(max_abs(&(lhs.as_mat() - &rhs)) < 1e-10);
    }

    #[test]
    fn kron_identities() {
        let i2 = identity(2);
        assert!(max_abs(&(kron(&i2, &i2) - identity(4))) < 1e-15);
        let mut sz = CMat::zeros(2, 2);
        sz[(0, 0)] = cr(1.0);
        sz[(1, 1)] = cr(-1.0);
        let k = kron(&sz, &i2);
        let expect = CMat::from_diagonal(&CVec::from_vec(vec![
            cr(1.0),
            cr(1.0),
            cr(-1.0),
            cr(-1.0),
        ]));
        assert!(max_abs(&(k - expect)) < 1e-15);
    }

    #[test]
    fn kron_mixed_product() {
        let mut rng = StdRng::seed_from_u64(19);
        let a = random_complex(&mut rng, 2);
        let b = random_complex(&mut rng, 2);
        let cc = random_complex(&mut rng, 2);
        let d = random_complex(&mut rng, 2);
        let lhs = kron(&a, &b) * kron(&cc, &d);
        let rhs = kron(&(&a * &cc), &(&b * &d));
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn kubo_of_identity_is_rho() {
        let mut rng = StdRng::seed_from_u64(23);
        let rho = random_density(&mut rng, 3);
        let tol = Tolerances::default();
        let k = kubo_transform(&rho, &identity(3), &tol).unwrap();
        assert!(max_abs(&(k - rho.as_mat())) < 1e-12);
    }

    #[test]
    fn kubo_commuting_diagonal_case() {
        let rho = HermitianMatrix::from_real_diag(&[0.7, 0.3]);
        let x = HermitianMatrix::from_real_diag(&[2.0, -1.0]);
        let tol = Tolerances::default();
        let k = kubo_transform(&rho, x.as_mat(), &tol).unwrap();
        let expect = rho.as_mat() * x.as_mat();
        assert!(max_abs(&(k - expect)) < 1e-12);
    }

    #[test]
    fn kubo_against_quadrature_oracle() {
        let mut rng = StdRng::seed_from_u64(29);
        let rho = random_density(&mut rng, 3);
        let x = random_complex(&mut rng, 3);
        let tol = Tolerances::default();
        let k = kubo_transform(&rho, &x, &tol).unwrap();

        // Independent oracle: trapezoid quadrature of rho^u X rho^{1-u}.
        let m = 2000usize;
        let mut acc = CMat::zeros(3, 3);
        for i in 0..=m {
            let u = i as f64 / m as f64;
            let ru = matrix_function(&rho, |p| p.powf(u)).unwrap().into_mat();
            let r1u = matrix_function(&rho, |p| p.powf(1.0 - u)).unwrap().into_mat();
            let term = ru * &x * r1u;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += term.map(|z| z * (w / m as f64));
        }
        assert!(max_abs(&(k - acc)) < 1e-7);
    }

    #[test]
    fn kubo_trace_symmetry() {
        let mut rng = StdRng::seed_from_u64(31);
        let rho = random_density(&mut rng, 4);
        let tol = Tolerances::default();
        for _ in 0..5 {
            let x = random_complex(&mut rng, 4);
            let y = random_complex(&mut rng, 4);
            let kx = kubo_transform(&rho, &x, &tol).unwrap();
            let ky = kubo_transform(&rho, &y, &tol).unwrap();
            let lhs: Complex64 = (kx * &y).trace();
            let rhs: Complex64 = (x.clone() * ky).trace();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn kubo_adjoint_compatibility() {
        let mut rng = StdRng::seed_from_u64(37);
        let rho = random_density(&mut rng, 4);
        let tol = Tolerances::default();
        let x = random_complex(&mut rng, 4);
        let k_of_adj = kubo_transform(&rho, &x.adjoint(), &tol).unwrap();
        let adj_of_k = kubo_transform(&rho, &x, &tol).unwrap().adjoint();
        assert!(max_abs(&(k_of_adj - adj_of_k)) < 1e-12);
    }

    #[test]
    fn kubo_trace_identity() {
        let mut rng = StdRng::seed_from_u64(41);
        let rho = random_density(&mut rng, 4);
        let tol = Tolerances::default();
        let x = random_complex(&mut rng, 4);
        let k = kubo_transform(&rho, &x, &tol).unwrap();
        let lhs: Complex64 = k.trace();
        let rhs: Complex64 = (rho.as_mat() * &x).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn kubo_degenerate_spectrum_uses_limit() {
        // Exactly degenerate rho = I/2: [X]^K must equal X/2.
        let rho = HermitianMatrix::from_real_diag(&[0.5, 0.5]);
        let mut rng = StdRng::seed_from_u64(43);
        let x = random_complex(&mut rng, 2);
        let tol = Tolerances::default();
        let k = kubo_transform(&rho, &x, &tol).unwrap();
        assert!(max_abs(&(k - x.map(|z| z * 0.5))) < 1e-12);
    }
}
