//! Dense symmetric and SPD matrix kernels.
//!
//! Small problems (d <= 64) are diagonalized with cyclic Jacobi, which keeps
//! high relative accuracy on the small eigenvalues of well-scaled SPD
//! matrices. Larger problems fall back to nalgebra's tridiagonal QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{DamError, Result};

/// Smallest admissible eigenvalue, relative to the largest one.
pub const EPS_PD: f64 = 1e-10;

/// Relative tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

const JACOBI_MAX_DIM: usize = 64;
const JACOBI_MAX_SWEEPS: usize = 80;

/// A square matrix that is symmetric within [`SYMMETRY_TOL`].
///
/// The stored entries are exactly symmetric: construction replaces the input
/// by `(m + m^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        let scale = max_abs(&m);
        let mut worst = 0.0_f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_TOL * scale {
            return Err(DamError::SymmetryViolation {
                max_asymmetry: worst,
            });
        }
        Ok(Self::symmetrize_unchecked(m))
    }

    /// Symmetrizes without a tolerance check; for products such as
    /// `A Ω A^T` that drift from exact symmetry by accumulation error.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self::symmetrize_unchecked(m))
    }

    fn symmetrize_unchecked(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(DamError::dim(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Err(DamError::DomainError("matrix dimension must be >= 1".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(DamError::NumericError("non-finite matrix entry".into()));
    }
    Ok(())
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending and
/// eigenvectors stored column-wise in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `U diag(f(λ)) U^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let s = f(lam);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|x| x)
    }
}

pub fn sym_eig(m: &SymMatrix) -> SymEigen {
    let n = m.dim();
    let (values, vectors) = if n <= JACOBI_MAX_DIM {
        jacobi_eigen(m.matrix())
    } else {
        let e = nalgebra::SymmetricEigen::new(m.matrix().clone());
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    sort_ascending(values, vectors)
}

/// Eigenvalues only (ascending); skips the eigenvector accumulation.
pub fn sym_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let mut values = if m.dim() <= JACOBI_MAX_DIM {
        jacobi_values_only(m.matrix())
    } else {
        m.matrix().symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

fn sort_ascending(values: Vec<f64>, vectors: DMatrix<f64>) -> SymEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps equal eigenvalues in the order Jacobi produced them.
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    SymEigen {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

/// Applies the rotation that zeroes `a[p][q]`, returning `(c, s)`, or `None`
/// when the element is already negligible relative to its diagonal.
#[inline]
fn jacobi_rotate(a: &mut [f64], n: usize, p: usize, q: usize) -> Option<(f64, f64)> {
    let apq = a[p * n + q];
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    if apq == 0.0 || apq.abs() <= 1e-18 * (app * aqq).abs().sqrt() {
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        return None;
    }
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = c * apk - s * aqk;
        a[q * n + k] = s * apk + c * aqk;
    }
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
    Some((c, s))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = row_major(m);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                if let Some((c, s)) = jacobi_rotate(&mut a, n, p, q) {
                    rotated = true;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, DMatrix::from_row_slice(n, n, &v))
}

fn jacobi_values_only(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = row_major(m);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                rotated |= jacobi_rotate(&mut a, n, p, q).is_some();
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// A symmetric positive definite matrix together with its eigen-decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    base: SymMatrix,
    eig: SymEigen,
}

impl SpdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&base);
        check_spectrum(&eig.values)?;
        Ok(SpdMatrix { base, eig })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![1.0; dim]).expect("identity is SPD")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    /// Builds `U diag(values) U^T` from a trusted orthogonal `U`.
    pub fn from_eigen(values: &[f64], vectors: &DMatrix<f64>) -> Result<Self> {
        if vectors.nrows() != values.len() || vectors.ncols() != values.len() {
            return Err(DamError::dim(values.len(), vectors.ncols()));
        }
        let eig = sort_ascending(values.to_vec(), vectors.clone());
        check_spectrum(&eig.values)?;
        let base = SymMatrix::symmetrize(eig.reconstruct())?;
        Ok(SpdMatrix { base, eig })
    }

    /// Like [`SpdMatrix::new`] but lifts eigenvalues in `(0, eps_pd·λ_max]`
    /// up to `eps_pd·λ_max`. Returns the number of clamped eigenvalues;
    /// eigenvalues `<= 0` are still rejected.
    pub fn new_clamped(base: SymMatrix) -> Result<(Self, usize)> {
        let mut eig = sym_eig(&base);
        let lmax = eig.values.last().copied().unwrap_or(0.0);
        let lmin = eig.values.first().copied().unwrap_or(0.0);
        if !(lmin > 0.0) || !lmax.is_finite() {
            return Err(DamError::NotPositiveDefinite { eigenvalue: lmin });
        }
        let floor = EPS_PD * lmax;
        let mut clamped = 0;
        for v in eig.values.iter_mut() {
            if *v <= floor {
                *v = floor;
                clamped += 1;
            }
        }
        if clamped == 0 {
            return Ok((SpdMatrix { base, eig }, 0));
        }
        let base = SymMatrix::symmetrize(eig.reconstruct())?;
        Ok((SpdMatrix { base, eig }, clamped))
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eig.vectors
    }

    pub fn trace(&self) -> f64 {
        self.matrix().trace()
    }

    /// Applies a positive spectral function, reusing the cached eigenbasis.
    fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let values: Vec<f64> = self.eig.values.iter().map(|&l| f(l)).collect();
        let eig = sort_ascending(values, self.eig.vectors.clone());
        let m = eig.reconstruct();
        SpdMatrix {
            base: SymMatrix::symmetrize_unchecked(m),
            eig,
        }
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.map_spectrum(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.map_spectrum(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.map_spectrum(|l| 1.0 / l)
    }
}

fn check_spectrum(values: &[f64]) -> Result<()> {
    let lmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !lmax.is_finite() || !lmin.is_finite() {
        return Err(DamError::NumericError("non-finite eigenvalue".into()));
    }
    if lmin <= 0.0 || lmin <= EPS_PD * lmax {
        return Err(DamError::NotPositiveDefinite { eigenvalue: lmin });
    }
    Ok(())
}

pub fn spd_sqrt(m: &SpdMatrix) -> SpdMatrix {
    m.sqrt()
}

pub fn spd_invsqrt(m: &SpdMatrix) -> SpdMatrix {
    m.inv_sqrt()
}

/// `‖ab − ba‖_F`.
pub fn commutator_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(DamError::dim(a.nrows(), b.nrows()));
    }
    Ok((a * b - b * a).norm())
}

/// True iff `‖ab − ba‖_F <= tol·‖a‖_F·‖b‖_F`.
pub fn is_commuting(a: &SpdMatrix, b: &SpdMatrix, tol: f64) -> Result<bool> {
    let c = commutator_norm(a.matrix(), b.matrix())?;
    Ok(c <= tol * a.matrix().norm() * b.matrix().norm())
}
