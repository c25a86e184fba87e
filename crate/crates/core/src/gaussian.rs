//! Gaussian measures and the Bures–Wasserstein geometry.

use nalgebra::{DMatrix, DVector};

use crate::error::{DamError, Result};
use crate::linalg::{SpdMatrix, SymMatrix};

/// Below this, a negative trace term is a bug rather than roundoff.
pub const TRACE_CLAMP_TOL: f64 = 1e-10;

/// Relative off-diagonal size under which a query counts as diagonal in a
/// family basis.
pub const FAMILY_PROJECTION_TOL: f64 = 1e-10;

/// `N(mean, cov)` with an SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(DamError::dim(cov.dim(), mean.len()));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(DamError::NumericError("non-finite mean entry".into()));
        }
        Ok(GaussianMeasure { mean, cov })
    }

    pub fn from_parts(mean: &[f64], cov: DMatrix<f64>) -> Result<Self> {
        Self::new(DVector::from_column_slice(mean), SpdMatrix::from_matrix(cov)?)
    }

    /// `N(mean, σ² I)`.
    pub fn spherical(mean: &[f64], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(DamError::NotPositiveDefinite {
                eigenvalue: sigma * sigma,
            });
        }
        let cov = SpdMatrix::from_diagonal(&vec![sigma * sigma; mean.len()])?;
        Self::new(DVector::from_column_slice(mean), cov)
    }

    pub fn standard(dim: usize) -> Self {
        GaussianMeasure {
            mean: DVector::zeros(dim),
            cov: SpdMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }
}

/// `x ↦ matrix·x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap {
            matrix: DMatrix::identity(dim, dim),
            shift: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.shift
    }
}

fn check_dims(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(DamError::dim(p.dim(), q.dim()));
    }
    Ok(())
}

/// The symmetric OT matrix taking covariance `src` to `tgt`, computed as
/// `S (S src S)^{-1/2} S` with `S = tgt^{1/2}`.
pub fn ot_matrix(src: &SpdMatrix, tgt_sqrt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inner = SpdMatrix::new(SymMatrix::symmetrize(tgt_sqrt * src.matrix() * tgt_sqrt)?)?;
    let a = tgt_sqrt * inner.inv_sqrt().matrix() * tgt_sqrt;
    Ok(symmetric_part(a))
}

/// The same matrix in the form `src^{-1/2} (src^{1/2} tgt src^{1/2})^{1/2} src^{-1/2}`.
pub fn ot_matrix_source_form(src: &SpdMatrix, tgt: &SpdMatrix) -> Result<DMatrix<f64>> {
    let s = src.sqrt();
    let si = src.inv_sqrt();
    let inner = SpdMatrix::new(SymMatrix::symmetrize(
        s.matrix() * tgt.matrix() * s.matrix(),
    )?)?;
    Ok(symmetric_part(si.matrix() * inner.sqrt().matrix() * si.matrix()))
}

fn symmetric_part(a: DMatrix<f64>) -> DMatrix<f64> {
    let t = a.transpose();
    (a + t) * 0.5
}

/// Optimal transport map from `source` to `target`.
pub fn ot_map(source: &GaussianMeasure, target: &GaussianMeasure) -> Result<AffineMap> {
    check_dims(source, target)?;
    let a = ot_matrix(source.cov(), target.cov().sqrt().matrix())?;
    let shift = target.mean() - &a * source.mean();
    Ok(AffineMap { matrix: a, shift })
}

/// `‖(I − A) L‖²_F` with `L L^T = src`: the covariance part of the transport
/// cost. Never negative, unlike the trace form.
pub(crate) fn transport_cost(a: &DMatrix<f64>, src_sqrt: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut acc = src_sqrt[(i, j)];
            for k in 0..n {
                acc -= a[(i, k)] * src_sqrt[(k, j)];
            }
            total += acc * acc;
        }
    }
    total
}

/// Squared 2-Wasserstein distance between two Gaussians.
///
/// Evaluated as the expected squared displacement of the optimal coupling,
/// `‖Δμ‖² + ‖(I − A) Σ_p^{1/2}‖²_F`, which equals the Bures trace formula
/// without its cancellation.
pub fn bures_w2_squared(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    check_dims(p, q)?;
    let dm = (p.mean() - q.mean()).norm_squared();
    if p.cov() == q.cov() {
        return Ok(dm);
    }
    let a = ot_matrix(p.cov(), q.cov().sqrt().matrix())?;
    Ok(dm + transport_cost(&a, p.cov().sqrt().matrix()))
}

/// The textbook trace formula `‖Δμ‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`.
///
/// A trace term in `[-1e-10, 0)` is clamped to zero; anything more negative
/// is reported as a [`DamError::NumericError`].
pub fn bures_w2_squared_trace(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    check_dims(p, q)?;
    let dm = (p.mean() - q.mean()).norm_squared();
    let s = p.cov().sqrt();
    let inner = SpdMatrix::new(SymMatrix::symmetrize(
        s.matrix() * q.cov().matrix() * s.matrix(),
    )?)?;
    let cross: f64 = inner.eigenvalues().iter().map(|l| l.sqrt()).sum();
    let term = clamp_trace_term(p.cov().trace() + q.cov().trace() - 2.0 * cross)?;
    Ok(dm + term)
}

pub(crate) fn clamp_trace_term(term: f64) -> Result<f64> {
    if term < -TRACE_CLAMP_TOL {
        return Err(DamError::NumericError(format!(
            "negative Bures trace term {term:e}"
        )));
    }
    Ok(term.max(0.0))
}

/// `W2²(δ₀, p) = ‖μ‖² + Tr Σ`.
pub fn dirac_w2_squared(p: &GaussianMeasure) -> f64 {
    p.mean().norm_squared() + p.cov().trace()
}

/// `W2²` between `N(μ₁, σ₁² I)` and `N(μ₂, σ₂² I)` given standard deviations.
pub fn spherical_w2_squared(m1: &[f64], s1: f64, m2: &[f64], s2: f64) -> f64 {
    let dm: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    dm + m1.len() as f64 * (s1 - s2) * (s1 - s2)
}

/// Pushforward of `p` through `x ↦ Cx + b`: `N(Cμ + b, CΣCᵀ)`.
pub fn push_forward_affine(map: &AffineMap, p: &GaussianMeasure) -> Result<GaussianMeasure> {
    if map.dim() != p.dim() || map.matrix.nrows() != p.dim() || map.matrix.ncols() != p.dim() {
        return Err(DamError::dim(p.dim(), map.dim()));
    }
    let mean = map.apply(p.mean());
    let cov = &map.matrix * p.cov().matrix() * map.matrix.transpose();
    let cov = SpdMatrix::new(SymMatrix::symmetrize(cov)?).map_err(|e| {
        DamError::DegenerateResult(format!("pushforward covariance is not SPD ({e})"))
    })?;
    GaussianMeasure::new(mean, cov)
}

/// `−log ⟨p, q⟩_{L²}` for the two densities.
pub fn neg_log_l2_inner(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    check_dims(p, q)?;
    let d = p.dim() as f64;
    let s = p.cov().matrix() + q.cov().matrix();
    let chol = nalgebra::Cholesky::new(s).ok_or(DamError::NotPositiveDefinite {
        eigenvalue: f64::NAN,
    })?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let delta = p.mean() - q.mean();
    let quad = delta.dot(&chol.solve(&delta));
    Ok(0.5 * d * (2.0 * std::f64::consts::PI).ln() + 0.5 * log_det + 0.5 * quad)
}

/// McCann interpolation `((1 − t) Id + t T)_# p` between `p` and `q`.
pub fn geodesic(p: &GaussianMeasure, q: &GaussianMeasure, t: f64) -> Result<GaussianMeasure> {
    check_dims(p, q)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(DamError::DomainError(format!("t = {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(p.clone());
    }
    if t == 1.0 {
        return Ok(q.clone());
    }
    let n = p.dim();
    let a = ot_matrix(p.cov(), q.cov().sqrt().matrix())?;
    let b = DMatrix::identity(n, n) * (1.0 - t) + a * t;
    let cov = SpdMatrix::new(SymMatrix::symmetrize(&b * p.cov().matrix() * &b)?)?;
    let mean = p.mean() * (1.0 - t) + q.mean() * t;
    GaussianMeasure::new(mean, cov)
}

/// A Gaussian diagonal in some family's basis: coordinates `Uᵀμ` and the
/// square roots of the eigenvalues, both indexed by basis column.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGaussian {
    pub coords: Vec<f64>,
    pub sqrt_spectrum: Vec<f64>,
}

impl SpectralGaussian {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// `‖c_a − c_b‖² + Σ_k (√λ_{a,k} − √λ_{b,k})²`.
pub fn spectral_w2_squared(a: &SpectralGaussian, b: &SpectralGaussian) -> f64 {
    spectral_w2_squared_raw(&a.coords, &a.sqrt_spectrum, &b.coords, &b.sqrt_spectrum)
}

#[inline]
pub(crate) fn spectral_w2_squared_raw(ca: &[f64], sa: &[f64], cb: &[f64], sb: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..ca.len() {
        let dc = ca[k] - cb[k];
        let ds = sa[k] - sb[k];
        acc += dc * dc + ds * ds;
    }
    acc
}

/// Gaussians whose covariances share one orthogonal eigenbasis `U`.
///
/// Members are stored in basis coordinates (flat, row per member), so the
/// full covariances are materialized only on request.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutingFamily {
    basis: DMatrix<f64>,
    dim: usize,
    means: Vec<f64>,
    coords: Vec<f64>,
    spectra: Vec<f64>,
    sqrt_spectra: Vec<f64>,
}

impl CommutingFamily {
    /// `means[i]` in ambient coordinates; `spectra[i][k]` is the eigenvalue
    /// attached to basis column `k`.
    pub fn new(basis: DMatrix<f64>, means: &[DVector<f64>], spectra: &[Vec<f64>]) -> Result<Self> {
        let d = basis.nrows();
        if basis.ncols() != d || d == 0 {
            return Err(DamError::dim(d, basis.ncols()));
        }
        if means.len() != spectra.len() {
            return Err(DamError::dim(means.len(), spectra.len()));
        }
        if means.is_empty() {
            return Err(DamError::InvalidConfig("empty commuting family".into()));
        }
        let ortho = (basis.transpose() * &basis - DMatrix::identity(d, d)).amax();
        if !(ortho <= 1e-9) {
            return Err(DamError::NumericError(format!(
                "family basis is not orthogonal (residual {ortho:e})"
            )));
        }
        let ut = basis.transpose();
        let mut coords = Vec::with_capacity(means.len() * d);
        let mut raw_means = Vec::with_capacity(means.len() * d);
        let mut flat = Vec::with_capacity(means.len() * d);
        for (m, s) in means.iter().zip(spectra) {
            if m.len() != d {
                return Err(DamError::dim(d, m.len()));
            }
            if s.len() != d {
                return Err(DamError::dim(d, s.len()));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(DamError::NumericError("non-finite mean entry".into()));
            }
            check_positive_spectrum(s)?;
            coords.extend((&ut * m).iter());
            raw_means.extend(m.iter());
            flat.extend_from_slice(s);
        }
        let sqrt_spectra = flat.iter().map(|l| l.sqrt()).collect();
        Ok(CommutingFamily {
            basis,
            dim: d,
            means: raw_means,
            coords,
            spectra: flat,
            sqrt_spectra,
        })
    }

    pub fn len(&self) -> usize {
        self.spectra.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn spectrum(&self, i: usize) -> &[f64] {
        &self.spectra[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sqrt_spectrum(&self, i: usize) -> &[f64] {
        &self.sqrt_spectra[i * self.dim..(i + 1) * self.dim]
    }

    /// The mean exactly as supplied at construction.
    pub fn mean(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.means[i * self.dim..(i + 1) * self.dim])
    }

    pub fn spectral(&self, i: usize) -> SpectralGaussian {
        SpectralGaussian {
            coords: self.coords(i).to_vec(),
            sqrt_spectrum: self.sqrt_spectrum(i).to_vec(),
        }
    }

    pub fn member(&self, i: usize) -> Result<GaussianMeasure> {
        let cov = SpdMatrix::from_eigen(self.spectrum(i), &self.basis)?;
        GaussianMeasure::new(self.mean(i), cov)
    }

    /// Extreme eigenvalues over all members.
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        self.spectra
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
                (lo.min(l), hi.max(l))
            })
    }

    /// Expresses `q` in the family basis, or `None` when its covariance is
    /// not diagonal there.
    pub fn project(&self, q: &GaussianMeasure) -> Option<SpectralGaussian> {
        if q.dim() != self.dim {
            return None;
        }
        let ut = self.basis.transpose();
        let c = &ut * q.cov().matrix() * &self.basis;
        let scale = c.diagonal().amax();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j && c[(i, j)].abs() > FAMILY_PROJECTION_TOL * scale {
                    return None;
                }
            }
        }
        let diag: Vec<f64> = (0..self.dim).map(|k| c[(k, k)]).collect();
        if diag.iter().any(|&l| !(l > 0.0)) {
            return None;
        }
        Some(SpectralGaussian {
            coords: (&ut * q.mean()).iter().copied().collect(),
            sqrt_spectrum: diag.iter().map(|l| l.sqrt()).collect(),
        })
    }

    pub fn materialize(&self, s: &SpectralGaussian) -> Result<GaussianMeasure> {
        if s.dim() != self.dim {
            return Err(DamError::dim(self.dim, s.dim()));
        }
        let values: Vec<f64> = s.sqrt_spectrum.iter().map(|x| x * x).collect();
        let cov = SpdMatrix::from_eigen(&values, &self.basis)?;
        let mean = &self.basis * DVector::from_column_slice(&s.coords);
        GaussianMeasure::new(mean, cov)
    }
}

fn check_positive_spectrum(s: &[f64]) -> Result<()> {
    for &l in s {
        if !l.is_finite() {
            return Err(DamError::NumericError("non-finite eigenvalue".into()));
        }
        if !(l > 0.0) {
            return Err(DamError::NotPositiveDefinite { eigenvalue: l });
        }
    }
    Ok(())
}
