//! Pattern banks on Wasserstein spheres and exact-radius query perturbation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DamError, Result};
use crate::gaussian::{
    bures_w2_squared, CommutingFamily, GaussianMeasure, SpectralGaussian,
};
use crate::linalg::{SpdMatrix, SymMatrix};

pub const REJECTION_BUDGET: u64 = 1_000_000;
pub const HIT_AND_RUN_BURN_IN: usize = 1000;
pub const BISECTION_STEPS: usize = 200;
pub const BISECTION_TOL: f64 = 1e-10;
const DIRECTION_RETRIES: usize = 10;

/// Parameters of a bank drawn on the sphere `‖μ‖² + Tr Σ = R²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    pub radius_r: f64,
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub dim: usize,
    pub seed: u64,
}

impl SphereConfig {
    /// The radius that splits the budget evenly and puts the target
    /// eigenvalue sum at the centre of the box: `R² = d(λ_min + λ_max)`.
    pub fn centered(dim: usize, n: usize, lambda_min: f64, lambda_max: f64, seed: u64) -> Self {
        SphereConfig {
            radius_r: (dim as f64 * (lambda_min + lambda_max)).sqrt(),
            n,
            lambda_min,
            lambda_max,
            dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n == 0 {
            return Err(DamError::InvalidConfig("dim and n must be >= 1".into()));
        }
        if !(self.lambda_min > 0.0) || !(self.lambda_min < self.lambda_max) {
            return Err(DamError::InvalidConfig(format!(
                "need 0 < lambda_min < lambda_max, got [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        let s = self.target_sum();
        let d = self.dim as f64;
        if !(d * self.lambda_min < s && s < d * self.lambda_max) {
            return Err(DamError::InvalidConfig(format!(
                "R²/2 = {s} lies outside ({}, {})",
                d * self.lambda_min,
                d * self.lambda_max
            )));
        }
        Ok(())
    }

    pub fn target_sum(&self) -> f64 {
        self.radius_r * self.radius_r / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenSampler {
    /// Uniform coordinates with last-coordinate completion, then a shuffle.
    Rejection,
    /// Hit-and-run on the eigenvalue polytope from its centre.
    HitAndRun { burn_in: usize },
}

fn standard_normal_vec(d: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn sample_sphere_uniform(d: usize, radius: f64, rng: &mut impl Rng) -> Result<DVector<f64>> {
    if d == 0 || !(radius > 0.0) {
        return Err(DamError::DomainError(format!(
            "need d >= 1 and radius > 0, got d = {d}, radius = {radius}"
        )));
    }
    loop {
        let g = standard_normal_vec(d, rng);
        let n = g.norm();
        if n > 0.0 {
            return Ok(g * (radius / n));
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn check_polytope(d: usize, target: f64, lo: f64, hi: f64) -> Result<()> {
    if d == 0 || !(lo > 0.0) || !(lo <= hi) {
        return Err(DamError::DomainError(format!(
            "invalid eigenvalue box [{lo}, {hi}] in dimension {d}"
        )));
    }
    let df = d as f64;
    let inside = if d == 1 {
        (lo..=hi).contains(&target)
    } else {
        df * lo < target && target < df * hi
    };
    if !inside {
        return Err(DamError::DomainError(format!(
            "target sum {target} is outside the eigenvalue polytope ({}, {})",
            df * lo,
            df * hi
        )));
    }
    Ok(())
}

/// Eigenvalues in `[lo, hi]` summing to `target`, by rejection.
pub fn sample_polytope_eigs(
    d: usize,
    target: f64,
    lo: f64,
    hi: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_polytope(d, target, lo, hi)?;
    if d == 1 {
        return Ok(vec![target]);
    }
    let mut v = vec![0.0; d];
    for _ in 0..REJECTION_BUDGET {
        let mut sum = 0.0;
        for x in v.iter_mut().take(d - 1) {
            *x = rng.random_range(lo..=hi);
            sum += *x;
        }
        let last = target - sum;
        if (lo..=hi).contains(&last) {
            v[d - 1] = last;
            v.shuffle(rng);
            return Ok(v);
        }
    }
    Err(DamError::RejectionBudgetExceeded {
        attempts: REJECTION_BUDGET,
    })
}

/// Eigenvalues in `[lo, hi]` summing to `target`, by hit-and-run.
pub fn sample_polytope_eigs_hit_and_run(
    d: usize,
    target: f64,
    lo: f64,
    hi: f64,
    burn_in: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_polytope(d, target, lo, hi)?;
    let mut x = vec![target / d as f64; d];
    if d == 1 {
        return Ok(x);
    }
    for _ in 0..burn_in {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = v.iter().sum::<f64>() / d as f64;
        v.iter_mut().for_each(|e| *e -= mean);
        let norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|e| *e /= norm);
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..d {
            if v[k] > 0.0 {
                t_lo = t_lo.max((lo - x[k]) / v[k]);
                t_hi = t_hi.min((hi - x[k]) / v[k]);
            } else if v[k] < 0.0 {
                t_lo = t_lo.max((hi - x[k]) / v[k]);
                t_hi = t_hi.min((lo - x[k]) / v[k]);
            }
        }
        if !(t_lo < t_hi) {
            continue;
        }
        let t = rng.random_range(t_lo..t_hi);
        for k in 0..d {
            x[k] = (x[k] + t * v[k]).clamp(lo, hi);
        }
    }
    // Restore the exact sum after the clamps.
    let drift = target - x.iter().sum::<f64>();
    let k = (0..d).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0);
    x[k] += drift;
    Ok(x)
}

/// `N` Gaussians sharing one random eigenbasis, each on the sphere of
/// radius `R` with mean norm `R/√2`.
pub fn sample_commuting_family(config: &SphereConfig, rng: &mut impl Rng) -> Result<CommutingFamily> {
    sample_commuting_family_with(config, EigenSampler::Rejection, rng)
}

pub fn sample_commuting_family_with(
    config: &SphereConfig,
    sampler: EigenSampler,
    rng: &mut impl Rng,
) -> Result<CommutingFamily> {
    config.validate()?;
    let d = config.dim;
    let target = config.target_sum();
    let mean_radius = config.radius_r / std::f64::consts::SQRT_2;
    let basis = random_orthogonal(d, rng);
    let mut means = Vec::with_capacity(config.n);
    let mut spectra = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let eig = match sampler {
            EigenSampler::Rejection => {
                sample_polytope_eigs(d, target, config.lambda_min, config.lambda_max, rng)?
            }
            EigenSampler::HitAndRun { burn_in } => sample_polytope_eigs_hit_and_run(
                d,
                target,
                config.lambda_min,
                config.lambda_max,
                burn_in,
                rng,
            )?,
        };
        spectra.push(eig);
        means.push(sample_sphere_uniform(d, mean_radius, rng)?);
    }
    CommutingFamily::new(basis, &means, &spectra)
}

/// Gaussians with covariance `c (W Wᵀ + 0.01 I)`, `W` a `d×d` standard
/// Gaussian matrix and `c` fixing the trace at `R²/2`.
pub fn sample_noncommuting_bank(
    dim: usize,
    n: usize,
    radius_r: f64,
    rng: &mut impl Rng,
) -> Result<Vec<GaussianMeasure>> {
    if dim < 2 {
        return Err(DamError::DomainError("non-commuting banks need dim >= 2".into()));
    }
    if !(radius_r > 0.0) {
        return Err(DamError::DomainError(format!("radius {radius_r} must be positive")));
    }
    let half = radius_r * radius_r / 2.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mean = sample_sphere_uniform(dim, half.sqrt(), rng)?;
        let w = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c: DMatrix<f64> = &w * w.transpose() + DMatrix::identity(dim, dim) * 0.01;
        let c = &c * (half / c.trace());
        if c.iter().any(|x: &f64| !x.is_finite()) {
            return Err(DamError::NumericError("non-finite covariance draw".into()));
        }
        out.push(GaussianMeasure::new(mean, SpdMatrix::new(SymMatrix::symmetrize(c)?)?)?);
    }
    Ok(out)
}

/// Target distance and how much of its square goes to the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub radius_r: f64,
    pub mean_budget_fraction: f64,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn new(radius_r: f64, seed: u64) -> Self {
        PerturbSpec {
            radius_r,
            mean_budget_fraction: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius_r >= 0.0) || !self.radius_r.is_finite() {
            return Err(DamError::DomainError(format!(
                "perturbation radius {} must be >= 0",
                self.radius_r
            )));
        }
        if !(0.0..=1.0).contains(&self.mean_budget_fraction) {
            return Err(DamError::DomainError(format!(
                "mean budget fraction {} outside [0, 1]",
                self.mean_budget_fraction
            )));
        }
        Ok(())
    }

    fn budgets(&self) -> (f64, f64) {
        let r2 = self.radius_r * self.radius_r;
        let f = self.mean_budget_fraction;
        ((r2 * f).sqrt(), r2 * (1.0 - f))
    }
}

/// Bisection for `g(s) = target` with `g` increasing and `g(0) = 0`.
fn solve_increasing(target: f64, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let tol = BISECTION_TOL * target.min(1.0);
    let mut lo = 0.0;
    let mut hi = target.max(f64::MIN_POSITIVE);
    let mut steps = 0;
    while g(hi)? < target {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > BISECTION_STEPS || !hi.is_finite() {
            return Err(DamError::BinarySearchFailed { steps });
        }
    }
    let (mut g_lo, mut g_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            // Adjacent floats: `g` is below its own evaluation noise here.
            log::debug!("bisection bracket collapsed at s = {mid:e}");
            return Ok(if (g_lo - target).abs() <= (g_hi - target).abs() { lo } else { hi });
        }
        let v = g(mid)?;
        if v.is_nan() {
            return Err(DamError::NumericError("NaN during bisection".into()));
        }
        if (v - target).abs() <= tol {
            return Ok(mid);
        }
        if v < target {
            (lo, g_lo) = (mid, v);
        } else {
            (hi, g_hi) = (mid, v);
        }
    }
    Err(DamError::BinarySearchFailed {
        steps: BISECTION_STEPS,
    })
}

/// A Gaussian at W2 distance exactly `spec.radius_r` from `p`: the mean moves
/// by `r√f` in a uniform direction and the covariance along a random unit-
/// trace PSD direction `V`, scaled so the covariance part of W2² is `r²(1−f)`.
pub fn perturb_to_distance(
    p: &GaussianMeasure,
    spec: &PerturbSpec,
    rng: &mut impl Rng,
) -> Result<GaussianMeasure> {
    spec.validate()?;
    if spec.radius_r == 0.0 {
        return Ok(p.clone());
    }
    let d = p.dim();
    let (mean_norm, cov_budget) = spec.budgets();
    let mean = if mean_norm > 0.0 {
        p.mean() + sample_sphere_uniform(d, mean_norm, rng)?
    } else {
        p.mean().clone()
    };
    if cov_budget <= 0.0 {
        return GaussianMeasure::new(mean, p.cov().clone());
    }
    let origin = GaussianMeasure::new(DVector::zeros(d), p.cov().clone())?;
    let mut last_err = None;
    for _ in 0..DIRECTION_RETRIES {
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v: DMatrix<f64> = &g * g.transpose();
        let v = &v / v.trace();
        let cov_at = |s: f64| -> Result<SpdMatrix> {
            SpdMatrix::new(SymMatrix::symmetrize(p.cov().matrix() + &v * s)?)
        };
        let cost = |s: f64| -> Result<f64> {
            let q = GaussianMeasure::new(DVector::zeros(d), cov_at(s)?)?;
            bures_w2_squared(&origin, &q)
        };
        match solve_increasing(cov_budget, cost) {
            Ok(s) => return GaussianMeasure::new(mean, cov_at(s)?),
            Err(e @ DamError::BinarySearchFailed { .. }) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// The same construction for a Gaussian diagonal in a family basis: the
/// covariance moves along a random nonnegative spectral direction, so the
/// result stays in the family.
pub fn perturb_spectral(
    p: &SpectralGaussian,
    spec: &PerturbSpec,
    rng: &mut impl Rng,
) -> Result<SpectralGaussian> {
    spec.validate()?;
    if spec.radius_r == 0.0 {
        return Ok(p.clone());
    }
    let d = p.dim();
    let (mean_norm, cov_budget) = spec.budgets();
    let mut coords = p.coords.clone();
    if mean_norm > 0.0 {
        let u = sample_sphere_uniform(d, mean_norm, rng)?;
        coords.iter_mut().zip(u.iter()).for_each(|(c, x)| *c += x);
    }
    if cov_budget <= 0.0 {
        return Ok(SpectralGaussian {
            coords,
            sqrt_spectrum: p.sqrt_spectrum.clone(),
        });
    }
    let mut v: Vec<f64> = (0..d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    let lam: Vec<f64> = p.sqrt_spectrum.iter().map(|s| s * s).collect();
    let sqrt_at = |s: f64| -> Vec<f64> {
        lam.iter().zip(&v).map(|(l, vk)| (l + s * vk).sqrt()).collect()
    };
    let s = solve_increasing(cov_budget, |s| {
        Ok(sqrt_at(s)
            .iter()
            .zip(&p.sqrt_spectrum)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    })?;
    Ok(SpectralGaussian {
        coords,
        sqrt_spectrum: sqrt_at(s),
    })
}

/// Spherical `N(μ, σ² I)` moved to W2 distance `r`: returns `(μ', σ')` with
/// `σ' = σ + r√(1−f)/√d`.
pub fn perturb_spherical(
    mean: &[f64],
    sigma: f64,
    spec: &PerturbSpec,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    if spec.radius_r == 0.0 {
        return Ok((mean.to_vec(), sigma));
    }
    let d = mean.len();
    let (mean_norm, cov_budget) = spec.budgets();
    let mut m = mean.to_vec();
    if mean_norm > 0.0 {
        let u = sample_sphere_uniform(d, mean_norm, rng)?;
        m.iter_mut().zip(u.iter()).for_each(|(c, x)| *c += x);
    }
    Ok((m, sigma + (cov_budget / d as f64).sqrt()))
}
