//! Separation and temperature checks for a bank, plus the closed-form
//! capacity, contraction and error bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dam::MemoryBank;
use crate::error::{DamError, Result};
use crate::gaussian::{neg_log_l2_inner, CommutingFamily};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `1/√(βN)`.
pub fn basin_radius(beta: f64, n: usize) -> f64 {
    1.0 / (beta * n as f64).sqrt()
}

/// `144 β M_W² / N`.
pub fn kappa(beta: f64, n: usize, m_w: f64) -> f64 {
    144.0 * beta * m_w * m_w / n as f64
}

/// `3/√(βN)`.
pub fn one_step_error_bound(beta: f64, n: usize) -> f64 {
    3.0 * basin_radius(beta, n)
}

/// `−log⟨X_i, X_j⟩_{L²}` for two family members, in O(d).
pub fn family_neg_log_l2_inner(f: &CommutingFamily, i: usize, j: usize) -> f64 {
    let (ci, cj) = (f.coords(i), f.coords(j));
    let (li, lj) = (f.spectrum(i), f.spectrum(j));
    let d = f.dim();
    let mut quad = 0.0;
    let mut log_det = 0.0;
    // Products of four sums stay far from under/overflow for any sane
    // spectrum, and cut the number of logarithms by four.
    let mut k = 0;
    while k < d {
        let end = (k + 4).min(d);
        let mut prod = 1.0;
        for t in k..end {
            let s = li[t] + lj[t];
            let dc = ci[t] - cj[t];
            quad += dc * dc / s;
            prod *= s;
        }
        log_det += prod.ln();
        k = end;
    }
    0.5 * (d as f64 * LN_2PI + log_det + quad)
}

/// `Δ_i = min_{j≠i} −log⟨X_i, X_j⟩_{L²}`.
pub fn separation_delta(bank: &MemoryBank, i: usize) -> Result<f64> {
    let n = bank.len();
    if n < 2 {
        return Err(DamError::SinglePattern);
    }
    if i >= n {
        return Err(DamError::DomainError(format!("pattern index {i} out of range")));
    }
    if let Some(f) = bank.family() {
        let pruner = Pruner::new(f);
        return Ok(pruner.delta(f, i));
    }
    let xi = bank.pattern(i)?;
    let mut best = f64::INFINITY;
    for j in (0..n).filter(|&j| j != i) {
        best = best.min(neg_log_l2_inner(&xi, &bank.pattern(j)?)?);
    }
    Ok(best)
}

/// `Δ_i` for every pattern.
///
/// For family banks the all-pairs scan is pruned with the lower bound
/// `(d/2) log(4π λ_min) + ‖μ_i − μ_j‖² / (4 λ_max)`, so only near pairs pay
/// for the exact O(d) evaluation.
pub fn separation_deltas(bank: &MemoryBank) -> Result<Vec<f64>> {
    let n = bank.len();
    if n < 2 {
        return Err(DamError::SinglePattern);
    }
    if let Some(f) = bank.family() {
        let pruner = Pruner::new(f);
        return Ok((0..n)
            .into_par_iter()
            .map(|i| pruner.delta(f, i))
            .collect());
    }
    let patterns = bank.patterns()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for (j, pj) in patterns.iter().enumerate() {
                if j != i {
                    best = best.min(neg_log_l2_inner(&patterns[i], pj)?);
                }
            }
            Ok(best)
        })
        .collect()
}

struct Pruner {
    offset: f64,
    inv_4lmax: f64,
    sq_norms: Vec<f64>,
}

impl Pruner {
    fn new(f: &CommutingFamily) -> Self {
        let (lmin, lmax) = f.spectrum_bounds();
        let d = f.dim() as f64;
        Pruner {
            offset: 0.5 * d * (4.0 * std::f64::consts::PI * lmin).ln(),
            inv_4lmax: 0.25 / lmax,
            sq_norms: (0..f.len())
                .map(|i| f.coords(i).iter().map(|x| x * x).sum())
                .collect(),
        }
    }

    fn delta(&self, f: &CommutingFamily, i: usize) -> f64 {
        let n = f.len();
        let ci = f.coords(i);
        let mut best = family_neg_log_l2_inner(f, i, (i + 1) % n);
        for j in 0..n {
            if j == i {
                continue;
            }
            let dot: f64 = ci.iter().zip(f.coords(j)).map(|(a, b)| a * b).sum();
            let gap2 = (self.sq_norms[i] + self.sq_norms[j] - 2.0 * dot).max(0.0);
            let lb = self.offset + gap2 * self.inv_4lmax;
            // Slack absorbs the rounding in the dot-product form of the gap.
            if lb - 1e-9 * (lb.abs() + self.sq_norms[i] * self.inv_4lmax) >= best {
                continue;
            }
            best = best.min(family_neg_log_l2_inner(f, i, j));
        }
        best
    }
}

/// The two clauses of the separation-and-temperature assumption, evaluated
/// on a concrete bank. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub delta_per_pattern: Vec<f64>,
    pub separation_ok: Vec<bool>,
    pub beta_constraint_ok: bool,
    pub m_w: f64,
    pub lambda_bounds: (f64, f64),
    pub commuting_ok: bool,
    pub r_basin: f64,
    pub kappa: f64,
    pub n: usize,
    pub dim: usize,
    pub beta: f64,
    pub separation_threshold: f64,
    pub beta_threshold: f64,
}

impl AssumptionReport {
    pub fn all_separated(&self) -> bool {
        self.separation_ok.iter().all(|&b| b)
    }

    /// Both clauses hold; says nothing about contraction.
    pub fn holds(&self) -> bool {
        self.all_separated() && self.beta_constraint_ok
    }

    pub fn min_delta(&self) -> f64 {
        self.delta_per_pattern
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(separation threshold, β threshold)` for the given bank statistics.
pub fn assumption_thresholds(
    n: usize,
    dim: usize,
    beta: f64,
    m_w: f64,
    lambda_min: f64,
    lambda_max: f64,
) -> (f64, f64) {
    let nf = n as f64;
    let c = 4.0 * m_w * m_w + 2.0 * dim as f64 * (lambda_max + lambda_min);
    let sep = 0.5 * dim as f64 * (4.0 * std::f64::consts::PI * lambda_max).ln()
        + (nf.powi(3) * beta * c).ln() / (beta * lambda_min);
    let beta_min = std::f64::consts::E.powi(2) / (c * nf.powi(3));
    (sep, beta_min)
}

pub fn check_assumptions(bank: &MemoryBank) -> Result<AssumptionReport> {
    let f = bank.family().ok_or(DamError::MissingCommutingFamily)?;
    let n = bank.len();
    if n < 2 {
        return Err(DamError::SinglePattern);
    }
    let (lmin, lmax) = f.spectrum_bounds();
    let beta = bank.beta();
    let m_w = bank.m_w();
    let (sep, beta_min) = assumption_thresholds(n, bank.dim(), beta, m_w, lmin, lmax);
    let deltas = separation_deltas(bank)?;
    Ok(AssumptionReport {
        separation_ok: deltas.iter().map(|&d| d >= sep).collect(),
        delta_per_pattern: deltas,
        beta_constraint_ok: beta > beta_min,
        m_w,
        lambda_bounds: (lmin, lmax),
        commuting_ok: true,
        r_basin: basin_radius(beta, n),
        kappa: kappa(beta, n, m_w),
        n,
        dim: bank.dim(),
        beta,
        separation_threshold: sep,
        beta_threshold: beta_min,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityInputs {
    pub dim: usize,
    pub p_fail: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub radius: f64,
}

impl CapacityInputs {
    pub fn new(dim: usize, p_fail: f64, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if !(p_fail > 0.0 && p_fail < 1.0) {
            return Err(DamError::DomainError(format!("p = {p_fail} outside (0, 1)")));
        }
        if !(lambda_min > 0.0) || !(lambda_max >= lambda_min) {
            return Err(DamError::DomainError(format!(
                "need 0 < lambda_min <= lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        let gamma = lambda_max / lambda_min;
        Ok(CapacityInputs {
            dim,
            p_fail,
            lambda_min,
            lambda_max,
            gamma,
            alpha: 1.0 - 2.0 * gamma.ln(),
            radius: (dim as f64 * (lambda_max + lambda_min)).sqrt(),
        })
    }

    /// Inputs with `λ_min = 1`, `λ_max = γ`.
    pub fn from_gamma(dim: usize, p_fail: f64, gamma: f64) -> Result<Self> {
        Self::new(dim, p_fail, 1.0, gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityBound {
    pub n: u64,
    pub n_real: f64,
    pub beta_lower: f64,
    pub alpha: f64,
    pub gamma: f64,
}

/// `N = ⌊√(p/2) exp(d α² / 16)⌋` together with the quoted `β > 3α/λ_min`.
pub fn capacity_bound(inputs: &CapacityInputs) -> Result<CapacityBound> {
    if inputs.gamma >= std::f64::consts::E.sqrt() {
        return Err(DamError::GammaTooLarge {
            gamma: inputs.gamma,
        });
    }
    let alpha = inputs.alpha;
    let n_real = (inputs.p_fail / 2.0).sqrt() * (inputs.dim as f64 * alpha * alpha / 16.0).exp();
    // `as` saturates at u64::MAX for astronomically large bounds.
    let n = n_real.floor() as u64;
    Ok(CapacityBound {
        n,
        n_real,
        beta_lower: 3.0 * alpha / inputs.lambda_min,
        alpha,
        gamma: inputs.gamma,
    })
}

/// Smallest `n` with `κⁿ ≤ (ε/2)√(βN)`, at least one.
pub fn iterations_for_eps(eps: f64, beta: f64, n: usize, m_w: f64) -> Result<u64> {
    if !(eps > 0.0) || !(beta > 0.0) || n == 0 {
        return Err(DamError::DomainError(format!(
            "need eps > 0, beta > 0, N >= 1 (got {eps}, {beta}, {n})"
        )));
    }
    let k = kappa(beta, n, m_w);
    if k >= 1.0 {
        return Err(DamError::KappaNotContractive { kappa: k });
    }
    let r = basin_radius(beta, n);
    if eps >= r {
        return Err(DamError::EpsilonTooLarge { eps, r });
    }
    let ratio = ((eps / 2.0) / r).ln() / k.ln();
    Ok((ratio.ceil() as u64).max(1))
}
