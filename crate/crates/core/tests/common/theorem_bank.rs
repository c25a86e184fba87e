//! A bank that satisfies the separation, temperature and contraction
//! conditions at once.
//!
//! Means are the first `N` codewords of the second-order Reed–Muller code of
//! length 32 mapped to `±1/√32`: any two differ in at least 8 coordinates,
//! so `‖μ_i − μ_j‖² ≥ 1` while `‖μ_i‖ = 1`. Tiny spectra make the
//! `‖Δμ‖²/(4λ_max)` term dominate the separation threshold.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wdam::rng::seeded;
use wdam::sampling::perturb_spectral;
use wdam::{CommutingFamily, MemoryBank, PerturbSpec, SpectralGaussian};

pub const DIM: usize = 32;
pub const N: usize = 40_000;
pub const BETA: f64 = 175.0;
pub const LAMBDA: (f64, f64) = (1e-4, 1.05e-4);

/// Codeword of the degree-≤2 Boolean polynomial with coefficient bits `msg`
/// (constant, 5 linear, 10 quadratic), evaluated at the 32 points of F₂⁵.
fn reed_muller_2_5(msg: u32) -> [u8; DIM] {
    let mut out = [0u8; DIM];
    for (x, slot) in out.iter_mut().enumerate() {
        let bit = |k: usize| ((x >> k) & 1) as u32;
        let mut v = msg & 1;
        let mut b = 1;
        for i in 0..5 {
            v ^= ((msg >> b) & 1) & bit(i);
            b += 1;
        }
        for i in 0..5 {
            for j in i + 1..5 {
                v ^= ((msg >> b) & 1) & bit(i) & bit(j);
                b += 1;
            }
        }
        *slot = v as u8;
    }
    out
}

pub fn theorem_bank() -> MemoryBank {
    let scale = 1.0 / (DIM as f64).sqrt();
    let mut rng = seeded(0x7468_6d31);
    let means: Vec<DVector<f64>> = (0..N as u32)
        .map(|m| DVector::from_iterator(DIM, reed_muller_2_5(m).iter().map(|&b| (2.0 * b as f64 - 1.0) * scale)))
        .collect();
    let spectra: Vec<Vec<f64>> = (0..N)
        .map(|_| (0..DIM).map(|_| rng.random_range(LAMBDA.0..=LAMBDA.1)).collect())
        .collect();
    let family = CommutingFamily::new(DMatrix::identity(DIM, DIM), &means, &spectra).unwrap();
    MemoryBank::from_family(family, BETA).unwrap()
}

/// A point of the basin `B_i` (radius `r`) whose spectrum stays inside the
/// bank's eigenvalue bounds. Clipping only moves the spectrum towards the
/// pattern's, so the distance stays at most `r`.
pub fn in_basin_query(bank: &MemoryBank, i: usize, r: f64, rng: &mut impl Rng) -> SpectralGaussian {
    let f = bank.family().unwrap();
    let (lo, hi) = f.spectrum_bounds();
    let rho = r * rng.random_range(0.05..1.0);
    let mut q = perturb_spectral(&f.spectral(i), &PerturbSpec::new(rho, 0), rng).unwrap();
    for s in q.sqrt_spectrum.iter_mut() {
        *s = s.clamp(lo.sqrt(), hi.sqrt());
    }
    q
}
