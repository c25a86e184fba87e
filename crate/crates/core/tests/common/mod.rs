#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use wdam::{GaussianMeasure, SpdMatrix, SymMatrix};

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `GGᵀ/d + floor·I` with a standard Gaussian `G`.
pub fn random_spd(d: usize, floor: f64, rng: &mut impl Rng) -> SpdMatrix {
    let g = DMatrix::from_fn(d, d, |_, _| normal(rng));
    let m = &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * floor;
    SpdMatrix::new(SymMatrix::symmetrize(m).unwrap()).unwrap()
}

pub fn random_gaussian(d: usize, rng: &mut impl Rng) -> GaussianMeasure {
    let mean = DVector::from_fn(d, |_, _| 2.0 * normal(rng));
    GaussianMeasure::new(mean, random_spd(d, 0.1, rng)).unwrap()
}

/// Monte-Carlo mean and covariance of `n` draws of `x = m + L z`.
pub fn empirical_moments(samples: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
    let cov = samples.iter().fold(DMatrix::zeros(d, d), |acc, x| {
        let c = x - &mean;
        acc + &c * c.transpose()
    }) / (n - 1.0);
    (mean, cov)
}
