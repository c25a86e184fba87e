mod common;

use common::{normal, random_gaussian, random_spd};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use wdam::dam::{log_sum_exp_energy, softmax_neg};
use wdam::rng::seeded;
use wdam::sampling::{random_orthogonal, sample_commuting_family, sample_noncommuting_bank};
use wdam::{
    barycentric_map, bures_w2_squared, dam_step, displacement_norm, distances, energy,
    gradient_field, retrieve, weights, CommutingFamily, GaussianMeasure, MemoryBank, SpdMatrix,
    SphereConfig, SymMatrix,
};

fn w2(p: &GaussianMeasure, q: &GaussianMeasure) -> f64 {
    bures_w2_squared(p, q).unwrap().sqrt()
}

fn random_dense_bank(d: usize, n: usize, beta: f64, rng: &mut impl Rng) -> MemoryBank {
    MemoryBank::new((0..n).map(|_| random_gaussian(d, rng)).collect(), beta).unwrap()
}

#[test]
fn single_pattern_bank_is_exact_in_one_step() {
    let mut rng = seeded(201);
    for k in 0..1000 {
        let d = 1 + k % 10;
        let x = random_gaussian(d, &mut rng);
        let bank = MemoryBank::new(vec![x.clone()], rng.random_range(0.01..100.0)).unwrap();
        let q = random_gaussian(d, &mut rng);
        assert!(w2(&dam_step(&bank, &q).unwrap(), &x) <= 1e-8);
    }
}

/// Φ in one dimension: the OT map to `N(μ_i, σ_i²)` has slope `σ_i/σ`, so
/// the step averages means and standard deviations with the Gibbs weights.
#[test]
fn one_dimensional_step_matches_hand_oracle() {
    let mut rng = seeded(202);
    for _ in 0..300 {
        let n = rng.random_range(2..8);
        let beta = rng.random_range(0.1..5.0);
        let mus: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sig: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        let patterns = mus
            .iter()
            .zip(&sig)
            .map(|(m, s)| GaussianMeasure::spherical(&[*m], *s).unwrap())
            .collect();
        let bank = MemoryBank::new(patterns, beta).unwrap();
        let (m, s) = (rng.random_range(-3.0..3.0), rng.random_range(0.2..1.5));
        let d: Vec<f64> = mus.iter().zip(&sig).map(|(a, b)| (m - a).powi(2) + (s - b).powi(2)).collect();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = d.iter().map(|x| (-beta * (x - lo)).exp()).collect();
        let z: f64 = e.iter().sum();
        let m_new: f64 = e.iter().zip(&mus).map(|(w, a)| w * a).sum::<f64>() / z;
        let s_new: f64 = e.iter().zip(&sig).map(|(w, a)| w * a).sum::<f64>() / z;
        let out = dam_step(&bank, &GaussianMeasure::spherical(&[m], s).unwrap()).unwrap();
        assert!((out.mean()[0] - m_new).abs() <= 1e-12);
        assert!((out.cov().matrix()[(0, 0)].sqrt() - s_new).abs() <= 1e-12);
        let energy_oracle = lo - z.ln() / beta;
        let q = GaussianMeasure::spherical(&[m], s).unwrap();
        assert!((energy(&bank, &q).unwrap() - energy_oracle).abs() <= 1e-12);
    }
}

/// 2-D step with maps `T = Ω^{-1/2} (Ω^{1/2} Σ_i Ω^{1/2})^{1/2} Ω^{-1/2}`
/// built from the closed-form 2x2 square root
/// `√M = (M + √det M · I) / √(tr M + 2√det M)`.
#[test]
fn two_dimensional_step_matches_closed_form() {
    fn sqrt2(m: &DMatrix<f64>) -> DMatrix<f64> {
        let s = m.determinant().sqrt();
        (m + DMatrix::identity(2, 2) * s) / (m.trace() + 2.0 * s).sqrt()
    }
    let mut rng = seeded(203);
    for _ in 0..200 {
        let n = rng.random_range(2..6);
        let patterns: Vec<GaussianMeasure> = (0..n).map(|_| random_gaussian(2, &mut rng)).collect();
        let beta = rng.random_range(0.05..2.0);
        let bank = MemoryBank::new(patterns.clone(), beta).unwrap();
        let q = random_gaussian(2, &mut rng);
        let om = q.cov().matrix();
        let om_h = sqrt2(om);
        let om_ih = om_h.clone().try_inverse().unwrap();
        let maps: Vec<DMatrix<f64>> = patterns
            .iter()
            .map(|p| &om_ih * sqrt2(&(&om_h * p.cov().matrix() * &om_h)) * &om_ih)
            .collect();
        for (t, p) in maps.iter().zip(&patterns) {
            assert!((t * om * t - p.cov().matrix()).abs().max() <= 1e-9);
        }
        let d: Vec<f64> = patterns
            .iter()
            .map(|p| {
                let s = p.cov().matrix();
                (q.mean() - p.mean()).norm_squared() + om.trace() + s.trace()
                    - 2.0 * sqrt2(&(&om_h * s * &om_h)).trace()
            })
            .collect();
        let w = softmax_neg(beta, &d);
        let a: DMatrix<f64> = maps.iter().zip(&w).fold(DMatrix::zeros(2, 2), |acc, (t, wi)| acc + t * *wi);
        let m: DVector<f64> = patterns.iter().zip(&w).fold(DVector::zeros(2), |acc, (p, wi)| acc + p.mean() * *wi);
        let expect_cov = &a * om * a.transpose();
        let out = dam_step(&bank, &q).unwrap();
        assert!((out.mean() - m).abs().max() <= 1e-9);
        assert!((out.cov().matrix() - expect_cov).abs().max() <= 1e-9);
    }
}

#[test]
fn energy_gradient_matches_finite_differences() {
    let mut rng = seeded(204);
    let h = 1e-6;
    for _ in 0..40 {
        let d = rng.random_range(1..5);
        let bank = random_dense_bank(d, 6, rng.random_range(0.1..1.0), &mut rng);
        let q = random_gaussian(d, &mut rng);
        let map = barycentric_map(&bank, &q).unwrap();
        // Mean direction: dE = −⟨field(m), v⟩.
        let v = DVector::from_fn(d, |_, _| normal(&mut rng));
        let shifted = |t: f64| GaussianMeasure::new(q.mean() + &v * t, q.cov().clone()).unwrap();
        let fd = (energy(&bank, &shifted(h)).unwrap() - energy(&bank, &shifted(-h)).unwrap()) / (2.0 * h);
        let field = gradient_field(&bank, &q, &[q.mean().clone()]).unwrap();
        assert!((fd + field[0].dot(&v)).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd}");
        // Covariance direction: dE = tr((I − Ã) H).
        let g = DMatrix::from_fn(d, d, |_, _| normal(&mut rng));
        let hdir = (&g + g.transpose()) * 0.1;
        let moved = |t: f64| {
            GaussianMeasure::new(
                q.mean().clone(),
                SpdMatrix::new(SymMatrix::symmetrize(q.cov().matrix() + &hdir * t).unwrap()).unwrap(),
            )
            .unwrap()
        };
        let fd = (energy(&bank, &moved(h)).unwrap() - energy(&bank, &moved(-h)).unwrap()) / (2.0 * h);
        let expect = ((DMatrix::identity(d, d) - &map.matrix) * &hdir).trace();
        assert!((fd - expect).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd} vs {expect}");
    }
}

#[test]
fn energy_bounds_and_weights() {
    let mut rng = seeded(205);
    for _ in 0..200 {
        let d = rng.random_range(1..6);
        let n = rng.random_range(1..12);
        let beta = rng.random_range(0.01..10.0);
        let bank = random_dense_bank(d, n, beta, &mut rng);
        let q = random_gaussian(d, &mut rng);
        let dist = distances(&bank, &q).unwrap();
        let lo = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let e = energy(&bank, &q).unwrap();
        assert!(e <= lo + 1e-12);
        assert!(e >= lo - (n as f64).ln() / beta - 1e-12);
        let w = weights(&bank, &q).unwrap();
        assert!((w.values.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(w.values.iter().all(|x| *x >= 0.0));
        assert_eq!(dist[w.argmax()], lo);
    }
}

#[test]
fn energy_decreases_along_retrieval() {
    let cfg = SphereConfig::centered(10, 200, 1.0, 1.1, 0);
    let fam = sample_commuting_family(&cfg, &mut seeded(206)).unwrap();
    let bank = MemoryBank::from_family(fam, 1.0).unwrap();
    let mut rng = seeded(207);
    for _ in 0..50 {
        let q = GaussianMeasure::new(
            DVector::from_fn(10, |_, _| 2.0 * normal(&mut rng)),
            SpdMatrix::from_diagonal(&[1.05; 10]).unwrap(),
        )
        .unwrap();
        let t = retrieve(&bank, &q, 30, 1e-12, None).unwrap();
        for pair in t.iterates.windows(2) {
            let (a, b) = (energy(&bank, &pair[0]).unwrap(), energy(&bank, &pair[1]).unwrap());
            assert!(b <= a + 1e-9, "{a} -> {b}");
        }
    }
}

#[test]
fn converged_iterates_are_fixed_points() {
    let mut rng = seeded(208);
    let bank = MemoryBank::new(sample_noncommuting_bank(4, 30, 4.0, &mut rng).unwrap(), 2.0).unwrap();
    let tol = 1e-9;
    for _ in 0..30 {
        let q = random_gaussian(4, &mut rng);
        let t = retrieve(&bank, &q, 500, tol, None).unwrap();
        if t.converged {
            assert!(displacement_norm(&bank, t.last()).unwrap() <= 10.0 * tol);
            let field = gradient_field(&bank, t.last(), &[t.last().mean().clone()]).unwrap();
            assert!(field[0].norm() <= 1e-6);
        }
        assert_eq!(t.nearest_pattern_ids.len(), t.nearest_w2.len());
        assert_eq!(t.weight_history.len(), t.nearest_w2.len());
    }
}

fn family_bank(d: usize, n: usize, beta: f64, seed: u64) -> MemoryBank {
    let mut rng = seeded(seed);
    let u = random_orthogonal(d, &mut rng);
    let means: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| normal(&mut rng))).collect();
    let spectra: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.2..2.0)).collect())
        .collect();
    MemoryBank::from_family(CommutingFamily::new(u, &means, &spectra).unwrap(), beta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_is_shift_invariant(
        d in prop::collection::vec(0.0f64..50.0, 1..20),
        shift in -100.0f64..100.0,
        beta in 0.01f64..20.0,
    ) {
        let a = softmax_neg(beta, &d);
        let moved: Vec<f64> = d.iter().map(|x| x + shift).collect();
        let b = softmax_neg(beta, &moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let e = log_sum_exp_energy(beta, &d);
        prop_assert!((log_sum_exp_energy(beta, &moved) - e - shift).abs() <= 1e-9 * (1.0 + shift.abs() + e.abs()));
    }

    #[test]
    fn family_and_dense_banks_step_identically(seed in any::<u64>(), d in 1usize..7, n in 1usize..10, beta in 0.05f64..3.0) {
        let fam = family_bank(d, n, beta, seed);
        let dense = MemoryBank::new(fam.patterns().unwrap(), beta).unwrap();
        let f = fam.family().unwrap();
        let mut rng = seeded(seed ^ 1);
        let spectrum: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
        let mean: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let q = GaussianMeasure::new(DVector::from_vec(mean), SpdMatrix::from_eigen(&spectrum, f.basis()).unwrap()).unwrap();
        let (a, b) = (dam_step(&fam, &q).unwrap(), dam_step(&dense, &q).unwrap());
        prop_assert!(w2(&a, &b) <= 1e-7);
        let (da, db) = (distances(&fam, &q).unwrap(), distances(&dense, &q).unwrap());
        for (x, y) in da.iter().zip(&db) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn step_output_is_a_valid_gaussian(seed in any::<u64>(), d in 1usize..6, n in 1usize..8) {
        let mut rng = seeded(seed);
        let bank = random_dense_bank(d, n, 0.5, &mut rng);
        let q = GaussianMeasure::new(DVector::from_fn(d, |_, _| normal(&mut rng)), random_spd(d, 0.05, &mut rng)).unwrap();
        let out = dam_step(&bank, &q).unwrap();
        prop_assert!(out.cov().eigenvalues()[0] > 0.0);
        prop_assert!(out.mean().iter().all(|x| x.is_finite()));
    }
}
