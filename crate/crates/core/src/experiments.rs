//! Experiment runners: retrieval convergence on commuting and general
//! banks, the β sweep, and the two grid experiments used for landscape and
//! field plots. Each runner returns rows; `*_table` turns them into CSV.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dam::{argmin, energy, MemoryBank, State};
use crate::error::{DamError, Result};
use crate::gaussian::{CommutingFamily, GaussianMeasure, SpectralGaussian};
use crate::io::{fmt_f64, manifest_path, write_json, Manifest, Table};
use crate::linalg::SpdMatrix;
use crate::rng::{derive_seed, seeded, stream};
use crate::sampling::{
    perturb_spectral, perturb_spherical, perturb_to_distance, sample_commuting_family,
    sample_noncommuting_bank, PerturbSpec, SphereConfig,
};
use crate::theory::basin_radius;

const TAG_BANK: u64 = 0x6261_6e6b;
const TAG_SUBSET: u64 = 0x7375_6273;
const TAG_PERTURB: u64 = 0x7065_7274;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    BetaSweep,
    EnergyGrid1d,
    PhiGrid2d,
    NoncommutingConvergence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::BetaSweep => "beta_sweep",
            ExperimentKind::EnergyGrid1d => "energy_grid_1d",
            ExperimentKind::PhiGrid2d => "phi_grid_2d",
            ExperimentKind::NoncommutingConvergence => "noncommuting_convergence",
        }
    }
}

/// Where the stored patterns come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BankSpec {
    /// Commuting family on a Wasserstein sphere.
    Commuting(SphereConfig),
    /// Dense covariances `c(WWᵀ + 0.01 I)` on the sphere of radius `radius_r`.
    Noncommuting { dim: usize, n: usize, radius_r: f64 },
    /// Synthetic spherical word vocabulary.
    SphericalVocabulary { dim: usize, n: usize },
}

impl BankSpec {
    pub fn n(&self) -> usize {
        match self {
            BankSpec::Commuting(c) => c.n,
            BankSpec::Noncommuting { n, .. } | BankSpec::SphericalVocabulary { n, .. } => *n,
        }
    }

    /// Draws the bank at inverse temperature `beta`.
    pub fn sample(&self, beta: f64, seed: u64) -> Result<MemoryBank> {
        let seed = derive_seed(seed, TAG_BANK);
        match self {
            BankSpec::Commuting(c) => {
                MemoryBank::from_family(sample_commuting_family(c, &mut seeded(seed))?, beta)
            }
            BankSpec::Noncommuting { dim, n, radius_r } => {
                MemoryBank::new(sample_noncommuting_bank(*dim, *n, *radius_r, &mut seeded(seed))?, beta)
            }
            BankSpec::SphericalVocabulary { dim, n } => {
                crate::embeddings::generate_synthetic_vocabulary(*n, *dim, seed)?.to_bank(beta)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub bank: BankSpec,
    pub beta_values: Vec<f64>,
    pub perturb_radius_multipliers: Vec<f64>,
    pub fraction_perturbed: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    /// N = 5000, d = 25, λ ∈ [1, 1.1], β ∈ {1, 0.1}, multipliers {1, 100}.
    pub fn convergence_desk(seed: u64) -> Self {
        Self::convergence_with(SphereConfig::centered(25, 5000, 1.0, 1.1, seed), seed)
    }

    /// N = 10000, d = 50, otherwise as the desk-scale run.
    pub fn convergence_full(seed: u64) -> Self {
        Self::convergence_with(SphereConfig::centered(50, 10000, 1.0, 1.1, seed), seed)
    }

    pub fn convergence_with(sphere: SphereConfig, seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Convergence,
            bank: BankSpec::Commuting(sphere),
            beta_values: vec![1.0, 0.1],
            perturb_radius_multipliers: vec![1.0, 100.0],
            fraction_perturbed: 0.75,
            max_iters: 10,
            tol: 1e-6,
            seed,
            output_path: None,
        }
    }

    /// N = 1000, d = 10, R = √(2d).
    pub fn noncommuting_default(seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::NoncommutingConvergence,
            bank: BankSpec::Noncommuting {
                dim: 10,
                n: 1000,
                radius_r: 20f64.sqrt(),
            },
            beta_values: vec![1.0, 0.1],
            perturb_radius_multipliers: vec![1.0],
            fraction_perturbed: 0.75,
            max_iters: 10,
            tol: 1e-3,
            seed,
            output_path: None,
        }
    }

    /// Synthetic vocabulary with n = 2000, d = 25 over a log-spaced β grid.
    pub fn beta_sweep_default(seed: u64) -> Self {
        ExperimentConfig {
            kind: ExperimentKind::BetaSweep,
            bank: BankSpec::SphericalVocabulary { dim: 25, n: 2000 },
            beta_values: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0],
            perturb_radius_multipliers: vec![1.0],
            fraction_perturbed: 0.25,
            max_iters: 10,
            tol: 1e-6,
            seed,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_values.is_empty() {
            return Err(DamError::InvalidConfig("need at least one beta value".into()));
        }
        if let Some(b) = self.beta_values.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(DamError::InvalidConfig(format!("beta = {b} must be positive")));
        }
        if let Some(m) = self
            .perturb_radius_multipliers
            .iter()
            .find(|m| !(**m > 0.0) || !m.is_finite())
        {
            return Err(DamError::InvalidConfig(format!("multiplier {m} must be positive")));
        }
        if !(self.fraction_perturbed > 0.0 && self.fraction_perturbed <= 1.0) {
            return Err(DamError::InvalidConfig(format!(
                "fraction_perturbed = {} outside (0, 1]",
                self.fraction_perturbed
            )));
        }
        if !(self.tol > 0.0) {
            return Err(DamError::InvalidConfig("tol must be positive".into()));
        }
        if let BankSpec::Commuting(c) = &self.bank {
            c.validate()?;
        }
        Ok(())
    }

    /// Number of perturbed patterns, `⌊f·N⌋`.
    pub fn query_count(&self) -> Result<usize> {
        let n = self.bank.n();
        let k = (self.fraction_perturbed * n as f64 + 1e-9).floor() as usize;
        if k == 0 {
            return Err(DamError::InsufficientQueries(format!(
                "fraction {} of N = {n} is below one pattern",
                self.fraction_perturbed
            )));
        }
        Ok(k.min(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub beta: f64,
    pub multiplier: f64,
    pub iteration: usize,
    pub mean_w2: f64,
    pub std_w2: f64,
    pub frac_below_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    pub success_rate: f64,
}

/// Indices of the patterns that get perturbed, ascending.
fn select_queries(config: &ExperimentConfig) -> Result<Vec<usize>> {
    let k = config.query_count()?;
    let n = config.bank.n();
    let mut rng = seeded(derive_seed(config.seed, TAG_SUBSET));
    let mut ids = sample_indices(&mut rng, n, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

fn original_state(bank: &MemoryBank, i: usize) -> Result<State> {
    match bank.family() {
        Some(f) => Ok(State::Spectral(f.spectral(i))),
        None => Ok(State::Dense(bank.pattern(i)?)),
    }
}

/// Moves pattern `i` to W2 distance `r`, staying in the bank's family when
/// there is one.
fn perturbed_state(
    bank: &MemoryBank,
    spherical: bool,
    i: usize,
    r: f64,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<State> {
    let spec = PerturbSpec::new(r, seed);
    match bank.family() {
        Some(f) if spherical => {
            let sg = f.spectral(i);
            let (m, s) = perturb_spherical(&sg.coords, sg.sqrt_spectrum[0], &spec, rng)?;
            Ok(State::Spectral(SpectralGaussian {
                sqrt_spectrum: vec![s; m.len()],
                coords: m,
            }))
        }
        Some(f) => Ok(State::Spectral(perturb_spectral(&f.spectral(i), &spec, rng)?)),
        None => Ok(State::Dense(perturb_to_distance(&bank.pattern(i)?, &spec, rng)?)),
    }
}

struct Trajectory {
    w2_to_original: Vec<f64>,
    final_nearest: usize,
}

/// Runs exactly `iters` steps of Φ, recording W2 to the original pattern at
/// every iterate including the start.
fn trajectory(bank: &MemoryBank, start: State, original: &State, iters: usize) -> Result<Trajectory> {
    let mut cur = start;
    let mut w2 = Vec::with_capacity(iters + 1);
    w2.push(bank.state_w2_squared(&cur, original)?.sqrt());
    for _ in 0..iters {
        cur = bank.step_state(&cur)?.next;
        w2.push(bank.state_w2_squared(&cur, original)?.sqrt());
    }
    Ok(Trajectory {
        w2_to_original: w2,
        final_nearest: argmin(&bank.state_distances(&cur)?),
    })
}

fn run_queries(
    config: &ExperimentConfig,
    bank: &MemoryBank,
    ids: &[usize],
    r: f64,
    combo: u64,
) -> Result<Vec<(usize, Trajectory)>> {
    let spherical = matches!(config.bank, BankSpec::SphericalVocabulary { .. });
    let seed = derive_seed(config.seed, TAG_PERTURB.wrapping_add(combo));
    ids.par_iter()
        .map(|&i| {
            let mut rng = stream(seed, i as u64);
            let start = perturbed_state(bank, spherical, i, r, config.seed, &mut rng)?;
            let t = trajectory(bank, start, &original_state(bank, i)?, config.max_iters)?;
            Ok((i, t))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e: DamError| e.context(format!("beta = {}, r = {r:e}", bank.beta())))
}

fn convergence_rows(config: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    let ids = select_queries(config)?;
    let base = config.bank.sample(config.beta_values[0], config.seed)?;
    let n = base.len();
    let mut rows = Vec::new();
    let mut combo = 0u64;
    for &beta in &config.beta_values {
        let bank = base.with_beta(beta)?;
        for &mult in &config.perturb_radius_multipliers {
            let r = mult * basin_radius(beta, n);
            let runs = run_queries(config, &bank, &ids, r, combo)?;
            combo += 1;
            for it in 0..=config.max_iters {
                let vals: Vec<f64> = runs.iter().map(|(_, t)| t.w2_to_original[it]).collect();
                let (mean, std) = mean_std(&vals);
                let below = vals.iter().filter(|v| **v <= config.tol).count();
                rows.push(ConvergenceRow {
                    beta,
                    multiplier: mult,
                    iteration: it,
                    mean_w2: mean,
                    std_w2: std,
                    frac_below_tol: below as f64 / vals.len() as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// Population mean and standard deviation, summed in input order.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Retrieval from perturbed members of a commuting or spherical bank.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    if matches!(config.bank, BankSpec::Noncommuting { .. }) {
        return Err(DamError::InvalidConfig(
            "use run_noncommuting_convergence for dense banks".into(),
        ));
    }
    convergence_rows(config)
}

/// The same aggregation on a dense non-commuting bank.
pub fn run_noncommuting_convergence(config: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    if !matches!(config.bank, BankSpec::Noncommuting { .. }) {
        return Err(DamError::InvalidConfig("expected a non-commuting bank spec".into()));
    }
    convergence_rows(config)
}

/// Success rate per β: a query succeeds when after `max_iters` steps the
/// nearest pattern is its original and it lies within `1/√(βN)` of it.
pub fn run_beta_sweep(config: &ExperimentConfig) -> Result<Vec<BetaSweepRow>> {
    config.validate()?;
    let ids = select_queries(config)?;
    let base = config.bank.sample(config.beta_values[0], config.seed)?;
    let n = base.len();
    config
        .beta_values
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let bank = base.with_beta(beta)?;
            let r = basin_radius(beta, n);
            let runs = run_queries(config, &bank, &ids, r, k as u64)?;
            let ok = runs
                .iter()
                .filter(|(i, t)| {
                    t.final_nearest == *i && *t.w2_to_original.last().expect("non-empty") <= r
                })
                .count();
            Ok(BetaSweepRow {
                beta,
                success_rate: ok as f64 / runs.len() as f64,
            })
        })
        .collect()
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(["beta", "multiplier", "iteration", "mean_w2", "std_w2", "frac_below_tol"]);
    for r in rows {
        t.push(vec![
            fmt_f64(r.beta),
            fmt_f64(r.multiplier),
            r.iteration.to_string(),
            fmt_f64(r.mean_w2),
            fmt_f64(r.std_w2),
            fmt_f64(r.frac_below_tol),
        ]);
    }
    t
}

pub fn beta_sweep_table(rows: &[BetaSweepRow]) -> Table {
    let mut t = Table::new(["beta", "success_rate"]);
    for r in rows {
        t.push(vec![fmt_f64(r.beta), fmt_f64(r.success_rate)]);
    }
    t
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// A bank of `n` one-dimensional Gaussians with means in `[-3, 3]` and
/// standard deviations in `[0.2, 1]`.
pub fn sample_1d_bank(n: usize, beta: f64, rng: &mut impl Rng) -> Result<MemoryBank> {
    let mut means = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n);
    for _ in 0..n {
        means.push(DVector::from_element(1, rng.random_range(-3.0..=3.0)));
        let s: f64 = rng.random_range(0.2..=1.0);
        spectra.push(vec![s * s]);
    }
    MemoryBank::from_family(CommutingFamily::new(DMatrix::identity(1, 1), &means, &spectra)?, beta)
}

/// Energy of `N(μ, σ²)` over a `mus × sigmas` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Row-major in `μ`: `energy[i * sigmas.len() + j]`.
    pub energy: Vec<f64>,
}

impl EnergyGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.energy[i * self.sigmas.len() + j]
    }

    /// Strict local minima. Interior cells compare against all eight
    /// neighbours, edge cells against their in-bounds four-neighbourhood.
    pub fn local_minima(&self) -> Vec<(usize, usize)> {
        let (nm, ns) = (self.mus.len(), self.sigmas.len());
        let mut out = Vec::new();
        for i in 0..nm {
            for j in 0..ns {
                let interior = i > 0 && j > 0 && i + 1 < nm && j + 1 < ns;
                let v = self.at(i, j);
                let mut is_min = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if (di, dj) == (0, 0) || (!interior && di != 0 && dj != 0) {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= nm as i64 || b >= ns as i64 {
                            continue;
                        }
                        if self.at(a as usize, b as usize) <= v {
                            is_min = false;
                        }
                    }
                }
                if is_min {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn run_energy_grid_1d(
    bank: &MemoryBank,
    mu_range: (f64, f64),
    sigma_range: (f64, f64),
    grid: (usize, usize),
) -> Result<EnergyGrid> {
    if bank.dim() != 1 {
        return Err(DamError::dim(1, bank.dim()));
    }
    if grid.0 < 2 || grid.1 < 2 {
        return Err(DamError::InvalidConfig("grid needs at least 2 points per axis".into()));
    }
    if !(sigma_range.0 > 0.0) {
        return Err(DamError::DomainError("sigma range must be positive".into()));
    }
    let mus = linspace(mu_range.0, mu_range.1, grid.0);
    let sigmas = linspace(sigma_range.0, sigma_range.1, grid.1);
    let energy = mus
        .par_iter()
        .map(|&m| {
            sigmas
                .iter()
                .map(|&s| energy(bank, &GaussianMeasure::spherical(&[m], s)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(EnergyGrid { mus, sigmas, energy })
}

pub fn energy_grid_table(grid: &EnergyGrid) -> Table {
    let mut t = Table::new(["mu", "sigma", "energy"]);
    for (i, m) in grid.mus.iter().enumerate() {
        for (j, s) in grid.sigmas.iter().enumerate() {
            t.push(vec![fmt_f64(*m), fmt_f64(*s), fmt_f64(grid.at(i, j))]);
        }
    }
    t
}

/// `(μ_i, σ_i)` of a one-dimensional bank, for overlaying on the grid.
pub fn patterns_1d_table(bank: &MemoryBank) -> Result<Table> {
    if bank.dim() != 1 {
        return Err(DamError::dim(1, bank.dim()));
    }
    let mut t = Table::new(["pattern", "mu", "sigma"]);
    for (i, p) in bank.patterns()?.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            fmt_f64(p.mean()[0]),
            fmt_f64(p.cov().matrix()[(0, 0)].sqrt()),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiGridRow {
    pub x: f64,
    pub y: f64,
    pub displacement: f64,
    pub weights: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
}

/// One application of Φ at queries `N((x, y), query_cov)`, `x` outer.
pub fn run_phi_grid_2d(
    bank: &MemoryBank,
    xs: &[f64],
    ys: &[f64],
    query_cov: &SpdMatrix,
) -> Result<Vec<PhiGridRow>> {
    if bank.dim() != 2 {
        return Err(DamError::dim(2, bank.dim()));
    }
    if query_cov.dim() != 2 {
        return Err(DamError::dim(2, query_cov.dim()));
    }
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    points
        .par_iter()
        .map(|&(x, y)| {
            let q = GaussianMeasure::new(DVector::from_vec(vec![x, y]), query_cov.clone())?;
            let cur = bank.state_of(&q)?;
            let step = bank.step_state(&cur)?;
            let displacement = bank.state_w2_squared(&cur, &step.next)?.sqrt();
            let next = bank.materialize(&step.next)?;
            Ok(PhiGridRow {
                x,
                y,
                displacement,
                weights: step.weights,
                dx: next.mean()[0] - x,
                dy: next.mean()[1] - y,
            })
        })
        .collect()
}

pub fn phi_grid_table(rows: &[PhiGridRow], n_patterns: usize) -> Table {
    let mut header = vec!["x".to_string(), "y".to_string(), "displacement".to_string()];
    header.extend((1..=n_patterns).map(|i| format!("w_{i}")));
    header.extend(["dx".to_string(), "dy".to_string()]);
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![fmt_f64(r.x), fmt_f64(r.y), fmt_f64(r.displacement)];
        row.extend(r.weights.iter().map(|w| fmt_f64(*w)));
        row.extend([fmt_f64(r.dx), fmt_f64(r.dy)]);
        t.push(row);
    }
    t
}

/// Five anisotropic 2-D patterns with means at the origin and `(±2, ±2)`.
pub fn phi_layout_bank(beta: f64) -> Result<MemoryBank> {
    let specs: [([f64; 2], [f64; 4]); 5] = [
        ([0.0, 0.0], [0.6, 0.2, 0.2, 0.3]),
        ([2.0, 2.0], [0.3, 0.0, 0.0, 0.8]),
        ([2.0, -2.0], [0.8, -0.3, -0.3, 0.4]),
        ([-2.0, 2.0], [0.4, 0.25, 0.25, 0.7]),
        ([-2.0, -2.0], [0.9, 0.0, 0.0, 0.25]),
    ];
    let patterns = specs
        .iter()
        .map(|(m, c)| GaussianMeasure::from_parts(m, DMatrix::from_row_slice(2, 2, c)))
        .collect::<Result<Vec<_>>>()?;
    MemoryBank::new(patterns, beta)
}

/// Writes `table` to `path` and the run manifest next to it.
pub fn save_with_manifest<C: Serialize>(
    table: &Table,
    path: &Path,
    kind: ExperimentKind,
    seed: u64,
    config: &C,
) -> Result<()> {
    table.save(path)?;
    write_json(&manifest_path(path), &Manifest::new(kind.name(), seed, config)?)
}

/// Runs a convergence or sweep config and returns its CSV table.
pub fn run_table(config: &ExperimentConfig) -> Result<Table> {
    match config.kind {
        ExperimentKind::Convergence => Ok(convergence_table(&run_convergence(config)?)),
        ExperimentKind::NoncommutingConvergence => {
            Ok(convergence_table(&run_noncommuting_convergence(config)?))
        }
        ExperimentKind::BetaSweep => Ok(beta_sweep_table(&run_beta_sweep(config)?)),
        k => Err(DamError::InvalidConfig(format!(
            "{} runs on an explicit bank, not a config",
            k.name()
        ))),
    }
}
