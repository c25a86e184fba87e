//! The associative memory: LSE energy, Gibbs weights, the Φ update and
//! iterative retrieval.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{DamError, Result};
use crate::gaussian::{
    bures_w2_squared, dirac_w2_squared, ot_matrix, spectral_w2_squared, spectral_w2_squared_raw,
    transport_cost, AffineMap, CommutingFamily, GaussianMeasure, SpectralGaussian,
};
use crate::linalg::{SpdMatrix, SymMatrix, EPS_PD};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 50;

// Above this many stored matrix entries the dense step recomputes the
// transport maps in a second pass instead of caching them.
const DENSE_CACHE_LIMIT: usize = 4_000_000;
const PAR_MIN_LEN: usize = 256;

#[derive(Debug)]
struct DensePattern {
    measure: GaussianMeasure,
    sqrt_cov: DMatrix<f64>,
}

#[derive(Debug)]
enum Storage {
    Dense(Vec<DensePattern>),
    Family(Arc<CommutingFamily>),
}

/// An immutable bank of stored Gaussians at inverse temperature `beta`.
///
/// Cloning is cheap: pattern storage is shared.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    storage: Arc<Storage>,
    beta: f64,
    dim: usize,
    len: usize,
    m_w: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(DamError::InvalidConfig(format!("beta = {beta} must be positive")));
    }
    Ok(())
}

impl MemoryBank {
    pub fn new(patterns: Vec<GaussianMeasure>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let dim = patterns
            .first()
            .ok_or_else(|| DamError::InvalidConfig("memory bank needs at least one pattern".into()))?
            .dim();
        let mut m_w2 = 0.0_f64;
        let mut stored = Vec::with_capacity(patterns.len());
        for p in patterns {
            if p.dim() != dim {
                return Err(DamError::dim(dim, p.dim()));
            }
            m_w2 = m_w2.max(dirac_w2_squared(&p));
            let sqrt_cov = p.cov().sqrt().matrix().clone();
            stored.push(DensePattern {
                measure: p,
                sqrt_cov,
            });
        }
        Ok(MemoryBank {
            len: stored.len(),
            storage: Arc::new(Storage::Dense(stored)),
            beta,
            dim,
            m_w: m_w2.sqrt(),
        })
    }

    pub fn from_family(family: CommutingFamily, beta: f64) -> Result<Self> {
        Self::from_family_arc(Arc::new(family), beta)
    }

    pub fn from_family_arc(family: Arc<CommutingFamily>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let mut m_w2 = 0.0_f64;
        for i in 0..family.len() {
            let c: f64 = family.coords(i).iter().map(|x| x * x).sum();
            let t: f64 = family.spectrum(i).iter().sum();
            m_w2 = m_w2.max(c + t);
        }
        Ok(MemoryBank {
            dim: family.dim(),
            len: family.len(),
            storage: Arc::new(Storage::Family(family)),
            beta,
            m_w: m_w2.sqrt(),
        })
    }

    /// Same patterns, different temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(MemoryBank {
            beta,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `max_i W2(δ₀, X_i)`.
    pub fn m_w(&self) -> f64 {
        self.m_w
    }

    pub fn family(&self) -> Option<&CommutingFamily> {
        match &*self.storage {
            Storage::Family(f) => Some(f),
            Storage::Dense(_) => None,
        }
    }

    pub fn family_arc(&self) -> Option<Arc<CommutingFamily>> {
        match &*self.storage {
            Storage::Family(f) => Some(Arc::clone(f)),
            Storage::Dense(_) => None,
        }
    }

    pub fn pattern(&self, i: usize) -> Result<GaussianMeasure> {
        if i >= self.len {
            return Err(DamError::DomainError(format!(
                "pattern index {i} out of range for {} patterns",
                self.len
            )));
        }
        match &*self.storage {
            Storage::Dense(ps) => Ok(ps[i].measure.clone()),
            Storage::Family(f) => f.member(i),
        }
    }

    pub fn patterns(&self) -> Result<Vec<GaussianMeasure>> {
        (0..self.len).map(|i| self.pattern(i)).collect()
    }

    fn check_query(&self, q: &GaussianMeasure) -> Result<()> {
        if q.dim() != self.dim {
            return Err(DamError::dim(self.dim, q.dim()));
        }
        Ok(())
    }

    /// The representation the step kernels work on.
    pub(crate) fn state_of(&self, q: &GaussianMeasure) -> Result<State> {
        self.check_query(q)?;
        if let Storage::Family(f) = &*self.storage {
            if let Some(s) = f.project(q) {
                return Ok(State::Spectral(s));
            }
        }
        Ok(State::Dense(q.clone()))
    }

    pub(crate) fn materialize(&self, s: &State) -> Result<GaussianMeasure> {
        match (s, &*self.storage) {
            (State::Dense(g), _) => Ok(g.clone()),
            (State::Spectral(sp), Storage::Family(f)) => f.materialize(sp),
            (State::Spectral(_), Storage::Dense(_)) => Err(DamError::MissingCommutingFamily),
        }
    }

    pub(crate) fn state_w2_squared(&self, a: &State, b: &State) -> Result<f64> {
        match (a, b) {
            (State::Spectral(x), State::Spectral(y)) => Ok(spectral_w2_squared(x, y)),
            _ => bures_w2_squared(&self.materialize(a)?, &self.materialize(b)?),
        }
    }

    fn pattern_parts(&self, i: usize) -> (DVector<f64>, DMatrix<f64>) {
        match &*self.storage {
            Storage::Dense(ps) => (ps[i].measure.mean().clone(), ps[i].sqrt_cov.clone()),
            Storage::Family(f) => {
                let u = f.basis();
                let mut scaled = u.clone();
                for (j, s) in f.sqrt_spectrum(i).iter().enumerate() {
                    scaled.column_mut(j).scale_mut(*s);
                }
                (f.mean(i), scaled * u.transpose())
            }
        }
    }

    /// `D_i = W2²(X_i, ξ)` for every stored pattern.
    pub(crate) fn state_distances(&self, s: &State) -> Result<Vec<f64>> {
        match s {
            State::Spectral(sp) => Ok(self.spectral_distances(sp)),
            State::Dense(q) => {
                let q_sqrt = q.cov().sqrt();
                (0..self.len)
                    .into_par_iter()
                    .with_min_len(PAR_MIN_LEN / 8)
                    .map(|i| self.dense_term(q, q_sqrt.matrix(), i).map(|(d, _)| d))
                    .collect()
            }
        }
    }

    fn spectral_distances(&self, sp: &SpectralGaussian) -> Vec<f64> {
        let f = self.family().expect("spectral state implies a family");
        (0..self.len)
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN)
            .map(|i| {
                spectral_w2_squared_raw(&sp.coords, &sp.sqrt_spectrum, f.coords(i), f.sqrt_spectrum(i))
            })
            .collect()
    }

    /// Distance to pattern `i` and the OT matrix from the query to it.
    fn dense_term(
        &self,
        q: &GaussianMeasure,
        q_sqrt: &DMatrix<f64>,
        i: usize,
    ) -> Result<(f64, DMatrix<f64>)> {
        let (mu, s) = self.pattern_parts(i);
        let a = ot_matrix(q.cov(), &s)?;
        let d = (q.mean() - mu).norm_squared() + transport_cost(&a, q_sqrt);
        Ok((d, a))
    }

    pub(crate) fn step_state(&self, s: &State) -> Result<Step> {
        match s {
            State::Spectral(sp) => Ok(self.spectral_step(sp)),
            State::Dense(q) => self.dense_step(q),
        }
    }

    fn spectral_step(&self, sp: &SpectralGaussian) -> Step {
        let f = self.family().expect("spectral state implies a family");
        let distances = self.spectral_distances(sp);
        let weights = softmax_neg(self.beta, &distances);
        let d = self.dim;
        let mut coords = vec![0.0; d];
        let mut sqrt_spectrum = vec![0.0; d];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (acc, c) in coords.iter_mut().zip(f.coords(i)) {
                *acc += w * c;
            }
            for (acc, s) in sqrt_spectrum.iter_mut().zip(f.sqrt_spectrum(i)) {
                *acc += w * s;
            }
        }
        let top = sqrt_spectrum.iter().copied().fold(0.0_f64, f64::max);
        let floor = EPS_PD.sqrt() * top;
        let mut clamped = 0;
        for s in sqrt_spectrum.iter_mut() {
            if *s <= floor {
                *s = floor;
                clamped += 1;
            }
        }
        Step {
            next: State::Spectral(SpectralGaussian {
                coords,
                sqrt_spectrum,
            }),
            weights,
            distances,
            clamped,
        }
    }

    fn dense_step(&self, q: &GaussianMeasure) -> Result<Step> {
        let (distances, weights, a_tilde) = self.dense_aggregate(q)?;
        let mut mean = DVector::zeros(self.dim);
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                mean += self.pattern_parts(i).0 * w;
            }
        }
        let cov = &a_tilde * q.cov().matrix() * a_tilde.transpose();
        let (cov, clamped) = SpdMatrix::new_clamped(SymMatrix::symmetrize(cov)?).map_err(|e| {
            DamError::DegenerateResult(format!("updated covariance is not SPD ({e})"))
        })?;
        if clamped > 0 {
            log::warn!("clamped {clamped} eigenvalue(s) of the updated covariance");
        }
        Ok(Step {
            next: State::Dense(GaussianMeasure::new(mean, cov)?),
            weights,
            distances,
            clamped,
        })
    }

    /// Distances, weights and `Ã = Σ w_i A_i` for a dense query.
    fn dense_aggregate(&self, q: &GaussianMeasure) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
        let q_sqrt = q.cov().sqrt();
        let q_sqrt = q_sqrt.matrix();
        let d = self.dim;
        let cache = self.len * d * d <= DENSE_CACHE_LIMIT;
        let terms: Vec<(f64, Option<DMatrix<f64>>)> = (0..self.len)
            .into_par_iter()
            .with_min_len(PAR_MIN_LEN / 8)
            .map(|i| {
                self.dense_term(q, q_sqrt, i)
                    .map(|(dist, a)| (dist, cache.then_some(a)))
            })
            .collect::<Result<_>>()?;
        let distances: Vec<f64> = terms.iter().map(|t| t.0).collect();
        let weights = softmax_neg(self.beta, &distances);
        let mut a_tilde = DMatrix::zeros(d, d);
        for (i, (&w, (_, a))) in weights.iter().zip(&terms).enumerate() {
            if w == 0.0 {
                continue;
            }
            match a {
                Some(a) => a_tilde += a * w,
                None => a_tilde += self.dense_term(q, q_sqrt, i)?.1 * w,
            }
        }
        Ok((distances, weights, a_tilde))
    }
}

/// One query representation: diagonal in the bank's family basis, or dense.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum State {
    Spectral(SpectralGaussian),
    Dense(GaussianMeasure),
}

pub(crate) struct Step {
    pub next: State,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    pub clamped: usize,
}

/// `softmax(−β D)` stabilized by the minimum of `D`.
pub fn softmax_neg(beta: f64, distances: &[f64]) -> Vec<f64> {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = distances.iter().map(|&d| (-beta * (d - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    w
}

/// `−(1/β) log Σ exp(−β D_i)` stabilized by the minimum of `D`.
pub fn log_sum_exp_energy(beta: f64, distances: &[f64]) -> f64 {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let total: f64 = distances.iter().map(|&d| (-beta * (d - min)).exp()).sum();
    min - total.ln() / beta
}

/// Gibbs weights over the stored patterns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the largest weight, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.values.iter().enumerate() {
            if w > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Lowest index attaining the minimum.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Record of one retrieval run. All per-iterate sequences have the length
/// of `iterates`, except `w2_to_target`, which is empty without a target.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalTrace {
    pub iterates: Vec<GaussianMeasure>,
    pub w2_to_target: Vec<f64>,
    pub nearest_pattern_ids: Vec<usize>,
    pub nearest_w2: Vec<f64>,
    pub weight_history: Vec<WeightVector>,
    pub converged: bool,
    pub iterations_used: usize,
    pub clamp_events: usize,
}

impl RetrievalTrace {
    pub fn last(&self) -> &GaussianMeasure {
        self.iterates.last().expect("trace holds the query")
    }
}

/// `W2²(X_i, ξ)` for every stored pattern.
pub fn distances(bank: &MemoryBank, query: &GaussianMeasure) -> Result<Vec<f64>> {
    bank.state_distances(&bank.state_of(query)?)
}

pub fn energy(bank: &MemoryBank, query: &GaussianMeasure) -> Result<f64> {
    Ok(log_sum_exp_energy(bank.beta(), &distances(bank, query)?))
}

pub fn weights(bank: &MemoryBank, query: &GaussianMeasure) -> Result<WeightVector> {
    Ok(WeightVector {
        values: softmax_neg(bank.beta(), &distances(bank, query)?),
    })
}

/// `(argmin_i W2(X_i, ξ), min W2)`, lowest index on ties.
pub fn nearest_pattern(bank: &MemoryBank, query: &GaussianMeasure) -> Result<(usize, f64)> {
    let d = distances(bank, query)?;
    let i = argmin(&d);
    Ok((i, d[i].sqrt()))
}

/// One application of Φ.
pub fn dam_step(bank: &MemoryBank, query: &GaussianMeasure) -> Result<GaussianMeasure> {
    let step = bank.step_state(&bank.state_of(query)?)?;
    bank.materialize(&step.next)
}

/// `Σ_i w_i(ξ) T_i`, the weighted average of the transport maps from `ξ`.
pub fn barycentric_map(bank: &MemoryBank, query: &GaussianMeasure) -> Result<AffineMap> {
    let state = bank.state_of(query)?;
    let d = bank.dim();
    let (weights, a_tilde) = match &state {
        State::Spectral(sp) => {
            let f = bank.family().expect("spectral state implies a family");
            let step = bank.spectral_step(sp);
            let State::Spectral(next) = &step.next else {
                unreachable!()
            };
            let ratio: Vec<f64> = next
                .sqrt_spectrum
                .iter()
                .zip(&sp.sqrt_spectrum)
                .map(|(a, b)| a / b)
                .collect();
            let u = f.basis();
            let mut scaled = u.clone();
            for (j, r) in ratio.iter().enumerate() {
                scaled.column_mut(j).scale_mut(*r);
            }
            (step.weights, scaled * u.transpose())
        }
        State::Dense(q) => {
            let (_, w, a) = bank.dense_aggregate(q)?;
            (w, a)
        }
    };
    let mut mean = DVector::zeros(d);
    for (i, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            mean += bank.pattern_parts(i).0 * w;
        }
    }
    let shift = mean - &a_tilde * query.mean();
    Ok(AffineMap {
        matrix: a_tilde,
        shift,
    })
}

/// `2 Σ_i w_i(ξ) (T_i(x) − x)` at each point.
pub fn gradient_field(
    bank: &MemoryBank,
    query: &GaussianMeasure,
    points: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    for p in points {
        if p.len() != bank.dim() {
            return Err(DamError::dim(bank.dim(), p.len()));
        }
    }
    let map = barycentric_map(bank, query)?;
    Ok(points.iter().map(|x| (map.apply(x) - x) * 2.0).collect())
}

/// `W2(ξ, Φ(ξ))`.
pub fn displacement_norm(bank: &MemoryBank, query: &GaussianMeasure) -> Result<f64> {
    let s = bank.state_of(query)?;
    let step = bank.step_state(&s)?;
    Ok(bank.state_w2_squared(&s, &step.next)?.sqrt())
}

/// Iterates Φ from `query` until successive iterates are within `tol` in
/// W2 or `max_iters` steps have been taken.
///
/// On convergence the final step's output is not appended, so a query that
/// is already a fixed point yields a trace of length one.
pub fn retrieve(
    bank: &MemoryBank,
    query: &GaussianMeasure,
    max_iters: usize,
    tol: f64,
    target: Option<&GaussianMeasure>,
) -> Result<RetrievalTrace> {
    if max_iters == 0 {
        return Err(DamError::InvalidConfig("max_iters must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(DamError::InvalidConfig(format!("tol = {tol} must be positive")));
    }
    if let Some(t) = target {
        bank.check_query(t)?;
    }
    let target_state = target.map(|t| bank.state_of(t)).transpose()?;
    let mut trace = RetrievalTrace {
        iterates: Vec::new(),
        w2_to_target: Vec::new(),
        nearest_pattern_ids: Vec::new(),
        nearest_w2: Vec::new(),
        weight_history: Vec::new(),
        converged: false,
        iterations_used: 0,
        clamp_events: 0,
    };
    let mut cur = bank.state_of(query)?;
    let run = (|| -> Result<()> {
        trace.iterates.push(query.clone());
        for _ in 0..max_iters {
            let target_d = match &target_state {
                Some(t) => Some(bank.state_w2_squared(&cur, t)?.sqrt()),
                None => None,
            };
            let step = bank.step_state(&cur)?;
            record(&mut trace, &step.distances, step.weights.clone(), target_d);
            trace.iterations_used += 1;
            trace.clamp_events += step.clamped;
            let moved = bank.state_w2_squared(&cur, &step.next)?.sqrt();
            if moved <= tol {
                trace.converged = true;
                return Ok(());
            }
            cur = step.next;
            trace.iterates.push(bank.materialize(&cur)?);
        }
        let target_d = match &target_state {
            Some(t) => Some(bank.state_w2_squared(&cur, t)?.sqrt()),
            None => None,
        };
        let dist = bank.state_distances(&cur)?;
        let w = softmax_neg(bank.beta(), &dist);
        record(&mut trace, &dist, w, target_d);
        Ok(())
    })();
    match run {
        Ok(()) => Ok(trace),
        Err(e) => {
            // Drop the iterate whose diagnostics could not be computed.
            let n = trace.nearest_pattern_ids.len();
            trace.iterates.truncate(n.max(1));
            trace.nearest_pattern_ids.truncate(trace.iterates.len());
            Err(DamError::RetrievalFailed {
                source: Box::new(e),
                partial: Box::new(trace),
            })
        }
    }
}

fn record(trace: &mut RetrievalTrace, distances: &[f64], weights: Vec<f64>, target: Option<f64>) {
    let i = argmin(distances);
    trace.nearest_pattern_ids.push(i);
    trace.nearest_w2.push(distances[i].sqrt());
    trace.weight_history.push(WeightVector { values: weights });
    if let Some(t) = target {
        trace.w2_to_target.push(t);
    }
}
