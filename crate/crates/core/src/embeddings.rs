//! Spherical Gaussian word embeddings: the text format, a synthetic
//! generator, nearest-word lookup and the word retrieval experiment.
//!
//! Text format: a header `N d spherical`, then one line per word,
//! `word μ_1 … μ_d v` with `v` the variance σ² shared by every axis.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::dam::{argmin, MemoryBank, State};
use crate::error::{DamError, Result};
use crate::gaussian::{
    bures_w2_squared, spherical_w2_squared, CommutingFamily, GaussianMeasure, SpectralGaussian,
};
use crate::io::{fmt_f64, Table};
use crate::rng::{derive_seed, seeded, stream};
use crate::sampling::{perturb_spherical, sample_sphere_uniform, PerturbSpec};
use crate::theory::basin_radius;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVocabulary {
    words: Vec<String>,
    dim: usize,
    means: Vec<f64>,
    sigmas: Vec<f64>,
}

impl GaussianVocabulary {
    /// `variances[i]` is σ_i²; the covariance of word `i` is σ_i² I.
    pub fn new(words: Vec<String>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        if words.len() != means.len() || words.len() != variances.len() {
            return Err(DamError::dim(words.len(), means.len().min(variances.len())));
        }
        let dim = means.first().map(Vec::len).unwrap_or(0);
        let mut seen = HashSet::new();
        let mut flat = Vec::with_capacity(dim * means.len());
        for (i, ((w, m), &v)) in words.iter().zip(&means).zip(&variances).enumerate() {
            if !seen.insert(w.as_str()) {
                return Err(DamError::DuplicateWord(w.clone()));
            }
            if m.len() != dim {
                return Err(DamError::dim(dim, m.len()));
            }
            if !(v > 0.0) || !v.is_finite() {
                return Err(DamError::VarianceNonPositive { line: i + 2 });
            }
            flat.extend_from_slice(m);
        }
        Ok(GaussianVocabulary {
            sigmas: variances.iter().map(|v| v.sqrt()).collect(),
            words,
            dim,
            means: flat,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sigma(&self, i: usize) -> f64 {
        self.sigmas[i]
    }

    pub fn measure(&self, i: usize) -> Result<GaussianMeasure> {
        GaussianMeasure::spherical(self.mean(i), self.sigmas[i])
    }

    /// The whole vocabulary as a memory bank. Spherical covariances commute
    /// with everything, so the bank uses the identity basis fast path.
    pub fn to_bank(&self, beta: f64) -> Result<MemoryBank> {
        let d = self.dim;
        let means: Vec<DVector<f64>> = (0..self.len())
            .map(|i| DVector::from_column_slice(self.mean(i)))
            .collect();
        let spectra: Vec<Vec<f64>> = self.sigmas.iter().map(|s| vec![s * s; d]).collect();
        MemoryBank::from_family(CommutingFamily::new(DMatrix::identity(d, d), &means, &spectra)?, beta)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> DamError {
    DamError::ParseError {
        line,
        message: message.into(),
    }
}

pub fn parse_vocabulary(reader: impl BufRead) -> Result<GaussianVocabulary> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[2] != "spherical" {
        return Err(parse_err(1, "expected header `N d spherical`"));
    }
    let n: usize = fields[0].parse().map_err(|_| parse_err(1, "bad word count"))?;
    let d: usize = fields[1].parse().map_err(|_| parse_err(1, "bad dimension"))?;
    let mut words = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(' ').filter(|s| !s.is_empty()).collect();
        if parts.len() != d + 2 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", d + 2, parts.len()),
            ));
        }
        let nums = parts[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(lineno, "non-finite value"));
        }
        let var = nums[d];
        if !(var > 0.0) {
            return Err(DamError::VarianceNonPositive { line: lineno });
        }
        if !seen.insert(parts[0].to_string()) {
            return Err(DamError::DuplicateWord(parts[0].to_string()));
        }
        words.push(parts[0].to_string());
        means.push(nums[..d].to_vec());
        vars.push(var);
    }
    if words.len() != n {
        return Err(parse_err(1, format!("header says {n} words, found {}", words.len())));
    }
    if n == 0 {
        return Ok(GaussianVocabulary {
            words,
            dim: d,
            means: Vec::new(),
            sigmas: Vec::new(),
        });
    }
    GaussianVocabulary::new(words, means, vars)
}

pub fn load_vocabulary(path: &Path) -> Result<GaussianVocabulary> {
    parse_vocabulary(BufReader::new(File::open(path)?))
}

pub fn write_vocabulary(vocab: &GaussianVocabulary, mut w: impl Write) -> Result<()> {
    writeln!(w, "{} {} spherical", vocab.len(), vocab.dim())?;
    for i in 0..vocab.len() {
        write!(w, "{}", vocab.word(i))?;
        for x in vocab.mean(i) {
            write!(w, " {x}")?;
        }
        // Display of an f64 is its shortest round-trip representation.
        writeln!(w, " {}", vocab.sigma(i) * vocab.sigma(i))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_vocabulary(vocab: &GaussianVocabulary, path: &Path) -> Result<()> {
    write_vocabulary(vocab, BufWriter::new(File::create(path)?))
}

/// Means uniform on the sphere of radius √d, variances uniform in
/// `[0.05, 0.5]`, words `w00000, w00001, …`.
pub fn generate_synthetic_vocabulary(n: usize, dim: usize, seed: u64) -> Result<GaussianVocabulary> {
    if n == 0 || dim == 0 {
        return Err(DamError::InvalidConfig("need n >= 1 and dim >= 1".into()));
    }
    let mut rng = seeded(seed);
    let radius = (dim as f64).sqrt();
    let mut words = Vec::with_capacity(n);
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for i in 0..n {
        words.push(format!("w{i:05}"));
        means.push(sample_sphere_uniform(dim, radius, &mut rng)?.iter().copied().collect());
        vars.push(rng.random_range(0.05..=0.5));
    }
    GaussianVocabulary::new(words, means, vars)
}

/// Closest word by W2 and its distance; lowest index on ties.
pub fn nearest_word(vocab: &GaussianVocabulary, query: &GaussianMeasure) -> Result<(usize, f64)> {
    if query.dim() != vocab.dim() {
        return Err(DamError::dim(vocab.dim(), query.dim()));
    }
    if vocab.is_empty() {
        return Err(DamError::InvalidConfig("empty vocabulary".into()));
    }
    let d2: Vec<f64> = match spherical_sigma(query) {
        Some(s) => {
            let m: Vec<f64> = query.mean().iter().copied().collect();
            (0..vocab.len())
                .map(|i| spherical_w2_squared(vocab.mean(i), vocab.sigma(i), &m, s))
                .collect()
        }
        None => (0..vocab.len())
            .map(|i| bures_w2_squared(&vocab.measure(i)?, query))
            .collect::<Result<_>>()?,
    };
    let i = argmin(&d2);
    Ok((i, d2[i].sqrt()))
}

/// `Some(σ)` when the covariance is exactly `σ² I`.
fn spherical_sigma(q: &GaussianMeasure) -> Option<f64> {
    let c = q.cov().matrix();
    let v = c[(0, 0)];
    for i in 0..q.dim() {
        for j in 0..q.dim() {
            let expect = if i == j { v } else { 0.0 };
            if c[(i, j)] != expect {
                return None;
            }
        }
    }
    Some(v.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordRow {
    pub word: String,
    pub iteration: usize,
    pub w2_to_original: f64,
    pub retrieved_word: String,
}

fn spherical_state(mean: &[f64], sigma: f64) -> State {
    State::Spectral(SpectralGaussian {
        coords: mean.to_vec(),
        sqrt_spectrum: vec![sigma; mean.len()],
    })
}

/// For each word: perturb to W2 distance `1/√(βN)`, run `iters` steps of Φ
/// against the whole vocabulary, and log distance to the original and the
/// nearest word at every iterate (iteration 0 is the perturbed query).
pub fn word_retrieval_experiment(
    vocab: &GaussianVocabulary,
    word_ids: &[usize],
    beta: f64,
    iters: usize,
    seed: u64,
) -> Result<Vec<WordRow>> {
    let bank = vocab.to_bank(beta)?;
    let r = basin_radius(beta, vocab.len());
    let per_word: Vec<Vec<WordRow>> = word_ids
        .par_iter()
        .map(|&id| {
            if id >= vocab.len() {
                return Err(DamError::DomainError(format!("word id {id} out of range")));
            }
            let mut rng = stream(derive_seed(seed, 0x776f_7264), id as u64);
            let (m, s) = perturb_spherical(vocab.mean(id), vocab.sigma(id), &PerturbSpec::new(r, seed), &mut rng)?;
            let original = spherical_state(vocab.mean(id), vocab.sigma(id));
            let mut cur = spherical_state(&m, s);
            let mut rows = Vec::with_capacity(iters + 1);
            for k in 0..=iters {
                let dist = bank.state_distances(&cur)?;
                rows.push(WordRow {
                    word: vocab.word(id).to_string(),
                    iteration: k,
                    w2_to_original: bank.state_w2_squared(&cur, &original)?.sqrt(),
                    retrieved_word: vocab.word(argmin(&dist)).to_string(),
                });
                if k < iters {
                    cur = bank.step_state(&cur)?.next;
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_word.into_iter().flatten().collect())
}

pub fn word_rows_table(rows: &[WordRow]) -> Table {
    let mut t = Table::new(["word", "iteration", "w2_to_original", "retrieved_word"]);
    for r in rows {
        t.push(vec![
            r.word.clone(),
            r.iteration.to_string(),
            fmt_f64(r.w2_to_original),
            r.retrieved_word.clone(),
        ]);
    }
    t
}
