//! File formats: bank and query JSON, CSV tables and run manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dam::{MemoryBank, RetrievalTrace};
use crate::error::{DamError, Result};
use crate::gaussian::{CommutingFamily, GaussianMeasure};
use crate::linalg::SpdMatrix;

pub const SCHEMA_VERSION: u32 = 1;

/// Round-trippable 17-significant-digit rendering used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternRecord {
    Spectral { mean: Vec<f64>, spectrum: Vec<f64> },
    Dense { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankFile {
    pub schema_version: u32,
    pub dim: usize,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    pub patterns: Vec<PatternRecord>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(DamError::InvalidConfig(format!(
            "{what} must be {dim}x{dim}"
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn check_len(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(DamError::dim(dim, v.len()));
    }
    Ok(())
}

impl BankFile {
    pub fn from_bank(bank: &MemoryBank) -> Result<Self> {
        let (basis, patterns) = match bank.family() {
            Some(f) => (
                Some(rows(f.basis())),
                (0..f.len())
                    .map(|i| PatternRecord::Spectral {
                        mean: f.mean(i).iter().copied().collect(),
                        spectrum: f.spectrum(i).to_vec(),
                    })
                    .collect(),
            ),
            None => (
                None,
                bank.patterns()?
                    .iter()
                    .map(|p| PatternRecord::Dense {
                        mean: p.mean().iter().copied().collect(),
                        cov: rows(p.cov().matrix()),
                    })
                    .collect(),
            ),
        };
        Ok(BankFile {
            schema_version: SCHEMA_VERSION,
            dim: bank.dim(),
            beta: bank.beta(),
            basis,
            patterns,
        })
    }

    pub fn to_bank(&self) -> Result<MemoryBank> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DamError::InvalidConfig(format!(
                "unsupported bank schema_version {}",
                self.schema_version
            )));
        }
        let d = self.dim;
        match &self.basis {
            Some(b) => {
                let basis = from_rows(b, d, "basis")?;
                let mut means = Vec::with_capacity(self.patterns.len());
                let mut spectra = Vec::with_capacity(self.patterns.len());
                for p in &self.patterns {
                    let PatternRecord::Spectral { mean, spectrum } = p else {
                        return Err(DamError::InvalidConfig(
                            "bank with a basis must store spectra".into(),
                        ));
                    };
                    check_len(mean, d)?;
                    check_len(spectrum, d)?;
                    means.push(DVector::from_column_slice(mean));
                    spectra.push(spectrum.clone());
                }
                MemoryBank::from_family(CommutingFamily::new(basis, &means, &spectra)?, self.beta)
            }
            None => {
                let patterns = self
                    .patterns
                    .iter()
                    .map(|p| match p {
                        PatternRecord::Dense { mean, cov } => {
                            check_len(mean, d)?;
                            GaussianMeasure::new(
                                DVector::from_column_slice(mean),
                                SpdMatrix::from_matrix(from_rows(cov, d, "cov")?)?,
                            )
                        }
                        PatternRecord::Spectral { .. } => Err(DamError::InvalidConfig(
                            "spectral patterns need a basis".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                MemoryBank::new(patterns, self.beta)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFile {
    pub schema_version: u32,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl QueryFile {
    pub fn from_measure(g: &GaussianMeasure) -> Self {
        QueryFile {
            schema_version: SCHEMA_VERSION,
            dim: g.dim(),
            mean: g.mean().iter().copied().collect(),
            cov: rows(g.cov().matrix()),
        }
    }

    pub fn to_measure(&self) -> Result<GaussianMeasure> {
        check_len(&self.mean, self.dim)?;
        GaussianMeasure::new(
            DVector::from_column_slice(&self.mean),
            SpdMatrix::from_matrix(from_rows(&self.cov, self.dim, "cov")?)?,
        )
    }
}

/// Pretty JSON with a trailing newline, as written by [`write_json`].
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<()> {
    write_json(path, &BankFile::from_bank(bank)?)
}

pub fn load_bank(path: &Path) -> Result<MemoryBank> {
    read_json::<BankFile>(path)?.to_bank()
}

pub fn save_query(q: &GaussianMeasure, path: &Path) -> Result<()> {
    write_json(path, &QueryFile::from_measure(q))
}

pub fn load_query(path: &Path) -> Result<GaussianMeasure> {
    read_json::<QueryFile>(path)?.to_measure()
}

/// A header plus string rows, written with `\n` line endings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Config, seed and code version recorded next to each CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub code_version: String,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new<C: Serialize>(kind: &str, seed: u64, config: &C) -> Result<Self> {
        Ok(Manifest {
            kind: kind.to_string(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
        })
    }
}

/// `out.csv` → `out.csv.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// `out.csv` → `out.csv.patterns.csv`.
pub fn sidecar_path(csv_path: &Path, suffix: &str) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(format!(".{suffix}.csv"));
    PathBuf::from(s)
}

pub fn trace_table(trace: &RetrievalTrace) -> Table {
    let mut t = Table::new([
        "iteration",
        "w2_to_target",
        "nearest_pattern",
        "nearest_w2",
        "max_weight",
    ]);
    for k in 0..trace.iterates.len() {
        let max_w = trace.weight_history[k]
            .values
            .iter()
            .copied()
            .fold(0.0_f64, f64::max);
        t.push(vec![
            k.to_string(),
            trace.w2_to_target.get(k).map(|&x| fmt_f64(x)).unwrap_or_default(),
            trace.nearest_pattern_ids[k].to_string(),
            fmt_f64(trace.nearest_w2[k]),
            fmt_f64(max_w),
        ]);
    }
    t
}

/// JSON form of a trace, with every iterate spelled out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFile {
    pub converged: bool,
    pub iterations_used: usize,
    pub clamp_events: usize,
    pub iterates: Vec<QueryFile>,
    pub w2_to_target: Vec<f64>,
    pub nearest_pattern_ids: Vec<usize>,
    pub nearest_w2: Vec<f64>,
    pub weight_history: Vec<Vec<f64>>,
}

impl From<&RetrievalTrace> for TraceFile {
    fn from(t: &RetrievalTrace) -> Self {
        TraceFile {
            converged: t.converged,
            iterations_used: t.iterations_used,
            clamp_events: t.clamp_events,
            iterates: t.iterates.iter().map(QueryFile::from_measure).collect(),
            w2_to_target: t.w2_to_target.clone(),
            nearest_pattern_ids: t.nearest_pattern_ids.clone(),
            nearest_w2: t.nearest_w2.clone(),
            weight_history: t.weight_history.iter().map(|w| w.values.clone()).collect(),
        }
    }
}
