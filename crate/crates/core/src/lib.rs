//! Dense associative memory over Gaussian measures in the Bures–Wasserstein
//! geometry.
//!
//! Patterns are stored in a [`MemoryBank`]; retrieval iterates the
//! barycentric operator Φ from a query with [`retrieve`]. Banks whose
//! covariances share an eigenbasis run on a spectral fast path.

pub mod dam;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod theory;

pub use dam::{
    barycentric_map, dam_step, displacement_norm, distances, energy, gradient_field, nearest_pattern,
    retrieve, weights, MemoryBank, RetrievalTrace, WeightVector,
};
pub use embeddings::GaussianVocabulary;
pub use error::{DamError, Result};
pub use experiments::{ConvergenceRow, ExperimentConfig, ExperimentKind};
pub use gaussian::{bures_w2_squared, AffineMap, CommutingFamily, GaussianMeasure, SpectralGaussian};
pub use linalg::{SpdMatrix, SymMatrix};
pub use sampling::{PerturbSpec, SphereConfig};
pub use theory::{AssumptionReport, CapacityBound, CapacityInputs};
