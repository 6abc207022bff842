//! Spectral clustering with relaxed RatioCut and relaxed NCut, discretized by
//! an orthonormal transform, with out-of-sample extension that clusters new
//! points from the training eigenfunctions alone.
//!
//! The usual flow:
//!
//! 1. [`kernel_graph::build_weight_graph`] on the training points,
//! 2. [`spectra::smallest_eigenpairs`] of the chosen Laplacian,
//! 3. [`pod::normalize_rows`] and [`pod::pod`] for the training partition,
//! 4. [`gpod::fit_extension`] and [`gpod::gpod`] for unseen points.
//!
//! [`pipeline::train`] bundles steps 1-3.

pub mod datasets;
pub mod error;
pub mod exec;
pub mod gpod;
pub mod kernel_graph;
pub mod metrics;
pub mod pipeline;
pub mod pod;
pub mod risk;
mod simd;
pub mod spectra;

pub use error::{Error, Result};
pub use exec::Execution;
pub use gpod::{ExtensionModel, ScalingMode, Variant};
pub use kernel_graph::{KernelSpec, LaplacianKind, WeightGraph};
pub use pod::{DiscreteAssignment, PodOptions, PodResult, Rotation};
pub use spectra::SpectralEmbedding;
