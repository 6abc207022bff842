//! End-to-end training on an in-sample dataset.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::error::Result;
use crate::exec::Execution;
use crate::gpod::{fit_extension, ExtensionModel, Variant};
use crate::kernel_graph::{build_weight_graph_with, laplacian, KernelSpec, WeightGraph};
use crate::pod::{normalize_rows, pod, PodOptions, PodResult};
use crate::spectra::{smallest_eigenpairs, SpectralEmbedding};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub graph: Duration,
    pub eigensolve: Duration,
    pub pod: Duration,
}

/// Everything produced by clustering a training sample.
#[derive(Clone, Debug)]
pub struct Trained {
    pub graph: WeightGraph,
    pub embedding: SpectralEmbedding,
    pub normalized: DMatrix<f64>,
    pub zero_rows: usize,
    pub pod: PodResult,
    pub timings: StageTimings,
}

impl Trained {
    pub fn extension_model(&self, points: &DMatrix<f64>, kernel: KernelSpec, variant: Variant) -> Result<ExtensionModel> {
        fit_extension(&self.embedding, points, kernel, variant)
    }
}

/// Graph, eigensolve, row normalization and discretization on `points`.
pub fn train(
    points: &DMatrix<f64>,
    kernel: &KernelSpec,
    variant: Variant,
    k: usize,
    seed: u64,
    options: PodOptions,
    exec: Execution,
) -> Result<Trained> {
    let t = Instant::now();
    let graph = build_weight_graph_with(points, kernel, exec)?;
    let graph_time = t.elapsed();

    let t = Instant::now();
    let embedding = smallest_eigenpairs(&laplacian(&graph, variant.laplacian_kind())?, k)?;
    let eigen_time = t.elapsed();

    let t = Instant::now();
    let normalized = normalize_rows(embedding.vectors());
    let pod = pod(&normalized.matrix, seed, options)?;
    let pod_time = t.elapsed();

    Ok(Trained {
        graph,
        embedding,
        normalized: normalized.matrix,
        zero_rows: normalized.zero_rows,
        pod,
        timings: StageTimings {
            graph: graph_time,
            eigensolve: eigen_time,
            pod: pod_time,
        },
    })
}
