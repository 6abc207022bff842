//! JSON result documents written by `cluster` and `extend`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use gpod_core::risk::RiskReport;
use gpod_core::PodResult;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub nmi: f64,
}

impl Metrics {
    /// Componentwise mean, or `None` if any entry is missing.
    pub fn mean<'a>(items: impl IntoIterator<Item = Option<&'a Metrics>>) -> Option<Metrics> {
        let items: Option<Vec<&Metrics>> = items.into_iter().collect();
        let items = items?;
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(Metrics {
            accuracy: items.iter().map(|m| m.accuracy).sum::<f64>() / n,
            nmi: items.iter().map(|m| m.nmi).sum::<f64>() / n,
        })
    }
}

/// Clustering of one side of a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Dataset rows, in the order of `assignment`.
    pub indices: Vec<usize>,
    pub assignment: Vec<usize>,
    pub metrics: Option<Metrics>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub empty_clusters: Vec<usize>,
    /// Embedding rows that were entirely zero before normalization.
    pub zero_rows: usize,
    /// Extended columns replaced by a constant (out-of-sample side only).
    pub degenerate_columns: Vec<usize>,
}

impl Partition {
    pub fn new(indices: Vec<usize>, pod: &PodResult, metrics: Option<Metrics>, zero_rows: usize) -> Self {
        Partition {
            indices,
            assignment: pod.assignment.cluster_of().to_vec(),
            metrics,
            objective_trace: pod.objective_trace.clone(),
            iterations: pod.iterations,
            converged: pod.converged,
            empty_clusters: pod.empty_clusters.clone(),
            zero_rows,
            degenerate_columns: Vec::new(),
        }
    }
}

/// Wall-clock seconds per stage; absent stages did not run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub graph: Option<f64>,
    pub eigensolve: Option<f64>,
    pub pod: Option<f64>,
    pub extension: Option<f64>,
    pub extension_pod: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub eigenvalues: Vec<f64>,
    pub train: Option<Partition>,
    pub test: Option<Partition>,
    pub risk: Option<RiskReport>,
    /// Eigensolves performed while clustering the held-out points.
    pub extension_eigensolves: Option<usize>,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub n_classes: Option<usize>,
    /// Coordinates in model space, kept only for 2-d data.
    pub points_2d: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub train: Option<Metrics>,
    pub test: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub repeats: Vec<RepeatResult>,
    pub mean: MeanMetrics,
}

impl RunResult {
    pub fn new(command: &str, config: RunConfig, dataset: DatasetSummary, repeats: Vec<RepeatResult>) -> Self {
        let mean = MeanMetrics {
            train: Metrics::mean(repeats.iter().map(|r| r.train.as_ref().and_then(|p| p.metrics.as_ref()))),
            test: Metrics::mean(repeats.iter().map(|r| r.test.as_ref().and_then(|p| p.metrics.as_ref()))),
        };
        RunResult {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            dataset,
            repeats,
            mean,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(path).stage("output")?);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| CliError::data("output", e.to_string()))?;
        w.write_all(b"\n").stage("output")?;
        w.flush().stage("output")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::data("result", format!("{}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::data("result", format!("{}: {e}", path.display())))
    }
}
