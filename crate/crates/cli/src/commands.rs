//! Subcommand implementations. Each returns its document; writing files is
//! left to the `write_*` helpers so the computations can be tested directly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpod_core::datasets::{map_labels, train_test_split, Dataset};
use gpod_core::gpod::{extend_with, fit_extension, ExtensionModel};
use gpod_core::kernel_graph::{build_weight_graph_with, laplacian};
use gpod_core::metrics::{accuracy, nmi};
use gpod_core::pod::{normalize_rows, pod};
use gpod_core::risk::risk_report;
use gpod_core::spectra::{eigensolve_count, smallest_eigenpairs};
use gpod_core::{Execution, PodResult, ScalingMode};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, RunConfig};
use crate::error::{CliError, Stage};
use crate::result::{DatasetSummary, Metrics, Partition, RepeatResult, RunResult, Timings};

fn metrics(pred: &[usize], truth: Option<&Vec<usize>>) -> Result<Option<Metrics>, CliError> {
    truth
        .map(|t| {
            Ok(Metrics {
                accuracy: accuracy(pred, t).stage("metrics")?,
                nmi: nmi(pred, t).stage("metrics")?,
            })
        })
        .transpose()
}

fn summarize(data: &Dataset) -> DatasetSummary {
    DatasetSummary {
        name: data.name.clone(),
        n: data.n(),
        dim: data.dim(),
        n_classes: data.n_classes(),
        points_2d: (data.dim() == 2).then(|| data.points.row_iter().map(|r| [r[0], r[1]]).collect()),
    }
}

/// In-sample clustering of a training set, timed by stage.
pub struct Fit {
    pub model: ExtensionModel,
    pub pod: PodResult,
    pub zero_rows: usize,
    pub eigenvalues: Vec<f64>,
    /// Skipped when timing the pipeline.
    pub risk: Option<gpod_core::risk::RiskReport>,
    pub timings: Timings,
}

pub fn fit(
    config: &RunConfig,
    points: &DMatrix<f64>,
    seed: u64,
    with_risk: bool,
    exec: Execution,
) -> Result<Fit, CliError> {
    let kernel = config.kernel();
    let t = Instant::now();
    let graph = build_weight_graph_with(points, &kernel, exec).stage("graph")?;
    let graph_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let lap = laplacian(&graph, config.variant.laplacian_kind()).stage("laplacian")?;
    let embedding = smallest_eigenpairs(&lap, config.k).stage("eigensolve")?;
    let eigen_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let normalized = normalize_rows(embedding.vectors());
    let result = pod(&normalized.matrix, seed, config.pod_options()).stage("pod")?;
    let pod_time = t.elapsed().as_secs_f64();

    let risk = if with_risk {
        Some(risk_report(&graph, &embedding, &result.assignment, &normalized.matrix, &result.rotation).stage("risk")?)
    } else {
        None
    };
    let model = fit_extension(&embedding, points, kernel, config.variant)
        .stage("model")?
        .with_scaling_mode(config.scaling_mode)
        .with_degenerate_threshold(config.degenerate_threshold)
        .stage("model")?;
    Ok(Fit {
        model,
        pod: result,
        zero_rows: normalized.zero_rows,
        eigenvalues: embedding.eigenvalues().iter().copied().collect(),
        risk,
        timings: Timings {
            graph: Some(graph_time),
            eigensolve: Some(eigen_time),
            pod: Some(pod_time),
            ..Timings::default()
        },
    })
}

/// Out-of-sample clustering through the extension; never eigensolves.
pub struct Extended {
    pub pod: PodResult,
    pub zero_rows: usize,
    pub degenerate_columns: Vec<usize>,
    pub eigensolves: usize,
    pub extension_seconds: f64,
    pub pod_seconds: f64,
}

pub fn extend_and_discretize(
    model: &ExtensionModel,
    points: &DMatrix<f64>,
    seed: u64,
    config: &RunConfig,
    exec: Execution,
) -> Result<Extended, CliError> {
    let before = eigensolve_count();
    let t = Instant::now();
    let ext = extend_with(model, points, exec).stage("extension")?;
    let extension_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let normalized = normalize_rows(&ext.embedding);
    let result = pod(&normalized.matrix, seed, config.pod_options()).stage("extension pod")?;
    let pod_seconds = t.elapsed().as_secs_f64();
    Ok(Extended {
        pod: result,
        zero_rows: normalized.zero_rows,
        degenerate_columns: ext.degenerate_columns,
        eigensolves: eigensolve_count() - before,
        extension_seconds,
        pod_seconds,
    })
}

/// Output of `cluster`: the result document plus the first repeat's model
/// and held-out points, for a later `extend`.
pub struct ClusterRun {
    pub result: RunResult,
    pub model: ExtensionModel,
    pub held_out: Option<Dataset>,
}

pub fn cluster(config: &RunConfig, exec: Execution) -> Result<ClusterRun, CliError> {
    let data = config.load_dataset()?;
    let mut repeats = Vec::with_capacity(config.repeats);
    let mut first: Option<(ExtensionModel, Option<Dataset>)> = None;
    for r in 0..config.repeats {
        let seed = config.repeat_seed(r);
        let (train, test, train_idx, test_idx) = if config.test_fraction > 0.0 {
            let s = train_test_split(&data, config.test_fraction, seed).stage("split")?;
            (s.train, Some(s.test), s.train_indices, s.test_indices)
        } else {
            (data.clone(), None, (0..data.n()).collect(), Vec::new())
        };

        let fitted = fit(config, &train.points, seed, true, exec)?;
        let train_metrics = metrics(fitted.pod.assignment.cluster_of(), train.labels.as_ref())?;
        let train_part = Partition::new(train_idx, &fitted.pod, train_metrics, fitted.zero_rows);

        let mut timings = fitted.timings;
        let mut extension_eigensolves = None;
        let test_part = match &test {
            Some(test) => {
                let ext = extend_and_discretize(&fitted.model, &test.points, seed, config, exec)?;
                timings.extension = Some(ext.extension_seconds);
                timings.extension_pod = Some(ext.pod_seconds);
                extension_eigensolves = Some(ext.eigensolves);
                let m = metrics(ext.pod.assignment.cluster_of(), test.labels.as_ref())?;
                let mut part = Partition::new(test_idx, &ext.pod, m, ext.zero_rows);
                part.degenerate_columns = ext.degenerate_columns;
                Some(part)
            }
            None => None,
        };

        repeats.push(RepeatResult {
            repeat: r,
            seed,
            eigenvalues: fitted.eigenvalues,
            train: Some(train_part),
            test: test_part,
            risk: fitted.risk,
            extension_eigensolves,
            timings,
        });
        if first.is_none() {
            first = Some((fitted.model, test));
        }
    }
    let (model, held_out) = first.expect("at least one repeat");
    Ok(ClusterRun {
        result: RunResult::new("cluster", config.clone(), summarize(&data), repeats),
        model,
        held_out,
    })
}

/// Writes `result.json`, `assignments.csv`, `model.json` and, when a split
/// was made, the first repeat's held-out points as `held_out.csv`.
pub fn write_cluster(run: &ClusterRun, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).stage("output")?;
    let mut written = Vec::new();

    let path = out.join("result.json");
    run.result.save(&path)?;
    written.push(path);

    let path = out.join("assignments.csv");
    write_assignments(&run.result, &path)?;
    written.push(path);

    let path = out.join("model.json");
    run.model.save(&path).stage("output")?;
    written.push(path);

    if let Some(held_out) = &run.held_out {
        let path = out.join("held_out.csv");
        let file = File::create(&path).stage("output")?;
        held_out.write_delimited(file, b',').stage("output")?;
        written.push(path);
    }
    Ok(written)
}

fn write_assignments(result: &RunResult, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data("output", e.to_string()))?;
    let err = |e: csv::Error| CliError::data("output", e.to_string());
    w.write_record(["repeat", "index", "split", "cluster"]).map_err(err)?;
    for rep in &result.repeats {
        for (split, part) in [("train", &rep.train), ("test", &rep.test)] {
            let Some(part) = part else { continue };
            for (&i, &c) in part.indices.iter().zip(&part.assignment) {
                w.write_record([rep.repeat.to_string(), i.to_string(), split.to_string(), c.to_string()])
                    .map_err(err)?;
            }
        }
    }
    w.flush().stage("output")
}

#[derive(Clone, Debug)]
pub struct ExtendRequest {
    pub model: PathBuf,
    pub data: PathBuf,
    pub label_column: Option<i64>,
    pub delimiter: char,
    pub standardize: bool,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub scaling_mode: Option<ScalingMode>,
}

pub fn extend(req: &ExtendRequest, exec: Execution) -> Result<RunResult, CliError> {
    let model = ExtensionModel::load(&req.model).map_err(|e| CliError {
        kind: crate::error::kind_of(&e),
        stage: "model".into(),
        message: format!("{}: {e}", req.model.display()),
    })?;
    let model = match req.scaling_mode {
        Some(mode) => model.with_scaling_mode(mode),
        None => model,
    };
    let config = RunConfig {
        variant: model.variant(),
        sigma: model.kernel().sigma,
        k: model.k(),
        seed: req.seed,
        test_fraction: 0.0,
        repeats: 1,
        tol: req.tol,
        max_iter: req.max_iter,
        scaling_mode: model.scaling_mode(),
        degenerate_threshold: model.degenerate_threshold(),
        dataset: Some(DatasetKind::File),
        n: 0,
        noise: 0.0,
        radius_ratio: 0.5,
        data_seed: 0,
        data_path: Some(req.data.clone()),
        label_column: req.label_column,
        delimiter: req.delimiter,
        standardize: Some(req.standardize),
    }
    .resolved()?;
    let data = config.load_dataset()?;
    let ext = extend_and_discretize(&model, &data.points, req.seed, &config, exec)?;
    let m = metrics(ext.pod.assignment.cluster_of(), data.labels.as_ref())?;
    let mut part = Partition::new((0..data.n()).collect(), &ext.pod, m, ext.zero_rows);
    part.degenerate_columns = ext.degenerate_columns;
    let repeat = RepeatResult {
        repeat: 0,
        seed: req.seed,
        eigenvalues: model.eigenvalues().iter().copied().collect(),
        train: None,
        test: Some(part),
        risk: None,
        extension_eigensolves: Some(ext.eigensolves),
        timings: Timings {
            extension: Some(ext.extension_seconds),
            extension_pod: Some(ext.pod_seconds),
            ..Timings::default()
        },
    };
    Ok(RunResult::new("extend", config, summarize(&data), vec![repeat]))
}

pub fn write_extend(result: &RunResult, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).stage("output")?;
    let json = out.join("result.json");
    result.save(&json)?;
    let csv = out.join("assignments.csv");
    write_assignments(result, &csv)?;
    Ok(vec![json, csv])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub nmi: f64,
}

/// Reads one label per non-empty line (first delimited field); labels are
/// mapped to `0..K` in order of first appearance.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let file = File::open(path).map_err(|e| CliError::data("labels", format!("{}: {e}", path.display())))?;
    let mut tokens = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.stage("labels")?;
        let token = line.split([',', '\t', ';', ' ']).next().unwrap_or("").trim();
        if !token.is_empty() {
            tokens.push(token.to_string());
        }
    }
    Ok(map_labels(&tokens))
}

pub fn eval(pred: &Path, truth: &Path) -> Result<EvalReport, CliError> {
    let p = read_labels(pred)?;
    let t = read_labels(truth)?;
    Ok(EvalReport {
        n: p.len(),
        accuracy: accuracy(&p, &t).stage("eval")?,
        nmi: nmi(&p, &t).stage("eval")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    /// Graph, eigensolve and discretization on all `n + m` points.
    pub full_seconds: f64,
    pub full_iterations: usize,
    /// The same pipeline on the `n` training points only.
    pub train_seconds: f64,
    /// Extension to the `m` new points plus their discretization.
    pub extend_seconds: f64,
    pub extend_iterations: usize,
}

pub fn parse_sizes(spec: &str) -> Result<Vec<(usize, usize)>, CliError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&v| v > 0);
            match pair.split_once(':') {
                Some((n, m)) => match (parse(n), parse(m)) {
                    (Some(n), Some(m)) => Ok((n, m)),
                    _ => Err(CliError::usage("bench", format!("bad size {pair:?}, expected n:m with n, m >= 1"))),
                },
                None => Err(CliError::usage("bench", format!("bad size {pair:?}, expected n:m"))),
            }
        })
        .collect()
}

pub fn bench(config: &RunConfig, sizes: &[(usize, usize)], exec: Execution) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &(n, m) in sizes {
        let total = n + m;
        let data = config.load_dataset_sized(total)?;
        if data.n() < total {
            return Err(CliError::data("bench", format!("n + m = {total} exceeds the {} available points", data.n())));
        }
        let data = data.subset(&(0..total).collect::<Vec<_>>(), data.name.clone());
        let split = train_test_split(&data, m as f64 / total as f64, config.seed).stage("split")?;

        let t = Instant::now();
        let full = fit(config, &data.points, config.seed, false, exec)?;
        let full_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let trained = fit(config, &split.train.points, config.seed, false, exec)?;
        let train_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let ext = extend_and_discretize(&trained.model, &split.test.points, config.seed, config, exec)?;
        let extend_seconds = t.elapsed().as_secs_f64();

        rows.push(BenchRow {
            n,
            m,
            full_seconds,
            full_iterations: full.pod.iterations,
            train_seconds,
            extend_seconds,
            extend_iterations: ext.pod.iterations,
        });
    }
    Ok(rows)
}

pub fn write_bench<W: Write>(rows: &[BenchRow], writer: W) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let err = |e: csv::Error| CliError::data("output", e.to_string());
    w.write_record([
        "n",
        "m",
        "full_seconds",
        "full_iterations",
        "train_seconds",
        "extend_seconds",
        "extend_iterations",
    ])
    .map_err(err)?;
    for row in rows {
        w.serialize(row).map_err(err)?;
    }
    w.flush().stage("output")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotFiles {
    pub points: Option<PathBuf>,
    pub trace: PathBuf,
    pub point_rows: usize,
    pub trace_rows: usize,
}

/// Emits `points.csv` (x, y, split, cluster; 2-d data only) and `trace.csv`
/// (phase, iteration, objective) for one repeat of a result document.
pub fn plotdata(result_path: &Path, out: &Path, repeat: usize) -> Result<PlotFiles, CliError> {
    let result = RunResult::load(result_path)?;
    let rep = result.repeats.get(repeat).ok_or_else(|| {
        CliError::usage("plotdata", format!("repeat {repeat} not in result ({} repeats)", result.repeats.len()))
    })?;
    fs::create_dir_all(out).stage("output")?;
    let err = |e: csv::Error| CliError::data("output", e.to_string());

    let mut point_rows = 0;
    let points = match &result.dataset.points_2d {
        Some(coords) => {
            let path = out.join("points.csv");
            let mut w = csv::Writer::from_path(&path).map_err(err)?;
            w.write_record(["x", "y", "split", "cluster"]).map_err(err)?;
            let mut rows: Vec<(usize, &str, usize)> = Vec::new();
            for (split, part) in [("train", &rep.train), ("test", &rep.test)] {
                if let Some(part) = part {
                    rows.extend(part.indices.iter().zip(&part.assignment).map(|(&i, &c)| (i, split, c)));
                }
            }
            rows.sort_by_key(|r| r.0);
            for (i, split, c) in rows {
                let [x, y] = *coords
                    .get(i)
                    .ok_or_else(|| CliError::data("plotdata", format!("point index {i} out of range")))?;
                w.write_record([x.to_string(), y.to_string(), split.to_string(), c.to_string()])
                    .map_err(err)?;
                point_rows += 1;
            }
            w.flush().stage("output")?;
            Some(path)
        }
        None => {
            eprintln!(
                "notice: {}-dimensional data, points.csv skipped (trace.csv still written)",
                result.dataset.dim
            );
            None
        }
    };

    let trace = out.join("trace.csv");
    let mut w = csv::Writer::from_path(&trace).map_err(err)?;
    w.write_record(["phase", "iteration", "objective"]).map_err(err)?;
    let mut trace_rows = 0;
    for (phase, part) in [("train", &rep.train), ("test", &rep.test)] {
        if let Some(part) = part {
            for (it, phi) in part.objective_trace.iter().enumerate() {
                w.write_record([phase.to_string(), (it + 1).to_string(), phi.to_string()])
                    .map_err(err)?;
                trace_rows += 1;
            }
        }
    }
    w.flush().stage("output")?;
    Ok(PlotFiles {
        points,
        trace,
        point_rows,
        trace_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_sizes("1000:100, 1500:150").unwrap(), vec![(1000, 100), (1500, 150)]);
        assert_eq!(parse_sizes("").unwrap(), vec![]);
        assert!(parse_sizes("10").is_err());
        assert!(parse_sizes("10:0").is_err());
        assert!(parse_sizes("a:b").is_err());
    }

    #[test]
    fn bench_header_only_when_empty() {
        let mut buf = Vec::new();
        write_bench(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n,m,full_seconds,full_iterations,train_seconds,extend_seconds,extend_iterations\n"
        );
    }
}
