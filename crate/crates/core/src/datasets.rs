//! Toy generators, delimited-file loading and seeded train/test splits.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-12;

/// Points (one per row) with optional class labels in `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite coordinates".into()));
        }
        if let Some(l) = &labels {
            if l.len() != points.nrows() {
                return Err(Error::Size(format!("{} labels for {} points", l.len(), points.nrows())));
            }
        }
        Ok(Dataset {
            points,
            labels,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Number of distinct classes (`max label + 1`), if labelled.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        let points = DMatrix::from_fn(indices.len(), self.dim(), |i, j| self.points[(indices[i], j)]);
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset {
            points,
            labels,
            name: name.into(),
        }
    }

    /// Writes one point per line, label last when present.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        for i in 0..self.n() {
            let mut record: Vec<String> = self.points.row(i).iter().map(|v| v.to_string()).collect();
            if let Some(l) = &self.labels {
                record.push(l[i].to_string());
            }
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Input(format!("{other:?}")),
    }
}

fn normal(noise: f64) -> Result<Option<Normal<f64>>> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::Parameter(format!("noise must be finite and non-negative, got {noise}")));
    }
    if noise == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, noise)
        .map(Some)
        .map_err(|e| Error::Parameter(e.to_string()))
}

fn from_rows(rows: Vec<[f64; 2]>, labels: Vec<usize>, name: &str, noise: f64, seed: u64) -> Result<Dataset> {
    let dist = normal(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(rows.len(), 2);
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            let e = dist.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            points[(i, j)] = v + e;
        }
    }
    Dataset::new(points, Some(labels), name)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

/// Two concentric circles: `ceil(n/2)` points at radius 1 (label 0) and
/// `floor(n/2)` at `radius_ratio` (label 1), evenly spaced in angle, plus
/// isotropic Gaussian noise with standard deviation `noise`.
pub fn make_circles(n: usize, noise: f64, radius_ratio: f64, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    if !(radius_ratio > 0.0 && radius_ratio < 1.0) {
        return Err(Error::Parameter(format!("radius ratio must lie in (0, 1), got {radius_ratio}")));
    }
    let n_outer = n.div_ceil(2);
    let n_inner = n / 2;
    let ring = |count: usize, r: f64| {
        (0..count).map(move |i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            [r * t.cos(), r * t.sin()]
        })
    };
    let rows: Vec<[f64; 2]> = ring(n_outer, 1.0).chain(ring(n_inner, radius_ratio)).collect();
    let labels = [vec![0; n_outer], vec![1; n_inner]].concat();
    from_rows(rows, labels, "circles", noise, seed)
}

/// Two interleaving half circles: `ceil(n/2)` points on the upper arc
/// `(cos t, sin t)` (label 0) and `floor(n/2)` on the lower arc
/// `(1 - cos t, 0.5 - sin t)` (label 1), `t` evenly spaced over `[0, pi]`.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let n_upper = n.div_ceil(2);
    let n_lower = n / 2;
    let arc = |count: usize| {
        (0..count).map(move |i| {
            if count == 1 {
                0.0
            } else {
                std::f64::consts::PI * i as f64 / (count - 1) as f64
            }
        })
    };
    let rows: Vec<[f64; 2]> = arc(n_upper)
        .map(|t| [t.cos(), t.sin()])
        .chain(arc(n_lower).map(|t| [1.0 - t.cos(), 0.5 - t.sin()]))
        .collect();
    let labels = [vec![0; n_upper], vec![1; n_lower]].concat();
    from_rows(rows, labels, "moons", noise, seed)
}

/// Options for [`load_delimited`].
#[derive(Clone, Debug)]
pub struct DelimitedOptions {
    /// Column holding the class label; every other column is a feature.
    pub label_column: Option<usize>,
    pub delimiter: u8,
    /// z-score each feature column.
    pub standardize: bool,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        DelimitedOptions {
            label_column: None,
            delimiter: b',',
            standardize: true,
        }
    }
}

pub fn load_delimited(path: impl AsRef<Path>, options: &DelimitedOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    parse_delimited(file, options, name)
}

/// Parses delimited text. A first row whose feature fields do not all parse
/// as numbers is taken as a header. Labels are mapped to `0..K` in order of
/// first appearance.
pub fn parse_delimited<R: Read>(reader: R, options: &DelimitedOptions, name: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(options.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = row_idx + 1;
        match width {
            None => {
                if let Some(lc) = options.label_column {
                    if lc >= record.len() {
                        return Err(Error::Parse {
                            row,
                            column: lc + 1,
                            message: format!("label column {lc} out of range for {} fields", record.len()),
                        });
                    }
                }
            }
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    row,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
            _ => {}
        }

        let mut values = Vec::with_capacity(record.len());
        let mut bad: Option<(usize, String)> = None;
        for (col, field) in record.iter().enumerate() {
            if Some(col) == options.label_column {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    bad.get_or_insert((col, field.to_string()));
                }
            }
        }
        if let Some((col, field)) = bad {
            let is_header = width.is_none()
                && record
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| Some(*c) != options.label_column)
                    .all(|(_, f)| f.parse::<f64>().is_err());
            if is_header {
                width = Some(record.len());
                continue;
            }
            return Err(Error::Parse {
                row,
                column: col + 1,
                message: format!("non-numeric feature value {field:?}"),
            });
        }
        width = Some(record.len());
        if let Some(lc) = options.label_column {
            raw_labels.push(record[lc].to_string());
        }
        features.push(values);
    }

    if features.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::Input("no feature columns".into()));
    }
    let mut points = DMatrix::from_fn(features.len(), d, |i, j| features[i][j]);
    if options.standardize {
        standardize(&mut points);
    }
    let labels = options.label_column.map(|_| map_labels(&raw_labels));
    Dataset::new(points, labels, name)
}

/// Maps arbitrary label tokens to `0..K` by first appearance.
pub fn map_labels<S: AsRef<str>>(tokens: &[S]) -> Vec<usize> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    tokens
        .iter()
        .map(|t| {
            let next = ids.len();
            *ids.entry(t.as_ref()).or_insert(next)
        })
        .collect()
}

/// In-place z-scoring with population standard deviation floored at 1e-12.
pub fn standardize(points: &mut DMatrix<f64>) {
    let n = points.nrows() as f64;
    for mut col in points.column_iter_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(STD_FLOOR);
        for v in col.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

/// A seeded train/test partition of a dataset.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Uniform random split; the training side gets `ceil((1 - f) n)` points.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Parameter(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let n = data.n();
    check_n(n)?;
    // floor(f n) with a guard against representation error (0.2 * 10 etc.)
    let n_test = (test_fraction * n as f64 + 1e-9).floor() as usize;
    let n_train = n - n_test;
    if n_test == 0 || n_train == 0 {
        return Err(Error::Size(format!(
            "test fraction {test_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_indices = perm[..n_train].to_vec();
    let test_indices = perm[n_train..].to_vec();
    Ok(Split {
        train: data.subset(&train_indices, format!("{}-train", data.name)),
        test: data.subset(&test_indices, format!("{}-test", data.name)),
        train_indices,
        test_indices,
    })
}
