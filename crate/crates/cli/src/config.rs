//! Run configuration: built-in defaults, then a JSON file, then flags.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gpod_core::datasets::{load_delimited, make_circles, make_moons, standardize, Dataset, DelimitedOptions};
use gpod_core::{KernelSpec, PodOptions, ScalingMode, Variant};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Circles,
    Moons,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub sigma: f64,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Held-out share per repeat; 0 clusters the whole dataset in-sample.
    #[serde(default = "defaults::test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub scaling_mode: ScalingMode,
    #[serde(default = "defaults::degenerate_threshold")]
    pub degenerate_threshold: f64,
    /// Defaults to `file` when `data-path` is set, `moons` otherwise.
    #[serde(default)]
    pub dataset: Option<DatasetKind>,
    /// Generator sample count.
    #[serde(default = "defaults::n")]
    pub n: usize,
    #[serde(default = "defaults::noise")]
    pub noise: f64,
    #[serde(default = "defaults::radius_ratio")]
    pub radius_ratio: f64,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub data_path: Option<PathBuf>,
    /// Label column of a data file; negative values count from the end
    /// (`-1` is the last column). Absent means unlabelled.
    #[serde(default)]
    pub label_column: Option<i64>,
    #[serde(default = "defaults::delimiter")]
    pub delimiter: char,
    /// z-score features. Defaults to on for files, off for generators.
    #[serde(default)]
    pub standardize: Option<bool>,
}

mod defaults {
    pub fn test_fraction() -> f64 {
        0.2
    }
    pub fn repeats() -> usize {
        4
    }
    pub fn tol() -> f64 {
        1e-10
    }
    pub fn max_iter() -> usize {
        100
    }
    pub fn degenerate_threshold() -> f64 {
        gpod_core::gpod::DEFAULT_DEGENERATE_THRESHOLD
    }
    pub fn n() -> usize {
        2500
    }
    pub fn noise() -> f64 {
        0.05
    }
    pub fn radius_ratio() -> f64 {
        0.5
    }
    pub fn delimiter() -> char {
        ','
    }
}

impl RunConfig {
    /// Merges `file` (if any) and `overrides` over the defaults, fills in
    /// the derived fields and validates ranges.
    pub fn build(file: Option<&Path>, overrides: Map<String, Value>) -> Result<RunConfig, CliError> {
        let mut doc = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::usage("config", format!("{}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(CliError::usage("config", "config file must hold a JSON object")),
                    Err(e) => return Err(CliError::usage("config", format!("{}: {e}", path.display()))),
                }
            }
            None => Map::new(),
        };
        doc.extend(overrides);
        let config: RunConfig =
            serde_json::from_value(Value::Object(doc)).map_err(|e| CliError::usage("config", e.to_string()))?;
        config.resolved()
    }

    /// Fills defaults that depend on other fields, then validates.
    pub fn resolved(mut self) -> Result<RunConfig, CliError> {
        let kind = *self.dataset.get_or_insert(if self.data_path.is_some() {
            DatasetKind::File
        } else {
            DatasetKind::Moons
        });
        self.standardize.get_or_insert(kind == DatasetKind::File);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::usage("config", msg));
        KernelSpec::gaussian(self.sigma).stage("config")?;
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test-fraction must lie in [0, 1), got {}", self.test_fraction));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad(format!("tol must be finite and >= 0, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max-iter must be at least 1".into());
        }
        if !(self.degenerate_threshold.is_finite() && self.degenerate_threshold >= 0.0) {
            return bad(format!("degenerate-threshold must be finite and >= 0, got {}", self.degenerate_threshold));
        }
        if !self.delimiter.is_ascii() {
            return bad(format!("delimiter must be a single ASCII character, got {:?}", self.delimiter));
        }
        match self.dataset {
            Some(DatasetKind::File) if self.data_path.is_none() => bad("dataset file needs data-path".into()),
            Some(DatasetKind::Circles | DatasetKind::Moons) => {
                if self.n < 2 {
                    return bad(format!("n must be at least 2, got {}", self.n));
                }
                if !(self.noise.is_finite() && self.noise >= 0.0) {
                    return bad(format!("noise must be finite and >= 0, got {}", self.noise));
                }
                if !(self.radius_ratio > 0.0 && self.radius_ratio < 1.0) {
                    return bad(format!("radius-ratio must lie in (0, 1), got {}", self.radius_ratio));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::gaussian(self.sigma).expect("validated")
    }

    pub fn pod_options(&self) -> PodOptions {
        PodOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    /// Seed for both the split and the discretization of `repeat`.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }

    /// Generates or reads the dataset, with `n` overriding the generator size.
    pub fn load_dataset_sized(&self, n: usize) -> Result<Dataset, CliError> {
        let mut data = match self.dataset.unwrap_or(DatasetKind::Moons) {
            DatasetKind::Circles => make_circles(n, self.noise, self.radius_ratio, self.data_seed).stage("dataset")?,
            DatasetKind::Moons => make_moons(n, self.noise, self.data_seed).stage("dataset")?,
            DatasetKind::File => {
                let path = self.data_path.as_deref().expect("validated");
                let delimiter = self.delimiter as u8;
                let label_column = match self.label_column {
                    Some(c) if c < 0 => {
                        let cols = count_columns(path, delimiter)?;
                        let idx = cols as i64 + c;
                        if idx < 0 {
                            return Err(CliError::usage(
                                "dataset",
                                format!("label-column {c} is out of range for {cols} columns"),
                            ));
                        }
                        Some(idx as usize)
                    }
                    Some(c) => Some(c as usize),
                    None => None,
                };
                let opts = DelimitedOptions {
                    label_column,
                    delimiter,
                    standardize: false,
                };
                load_delimited(path, &opts).stage("dataset")?
            }
        };
        if self.standardize == Some(true) {
            standardize(&mut data.points);
        }
        Ok(data)
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        self.load_dataset_sized(self.n)
    }
}

fn count_columns(path: &Path, delimiter: u8) -> Result<usize, CliError> {
    let file = fs::File::open(path).stage("dataset")?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).stage("dataset")?;
    let line = line.trim_end_matches(['\n', '\r']);
    if line.is_empty() {
        return Err(CliError::data("dataset", format!("{} is empty", path.display())));
    }
    Ok(line.split(delimiter as char).count())
}

/// Flags that override config keys; unset flags leave the file or default
/// value in place.
#[derive(Clone, Debug, Default, clap::Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConfigArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling_mode: Option<ScalingMode>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_threshold: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_column: Option<i64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
}

impl ConfigArgs {
    pub fn to_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("flags serialize") {
            Value::Object(map) => map,
            _ => unreachable!("struct serializes to an object"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn map(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::build(None, map(json!({"variant": "ncut", "sigma": 0.1, "k": 2}))).unwrap();
        assert_eq!(c.test_fraction, 0.2);
        assert_eq!(c.repeats, 4);
        assert_eq!(c.max_iter, 100);
        assert_eq!(c.degenerate_threshold, gpod_core::gpod::DEFAULT_DEGENERATE_THRESHOLD);
        assert_eq!(c.dataset, Some(DatasetKind::Moons));
        assert_eq!(c.standardize, Some(false));
        assert_eq!(c.scaling_mode, ScalingMode::InverseSqrt);
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"variant": "ratiocut", "sigma": 0.5, "k": 3, "seed": 9, "data-path": "x.csv"}"#).unwrap();
        let flags = ConfigArgs {
            seed: Some(11),
            scaling_mode: Some(ScalingMode::Inverse),
            ..Default::default()
        };
        let c = RunConfig::build(Some(&path), flags.to_map()).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.variant, Variant::RatioCut);
        assert_eq!(c.scaling_mode, ScalingMode::Inverse);
        assert_eq!(c.dataset, Some(DatasetKind::File));
        assert_eq!(c.standardize, Some(true));
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            json!({"variant": "ncut", "sigma": 0.0, "k": 2}),
            json!({"variant": "ncut", "sigma": 1.0, "k": 0}),
            json!({"variant": "ncut", "sigma": 1.0, "k": 2, "test-fraction": 1.0}),
            json!({"variant": "ncut", "sigma": 1.0, "k": 2, "repeats": 0}),
            json!({"variant": "ncut", "sigma": 1.0, "k": 2, "bogus": 1}),
            json!({"variant": "other", "sigma": 1.0, "k": 2}),
            json!({"sigma": 1.0, "k": 2}),
            json!({"variant": "ncut", "sigma": 1.0, "k": 2, "dataset": "file"}),
        ] {
            let err = RunConfig::build(None, map(bad.clone())).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{bad}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::build(None, map(json!({"variant": "ncut", "sigma": 0.1, "k": 2}))).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
