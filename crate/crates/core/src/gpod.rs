//! Out-of-sample clustering: extend the training eigenvectors to new points
//! through their eigenfunctions, then discretize. No eigensolve and no
//! matrix over the combined sample is ever formed; each new point costs one
//! kernel profile against the training set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::kernel_graph::{check_finite, sq_dist, KernelSpec, LaplacianKind, PointRows};
use crate::pod::{normalize_rows, pod, PodOptions, PodResult};
use crate::spectra::{Normalization, SpectralEmbedding};

pub const MODEL_FORMAT: &str = "gpod-extension-model";
pub const MODEL_VERSION: u32 = 1;

/// Default cutoff below which an eigenvalue denominator is treated as zero.
pub const DEFAULT_DEGENERATE_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Unnormalized Laplacian, `UᵀU = I`.
    #[serde(rename = "ratiocut")]
    RatioCut,
    /// Random-walk Laplacian, `UᵀDU = I`.
    #[serde(rename = "ncut")]
    NCut,
}

impl Variant {
    pub fn laplacian_kind(self) -> LaplacianKind {
        match self {
            Variant::RatioCut => LaplacianKind::Unnormalized,
            Variant::NCut => LaplacianKind::RandomWalk,
        }
    }

    pub fn normalization(self) -> Normalization {
        match self {
            Variant::RatioCut => Normalization::Identity,
            Variant::NCut => Normalization::Degree,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::RatioCut => "ratiocut",
            Variant::NCut => "ncut",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ratiocut" => Ok(Variant::RatioCut),
            "ncut" => Ok(Variant::NCut),
            other => Err(Error::Parameter(format!("unknown variant {other:?} (expected ratiocut or ncut)"))),
        }
    }
}

/// Coefficient applied to the RatioCut kernel projection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// `1/sqrt(lambda_k)`, as in the published out-of-sample procedure.
    #[default]
    InverseSqrt,
    /// `1/lambda_k`, from composing the eigenvector/eigenfunction relations
    /// with each other.
    Inverse,
}

impl std::fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScalingMode::InverseSqrt => "inverse-sqrt",
            ScalingMode::Inverse => "inverse",
        })
    }
}

impl std::str::FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "inverse_sqrt" => Ok(ScalingMode::InverseSqrt),
            "inverse" => Ok(ScalingMode::Inverse),
            other => Err(Error::Parameter(format!(
                "unknown scaling mode {other:?} (expected inverse-sqrt or inverse)"
            ))),
        }
    }
}

/// Everything needed to evaluate the extended eigenfunctions at new points.
#[derive(Clone, Debug)]
pub struct ExtensionModel {
    variant: Variant,
    train: PointRows,
    train_points: DMatrix<f64>,
    kernel: KernelSpec,
    eigenvalues: DVector<f64>,
    train_vectors: DMatrix<f64>,
    scaling_mode: ScalingMode,
    degenerate_threshold: f64,
}

/// Packages a training embedding for out-of-sample evaluation.
pub fn fit_extension(
    embedding: &SpectralEmbedding,
    train_points: &DMatrix<f64>,
    kernel: KernelSpec,
    variant: Variant,
) -> Result<ExtensionModel> {
    if embedding.laplacian_kind() != variant.laplacian_kind()
        || embedding.normalization() != variant.normalization()
    {
        return Err(Error::Config(format!(
            "{variant} extension needs a {:?}/{:?} embedding, got {:?}/{:?}",
            variant.laplacian_kind(),
            variant.normalization(),
            embedding.laplacian_kind(),
            embedding.normalization()
        )));
    }
    ExtensionModel::new(
        variant,
        train_points.clone(),
        kernel,
        embedding.eigenvalues().clone(),
        embedding.vectors().clone(),
    )
}

impl ExtensionModel {
    fn new(
        variant: Variant,
        train_points: DMatrix<f64>,
        kernel: KernelSpec,
        eigenvalues: DVector<f64>,
        train_vectors: DMatrix<f64>,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = train_points.nrows();
        if n == 0 || train_points.ncols() == 0 {
            return Err(Error::Size("training set is empty".into()));
        }
        if train_vectors.nrows() != n {
            return Err(Error::Size(format!(
                "embedding has {} rows but there are {n} training points",
                train_vectors.nrows()
            )));
        }
        if train_vectors.ncols() != eigenvalues.len() || eigenvalues.is_empty() {
            return Err(Error::Size(format!(
                "{} eigenvalues for {} eigenvectors",
                eigenvalues.len(),
                train_vectors.ncols()
            )));
        }
        check_finite(&train_points, "training points")?;
        if eigenvalues.iter().chain(train_vectors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("embedding contains non-finite values".into()));
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Input("eigenvalues are not ascending".into()));
        }
        Ok(ExtensionModel {
            variant,
            train: PointRows::new(&train_points),
            train_points,
            kernel,
            eigenvalues,
            train_vectors,
            scaling_mode: ScalingMode::default(),
            degenerate_threshold: DEFAULT_DEGENERATE_THRESHOLD,
        })
    }

    pub fn with_scaling_mode(mut self, mode: ScalingMode) -> Self {
        self.scaling_mode = mode;
        self
    }

    pub fn with_degenerate_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::Parameter(format!("degenerate threshold must be finite and >= 0, got {threshold}")));
        }
        self.degenerate_threshold = threshold;
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn train_points(&self) -> &DMatrix<f64> {
        &self.train_points
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn train_vectors(&self) -> &DMatrix<f64> {
        &self.train_vectors
    }

    pub fn scaling_mode(&self) -> ScalingMode {
        self.scaling_mode
    }

    pub fn degenerate_threshold(&self) -> f64 {
        self.degenerate_threshold
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn dim(&self) -> usize {
        self.train_points.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.train_points.nrows()
    }

    /// Per-column coefficient, or `None` for a degenerate eigenvalue.
    fn coefficients(&self) -> Vec<Option<f64>> {
        let t = self.degenerate_threshold;
        self.eigenvalues
            .iter()
            .map(|&lambda| match self.variant {
                Variant::RatioCut if lambda < t => None,
                Variant::RatioCut => Some(match self.scaling_mode {
                    ScalingMode::InverseSqrt => 1.0 / lambda.sqrt(),
                    ScalingMode::Inverse => 1.0 / lambda,
                }),
                Variant::NCut if (1.0 - lambda).abs() < t => None,
                Variant::NCut => Some(1.0 / (1.0 - lambda)),
            })
            .collect()
    }

    /// Kernel projection of one new point onto the training eigenvectors.
    fn project(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n_train();
        let inv_n = 1.0 / n as f64;
        let log_w: Vec<f64> = (0..n)
            .map(|j| self.kernel.log_from_sq_dist(sq_dist(x, self.train.row(j))))
            .collect();
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.variant {
            Variant::RatioCut => {
                let w: Vec<f64> = log_w.iter().map(|a| a.exp()).collect();
                let s = inv_n * w.iter().sum::<f64>();
                for (j, &wj) in w.iter().enumerate() {
                    let coef = s - wj;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += coef * self.train_vectors[(j, k)];
                    }
                }
            }
            Variant::NCut => {
                // W_j / s_n is a ratio of kernel values; shifting by the largest
                // log-weight keeps it finite where every weight underflows.
                let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = log_w.iter().map(|a| (a - shift).exp()).collect();
                let s = inv_n * e.iter().sum::<f64>();
                for (j, &ej) in e.iter().enumerate() {
                    let coef = ej / s;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += coef * self.train_vectors[(j, k)];
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv_n);
    }

    fn check_new_points(&self, new_points: &DMatrix<f64>) -> Result<()> {
        if new_points.nrows() == 0 {
            return Err(Error::Size("no new points to extend to".into()));
        }
        if new_points.ncols() != self.dim() {
            return Err(Error::Input(format!(
                "new points have dimension {} but the model was trained on dimension {}",
                new_points.ncols(),
                self.dim()
            )));
        }
        check_finite(new_points, "new points")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, &self.document())?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        Self::from_document(serde_json::from_reader(reader)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    fn document(&self) -> ModelDocument {
        let rows = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect()).collect();
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            variant: self.variant,
            kernel: self.kernel,
            scaling_mode: self.scaling_mode,
            degenerate_threshold: self.degenerate_threshold,
            eigenvalues: self.eigenvalues.iter().copied().collect(),
            train_points: rows(&self.train_points),
            train_vectors: rows(&self.train_vectors),
        }
    }

    fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(Error::Config(format!("not an extension model document (format {:?})", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model version {} (this build reads version {MODEL_VERSION})",
                doc.version
            )));
        }
        let matrix = |rows: &[Vec<f64>], what: &str| -> Result<DMatrix<f64>> {
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::Size(format!("{what} rows have unequal lengths")));
            }
            Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
        };
        let model = Self::new(
            doc.variant,
            matrix(&doc.train_points, "train_points")?,
            doc.kernel,
            DVector::from_vec(doc.eigenvalues),
            matrix(&doc.train_vectors, "train_vectors")?,
        )?
        .with_scaling_mode(doc.scaling_mode);
        model.with_degenerate_threshold(doc.degenerate_threshold)
    }
}

/// On-disk layout of an [`ExtensionModel`]. Matrices are stored row by row.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    variant: Variant,
    kernel: KernelSpec,
    scaling_mode: ScalingMode,
    degenerate_threshold: f64,
    eigenvalues: Vec<f64>,
    train_points: Vec<Vec<f64>>,
    train_vectors: Vec<Vec<f64>>,
}

/// Extended embedding of a batch of new points.
#[derive(Clone, Debug)]
pub struct Extension {
    /// `m x K`.
    pub embedding: DMatrix<f64>,
    /// Columns replaced by the constant `1/sqrt(m)` because their eigenvalue
    /// denominator was (numerically) zero.
    pub degenerate_columns: Vec<usize>,
}

/// Evaluates the extended eigenfunctions at `new_points`.
pub fn extend(model: &ExtensionModel, new_points: &DMatrix<f64>) -> Result<Extension> {
    extend_with(model, new_points, Execution::default())
}

pub fn extend_with(model: &ExtensionModel, new_points: &DMatrix<f64>, exec: Execution) -> Result<Extension> {
    model.check_new_points(new_points)?;
    let m = new_points.nrows();
    let k = model.k();
    let rows = PointRows::new(new_points);
    let projected: Vec<Vec<f64>> = map_indexed(exec, m, |i| {
        let mut out = vec![0.0; k];
        model.project(rows.row(i), &mut out);
        out
    });

    let constant = 1.0 / (m as f64).sqrt();
    let mut embedding = DMatrix::zeros(m, k);
    let mut degenerate_columns = Vec::new();
    for (c, coef) in model.coefficients().into_iter().enumerate() {
        match coef {
            Some(coef) => {
                for (i, row) in projected.iter().enumerate() {
                    embedding[(i, c)] = coef * row[c];
                }
            }
            None => {
                embedding.column_mut(c).fill(constant);
                degenerate_columns.push(c);
            }
        }
    }
    Ok(Extension {
        embedding,
        degenerate_columns,
    })
}

fn require_variant(model: &ExtensionModel, variant: Variant) -> Result<()> {
    if model.variant() != variant {
        return Err(Error::Config(format!("expected a {variant} model, got {}", model.variant())));
    }
    Ok(())
}

/// RatioCut extension: `(1/n) Σ_j (s_n(x) - W(x, x_j)) u_k[j]`, scaled per
/// [`ScalingMode`], with `s_n(x) = (1/n) Σ_j W(x, x_j)`.
pub fn extend_ratiocut(model: &ExtensionModel, new_points: &DMatrix<f64>) -> Result<Extension> {
    require_variant(model, Variant::RatioCut)?;
    extend(model, new_points)
}

/// NCut extension: `(1/(1 - lambda_k)) (1/n) Σ_j (W(x, x_j) / s_n(x)) u_k[j]`.
pub fn extend_ncut(model: &ExtensionModel, new_points: &DMatrix<f64>) -> Result<Extension> {
    require_variant(model, Variant::NCut)?;
    extend(model, new_points)
}

/// Full out-of-sample run with intermediate products.
#[derive(Clone, Debug)]
pub struct GpodOutput {
    pub extension: Extension,
    /// Row-normalized extension fed to the discretization.
    pub normalized: DMatrix<f64>,
    /// New points whose extended row was entirely zero.
    pub zero_rows: usize,
    pub pod: PodResult,
}

/// Clusters `new_points` with the training eigenfunctions.
pub fn gpod(model: &ExtensionModel, new_points: &DMatrix<f64>, seed: u64, options: PodOptions) -> Result<PodResult> {
    Ok(gpod_detailed(model, new_points, seed, options, Execution::default())?.pod)
}

pub fn gpod_detailed(
    model: &ExtensionModel,
    new_points: &DMatrix<f64>,
    seed: u64,
    options: PodOptions,
    exec: Execution,
) -> Result<GpodOutput> {
    let extension = extend_with(model, new_points, exec)?;
    let normalized = normalize_rows(&extension.embedding);
    let pod = pod(&normalized.matrix, seed, options)?;
    Ok(GpodOutput {
        extension,
        normalized: normalized.matrix,
        zero_rows: normalized.zero_rows,
        pod,
    })
}
