//! Affinity graphs and graph Laplacians.
//!
//! The raw kernel matrix is stored unscaled; the `1/n` weight scale is only
//! applied when degrees and Laplacians are formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
}

/// Weight function `W(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl KernelSpec {
    /// Gaussian kernel `exp(-|x - y|^2 / (2 sigma^2))`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = KernelSpec {
            kind: KernelKind::Gaussian,
            sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Parameter(format!(
                "kernel bandwidth must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Kernel value as a function of the squared distance.
    #[inline]
    pub fn from_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-sq_dist / (2.0 * self.sigma * self.sigma)).exp(),
        }
    }

    /// Log of the kernel value, finite even where the kernel underflows.
    #[inline]
    pub fn log_from_sq_dist(&self, sq_dist: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => -sq_dist / (2.0 * self.sigma * self.sigma),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(x, y))
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Row-major copy of an `n x d` point matrix so each point is contiguous.
#[derive(Clone, Debug)]
pub(crate) struct PointRows {
    data: Vec<f64>,
    dim: usize,
}

impl PointRows {
    pub(crate) fn new(points: &DMatrix<f64>) -> Self {
        let (n, dim) = points.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(points.row(i).iter());
        }
        PointRows { data, dim }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub(crate) fn check_finite(points: &DMatrix<f64>, what: &str) -> Result<()> {
    for i in 0..points.nrows() {
        for j in 0..points.ncols() {
            let v = points[(i, j)];
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "{what}: non-finite coordinate {v} at row {i}, column {j}"
                )));
            }
        }
    }
    Ok(())
}

/// Fully connected affinity graph over a sample.
#[derive(Clone, Debug)]
pub struct WeightGraph {
    raw: DMatrix<f64>,
    scale: f64,
    degrees: DVector<f64>,
}

impl WeightGraph {
    /// Builds a graph from an explicit raw affinity matrix.
    ///
    /// The matrix must be square, symmetric, finite and non-negative. Degrees
    /// are allowed to be zero here; `laplacian` rejects such graphs.
    pub fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        let n = raw.nrows();
        if raw.ncols() != n {
            return Err(Error::Size(format!(
                "affinity matrix must be square, got {}x{}",
                n,
                raw.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::Size(format!("need at least 2 points, got {n}")));
        }
        for i in 0..n {
            for j in 0..n {
                let w = raw[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Input(format!(
                        "affinity ({i}, {j}) = {w} is not a finite non-negative value"
                    )));
                }
                if w != raw[(j, i)] {
                    return Err(Error::Input(format!("affinity matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_raw_unchecked(raw))
    }

    fn from_raw_unchecked(raw: DMatrix<f64>) -> Self {
        let n = raw.nrows();
        let scale = 1.0 / n as f64;
        let degrees = DVector::from_iterator(
            n,
            (0..n).map(|i| raw.column(i).iter().map(|w| scale * w).sum::<f64>()),
        );
        WeightGraph { raw, scale, degrees }
    }

    /// `raw[i][j] = W(x_i, x_j)`, unscaled.
    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `d_i = sum_j scale * raw[i][j]`.
    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn n(&self) -> usize {
        self.raw.nrows()
    }

    /// Scaled weight `W_ij = raw[i][j] / n`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.scale * self.raw[(i, j)]
    }

    /// Stable identifier of this graph's contents, used to check that an
    /// embedding and a graph belong together.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        mix(self.n() as u64);
        for d in self.degrees.iter() {
            mix(d.to_bits());
        }
        h
    }
}

/// Builds the Gaussian affinity graph on `points` (one point per row).
pub fn build_weight_graph(points: &DMatrix<f64>, kernel: &KernelSpec) -> Result<WeightGraph> {
    build_weight_graph_with(points, kernel, Execution::default())
}

pub fn build_weight_graph_with(
    points: &DMatrix<f64>,
    kernel: &KernelSpec,
    exec: Execution,
) -> Result<WeightGraph> {
    kernel.validate()?;
    let n = points.nrows();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 points, got {n}")));
    }
    check_finite(points, "training points")?;
    let rows = PointRows::new(points);

    // Upper triangle including the diagonal; each unordered pair evaluated once.
    let upper: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
        let xi = rows.row(i);
        (i..n).map(|j| kernel.eval(xi, rows.row(j))).collect()
    });
    let mut raw = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (offset, &w) in row.iter().enumerate() {
            let j = i + offset;
            raw[(i, j)] = w;
            raw[(j, i)] = w;
        }
    }
    Ok(WeightGraph::from_raw_unchecked(raw))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `L = D - W`.
    Unnormalized,
    /// `L_rw = I - D^{-1} W`.
    RandomWalk,
}

/// A tagged view of a graph Laplacian. The dense matrix is only formed by
/// [`Laplacian::materialize`].
#[derive(Clone, Copy, Debug)]
pub struct Laplacian<'a> {
    kind: LaplacianKind,
    graph: &'a WeightGraph,
}

pub fn laplacian(graph: &WeightGraph, kind: LaplacianKind) -> Result<Laplacian<'_>> {
    if let Some(i) = graph.degrees().iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateGraph(format!("vertex {i} has zero degree")));
    }
    Ok(Laplacian { kind, graph })
}

impl<'a> Laplacian<'a> {
    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn graph(&self) -> &'a WeightGraph {
        self.graph
    }

    // Diagonals are built from off-diagonal sums (d_i - w_ii = Σ_{j≠i} w_ij)
    // so they do not cancel against the self-affinity when the remaining
    // weights are tiny.
    pub fn materialize(&self) -> DMatrix<f64> {
        let g = self.graph;
        let n = g.n();
        let d = g.degrees();
        let off = off_diagonal_sums(g);
        match self.kind {
            LaplacianKind::Unnormalized => {
                DMatrix::from_fn(n, n, |i, j| if i == j { off[i] } else { -g.weight(i, j) })
            }
            LaplacianKind::RandomWalk => {
                DMatrix::from_fn(n, n, |i, j| if i == j { off[i] / d[i] } else { -g.weight(i, j) / d[i] })
            }
        }
    }

    /// `D^{-1/2} L D^{-1/2} = I - D^{-1/2} W D^{-1/2}`, exactly symmetric.
    pub(crate) fn symmetric_normalized(&self) -> DMatrix<f64> {
        let g = self.graph;
        let n = g.n();
        let d = g.degrees();
        let off = off_diagonal_sums(g);
        let sqrt_d: Vec<f64> = d.iter().map(|d| d.sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                off[i] / d[i]
            } else {
                -g.weight(i, j) / (sqrt_d[i] * sqrt_d[j])
            }
        })
    }
}

fn off_diagonal_sums(g: &WeightGraph) -> Vec<f64> {
    let n = g.n();
    (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| g.weight(i, j)).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn pts(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn identical_points() {
        let g = build_weight_graph(&pts(&[0.0, 0.0]), &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        assert_eq!(g.raw(), &dmatrix![1.0, 1.0; 1.0, 1.0]);
        assert_eq!(g.degrees().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn two_points_by_hand() {
        let g = build_weight_graph(&pts(&[0.0, 2f64.sqrt()]), &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let e = (-1.0f64).exp();
        assert!((g.raw()[(0, 1)] - e).abs() < 1e-12);
        assert!((g.degrees()[0] - 0.5 * (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn three_points_symmetric_and_bounded() {
        let p = dmatrix![0.0, 1.0; 0.3, -0.2; 2.0, 0.5];
        let g = build_weight_graph(&p, &KernelSpec::gaussian(0.7).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.raw()[(i, j)], g.raw()[(j, i)]);
                assert!(g.raw()[(i, j)] > 0.0 && g.raw()[(i, j)] <= 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(build_weight_graph(&pts(&[0.0]), &k), Err(Error::Size(_))));
        assert!(matches!(
            build_weight_graph(&pts(&[0.0, f64::NAN]), &k),
            Err(Error::Input(_))
        ));
        assert!(matches!(KernelSpec::gaussian(0.0), Err(Error::Parameter(_))));
        assert!(matches!(KernelSpec::gaussian(f64::INFINITY), Err(Error::Parameter(_))));
    }

    #[test]
    fn two_point_laplacians() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let expected = dmatrix![0.5, -0.5; -0.5, 0.5];
        let l = laplacian(&g, LaplacianKind::Unnormalized).unwrap().materialize();
        assert_eq!(l, expected);
        // D = I here (degrees are 1), so L_rw coincides with L.
        let lrw = laplacian(&g, LaplacianKind::RandomWalk).unwrap().materialize();
        assert_eq!(lrw, expected);
    }

    #[test]
    fn path_like_row_sums_vanish() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 0.6, 0.01; 0.6, 1.0, 0.6; 0.01, 0.6, 1.0]).unwrap();
        for kind in [LaplacianKind::Unnormalized, LaplacianKind::RandomWalk] {
            let m = laplacian(&g, kind).unwrap().materialize();
            for i in 0..3 {
                assert!(m.row(i).sum().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_degree_is_degenerate() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 0.0; 0.0, 0.0]).unwrap();
        assert!(matches!(
            laplacian(&g, LaplacianKind::RandomWalk),
            Err(Error::DegenerateGraph(_))
        ));
    }

    #[test]
    fn from_raw_rejects_asymmetry() {
        assert!(WeightGraph::from_raw(dmatrix![1.0, 0.5; 0.4, 1.0]).is_err());
        assert!(WeightGraph::from_raw(dmatrix![1.0, -0.5; -0.5, 1.0]).is_err());
    }

    #[test]
    fn symmetric_normalized_is_symmetric() {
        let p = dmatrix![0.0, 1.0; 0.3, -0.2; 2.0, 0.5; 1.1, 1.2];
        let g = build_weight_graph(&p, &KernelSpec::gaussian(0.9).unwrap()).unwrap();
        let s = laplacian(&g, LaplacianKind::RandomWalk).unwrap().symmetric_normalized();
        assert_eq!(s, s.transpose());
    }
}
