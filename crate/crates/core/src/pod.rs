//! Optimal discretization of a continuous spectral embedding.
//!
//! Alternates two exact sub-problems on the row-normalized embedding `Û`:
//! the best binary assignment for a fixed rotation (row argmax of `Û R`) and
//! the best rotation for a fixed assignment (orthogonal Procrustes via the
//! SVD of `Üᵀ Û`). The tracked objective `φ = tr(Ω)` is non-decreasing.

use faer::Mat;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simd::clear_upper_avx;

/// Columns whose residual norm falls below this during orthonormalization are
/// treated as linearly dependent.
const DEPENDENT_COLUMN_NORM: f64 = 1e-10;

/// Hard assignment of `n` rows to `k` clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteAssignment {
    cluster_of: Vec<usize>,
    k: usize,
}

impl DiscreteAssignment {
    pub fn new(cluster_of: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = cluster_of.iter().find(|&&c| c >= k) {
            return Err(Error::Input(format!("cluster index {bad} out of range for K = {k}")));
        }
        Ok(DiscreteAssignment { cluster_of, k })
    }

    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.cluster_of.len()
    }

    /// The binary `n x K` indicator matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n(), self.k);
        for (i, &c) in self.cluster_of.iter().enumerate() {
            m[(i, c)] = 1.0;
        }
        m
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.cluster_of {
            sizes[c] += 1;
        }
        sizes
    }

    /// Indices of clusters with no members.
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.cluster_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(c, _)| c)
            .collect()
    }
}

/// `K x K` orthonormal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    /// Wraps `matrix`, checking `RᵀR = I` to within `1e-10`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Size(format!(
                "rotation must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let k = matrix.nrows();
        let err = (matrix.transpose() * &matrix - DMatrix::identity(k, k)).amax();
        if err > 1e-10 {
            return Err(Error::Numerical(format!("matrix is not orthonormal (deviation {err:e})")));
        }
        Ok(Rotation(matrix))
    }

    pub fn identity(k: usize) -> Self {
        Rotation(DMatrix::identity(k, k))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }
}

/// Output of [`normalize_rows`].
#[derive(Clone, Debug)]
pub struct RowNormalized {
    pub matrix: DMatrix<f64>,
    /// All-zero rows left untouched.
    pub zero_rows: usize,
}

/// Scales every nonzero row to unit Euclidean length.
pub fn normalize_rows(embedding: &DMatrix<f64>) -> RowNormalized {
    let mut matrix = embedding.clone();
    let mut zero_rows = 0;
    for mut row in matrix.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        } else {
            zero_rows += 1;
        }
    }
    RowNormalized { matrix, zero_rows }
}

fn check_shape(u_hat: &DMatrix<f64>) -> Result<()> {
    let (n, k) = u_hat.shape();
    if k == 0 {
        return Err(Error::Size("embedding has no columns".into()));
    }
    if n < k {
        return Err(Error::Size(format!("need at least K = {k} rows, got {n}")));
    }
    Ok(())
}

/// Greedy initial rotation: the first column is a random row of `Û`, each
/// further column is the row least aligned with the columns chosen so far.
/// The stacked columns are then orthonormalized (modified Gram-Schmidt, with
/// dependent columns replaced by seeded random directions).
pub fn init_rotation(u_hat: &DMatrix<f64>, seed: u64) -> Result<Rotation> {
    check_shape(u_hat)?;
    let (n, k) = u_hat.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    columns.push(u_hat.row(first).transpose());
    let mut c = DVector::<f64>::zeros(n);
    for _ in 1..k {
        let last = columns.last().expect("at least one column");
        c += (u_hat * last).abs();
        let mut best = 0;
        for i in 1..n {
            if c[i] < c[best] {
                best = i;
            }
        }
        columns.push(u_hat.row(best).transpose());
    }
    Ok(Rotation(orthonormalize(columns, &mut rng)))
}

/// Modified Gram-Schmidt (two passes) over `columns`, replacing dependent
/// columns with random Gaussian directions until a full basis is formed.
fn orthonormalize(columns: Vec<DVector<f64>>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = columns.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let push = |mut v: DVector<f64>, basis: &mut Vec<DVector<f64>>| -> bool {
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > DEPENDENT_COLUMN_NORM {
            basis.push(v / norm);
            true
        } else {
            false
        }
    };
    let mut pending = 0;
    for col in columns {
        if !push(col, &mut basis) {
            pending += 1;
        }
    }
    while pending > 0 {
        let v = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if push(v, &mut basis) {
            pending -= 1;
        }
    }
    DMatrix::from_columns(&basis)
}

/// Assigns each row to the argmax of `Û R` (lowest column wins ties).
pub fn discretize_step(u_hat: &DMatrix<f64>, rotation: &Rotation) -> DiscreteAssignment {
    let rotated = u_hat * rotation.matrix();
    let cluster_of = rotated
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    DiscreteAssignment {
        cluster_of,
        k: rotation.k(),
    }
}

/// `Üᵀ Û` accumulated row by row.
fn assignment_cross(assignment: &DiscreteAssignment, u_hat: &DMatrix<f64>) -> DMatrix<f64> {
    let k = u_hat.ncols();
    let mut m = DMatrix::zeros(k, k);
    for (i, &c) in assignment.cluster_of().iter().enumerate() {
        let mut row = m.row_mut(c);
        row += u_hat.row(i);
    }
    m
}

/// Best rotation for a fixed assignment: with `Üᵀ Û = V Ω Ṽᵀ`, returns
/// `R = Ṽ Vᵀ` and `φ = tr(Ω)`.
pub fn rotation_step(assignment: &DiscreteAssignment, u_hat: &DMatrix<f64>) -> Result<(Rotation, f64)> {
    if assignment.n() != u_hat.nrows() || assignment.k() != u_hat.ncols() {
        return Err(Error::Size(format!(
            "assignment is {}x{} but embedding is {}x{}",
            assignment.n(),
            assignment.k(),
            u_hat.nrows(),
            u_hat.ncols()
        )));
    }
    let cross = assignment_cross(assignment, u_hat);
    let k = cross.nrows();
    let svd = Mat::<f64>::from_fn(k, k, |i, j| cross[(i, j)])
        .svd();
    clear_upper_avx();
    let svd = svd.map_err(|_| Error::Numerical("SVD of the assignment cross product did not converge".into()))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let phi = (0..k).map(|i| s[i]).sum();
    let r = DMatrix::from_fn(k, k, |i, j| (0..k).map(|c| v[(i, c)] * u[(j, c)]).sum());
    Ok((Rotation(r), phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodOptions {
    /// Stop once consecutive objective values differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PodOptions {
    fn default() -> Self {
        PodOptions {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PodResult {
    pub assignment: DiscreteAssignment,
    /// Optimal rotation for the final assignment.
    pub rotation: Rotation,
    /// `φ` after every iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Clusters left empty by the final assignment.
    pub empty_clusters: Vec<usize>,
}

impl PodResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one iteration")
    }
}

/// Runs the discretization from the greedy seeded initialization.
pub fn pod(u_hat: &DMatrix<f64>, seed: u64, options: PodOptions) -> Result<PodResult> {
    let init = init_rotation(u_hat, seed)?;
    pod_from_rotation(u_hat, init, options)
}

/// Runs the discretization from an explicit initial rotation.
pub fn pod_from_rotation(u_hat: &DMatrix<f64>, initial: Rotation, options: PodOptions) -> Result<PodResult> {
    check_shape(u_hat)?;
    if initial.k() != u_hat.ncols() {
        return Err(Error::Size(format!(
            "rotation is {0}x{0} but embedding has {1} columns",
            initial.k(),
            u_hat.ncols()
        )));
    }
    if options.max_iter == 0 {
        return Err(Error::Parameter("max_iter must be at least 1".into()));
    }
    if !(options.tol >= 0.0) {
        return Err(Error::Parameter(format!("tolerance must be non-negative, got {}", options.tol)));
    }
    if u_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("embedding contains non-finite values".into()));
    }

    let mut rotation = initial;
    let mut previous = 0.0;
    let mut trace = Vec::new();
    loop {
        let assignment = discretize_step(u_hat, &rotation);
        let (next, phi) = rotation_step(&assignment, u_hat)?;
        trace.push(phi);
        let converged = (phi - previous).abs() < options.tol;
        if converged || trace.len() >= options.max_iter {
            let empty_clusters = assignment.empty_clusters();
            return Ok(PodResult {
                assignment,
                rotation: next,
                iterations: trace.len(),
                objective_trace: trace,
                converged,
                empty_clusters,
            });
        }
        previous = phi;
        rotation = next;
    }
}
