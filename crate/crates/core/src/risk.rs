//! Empirical error of a (relaxed) solution and the discretization gap
//! between a discrete assignment and its rotated continuous embedding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::kernel_graph::WeightGraph;
use crate::pod::{DiscreteAssignment, Rotation};
use crate::spectra::SpectralEmbedding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub empirical_error: f64,
    /// `(1/(n(n-1))) Σ_k lambda_k`.
    pub eigen_sum_scaled: f64,
    /// `‖Ü - Û R‖_F`.
    pub discretization_gap: f64,
    /// Column norms of `Ü - Û R`.
    pub per_cluster_gap: Vec<f64>,
}

/// `(1/(2n(n-1))) Σ_k Σ_{i,j} W_ij (u_ki - u_kj)^2` with `W_ij = raw_ij / n`.
///
/// The diagonal terms vanish, so the full double sum is taken.
pub fn empirical_error(graph: &WeightGraph, u: &DMatrix<f64>) -> Result<f64> {
    empirical_error_with(graph, u, Execution::default())
}

pub fn empirical_error_with(graph: &WeightGraph, u: &DMatrix<f64>, exec: Execution) -> Result<f64> {
    let n = graph.n();
    if u.nrows() != n {
        return Err(Error::Size(format!("U has {} rows but the graph has {n} vertices", u.nrows())));
    }
    let k = u.ncols();
    let raw = graph.raw();
    let rows: Vec<f64> = map_indexed(exec, n, |i| {
        let mut acc = 0.0;
        for j in 0..n {
            let w = raw[(i, j)];
            let mut diff2 = 0.0;
            for c in 0..k {
                let d = u[(i, c)] - u[(j, c)];
                diff2 += d * d;
            }
            acc += w * diff2;
        }
        acc
    });
    let total: f64 = rows.iter().sum();
    let nf = n as f64;
    Ok(graph.scale() * total / (2.0 * nf * (nf - 1.0)))
}

/// Both sides of the identity between the empirical error of the relaxed
/// optimum and the scaled sum of the `K` smallest eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralIdentity {
    pub fhat: f64,
    pub eig_sum: f64,
    pub rel_err: f64,
}

pub fn spectral_identity_check(embedding: &SpectralEmbedding, graph: &WeightGraph) -> Result<SpectralIdentity> {
    if embedding.n() != graph.n() || embedding.graph_fingerprint() != graph.fingerprint() {
        return Err(Error::Config("embedding was not computed from this graph".into()));
    }
    let fhat = empirical_error(graph, embedding.vectors())?;
    let eig_sum = eigen_sum_scaled(embedding.eigenvalues(), graph.n());
    let rel_err = (fhat - eig_sum).abs() / eig_sum.abs().max(1e-300);
    Ok(SpectralIdentity { fhat, eig_sum, rel_err })
}

pub fn eigen_sum_scaled(eigenvalues: &DVector<f64>, n: usize) -> f64 {
    let nf = n as f64;
    eigenvalues.sum() / (nf * (nf - 1.0))
}

/// `‖Ü - Û R‖_F` and its per-column norms.
pub fn discretization_gap(
    assignment: &DiscreteAssignment,
    u_hat: &DMatrix<f64>,
    rotation: &Rotation,
) -> Result<(f64, Vec<f64>)> {
    let (n, k) = u_hat.shape();
    if assignment.n() != n || assignment.k() != k || rotation.k() != k {
        return Err(Error::Size(format!(
            "assignment {}x{}, embedding {n}x{k}, rotation {r}x{r} are inconsistent",
            assignment.n(),
            assignment.k(),
            r = rotation.k(),
        )));
    }
    Ok(gap_of(&assignment.to_matrix(), &(u_hat * rotation.matrix())))
}

fn gap_of(discrete: &DMatrix<f64>, rotated: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let diff = discrete - rotated;
    let per: Vec<f64> = diff.column_iter().map(|c| c.norm()).collect();
    let total = per.iter().map(|v| v * v).sum::<f64>().sqrt();
    (total, per)
}

/// Assembles the full report for a training run.
pub fn risk_report(
    graph: &WeightGraph,
    embedding: &SpectralEmbedding,
    assignment: &DiscreteAssignment,
    u_hat: &DMatrix<f64>,
    rotation: &Rotation,
) -> Result<RiskReport> {
    let identity = spectral_identity_check(embedding, graph)?;
    let (discretization_gap, per_cluster_gap) = discretization_gap(assignment, u_hat, rotation)?;
    Ok(RiskReport {
        empirical_error: identity.fhat,
        eigen_sum_scaled: identity.eig_sum,
        discretization_gap,
        per_cluster_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn constant_columns_have_zero_error() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 0.3, 0.2; 0.3, 1.0, 0.5; 0.2, 0.5, 1.0]).unwrap();
        let u = dmatrix![2.0, -1.0; 2.0, -1.0; 2.0, -1.0];
        assert_eq!(empirical_error(&g, &u).unwrap(), 0.0);
    }

    #[test]
    fn block_indicators_have_zero_error() {
        let g = WeightGraph::from_raw(dmatrix![
            1.0, 0.4, 0.0, 0.0;
            0.4, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 0.9;
            0.0, 0.0, 0.9, 1.0
        ])
        .unwrap();
        let u = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0; 0.0, 1.0];
        assert_eq!(empirical_error(&g, &u).unwrap(), 0.0);
    }

    #[test]
    fn two_point_by_hand() {
        // (1/(2*2*1)) * [W_01 + W_10] * 1 with W_ij = 1/2.
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let f = empirical_error(&g, &dmatrix![1.0; 0.0]).unwrap();
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        assert!(matches!(empirical_error(&g, &dmatrix![1.0; 0.0; 1.0]), Err(Error::Size(_))));
    }

    #[test]
    fn gap_examples() {
        let (g, per) = gap_of(&dmatrix![1.0, 0.0; 0.0, 1.0], &dmatrix![0.8, 0.6; 0.6, 0.8]);
        assert!((g - 0.8f64.sqrt()).abs() < 1e-15);
        assert!((per[0] - 0.4f64.sqrt()).abs() < 1e-15);

        let a = DiscreteAssignment::new(vec![0, 1, 1], 2).unwrap();
        let (g, per) = discretization_gap(&a, &a.to_matrix(), &Rotation::identity(2)).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(per, vec![0.0, 0.0]);
    }

    #[test]
    fn gap_size_mismatch() {
        let a = DiscreteAssignment::new(vec![0, 1], 2).unwrap();
        assert!(discretization_gap(&a, &dmatrix![1.0, 0.0], &Rotation::identity(2)).is_err());
    }
}
