//! Smallest eigenpairs of the graph Laplacians (the relaxed RatioCut and
//! relaxed NCut solutions).

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_graph::{Laplacian, LaplacianKind};
use crate::simd::clear_upper_avx;

/// Degrees below this make the generalized problem ill-posed.
const MIN_DEGREE: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `U^T U = I`
    Identity,
    /// `U^T D U = I`
    Degree,
}

/// The `K` smallest eigenpairs of a Laplacian, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    eigenvalues: DVector<f64>,
    vectors: DMatrix<f64>,
    normalization: Normalization,
    laplacian_kind: LaplacianKind,
    graph_fingerprint: u64,
}

impl SpectralEmbedding {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `n x K`, column `k` is the `k`-th eigenvector.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn laplacian_kind(&self) -> LaplacianKind {
        self.laplacian_kind
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub(crate) fn graph_fingerprint(&self) -> u64 {
        self.graph_fingerprint
    }
}

static EIGENSOLVE_CALLS: AtomicUsize = AtomicUsize::new(0);
static POISONED: AtomicBool = AtomicBool::new(false);

/// Number of dense eigensolves performed by this process so far.
pub fn eigensolve_count() -> usize {
    EIGENSOLVE_CALLS.load(Ordering::SeqCst)
}

/// While the returned guard is alive, any eigensolve panics.
///
/// The flag is process-global; tests using it should live in their own test
/// binary.
#[must_use = "the eigensolver is only poisoned while the guard is alive"]
pub fn poison_eigensolver() -> EigensolverPoison {
    POISONED.store(true, Ordering::SeqCst);
    EigensolverPoison { _private: () }
}

pub struct EigensolverPoison {
    _private: (),
}

impl Drop for EigensolverPoison {
    fn drop(&mut self) {
        POISONED.store(false, Ordering::SeqCst);
    }
}

/// Dense symmetric eigensolve; returns the `k` smallest eigenpairs ascending.
fn dense_smallest(matrix: DMatrix<f64>, k: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if POISONED.load(Ordering::SeqCst) {
        panic!("eigensolver invoked while poisoned");
    }
    EIGENSOLVE_CALLS.fetch_add(1, Ordering::SeqCst);

    let n = matrix.nrows();
    let eig = Mat::<f64>::from_fn(n, n, |i, j| matrix[(i, j)])
        .self_adjoint_eigen(Side::Lower);
    clear_upper_avx();
    let eig = eig.map_err(|_| Error::EigenNonConvergence { n })?;
    let (s, u) = (eig.S(), eig.U());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    let values = DVector::from_iterator(k, order[..k].iter().map(|&i| s[i]));
    let vectors = DMatrix::from_fn(n, k, |r, c| u[(r, order[c])]);
    if values.iter().any(|v| !v.is_finite()) || vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigensolver produced non-finite output".into()));
    }
    Ok((values, vectors))
}

/// Flips each column so its largest-magnitude entry is positive (lowest index
/// wins ties).
pub fn apply_sign_convention(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Size(format!("number of eigenpairs K = {k} must be in 1..={n}")));
    }
    Ok(())
}

/// Smallest `k` eigenpairs of `L = D - W`, orthonormal columns.
pub fn smallest_eigenpairs_unnormalized(lap: &Laplacian<'_>, k: usize) -> Result<SpectralEmbedding> {
    if lap.kind() != LaplacianKind::Unnormalized {
        return Err(Error::Config("expected an unnormalized Laplacian".into()));
    }
    check_k(lap.graph().n(), k)?;
    let (eigenvalues, mut vectors) = dense_smallest(lap.materialize(), k)?;
    apply_sign_convention(&mut vectors);
    Ok(SpectralEmbedding {
        eigenvalues,
        vectors,
        normalization: Normalization::Identity,
        laplacian_kind: LaplacianKind::Unnormalized,
        graph_fingerprint: lap.graph().fingerprint(),
    })
}

/// Smallest `k` eigenpairs of `L_rw = I - D^{-1} W`.
///
/// Solved as the generalized problem `L u = lambda D u` through the symmetric
/// matrix `D^{-1/2} L D^{-1/2}`; the returned vectors satisfy `U^T D U = I`.
pub fn smallest_eigenpairs_random_walk(lap: &Laplacian<'_>, k: usize) -> Result<SpectralEmbedding> {
    if lap.kind() != LaplacianKind::RandomWalk {
        return Err(Error::Config("expected a random-walk Laplacian".into()));
    }
    let graph = lap.graph();
    check_k(graph.n(), k)?;
    let degrees = graph.degrees();
    if let Some(i) = degrees.iter().position(|&d| d < MIN_DEGREE) {
        return Err(Error::DegenerateGraph(format!(
            "vertex {i} has degree {} below {MIN_DEGREE:e}",
            degrees[i]
        )));
    }
    let (eigenvalues, sym_vectors) = dense_smallest(lap.symmetric_normalized(), k)?;
    let mut vectors = sym_vectors;
    for (i, mut row) in vectors.row_iter_mut().enumerate() {
        row /= degrees[i].sqrt();
    }
    apply_sign_convention(&mut vectors);
    Ok(SpectralEmbedding {
        eigenvalues,
        vectors,
        normalization: Normalization::Degree,
        laplacian_kind: LaplacianKind::RandomWalk,
        graph_fingerprint: graph.fingerprint(),
    })
}

/// Dispatches on the Laplacian's kind.
pub fn smallest_eigenpairs(lap: &Laplacian<'_>, k: usize) -> Result<SpectralEmbedding> {
    match lap.kind() {
        LaplacianKind::Unnormalized => smallest_eigenpairs_unnormalized(lap, k),
        LaplacianKind::RandomWalk => smallest_eigenpairs_random_walk(lap, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_graph::{build_weight_graph, laplacian, KernelSpec, WeightGraph};
    use nalgebra::dmatrix;

    fn line(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    /// Closed-form eigenvalues of a symmetric 3x3 matrix (trigonometric
    /// solution of the characteristic cubic), ascending.
    fn sym3_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut out = [e1, e2, e3];
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn connected_graph_k1_is_constant() {
        let g = build_weight_graph(&line(&[0.0, 0.4, 1.1, 1.5, 3.0]), &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let e = smallest_eigenpairs_unnormalized(&laplacian(&g, LaplacianKind::Unnormalized).unwrap(), 1).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-10);
        let c = 1.0 / 5f64.sqrt();
        for v in e.vectors().iter() {
            assert!((v - c).abs() < 1e-10);
        }

        let e = smallest_eigenpairs_random_walk(&laplacian(&g, LaplacianKind::RandomWalk).unwrap(), 1).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-10);
        let vol: f64 = g.degrees().sum();
        for v in e.vectors().iter() {
            assert!((v - 1.0 / vol.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn two_far_clusters() {
        let g = build_weight_graph(&line(&[0.0, 0.1, 0.2, 50.0, 50.1]), &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let e = smallest_eigenpairs_unnormalized(&laplacian(&g, LaplacianKind::Unnormalized).unwrap(), 2).unwrap();
        assert!(e.eigenvalues().iter().all(|&l| l.abs() < 1e-10));
        // Both cluster indicators lie in the span of the two eigenvectors.
        let u = e.vectors();
        for ind in [
            DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0]),
        ] {
            let ind = ind.normalize();
            let proj = u * (u.transpose() * &ind);
            assert!((proj - &ind).norm() < 1e-8);
        }
    }

    #[test]
    fn three_points_match_closed_form() {
        let g = build_weight_graph(&line(&[0.0, 1.0, 2.0]), &KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let lap = laplacian(&g, LaplacianKind::Unnormalized).unwrap();
        let oracle = sym3_eigenvalues(&lap.materialize());
        let e = smallest_eigenpairs_unnormalized(&lap, 3).unwrap();
        for k in 0..3 {
            assert!((e.eigenvalues()[k] - oracle[k]).abs() < 1e-10, "{k}: {} vs {}", e.eigenvalues()[k], oracle[k]);
        }
    }

    #[test]
    fn two_point_generalized_by_hand() {
        // L = [[.5,-.5],[-.5,.5]], D = I: det(L - lambda D) = (0.5 - lambda)^2 - 0.25.
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let e = smallest_eigenpairs_random_walk(&laplacian(&g, LaplacianKind::RandomWalk).unwrap(), 2).unwrap();
        assert!(e.eigenvalues()[0].abs() < 1e-14);
        assert!((e.eigenvalues()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_walk_residuals() {
        let p = dmatrix![0.1, 0.2; 0.9, 0.4; 0.5, 0.5; 0.3, 0.8; 0.7, 0.1];
        let g = build_weight_graph(&p, &KernelSpec::gaussian(0.4).unwrap()).unwrap();
        let e = smallest_eigenpairs_random_walk(&laplacian(&g, LaplacianKind::RandomWalk).unwrap(), 5).unwrap();
        let l = laplacian(&g, LaplacianKind::Unnormalized).unwrap().materialize();
        let d = DMatrix::from_diagonal(g.degrees());
        for k in 0..5 {
            let u = e.vectors().column(k);
            let r = &l * u - &d * u * e.eigenvalues()[k];
            assert!(r.norm() <= 1e-8);
        }
        let gram = e.vectors().transpose() * &d * e.vectors();
        assert!((gram - DMatrix::identity(5, 5)).amax() <= 1e-8);
    }

    #[test]
    fn k_out_of_range() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let lap = laplacian(&g, LaplacianKind::Unnormalized).unwrap();
        assert!(matches!(smallest_eigenpairs(&lap, 3), Err(Error::Size(_))));
        assert!(matches!(smallest_eigenpairs(&lap, 0), Err(Error::Size(_))));
    }

    #[test]
    fn wrong_kind_rejected() {
        let g = WeightGraph::from_raw(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let lap = laplacian(&g, LaplacianKind::RandomWalk).unwrap();
        assert!(matches!(smallest_eigenpairs_unnormalized(&lap, 1), Err(Error::Config(_))));
    }

    #[test]
    fn sign_convention() {
        let mut m = dmatrix![0.1, -0.5; -0.9, 0.5; 0.2, 0.3];
        apply_sign_convention(&mut m);
        // Second column ties at |0.5|; index 0 wins and is negative.
        assert_eq!(m, dmatrix![-0.1, 0.5; 0.9, -0.5; -0.2, -0.3]);
    }
}
