#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x d` points uniform in `[-1, 1]^d`.
pub fn uniform_points(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0))
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
}

/// Haar-ish random orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    gaussian_matrix(k, k, seed).qr().q()
}

/// Isotropic blobs around `centers`, `per` points each, labels by blob.
pub fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let n = centers.len() * per;
    let mut points = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for i in 0..per {
            let row = c * per + i;
            for j in 0..2 {
                let e: f64 = StandardNormal.sample(&mut r);
                points[(row, j)] = center[j] + spread * e;
            }
            labels.push(c);
        }
    }
    (points, labels)
}

/// Random labels in `0..k` that use every label at least once (`n >= k`).
pub fn covering_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

pub fn indicator(labels: &[usize], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), k, |i, c| if labels[i] == c { 1.0 } else { 0.0 })
}
