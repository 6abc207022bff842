mod common;

use common::{covering_labels, gaussian_matrix, indicator, random_orthogonal};
use gpod_core::metrics::accuracy;
use gpod_core::pod::{
    discretize_step, init_rotation, normalize_rows, pod, pod_from_rotation, rotation_step, DiscreteAssignment,
    PodOptions, Rotation,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn embedding(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    normalize_rows(&gaussian_matrix(n, k, seed)).matrix
}

fn sq_gap(a: &DiscreteAssignment, u_hat: &DMatrix<f64>, r: &Rotation) -> f64 {
    (a.to_matrix() - u_hat * r.matrix()).norm_squared()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn objective_trace_non_decreasing(n in 2usize..120, k in 1usize..7, seed: u64) {
        let k = k.min(n);
        let r = pod(&embedding(n, k, seed), seed, PodOptions::default()).unwrap();
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "{:?}", r.objective_trace);
        }
        prop_assert_eq!(r.iterations, r.objective_trace.len());
        prop_assert!(r.iterations <= 100);
    }

    #[test]
    fn gap_identity_and_monotone_gap(n in 2usize..80, k in 1usize..6, seed: u64) {
        let k = k.min(n);
        let u_hat = embedding(n, k, seed);
        let mut rotation = init_rotation(&u_hat, seed).unwrap();
        let mut last_gap = f64::INFINITY;
        for _ in 0..30 {
            let a = discretize_step(&u_hat, &rotation);
            let (next, phi) = rotation_step(&a, &u_hat).unwrap();
            let gap2 = sq_gap(&a, &u_hat, &next);
            let identity = n as f64 + u_hat.norm_squared() - 2.0 * phi;
            prop_assert!((gap2 - identity).abs() <= 1e-10, "{} vs {}", gap2, identity);
            prop_assert!(gap2 <= last_gap + 1e-10);
            // phi is the trace of the aligned cross product.
            let tr = (a.to_matrix().transpose() * &u_hat * next.matrix()).trace();
            prop_assert!((tr - phi).abs() <= 1e-10);
            last_gap = gap2;
            rotation = next;
        }
    }

    #[test]
    fn procrustes_recovers_planted_rotation(n in 1usize..60, k in 1usize..7, seed: u64) {
        let n = n.max(k);
        let labels = covering_labels(n, k, seed);
        let a = DiscreteAssignment::new(labels.clone(), k).unwrap();
        let b = indicator(&labels, k);
        let q = random_orthogonal(k, seed ^ 0x55);
        let (r, phi) = rotation_step(&a, &(&b * &q)).unwrap();
        prop_assert!((&b - &b * &q * r.matrix()).norm() <= 1e-8);
        prop_assert!((phi - n as f64).abs() <= 1e-9);
    }

    #[test]
    fn planted_rotated_binary_recovered(n in 1usize..200, k in 1usize..7, seed: u64) {
        let n = n.max(k);
        let labels = covering_labels(n, k, seed);
        let q = random_orthogonal(k, seed.wrapping_add(17));
        let r = pod(&(indicator(&labels, k) * q), seed, PodOptions::default()).unwrap();
        prop_assert_eq!(accuracy(r.assignment.cluster_of(), &labels).unwrap(), 1.0);
        prop_assert!(r.empty_clusters.is_empty());
        prop_assert!((r.final_objective() - n as f64).abs() <= 1e-9);
    }

    // Followed step by step: once an assignment leaves the cross product
    // singular the optimal rotation is no longer unique and the two runs may
    // legitimately part ways.
    #[test]
    fn rotating_the_embedding_rotates_the_solution(n in 2usize..80, k in 1usize..6, seed: u64) {
        let k = k.min(n);
        let u_hat = embedding(n, k, seed);
        let q = random_orthogonal(k, seed ^ 0xFF);
        let moved_hat = &u_hat * &q;
        let mut ra = init_rotation(&u_hat, seed).unwrap();
        let mut rb = Rotation::new(q.transpose() * ra.matrix()).unwrap();
        for _ in 0..20 {
            let a = discretize_step(&u_hat, &ra);
            let b = discretize_step(&moved_hat, &rb);
            prop_assert_eq!(a.cluster_of(), b.cluster_of());
            let cross = a.to_matrix().transpose() * &u_hat;
            if cross.singular_values().min() < 1e-6 {
                break;
            }
            let (next_a, phi_a) = rotation_step(&a, &u_hat).unwrap();
            let (next_b, phi_b) = rotation_step(&b, &moved_hat).unwrap();
            prop_assert!((phi_a - phi_b).abs() <= 1e-9);
            prop_assert!((q.transpose() * next_a.matrix() - next_b.matrix()).amax() <= 1e-8);
            ra = next_a;
            rb = next_b;
        }
    }

    #[test]
    fn fixed_point_is_stationary(n in 1usize..60, k in 1usize..6, seed: u64) {
        let n = n.max(k);
        let labels = covering_labels(n, k, seed);
        let b = indicator(&labels, k);
        let r = pod_from_rotation(&b, Rotation::identity(k), PodOptions::default()).unwrap();
        prop_assert_eq!(r.assignment.cluster_of(), &labels[..]);
        prop_assert!(r.converged);
        prop_assert!(r.iterations <= 2);
        prop_assert!((r.rotation.matrix() - DMatrix::identity(k, k)).amax() <= 1e-12);
    }

    #[test]
    fn pod_is_deterministic(n in 2usize..60, k in 1usize..5, seed: u64) {
        let k = k.min(n);
        let u_hat = embedding(n, k, seed);
        let a = pod(&u_hat, seed, PodOptions::default()).unwrap();
        let b = pod(&u_hat, seed, PodOptions::default()).unwrap();
        prop_assert_eq!(a.assignment, b.assignment);
        prop_assert_eq!(a.objective_trace, b.objective_trace);
    }
}

/// Brute force over all 2x2 rotations and reflections on a fine angle grid.
fn grid_max_phi(m: &DMatrix<f64>) -> f64 {
    let steps = 200_000;
    let mut best = f64::NEG_INFINITY;
    for s in 0..steps {
        let t = std::f64::consts::TAU * s as f64 / steps as f64;
        let (c, sn) = (t.cos(), t.sin());
        for r in [[c, -sn, sn, c], [c, sn, sn, -c]] {
            // tr(M R) with R row-major [r0 r1; r2 r3].
            let v = m[(0, 0)] * r[0] + m[(0, 1)] * r[2] + m[(1, 0)] * r[1] + m[(1, 1)] * r[3];
            best = best.max(v);
        }
    }
    best
}

#[test]
fn rotation_step_matches_grid_search_for_two_clusters() {
    for seed in 0..20u64 {
        let n = 5 + (seed as usize * 7) % 40;
        let u_hat = embedding(n, 2, seed);
        let labels = covering_labels(n, 2, seed + 100);
        let a = DiscreteAssignment::new(labels.clone(), 2).unwrap();
        let (_, phi) = rotation_step(&a, &u_hat).unwrap();
        let m = indicator(&labels, 2).transpose() * &u_hat;
        let oracle = grid_max_phi(&m);
        assert!(phi >= oracle - 1e-12, "seed {seed}: {phi} < {oracle}");
        assert!(phi - oracle <= 1e-6 * m.norm().max(1.0), "seed {seed}: {phi} vs {oracle}");
    }
}

#[test]
fn pod_rejects_bad_options() {
    let u = embedding(10, 2, 1);
    let opts = PodOptions { tol: 1e-10, max_iter: 0 };
    assert!(pod(&u, 0, opts).is_err());
    let opts = PodOptions { tol: f64::NAN, max_iter: 10 };
    assert!(pod(&u, 0, opts).is_err());
    assert!(pod(&embedding(1, 2, 1), 0, PodOptions::default()).is_err());
}

