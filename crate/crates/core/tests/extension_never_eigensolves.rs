//! Runs alone in its own binary: the poison switch is process-wide.

mod common;

use std::panic;

use common::blobs;
use gpod_core::gpod::{gpod_detailed, Variant};
use gpod_core::kernel_graph::{build_weight_graph, laplacian, LaplacianKind};
use gpod_core::pipeline::train;
use gpod_core::spectra::{eigensolve_count, poison_eigensolver, smallest_eigenpairs};
use gpod_core::{Execution, KernelSpec, PodOptions};

#[test]
fn extension_runs_with_a_poisoned_eigensolver() {
    let (pts, _) = blobs(&[[0.0, 0.0], [8.0, 0.0]], 60, 0.5, 1);
    let (new, _) = blobs(&[[0.0, 0.0], [8.0, 0.0]], 15, 0.5, 2);
    let kernel = KernelSpec::gaussian(0.5).unwrap();

    for variant in [Variant::RatioCut, Variant::NCut] {
        let t = train(&pts, &kernel, variant, 2, 0, PodOptions::default(), Execution::default()).unwrap();
        let model = t.extension_model(&pts, kernel, variant).unwrap();

        let before = eigensolve_count();
        let guard = poison_eigensolver();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let out = gpod_detailed(&model, &new, 9, PodOptions::default(), exec).unwrap();
            assert_eq!(out.pod.assignment.n(), 30);
        }
        assert_eq!(eigensolve_count(), before);
        drop(guard);
    }

    // The hook does trip when an eigensolve is attempted.
    let g = build_weight_graph(&pts, &kernel).unwrap();
    let before = eigensolve_count();
    let guard = poison_eigensolver();
    let attempt = panic::catch_unwind(|| {
        let lap = laplacian(&g, LaplacianKind::Unnormalized).unwrap();
        smallest_eigenpairs(&lap, 2).map(|_| ())
    });
    assert!(attempt.is_err());
    drop(guard);
    assert_eq!(eigensolve_count(), before);

    let lap = laplacian(&g, LaplacianKind::Unnormalized).unwrap();
    smallest_eigenpairs(&lap, 2).unwrap();
    assert_eq!(eigensolve_count(), before + 1);
}
