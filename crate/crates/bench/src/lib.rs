//! Fixtures shared by the benchmarks.

use deltashell::coupling::{build_kv, KVOperator};
use deltashell::geometry::{Surface, SurfaceMesh};
use deltashell::potential::{factorize, PotentialProfile};
use deltashell::{DVector, C64};

pub fn unit_sphere(n: usize) -> SurfaceMesh {
    SurfaceMesh::fibonacci(Surface::sphere(1.0).expect("unit sphere"), n).expect("mesh")
}

pub fn square_kv(tau_eta: f64, nodes: usize) -> KVOperator {
    let p = PotentialProfile::square(tau_eta / 0.25, 0.25).expect("valid well");
    build_kv(&factorize(&p), nodes).expect("K_V")
}

/// Deterministic dense test vector of length `n`.
pub fn test_vector(n: usize) -> DVector<C64> {
    DVector::from_fn(n, |k, _| C64::new((0.37 * k as f64).sin(), (0.11 * k as f64).cos()))
}
