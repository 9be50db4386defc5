//! Fixture meshes shared by the benchmarks.

use kflow_core::scenario::{holomorphic_graph, icosphere};
use kflow_core::SurfaceMesh;

pub fn sphere(level: u32) -> SurfaceMesh {
    icosphere(1.0, level)
}

pub fn z2_graph(n: usize) -> SurfaceMesh {
    holomorphic_graph(&[0.0, 0.0, 1.0], 1.0, n)
}
