//! Discrete mean curvature flow of surfaces in C^2 = R^4.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod analysis;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod kahler;
pub mod measure;
pub mod mesh;
pub mod monotonicity;
pub mod scenario;
pub mod singularity;

pub use error::{Error, Result};
pub use mesh::{BoundaryPolicy, SurfaceMesh, Topology, Vec4};
