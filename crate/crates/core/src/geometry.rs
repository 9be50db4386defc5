//! Discrete differential geometry of triangle meshes in R^4.
//!
//! Mean curvature is the cotangent Laplacian of the position map over mixed
//! Voronoi dual areas. The second fundamental form comes from a least-squares
//! fit of the two normal coordinates as polynomials in tangent coordinates
//! over the 2-ring stencil; the tangent plane is re-estimated from the fitted
//! gradient a few times so the final fit is taken in its own tangent plane.
//! Gauss curvature is reported twice: from the Gauss equation
//! `K = (|H|^2 - |A|^2) / 2` and from the angle defect.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mesh::{orthonormal_frame, SurfaceMesh, Topology, Vec4};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitOrder {
    Quadratic,
    Cubic,
}

impl FitOrder {
    fn n_terms(self) -> usize {
        match self {
            FitOrder::Quadratic => 5,
            FitOrder::Cubic => 9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub fit_order: FitOrder,
    /// Tangent-plane re-estimation passes before the final fit.
    pub frame_iterations: usize,
    /// Relative singular-value cutoff below which a stencil counts as rank deficient.
    pub rank_tol: f64,
    pub stencil_rings: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            fit_order: FitOrder::Cubic,
            frame_iterations: 2,
            rank_tol: 1e-9,
            stencil_rings: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexStatus {
    Regular,
    /// Pinned boundary vertex; excluded from fitting.
    Boundary,
    /// Rank-deficient stencil; values imputed from the 1-ring.
    FitFailed,
}

#[derive(Clone, Debug)]
pub struct GeometryField {
    pub dual_area: Vec<f64>,
    /// Cotangent-Laplacian mean curvature vector.
    pub mean_curvature: Vec<Vec4>,
    /// Mean curvature vector read from the fitted second fundamental form.
    pub fitted_mean_curvature: Vec<Vec4>,
    /// `|A|^2`.
    pub a2: Vec<f64>,
    /// Gauss-equation channel `(|H|^2 - |A|^2) / 2` with the cotangent `H`.
    pub gauss: Vec<f64>,
    /// Angle defect over dual area; zero on boundary vertices.
    pub gauss_defect: Vec<f64>,
    pub tangent: Vec<[Vec4; 2]>,
    pub normal: Vec<[Vec4; 2]>,
    pub status: Vec<VertexStatus>,
    pub face_area: Vec<f64>,
    pub face_frame: Vec<Option<[Vec4; 2]>>,
}

impl GeometryField {
    pub fn n_vertices(&self) -> usize {
        self.dual_area.len()
    }

    pub fn is_regular(&self, v: usize) -> bool {
        self.status[v] == VertexStatus::Regular
    }

    pub fn regular_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vertices()).filter(move |&v| self.is_regular(v))
    }

    pub fn h_norm(&self, v: usize) -> f64 {
        self.mean_curvature[v].norm()
    }

    /// Largest `|A|^2` over regular vertices (0 when there are none).
    pub fn max_a2(&self) -> f64 {
        self.regular_vertices()
            .map(|v| self.a2[v])
            .fold(0.0, f64::max)
    }

    pub fn max_h(&self) -> f64 {
        self.regular_vertices()
            .map(|v| self.h_norm(v))
            .fold(0.0, f64::max)
    }

    /// Projection of `x` onto the fitted normal plane at `v`.
    pub fn normal_part(&self, v: usize, x: &Vec4) -> Vec4 {
        let [n1, n2] = self.normal[v];
        n1 * n1.dot(x) + n2 * n2.dot(x)
    }
}

/// Per-face cotangents of the corner angles, in corner order.
pub fn corner_cotangents(p: &[Vec4; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        let dot = a.dot(&b);
        let cross = (a.norm_squared() * b.norm_squared() - dot * dot)
            .max(0.0)
            .sqrt();
        out[k] = dot / cross;
    }
    out
}

pub fn corner_angles(p: &[Vec4; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3] - p[k];
        let b = p[(k + 2) % 3] - p[k];
        let c = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
        out[k] = c.acos();
    }
    out
}

/// Mixed Voronoi dual areas. Each face distributes exactly its own area.
pub fn mixed_areas(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut area = vec![0.0; mesh.n_vertices()];
    for f in 0..mesh.n_faces() {
        let p = mesh.face_corners(f);
        let a = mesh.face_area(f);
        let idx = mesh.faces[f];
        let ang = corner_angles(&p);
        let obtuse = ang.iter().position(|&t| t > PI / 2.0);
        match obtuse {
            Some(o) => {
                for k in 0..3 {
                    area[idx[k]] += if k == o { a / 2.0 } else { a / 4.0 };
                }
            }
            None => {
                let cot = corner_cotangents(&p);
                for k in 0..3 {
                    let i = (k + 1) % 3;
                    let j = (k + 2) % 3;
                    let eij = (p[j] - p[i]).norm_squared();
                    // Edge opposite corner k is split between its two endpoints.
                    area[idx[i]] += eij * cot[k] / 8.0;
                    area[idx[j]] += eij * cot[k] / 8.0;
                }
            }
        }
    }
    area
}

/// Cotangent Laplacian `(1 / (2 dA_i)) sum_j (cot a + cot b) (f_j - f_i)` of a
/// vertex function with values in a vector space.
pub fn cotan_laplacian<T>(mesh: &SurfaceMesh, dual_area: &[f64], values: &[T], zero: T) -> Vec<T>
where
    T: Copy
        + std::ops::Add<Output = T>
        + std::ops::Sub<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    let mut acc = vec![zero; mesh.n_vertices()];
    for f in 0..mesh.n_faces() {
        let p = mesh.face_corners(f);
        let idx = mesh.faces[f];
        let cot = corner_cotangents(&p);
        for k in 0..3 {
            let i = idx[(k + 1) % 3];
            let j = idx[(k + 2) % 3];
            let w = cot[k];
            acc[i] = acc[i] + (values[j] - values[i]) * w;
            acc[j] = acc[j] + (values[i] - values[j]) * w;
        }
    }
    acc.iter()
        .zip(dual_area)
        .map(|(&a, &da)| a * (0.5 / da))
        .collect()
}

/// Cotangent mean curvature vectors (Laplacian of the position map).
pub fn cotan_mean_curvature(mesh: &SurfaceMesh, dual_area: &[f64]) -> Vec<Vec4> {
    cotan_laplacian(mesh, dual_area, &mesh.vertices, Vec4::zeros())
}

/// Angle defect `2 pi - sum of corner angles` per vertex.
pub fn angle_defects(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut sum = vec![0.0; mesh.n_vertices()];
    for f in 0..mesh.n_faces() {
        let ang = corner_angles(&mesh.face_corners(f));
        for k in 0..3 {
            sum[mesh.faces[f][k]] += ang[k];
        }
    }
    sum.into_iter().map(|s| 2.0 * PI - s).collect()
}

/// Oriented tangent-plane estimate from the area-weighted face projectors.
pub fn projector_frame(
    mesh: &SurfaceMesh,
    topo: &Topology,
    v: usize,
) -> Option<([Vec4; 2], [Vec4; 2])> {
    let mut proj = Matrix4::zeros();
    let mut bivector = Matrix4::zeros();
    for &f in &topo.vertex_faces[v] {
        if let Some([e1, e2]) = mesh.face_frame(f) {
            let a = mesh.face_area(f);
            proj += (e1 * e1.transpose() + e2 * e2.transpose()) * a;
            bivector += (e1 * e2.transpose() - e2 * e1.transpose()) * a;
        }
    }
    if proj.norm() == 0.0 {
        return None;
    }
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let col = |k: usize| -> Vec4 { eig.eigenvectors.column(order[k]).into_owned() };
    let (t1, mut t2) = (col(0), col(1));
    // Orient (t1, t2) like the faces: the bivector pairing must be positive.
    if t1.dot(&(bivector * t2)) < 0.0 {
        t2 = -t2;
    }
    Some(([t1, t2], [col(2), col(3)]))
}

struct LocalFit {
    tangent: [Vec4; 2],
    normal: [Vec4; 2],
    a2: f64,
    h: Vec4,
}

fn monomials(u1: f64, u2: f64, order: FitOrder, row: &mut [f64]) {
    row[0] = u1;
    row[1] = u2;
    row[2] = u1 * u1;
    row[3] = u1 * u2;
    row[4] = u2 * u2;
    if order == FitOrder::Cubic {
        row[5] = u1 * u1 * u1;
        row[6] = u1 * u1 * u2;
        row[7] = u1 * u2 * u2;
        row[8] = u2 * u2 * u2;
    }
}

/// Coefficients of the normal-coordinate polynomials for the stencil, in
/// normalized units. Returns `(coefficients (terms x 2), length scale)`.
fn solve_fit(
    offsets: &[Vec4],
    tangent: &[Vec4; 2],
    normal: &[Vec4; 2],
    order: FitOrder,
    rank_tol: f64,
) -> Option<(DMatrix<f64>, f64)> {
    let m = order.n_terms();
    let n = offsets.len();
    if n < m {
        return None;
    }
    let uv: Vec<[f64; 4]> = offsets
        .iter()
        .map(|d| {
            [
                d.dot(&tangent[0]),
                d.dot(&tangent[1]),
                d.dot(&normal[0]),
                d.dot(&normal[1]),
            ]
        })
        .collect();
    let scale = (uv.iter().map(|r| r[0] * r[0] + r[1] * r[1]).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) {
        return None;
    }
    let mut design = DMatrix::zeros(n, m);
    let mut rhs = DMatrix::zeros(n, 2);
    let mut row = [0.0; 9];
    for (r, q) in uv.iter().enumerate() {
        monomials(q[0] / scale, q[1] / scale, order, &mut row);
        for c in 0..m {
            design[(r, c)] = row[c];
        }
        rhs[(r, 0)] = q[2] / scale;
        rhs[(r, 1)] = q[3] / scale;
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > rank_tol * smax) {
        return None;
    }
    let coef = svd.solve(&rhs, 0.0).ok()?;
    Some((coef, scale))
}

fn complete_normal(tangent: &[Vec4; 2], guess: &[Vec4; 2]) -> Option<[Vec4; 2]> {
    let strip = |x: &Vec4| x - tangent[0] * tangent[0].dot(x) - tangent[1] * tangent[1].dot(x);
    orthonormal_frame(&strip(&guess[0]), &strip(&guess[1]))
}

fn fit_vertex(
    center: &Vec4,
    stencil: &[Vec4],
    init_tangent: [Vec4; 2],
    init_normal: [Vec4; 2],
    order: FitOrder,
    cfg: &GeometryConfig,
) -> Option<LocalFit> {
    let offsets: Vec<Vec4> = stencil.iter().map(|p| p - center).collect();
    let mut tangent = init_tangent;
    let mut normal = init_normal;
    for pass in 0..=cfg.frame_iterations {
        let (coef, scale) = solve_fit(&offsets, &tangent, &normal, order, cfg.rank_tol)?;
        // Gradient of the fitted normal graph: grad[alpha][k] = d f_alpha / d u_k.
        let grad = Matrix2::new(coef[(0, 0)], coef[(1, 0)], coef[(0, 1)], coef[(1, 1)]);
        let lift = |k: usize| tangent[k] + normal[0] * grad[(0, k)] + normal[1] * grad[(1, k)];
        let f1 = lift(0);
        let f2 = lift(1);
        if pass < cfg.frame_iterations {
            let t = orthonormal_frame(&f1, &f2)?;
            normal = complete_normal(&t, &normal)?;
            tangent = t;
            continue;
        }
        // Second derivatives f_alpha,ij in physical units.
        let hess = |a: usize| {
            Matrix2::new(
                2.0 * coef[(2, a)],
                coef[(3, a)],
                coef[(3, a)],
                2.0 * coef[(4, a)],
            ) / scale
        };
        let second = |i: usize, j: usize| normal[0] * hess(0)[(i, j)] + normal[1] * hess(1)[(i, j)];
        let metric = Matrix2::new(f1.dot(&f1), f1.dot(&f2), f2.dot(&f1), f2.dot(&f2));
        let inv = metric.try_inverse()?;
        let basis = [f1, f2];
        // Normal projection of F_ij removes its component along span{F_1, F_2}.
        let project = |x: Vec4| {
            let c = inv * Vector2::new(basis[0].dot(&x), basis[1].dot(&x));
            x - basis[0] * c[0] - basis[1] * c[1]
        };
        let mut a = [[Vec4::zeros(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                a[i][j] = project(second(i, j));
            }
        }
        let mut a2 = 0.0;
        let mut h = Vec4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                h += a[i][j] * inv[(i, j)];
                for k in 0..2 {
                    for l in 0..2 {
                        a2 += inv[(i, k)] * inv[(j, l)] * a[i][j].dot(&a[k][l]);
                    }
                }
            }
        }
        let t = orthonormal_frame(&f1, &f2)?;
        let nrm = complete_normal(&t, &normal)?;
        return Some(LocalFit {
            tangent: t,
            normal: nrm,
            a2: a2.max(0.0),
            h,
        });
    }
    None
}

pub fn geometry(mesh: &SurfaceMesh) -> GeometryField {
    geometry_with(mesh, &GeometryConfig::default())
}

pub fn geometry_with(mesh: &SurfaceMesh, cfg: &GeometryConfig) -> GeometryField {
    let topo = Topology::build(mesh);
    geometry_with_topology(mesh, &topo, cfg)
}

pub fn geometry_with_topology(
    mesh: &SurfaceMesh,
    topo: &Topology,
    cfg: &GeometryConfig,
) -> GeometryField {
    let nv = mesh.n_vertices();
    let dual_area = mixed_areas(mesh);
    let mut mean_curvature = cotan_mean_curvature(mesh, &dual_area);
    let defects = angle_defects(mesh);
    let pinned = mesh.pinned_mask();

    let fits: Vec<(
        VertexStatus,
        Option<([Vec4; 2], [Vec4; 2])>,
        Option<LocalFit>,
    )> = (0..nv)
        .into_par_iter()
        .map(|v| {
            let frame = projector_frame(mesh, topo, v);
            if pinned[v] || topo.boundary_vertex[v] {
                return (VertexStatus::Boundary, frame, None);
            }
            let Some((t, n)) = frame else {
                return (VertexStatus::FitFailed, None, None);
            };
            let stencil: Vec<Vec4> = topo
                .k_ring(v, cfg.stencil_rings)
                .into_iter()
                .map(|w| mesh.vertices[w])
                .collect();
            let fit =
                fit_vertex(&mesh.vertices[v], &stencil, t, n, cfg.fit_order, cfg).or_else(|| {
                    (cfg.fit_order == FitOrder::Cubic)
                        .then(|| {
                            fit_vertex(&mesh.vertices[v], &stencil, t, n, FitOrder::Quadratic, cfg)
                        })
                        .flatten()
                });
            match fit {
                Some(f) => (VertexStatus::Regular, frame, Some(f)),
                None => (VertexStatus::FitFailed, frame, None),
            }
        })
        .collect();

    let mut status = Vec::with_capacity(nv);
    let mut tangent = Vec::with_capacity(nv);
    let mut normal = Vec::with_capacity(nv);
    let mut a2 = vec![0.0; nv];
    let mut fitted_mean_curvature = vec![Vec4::zeros(); nv];
    let fallback_frame = [Vec4::x(), Vec4::y()];
    let fallback_normal = [Vec4::z(), Vec4::w()];
    for (v, (st, frame, fit)) in fits.into_iter().enumerate() {
        status.push(st);
        match fit {
            Some(f) => {
                tangent.push(f.tangent);
                normal.push(f.normal);
                a2[v] = f.a2;
                fitted_mean_curvature[v] = f.h;
            }
            None => {
                let (t, n) = frame.unwrap_or((fallback_frame, fallback_normal));
                tangent.push(t);
                normal.push(n);
            }
        }
    }

    let known: Vec<bool> = status.iter().map(|s| *s == VertexStatus::Regular).collect();
    impute(topo, &known, &mut a2);
    impute(topo, &known, &mut fitted_mean_curvature);
    impute(topo, &known, &mut mean_curvature);

    let gauss: Vec<f64> = (0..nv)
        .map(|v| 0.5 * (mean_curvature[v].norm_squared() - a2[v]))
        .collect();
    let mut gauss_defect: Vec<f64> = (0..nv)
        .map(|v| {
            if topo.boundary_vertex[v] {
                0.0
            } else {
                defects[v] / dual_area[v]
            }
        })
        .collect();
    let interior: Vec<bool> = (0..nv).map(|v| !topo.boundary_vertex[v]).collect();
    impute(topo, &interior, &mut gauss_defect);

    let face_area = mesh.face_areas();
    let face_frame = (0..mesh.n_faces()).map(|f| mesh.face_frame(f)).collect();
    GeometryField {
        dual_area,
        mean_curvature,
        fitted_mean_curvature,
        a2,
        gauss,
        gauss_defect,
        tangent,
        normal,
        status,
        face_area,
        face_frame,
    }
}

/// Fills values at vertices with `known[v] == false` by averaging known
/// 1-ring neighbours, sweeping outward until nothing changes.
pub fn impute<T>(topo: &Topology, known: &[bool], values: &mut [T])
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let mut have = known.to_vec();
    loop {
        let mut updates = Vec::new();
        for v in 0..values.len() {
            if have[v] {
                continue;
            }
            let mut acc: Option<T> = None;
            let mut count = 0usize;
            for &w in &topo.vertex_neighbors[v] {
                if have[w] {
                    acc = Some(match acc {
                        Some(a) => a + values[w],
                        None => values[w],
                    });
                    count += 1;
                }
            }
            if let Some(a) = acc {
                updates.push((v, a * (1.0 / count as f64)));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (v, val) in updates {
            values[v] = val;
            have[v] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    #[test]
    fn flat_grid_has_zero_curvature() {
        let mesh = scenario::plane_patch(2.0, 16);
        let g = geometry(&mesh);
        for v in g.regular_vertices() {
            assert!(g.h_norm(v) < 1e-12, "H at {v}: {}", g.h_norm(v));
            assert!(g.a2[v] < 1e-12);
            assert!(g.gauss[v].abs() < 1e-12);
            assert!(g.gauss_defect[v].abs() < 1e-10);
        }
        assert!(g.regular_vertices().count() > 100);
    }

    #[test]
    fn dual_areas_partition_total_area() {
        let mesh = scenario::icosphere(1.0, 3);
        let g = geometry(&mesh);
        let total: f64 = g.face_area.iter().sum();
        let lumped: f64 = g.dual_area.iter().sum();
        assert!(((total - lumped) / total).abs() < 1e-12);
        assert!(g.dual_area.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn frames_are_orthonormal() {
        let mesh = scenario::clifford_torus(1.0, 24);
        let g = geometry(&mesh);
        for v in 0..g.n_vertices() {
            let [t1, t2] = g.tangent[v];
            let [n1, n2] = g.normal[v];
            let b = [t1, t2, n1, n2];
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((b[i].dot(&b[j]) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sphere_curvatures_are_close() {
        let r = 2.0;
        let mesh = scenario::icosphere(r, 4);
        let g = geometry(&mesh);
        for v in 0..g.n_vertices() {
            assert!(
                (g.h_norm(v) - 2.0 / r).abs() < 2e-2 / r,
                "H {}",
                g.h_norm(v)
            );
            assert!(
                (g.a2[v] - 2.0 / (r * r)).abs() < 5e-2 / (r * r),
                "A2 {}",
                g.a2[v]
            );
            assert!((g.gauss_defect[v] - 1.0 / (r * r)).abs() < 2e-2 / (r * r));
        }
    }

    #[test]
    fn cauchy_schwarz_h_vs_a() {
        let mesh = scenario::holomorphic_graph(&[0.0, 0.0, 1.0], 1.5, 24);
        let g = geometry(&mesh);
        for v in g.regular_vertices() {
            let h2 = g.fitted_mean_curvature[v].norm_squared();
            assert!(h2 <= 2.0 * g.a2[v] + 1e-9);
        }
    }

    #[test]
    fn impute_fills_from_neighbours() {
        let mesh = scenario::plane_patch(1.0, 4);
        let topo = Topology::build(&mesh);
        let mut vals: Vec<f64> = (0..mesh.n_vertices()).map(|v| v as f64).collect();
        let mut known = vec![true; vals.len()];
        known[12] = false;
        vals[12] = f64::NAN;
        impute(&topo, &known, &mut vals);
        assert!(vals[12].is_finite());
    }
}
