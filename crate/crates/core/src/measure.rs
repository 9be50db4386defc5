//! Region integrals and metric diagnostics: total curvature, intrinsic
//! distance, components in a ball, isoperimetric and area ratios, and the
//! total-curvature quantization estimate.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_defects, GeometryField};
use crate::mesh::{triangle_area, SurfaceMesh, Topology, Vec4};

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    All,
    Ball { center: Vec4, radius: f64 },
    Faces(Vec<usize>),
}

impl Region {
    pub fn ball(center: Vec4, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!(
                "region radius {radius} must be positive"
            )));
        }
        Ok(Region::Ball { center, radius })
    }

    pub fn vertex_mask(&self, mesh: &SurfaceMesh) -> Vec<bool> {
        match self {
            Region::All => vec![true; mesh.n_vertices()],
            Region::Ball { center, radius } => mesh
                .vertices
                .iter()
                .map(|p| (p - center).norm() <= *radius)
                .collect(),
            Region::Faces(fs) => {
                let mut m = vec![false; mesh.n_vertices()];
                for &f in fs {
                    for &v in &mesh.faces[f] {
                        m[v] = true;
                    }
                }
                m
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalCurvature {
    pub int_a2: f64,
    /// `-int K dmu`, negative on positively curved surfaces.
    pub neg_int_k: f64,
    pub int_k: f64,
    /// `int |A|^2 / (-2 int K)`, which tends to 1 on minimal surfaces.
    pub minimal_ratio: Option<f64>,
    /// Set when the region contains no vertex.
    pub empty: bool,
}

/// Vertex-lumped `int |A|^2 dmu` and `-int K dmu` over a region.
pub fn total_curvature(
    mesh: &SurfaceMesh,
    geom: &GeometryField,
    region: &Region,
) -> TotalCurvature {
    let mask = region.vertex_mask(mesh);
    let mut int_a2 = 0.0;
    let mut int_k = 0.0;
    let mut count = 0;
    for v in (0..mesh.n_vertices()).filter(|&v| mask[v]) {
        int_a2 += geom.a2[v] * geom.dual_area[v];
        int_k += geom.gauss[v] * geom.dual_area[v];
        count += 1;
    }
    TotalCurvature {
        int_a2,
        neg_int_k: -int_k,
        int_k,
        minimal_ratio: (int_k.abs() > 0.0).then(|| int_a2 / (-2.0 * int_k)),
        empty: count == 0,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge-path distances from `source` to every vertex (infinite when unreachable).
pub fn edge_distances(mesh: &SurfaceMesh, topo: &Topology, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; mesh.n_vertices()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem(0.0, source)]);
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &w in &topo.vertex_neighbors[v] {
            let nd = d + (mesh.vertices[w] - mesh.vertices[v]).norm();
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(HeapItem(nd, w));
            }
        }
    }
    dist
}

/// Shortest edge-path length between two vertices, an upper bound on the geodesic distance.
pub fn intrinsic_distance(mesh: &SurfaceMesh, i: usize, j: usize) -> Result<f64> {
    let n = mesh.n_vertices();
    if i >= n || j >= n {
        return Err(Error::Domain(format!(
            "vertex index out of range ({i}, {j}; n = {n})"
        )));
    }
    let topo = Topology::build(mesh);
    let d = edge_distances(mesh, &topo, i)[j];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Disconnected(i, j))
    }
}

/// Edge-connected components of a face subset, each sorted, ordered by smallest vertex index.
pub fn face_components(mesh: &SurfaceMesh, topo: &Topology, faces: &[usize]) -> Vec<Vec<usize>> {
    let mut member = vec![false; mesh.n_faces()];
    for &f in faces {
        member[f] = true;
    }
    let mut seen = vec![false; mesh.n_faces()];
    let mut comps = Vec::new();
    for &f0 in faces {
        if seen[f0] {
            continue;
        }
        seen[f0] = true;
        let mut comp = vec![f0];
        let mut queue = VecDeque::from([f0]);
        while let Some(f) = queue.pop_front() {
            for g in topo.face_neighbors(mesh, f) {
                if member[g] && !seen[g] {
                    seen[g] = true;
                    comp.push(g);
                    queue.push_back(g);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    let min_vertex = |c: &Vec<usize>| {
        c.iter()
            .flat_map(|&f| mesh.faces[f])
            .min()
            .unwrap_or(usize::MAX)
    };
    comps.sort_by_key(min_vertex);
    comps
}

/// Components of the faces with barycentre in `B_R(center)` that meet `B_{R/2}(center)`.
pub fn components_in_ball(
    mesh: &SurfaceMesh,
    center: &Vec4,
    radius: f64,
) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius {radius} must be positive")));
    }
    let topo = Topology::build(mesh);
    let inside: Vec<usize> = (0..mesh.n_faces())
        .filter(|&f| (mesh.face_barycenter(f) - center).norm() <= radius)
        .collect();
    let half = 0.5 * radius;
    let comps = face_components(mesh, &topo, &inside)
        .into_iter()
        .filter(|c| {
            c.iter().any(|&f| {
                (mesh.face_barycenter(f) - center).norm() <= half
                    || mesh.faces[f]
                        .iter()
                        .any(|&v| (mesh.vertices[v] - center).norm() <= half)
            })
        })
        .collect();
    Ok(comps)
}

/// Edges of a face subset that border exactly one face of the subset.
pub fn subset_boundary_edges(
    mesh: &SurfaceMesh,
    topo: &Topology,
    faces: &[usize],
) -> Vec<[usize; 2]> {
    let mut member = vec![false; mesh.n_faces()];
    for &f in faces {
        member[f] = true;
    }
    topo.edges
        .iter()
        .enumerate()
        .filter(|(e, _)| topo.edge_faces[*e].iter().filter(|&&f| member[f]).count() == 1)
        .map(|(_, &ed)| ed)
        .collect()
}

/// `Area(A) / Length(dA)^2` for a face subset.
pub fn isoperimetric_ratio(mesh: &SurfaceMesh, faces: &[usize]) -> Result<f64> {
    let topo = Topology::build(mesh);
    let boundary = subset_boundary_edges(mesh, &topo, faces);
    if boundary.is_empty() {
        return Err(Error::ClosedSubdomain);
    }
    let area: f64 = faces.iter().map(|&f| mesh.face_area(f)).sum();
    let length: f64 = boundary
        .iter()
        .map(|&[a, b]| (mesh.vertices[a] - mesh.vertices[b]).norm())
        .sum();
    Ok(area / (length * length))
}

fn clipped_area(p: [Vec4; 3], center: &Vec4, radius: f64, depth: u32) -> f64 {
    let inside = p.map(|q| (q - center).norm() <= radius);
    if inside.iter().all(|&b| b) {
        return triangle_area(&(p[1] - p[0]), &(p[2] - p[0]));
    }
    // Distance from the centre to the triangle is at least the distance to
    // the circumscribing ball of its vertices.
    let bary = (p[0] + p[1] + p[2]) / 3.0;
    let spread = p.iter().map(|q| (q - bary).norm()).fold(0.0, f64::max);
    if (bary - center).norm() - spread > radius {
        return 0.0;
    }
    if depth == 0 {
        let a = triangle_area(&(p[1] - p[0]), &(p[2] - p[0]));
        return if (bary - center).norm() <= radius {
            a
        } else {
            0.0
        };
    }
    let m01 = (p[0] + p[1]) * 0.5;
    let m12 = (p[1] + p[2]) * 0.5;
    let m20 = (p[2] + p[0]) * 0.5;
    [
        [p[0], m01, m20],
        [m01, p[1], m12],
        [m20, m12, p[2]],
        [m01, m12, m20],
    ]
    .into_iter()
    .map(|t| clipped_area(t, center, radius, depth - 1))
    .sum()
}

/// Area of the part of the mesh in a closed ball.
pub fn area_in_ball(mesh: &SurfaceMesh, center: &Vec4, radius: f64) -> f64 {
    (0..mesh.n_faces())
        .map(|f| clipped_area(mesh.face_corners(f), center, radius, 5))
        .sum()
}

/// `Area(Sigma cap B_R(center)) / R^2`.
pub fn area_ratio(mesh: &SurfaceMesh, center: &Vec4, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius {radius} must be positive")));
    }
    Ok(area_in_ball(mesh, center, radius) / (radius * radius))
}

/// Gauss-Bonnet reading of a truncated piece.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedCurvature {
    pub radius: f64,
    pub euler_characteristic: i64,
    /// Sum of boundary turning `pi - (angle sum)` over boundary vertices.
    pub boundary_turning: f64,
    /// `-int K` from `2 pi chi - turning`.
    pub neg_int_k: f64,
}

/// `-int K` on the faces with barycentre in `B_R(center)`, through the
/// discrete Gauss-Bonnet identity on the truncated piece.
pub fn truncated_curvature(mesh: &SurfaceMesh, center: &Vec4, radius: f64) -> TruncatedCurvature {
    let faces: Vec<usize> = (0..mesh.n_faces())
        .filter(|&f| (mesh.face_barycenter(f) - center).norm() <= radius)
        .collect();
    let (sub, _) = mesh.submesh(&faces);
    let topo = Topology::build(&sub);
    let chi = sub.n_vertices() as i64 - topo.edges.len() as i64 + sub.n_faces() as i64;
    let defects = angle_defects(&sub);
    let turning: f64 = (0..sub.n_vertices())
        .filter(|&v| topo.boundary_vertex[v])
        .map(|v| defects[v] - PI)
        .sum();
    TruncatedCurvature {
        radius,
        euler_characteristic: chi,
        boundary_turning: turning,
        neg_int_k: turning - 2.0 * PI * chi as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    /// `N(R) = -int_{B_R} K / (2 pi)` per truncation radius.
    pub samples: Vec<(f64, f64)>,
    pub n_hat: f64,
    pub nearest_integer: i64,
    pub distance: f64,
    /// "aitken" or "last" when the tail is not resolvable.
    pub method: String,
}

/// Extrapolates `N(R)` over a geometric radius sequence `R_max / 4, R_max / 2, R_max`.
///
/// With tails of the form `c R^{-p}` and ratio-2 radii, the Aitken delta-squared
/// combination recovers the limit exactly. Flat or already converged sequences
/// fall back to the largest-radius value.
pub fn quantization(mesh: &SurfaceMesh, center: &Vec4, r_max: f64) -> Quantization {
    let radii = [r_max / 4.0, r_max / 2.0, r_max];
    let samples: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            (
                r,
                truncated_curvature(mesh, center, r).neg_int_k / (2.0 * PI),
            )
        })
        .collect();
    let (a0, a1, a2) = (samples[0].1, samples[1].1, samples[2].1);
    let d1 = a1 - a0;
    let d2 = a2 - a1;
    let denom = d2 - d1;
    // Aitken is only meaningful for a monotone, contracting sequence.
    let aitken = d1 * d2 > 0.0 && d2.abs() < d1.abs() && denom.abs() > 1e-12;
    let (n_hat, method) = if aitken {
        (a2 - d2 * d2 / denom, "aitken")
    } else {
        (a2, "last")
    };
    let nearest = n_hat.round() as i64;
    Quantization {
        samples,
        n_hat,
        nearest_integer: nearest,
        distance: (n_hat - nearest as f64).abs(),
        method: method.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geometry;
    use crate::scenario;

    #[test]
    fn distances() {
        let m = scenario::plane_patch(1.0, 4);
        let topo = Topology::build(&m);
        let [a, b] = topo.edges[0];
        let d = intrinsic_distance(&m, a, b).unwrap();
        assert!((d - (m.vertices[a] - m.vertices[b]).norm()).abs() < 1e-15);
        let two = scenario::two_planes(1.0, 1.0, 2);
        assert!(matches!(
            intrinsic_distance(&two, 0, two.n_vertices() - 1),
            Err(Error::Disconnected(..))
        ));
    }

    #[test]
    fn ball_components() {
        let sphere = scenario::icosphere(1.0, 2);
        assert_eq!(
            components_in_ball(&sphere, &Vec4::zeros(), 2.0)
                .unwrap()
                .len(),
            1
        );
        let two = scenario::two_planes(0.2, 1.0, 8);
        assert_eq!(
            components_in_ball(&two, &Vec4::zeros(), 0.8).unwrap().len(),
            2
        );
        let far = Vec4::new(0.0, 0.0, 5.0, 0.0);
        assert!(components_in_ball(&two, &far, 1.0).unwrap().is_empty());
    }

    #[test]
    fn isoperimetry() {
        let sq = scenario::plane_patch(0.5, 6);
        let all: Vec<usize> = (0..sq.n_faces()).collect();
        assert!((isoperimetric_ratio(&sq, &all).unwrap() - 1.0 / 16.0).abs() < 1e-12);
        let sphere = scenario::icosphere(1.0, 1);
        let all: Vec<usize> = (0..sphere.n_faces()).collect();
        assert!(matches!(
            isoperimetric_ratio(&sphere, &all),
            Err(Error::ClosedSubdomain)
        ));
    }

    #[test]
    fn flat_total_curvature_vanishes() {
        let m = scenario::plane_patch(1.0, 8);
        let tc = total_curvature(&m, &geometry(&m), &Region::All);
        assert!(tc.int_a2.abs() < 1e-20 && tc.neg_int_k.abs() < 1e-20);
        let empty = Region::ball(Vec4::new(9.0, 0.0, 0.0, 0.0), 1.0).unwrap();
        assert!(total_curvature(&m, &geometry(&m), &empty).empty);
    }

    #[test]
    fn empty_ball_area_ratio() {
        let m = scenario::plane_patch(1.0, 4);
        assert_eq!(
            area_ratio(&m, &Vec4::new(0.0, 0.0, 3.0, 0.0), 1.0).unwrap(),
            0.0
        );
    }
}
