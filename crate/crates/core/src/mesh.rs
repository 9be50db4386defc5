//! Oriented triangle meshes immersed in R^4 and their combinatorics.
//!
//! Coordinates are ordered `(x1, y1, x2, y2)` so that `z1 = x1 + i y1` and
//! `z2 = x2 + i y2` are the standard complex coordinates of C^2.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

pub type Vec4 = Vector4<f64>;

/// Tag under which pinned boundary vertices are recorded.
pub const BOUNDARY_TAG: &str = "boundary";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryPolicy {
    Closed,
    PinnedBoundary,
}

impl BoundaryPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryPolicy::Closed => "closed",
            BoundaryPolicy::PinnedBoundary => "pinned-boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "closed" => Some(BoundaryPolicy::Closed),
            "pinned-boundary" | "pinned" => Some(BoundaryPolicy::PinnedBoundary),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec4>,
    pub faces: Vec<[usize; 3]>,
    pub boundary_policy: BoundaryPolicy,
    pub tags: BTreeMap<String, Vec<usize>>,
}

impl SurfaceMesh {
    pub fn new(
        vertices: Vec<Vec4>,
        faces: Vec<[usize; 3]>,
        boundary_policy: BoundaryPolicy,
    ) -> Self {
        Self {
            vertices,
            faces,
            boundary_policy,
            tags: BTreeMap::new(),
        }
    }

    /// Builds a mesh with pinned boundary, tagging every vertex on a boundary edge.
    pub fn with_pinned_boundary(vertices: Vec<Vec4>, faces: Vec<[usize; 3]>) -> Self {
        let mut mesh = Self::new(vertices, faces, BoundaryPolicy::PinnedBoundary);
        mesh.retag_boundary();
        mesh
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Recomputes the boundary tag from the current connectivity.
    pub fn retag_boundary(&mut self) {
        let topo = Topology::build(self);
        let boundary: Vec<usize> = (0..self.n_vertices())
            .filter(|&v| topo.boundary_vertex[v])
            .collect();
        if boundary.is_empty() {
            self.tags.remove(BOUNDARY_TAG);
        } else {
            self.tags.insert(BOUNDARY_TAG.to_string(), boundary);
        }
    }

    /// Per-vertex pinned mask (tagged boundary vertices under the pinned policy).
    pub fn pinned_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        if self.boundary_policy == BoundaryPolicy::PinnedBoundary {
            if let Some(b) = self.tags.get(BOUNDARY_TAG) {
                for &v in b {
                    if v < mask.len() {
                        mask[v] = true;
                    }
                }
            }
        }
        mask
    }

    pub fn face_corners(&self, f: usize) -> [Vec4; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [p0, p1, p2] = self.face_corners(f);
        triangle_area(&(p1 - p0), &(p2 - p0))
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.n_faces()).map(|f| self.face_area(f)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    pub fn face_barycenter(&self, f: usize) -> Vec4 {
        let [p0, p1, p2] = self.face_corners(f);
        (p0 + p1 + p2) / 3.0
    }

    /// Oriented orthonormal frame `(e1, e2)` of a face: `e1` along the first
    /// edge, `e2` completing it towards the third corner.
    pub fn face_frame(&self, f: usize) -> Option<[Vec4; 2]> {
        let [p0, p1, p2] = self.face_corners(f);
        orthonormal_frame(&(p1 - p0), &(p2 - p0))
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_scale(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        Topology::build(self)
            .edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let l = self.edge_lengths();
        if l.is_empty() {
            0.0
        } else {
            l.iter().sum::<f64>() / l.len() as f64
        }
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edge_lengths()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies `x -> scale * (x - center)` to every vertex.
    pub fn rescaled(&self, scale: f64, center: &Vec4) -> SurfaceMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = (*v - center) * scale;
        }
        out
    }

    pub fn mapped(&self, f: impl Fn(&Vec4) -> Vec4) -> SurfaceMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = f(v);
        }
        out
    }

    /// Extracts the faces in `subset` as a standalone mesh. Returns the mesh and
    /// the map from new vertex index to original vertex index.
    pub fn submesh(&self, subset: &[usize]) -> (SurfaceMesh, Vec<usize>) {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut original = Vec::new();
        let mut faces = Vec::with_capacity(subset.len());
        for &f in subset {
            let mut tri = [0usize; 3];
            for (slot, &v) in tri.iter_mut().zip(self.faces[f].iter()) {
                *slot = *remap.entry(v).or_insert_with(|| {
                    original.push(v);
                    original.len() - 1
                });
            }
            faces.push(tri);
        }
        let vertices = original.iter().map(|&v| self.vertices[v]).collect();
        let mut mesh = SurfaceMesh::new(vertices, faces, self.boundary_policy);
        let topo = Topology::build(&mesh);
        if topo.boundary_vertex.iter().any(|&b| b) {
            mesh.boundary_policy = BoundaryPolicy::PinnedBoundary;
            mesh.retag_boundary();
        }
        (mesh, original)
    }

    /// Disjoint union; the second mesh's indices are shifted.
    pub fn disjoint_union(&self, other: &SurfaceMesh) -> SurfaceMesh {
        let shift = self.n_vertices();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + shift, f[1] + shift, f[2] + shift]),
        );
        let policy = if self.boundary_policy == BoundaryPolicy::Closed
            && other.boundary_policy == BoundaryPolicy::Closed
        {
            BoundaryPolicy::Closed
        } else {
            BoundaryPolicy::PinnedBoundary
        };
        let mut mesh = SurfaceMesh::new(vertices, faces, policy);
        for (name, list) in &self.tags {
            mesh.tags
                .entry(name.clone())
                .or_default()
                .extend(list.iter().copied());
        }
        for (name, list) in &other.tags {
            mesh.tags
                .entry(name.clone())
                .or_default()
                .extend(list.iter().map(|v| v + shift));
        }
        mesh
    }
}

pub fn triangle_area(a: &Vec4, b: &Vec4) -> f64 {
    let g = a.norm_squared() * b.norm_squared() - a.dot(b).powi(2);
    0.5 * g.max(0.0).sqrt()
}

/// Gram-Schmidt on two vectors; `None` when they are (numerically) dependent.
pub fn orthonormal_frame(a: &Vec4, b: &Vec4) -> Option<[Vec4; 2]> {
    let na = a.norm();
    if na == 0.0 || !na.is_finite() {
        return None;
    }
    let e1 = a / na;
    let r = b - e1 * e1.dot(b);
    let nr = r.norm();
    if nr <= 1e-14 * b.norm().max(na) || !nr.is_finite() {
        return None;
    }
    Some([e1, r / nr])
}

/// Mesh connectivity derived from the face list.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Undirected edges `[a, b]` with `a < b`.
    pub edges: Vec<[usize; 2]>,
    pub edge_faces: Vec<Vec<usize>>,
    pub vertex_faces: Vec<Vec<usize>>,
    /// Sorted 1-ring neighbours.
    pub vertex_neighbors: Vec<Vec<usize>>,
    pub boundary_vertex: Vec<bool>,
    edge_index: HashMap<(usize, usize), usize>,
}

impl Topology {
    pub fn build(mesh: &SurfaceMesh) -> Self {
        let nv = mesh.n_vertices();
        let mut edges = Vec::new();
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        let mut edge_index = HashMap::with_capacity(mesh.n_faces() * 3 / 2 + 1);
        let mut vertex_faces = vec![Vec::new(); nv];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a < nv {
                    vertex_faces[a].push(fi);
                }
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[e].push(fi);
            }
        }
        let mut vertex_neighbors = vec![Vec::new(); nv];
        let mut boundary_vertex = vec![false; nv];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if a < nv && b < nv {
                vertex_neighbors[a].push(b);
                vertex_neighbors[b].push(a);
                if edge_faces[e].len() == 1 {
                    boundary_vertex[a] = true;
                    boundary_vertex[b] = true;
                }
            }
        }
        for n in &mut vertex_neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Self {
            edges,
            edge_faces,
            vertex_faces,
            vertex_neighbors,
            boundary_vertex,
            edge_index,
        }
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_faces[e].len() == 1
    }

    /// Faces sharing an edge with `f`.
    pub fn face_neighbors(&self, mesh: &SurfaceMesh, f: usize) -> Vec<usize> {
        let tri = mesh.faces[f];
        let mut out = Vec::with_capacity(3);
        for k in 0..3 {
            if let Some(e) = self.edge_id(tri[k], tri[(k + 1) % 3]) {
                out.extend(self.edge_faces[e].iter().copied().filter(|&g| g != f));
            }
        }
        out
    }

    /// Vertices within `rings` edge hops of `v`, excluding `v`, in BFS order.
    pub fn k_ring(&self, v: usize, rings: usize) -> Vec<usize> {
        let mut seen = vec![v];
        let mut frontier = vec![v];
        for _ in 0..rings {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &self.vertex_neighbors[u] {
                    if !seen.contains(&w) {
                        seen.push(w);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        seen.remove(0);
        seen
    }
}

/// A violated mesh invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    IndexOutOfRange { face: usize },
    RepeatedIndex { face: usize },
    NonFiniteVertex { vertex: usize },
    NonManifoldEdge { edge: [usize; 2], faces: usize },
    BoundaryOnClosedMesh { edge: [usize; 2] },
    UntaggedBoundary { vertex: usize },
    InconsistentOrientation { edge: [usize; 2] },
    AreaFloor { face: usize, area: f64, floor: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::IndexOutOfRange { face } => {
                write!(f, "face {face}: vertex index out of range")
            }
            Violation::RepeatedIndex { face } => write!(f, "face {face}: repeated vertex index"),
            Violation::NonFiniteVertex { vertex } => {
                write!(f, "vertex {vertex}: non-finite position")
            }
            Violation::NonManifoldEdge { edge, faces } => {
                write!(f, "edge {edge:?}: edge with {faces} incident faces")
            }
            Violation::BoundaryOnClosedMesh { edge } => {
                write!(f, "edge {edge:?}: boundary edge on a closed mesh")
            }
            Violation::UntaggedBoundary { vertex } => {
                write!(f, "vertex {vertex}: boundary vertex not tagged")
            }
            Violation::InconsistentOrientation { edge } => {
                write!(f, "edge {edge:?}: inconsistent face orientation")
            }
            Violation::AreaFloor { face, area, floor } => {
                write!(
                    f,
                    "face {face}: area {area:.3e} below area floor {floor:.3e}"
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationConfig {
    /// Area floor relative to the squared bounding-box diagonal.
    pub area_floor_factor: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            area_floor_factor: 1e-14,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeshReport {
    pub violations: Vec<Violation>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn validate_mesh(mesh: &SurfaceMesh) -> MeshReport {
    validate_mesh_with(mesh, &ValidationConfig::default())
}

pub fn validate_mesh_with(mesh: &SurfaceMesh, cfg: &ValidationConfig) -> MeshReport {
    let mut violations = Vec::new();
    let nv = mesh.n_vertices();
    for (v, p) in mesh.vertices.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            violations.push(Violation::NonFiniteVertex { vertex: v });
        }
    }
    let mut structurally_ok = true;
    for (fi, f) in mesh.faces.iter().enumerate() {
        if f.iter().any(|&v| v >= nv) {
            violations.push(Violation::IndexOutOfRange { face: fi });
            structurally_ok = false;
        } else if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
            violations.push(Violation::RepeatedIndex { face: fi });
            structurally_ok = false;
        }
    }
    if !structurally_ok {
        return MeshReport { violations };
    }

    let topo = Topology::build(mesh);
    let pinned = mesh.pinned_mask();
    let mut reported_untagged = vec![false; nv];
    for (e, faces) in topo.edge_faces.iter().enumerate() {
        let edge = topo.edges[e];
        match faces.len() {
            1 => match mesh.boundary_policy {
                BoundaryPolicy::Closed => violations.push(Violation::BoundaryOnClosedMesh { edge }),
                BoundaryPolicy::PinnedBoundary => {
                    for &v in &edge {
                        if !pinned[v] && !reported_untagged[v] {
                            reported_untagged[v] = true;
                            violations.push(Violation::UntaggedBoundary { vertex: v });
                        }
                    }
                }
            },
            2 => {
                let d0 = directed(&mesh.faces[faces[0]], edge);
                let d1 = directed(&mesh.faces[faces[1]], edge);
                if d0 == d1 {
                    violations.push(Violation::InconsistentOrientation { edge });
                }
            }
            n => violations.push(Violation::NonManifoldEdge { edge, faces: n }),
        }
    }

    let floor = cfg.area_floor_factor * mesh.bbox_scale().powi(2);
    for f in 0..mesh.n_faces() {
        let area = mesh.face_area(f);
        if !(area >= floor) || area == 0.0 {
            violations.push(Violation::AreaFloor {
                face: f,
                area,
                floor,
            });
        }
    }
    MeshReport { violations }
}

/// True when the face traverses `edge[0] -> edge[1]`.
fn directed(face: &[usize; 3], edge: [usize; 2]) -> bool {
    (0..3).any(|k| face[k] == edge[0] && face[(k + 1) % 3] == edge[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::icosahedron;

    #[test]
    fn icosahedron_is_valid() {
        let m = icosahedron();
        let r = validate_mesh(&m);
        assert!(r.is_valid(), "{}", r.summary());
        assert_eq!(m.n_faces(), 20);
    }

    #[test]
    fn duplicated_face_is_non_manifold() {
        let mut m = icosahedron();
        m.faces.push(m.faces[0]);
        let r = validate_mesh(&m);
        assert!(r
            .violations
            .iter()
            .any(|v| v.to_string().contains("edge with 3 incident faces")));
    }

    #[test]
    fn zero_area_face_hits_floor() {
        let mut m = icosahedron();
        let [a, b, _] = m.faces[0];
        let mid = (m.vertices[a] + m.vertices[b]) / 2.0;
        m.vertices.push(mid);
        let n = m.vertices.len() - 1;
        // A collinear sliver glued onto a new open mesh keeps the check focused.
        let sliver = SurfaceMesh::new(
            vec![m.vertices[a], m.vertices[b], m.vertices[n]],
            vec![[0, 1, 2]],
            BoundaryPolicy::Closed,
        );
        let r = validate_mesh(&sliver);
        assert!(r
            .violations
            .iter()
            .any(|v| v.to_string().contains("area floor")));
    }

    #[test]
    fn flipped_face_is_inconsistent() {
        let mut m = icosahedron();
        m.faces[3].swap(0, 1);
        let r = validate_mesh(&m);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::InconsistentOrientation { .. })));
    }

    #[test]
    fn open_mesh_requires_tags() {
        let verts = vec![
            Vec4::new(0.0, 0.0, 0.0, 0.0),
            Vec4::new(1.0, 0.0, 0.0, 0.0),
            Vec4::new(0.0, 1.0, 0.0, 0.0),
        ];
        let closed = SurfaceMesh::new(verts.clone(), vec![[0, 1, 2]], BoundaryPolicy::Closed);
        assert!(!validate_mesh(&closed).is_valid());
        let pinned = SurfaceMesh::with_pinned_boundary(verts, vec![[0, 1, 2]]);
        assert!(validate_mesh(&pinned).is_valid());
    }

    #[test]
    fn k_ring_sizes_on_icosahedron() {
        let m = icosahedron();
        let t = Topology::build(&m);
        assert_eq!(t.k_ring(0, 1).len(), 5);
        assert_eq!(t.k_ring(0, 2).len(), 10);
    }
}
