//! Complex structures on R^4, Kahler and Lagrangian angles.
//!
//! A [`ComplexStructure`] carries the endomorphism `J` and the Kahler form
//! `omega` as separate matrices with `omega(u, v) = u^T W v`. For the standard
//! structure `W = J^T`, i.e. `omega(u, v) = <J u, v>`. The rotated structure
//! `J*` is not orthogonal, and its Kahler form is built from its holomorphic
//! coordinates instead (see [`rotate_structure`]).

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Complex, Matrix2, Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryField;
use crate::mesh::{SurfaceMesh, Topology, Vec4};

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexStructure {
    pub j: Matrix4<f64>,
    pub omega: Matrix4<f64>,
    pub label: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureDiagnostics {
    /// `max |J^2 + I|`.
    pub square_error: f64,
    /// `max |J^T J - I|`; nonzero for the rotated structures.
    pub orthogonality_error: f64,
    /// `max |W + W^T|`.
    pub antisymmetry_error: f64,
    /// `max |J^T W J - W|` (omega is J-invariant).
    pub invariance_error: f64,
}

impl ComplexStructure {
    pub fn omega(&self, u: &Vec4, v: &Vec4) -> f64 {
        u.dot(&(self.omega * v))
    }

    pub fn apply(&self, u: &Vec4) -> Vec4 {
        self.j * u
    }

    pub fn diagnostics(&self) -> StructureDiagnostics {
        let id = Matrix4::identity();
        let amax = |m: Matrix4<f64>| m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        StructureDiagnostics {
            square_error: amax(self.j * self.j + id),
            orthogonality_error: amax(self.j.transpose() * self.j - id),
            antisymmetry_error: amax(self.omega + self.omega.transpose()),
            invariance_error: amax(self.j.transpose() * self.omega * self.j - self.omega),
        }
    }
}

/// Real and imaginary parts of a complex 2-form, `Omega(u, v) = u^T (Re + i Im) v`.
#[derive(Clone, Debug, PartialEq)]
pub struct HolomorphicVolumeForm {
    pub re: Matrix4<f64>,
    pub im: Matrix4<f64>,
}

impl HolomorphicVolumeForm {
    pub fn eval(&self, u: &Vec4, v: &Vec4) -> Complex<f64> {
        Complex::new(u.dot(&(self.re * v)), u.dot(&(self.im * v)))
    }
}

fn bilinear_matrix(f: impl Fn(&Vec4, &Vec4) -> f64) -> Matrix4<f64> {
    let e = |k: usize| {
        let mut v = Vec4::zeros();
        v[k] = 1.0;
        v
    };
    Matrix4::from_fn(|r, c| f(&e(r), &e(c)))
}

/// `J0` with `omega0 = dx1 ^ dy1 + dx2 ^ dy2` and `Omega0 = dz1 ^ dz2`.
pub fn standard_structure() -> (ComplexStructure, HolomorphicVolumeForm) {
    #[rustfmt::skip]
    let j = Matrix4::new(
        0.0, -1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, -1.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let cs = ComplexStructure {
        j,
        omega: j.transpose(),
        label: "standard".to_string(),
    };
    let dz = |u: &Vec4| (Complex::new(u[0], u[1]), Complex::new(u[2], u[3]));
    let omega = |u: &Vec4, v: &Vec4| {
        let (u1, u2) = dz(u);
        let (v1, v2) = dz(v);
        u1 * v2 - u2 * v1
    };
    let form = HolomorphicVolumeForm {
        re: bilinear_matrix(|u, v| omega(u, v).re),
        im: bilinear_matrix(|u, v| omega(u, v).im),
    };
    (cs, form)
}

/// The rotated structure `J*(dx1) = t dy1`, `J*(dy1) = -dx1 / t`,
/// `J*(dx2) = dy2 / t`, `J*(dy2) = -t dx2` for `t` in `(0, 1]`.
///
/// Its holomorphic coordinates are `z1* = x1 + i y1 / t`, `z2* = x2 / t + i y2`,
/// whose Kahler form is `omega0 / t`. A plane of constant Kahler angle `t` under
/// `omega0` therefore has `omega*|_plane = dmu` for the Euclidean area.
/// `J*^2 = -I` holds exactly; `J*` is orthogonal only at `t = 1`.
pub fn rotate_structure(theta0: f64) -> Result<ComplexStructure> {
    if !(theta0 > 0.0 && theta0 <= 1.0) {
        return Err(Error::Domain(format!("theta0 = {theta0} outside (0, 1]")));
    }
    let t = theta0;
    let mut j = Matrix4::zeros();
    j[(1, 0)] = t;
    j[(0, 1)] = -1.0 / t;
    j[(3, 2)] = 1.0 / t;
    j[(2, 3)] = -t;
    let (std, _) = standard_structure();
    Ok(ComplexStructure {
        j,
        omega: std.omega / t,
        label: format!("rotated(theta0={theta0})"),
    })
}

/// Kahler angle cosine of one face, `omega(e1, e2)` on its oriented frame.
pub fn face_cos_alpha(mesh: &SurfaceMesh, f: usize, j: &ComplexStructure) -> Option<f64> {
    mesh.face_frame(f).map(|[e1, e2]| j.omega(&e1, &e2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleConfig {
    /// Below this value of `sin^2 alpha` the angle gradient is not evaluated.
    pub sin_floor: f64,
    pub eps_sym: f64,
    pub eps_lag: f64,
    /// Largest `|cos alpha|` at which the Lagrangian angle is still evaluated.
    pub beta_cos_tol: f64,
    /// Adjacent faces whose phases differ by more than this are branch-flagged.
    pub branch_tol: f64,
}

impl Default for AngleConfig {
    fn default() -> Self {
        Self {
            sin_floor: 1e-6,
            eps_sym: 1e-3,
            eps_lag: 1e-6,
            beta_cos_tol: 0.1,
            branch_tol: PI / 2.0,
        }
    }
}

/// Kahler-angle channel of an angle field.
#[derive(Clone, Debug)]
pub struct AngleField {
    pub face_cos: Vec<f64>,
    /// Faces whose frame is degenerate; their value comes from neighbours.
    pub face_flag: Vec<bool>,
    /// Area-weighted average of incident face values.
    pub vertex_cos_avg: Vec<f64>,
    /// `omega(t1, t2)` on the fitted vertex tangent frame (the average on
    /// non-regular vertices). This is the channel diagnostics use.
    pub vertex_cos: Vec<f64>,
    pub grad_cos: Vec<Vec4>,
    /// `|grad alpha|^2 = |grad cos alpha|^2 / (1 - cos^2 alpha)` where
    /// `sin^2 alpha > sin_floor`.
    pub grad_alpha_sq: Vec<Option<f64>>,
    pub regular: Vec<bool>,
}

impl AngleField {
    pub fn min_cos(&self) -> f64 {
        self.regular_values().fold(f64::INFINITY, f64::min)
    }

    pub fn max_cos(&self) -> f64 {
        self.regular_values().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_cos(&self) -> f64 {
        self.regular_values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn regular_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.vertex_cos
            .iter()
            .zip(&self.regular)
            .filter(|(_, &r)| r)
            .map(|(&c, _)| c)
    }

    pub fn min_face_cos(&self) -> f64 {
        self.face_cos.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Gradient of the piecewise-linear interpolant of `values` on face `f`.
pub fn face_gradient(mesh: &SurfaceMesh, f: usize, values: [f64; 3]) -> Option<Vec4> {
    let [p0, p1, p2] = mesh.face_corners(f);
    let a = p1 - p0;
    let b = p2 - p0;
    let gram = Matrix2::new(a.dot(&a), a.dot(&b), a.dot(&b), b.dot(&b));
    let rhs = Vector2::new(values[1] - values[0], values[2] - values[0]);
    let c = gram.try_inverse()? * rhs;
    Some(a * c[0] + b * c[1])
}

/// Area-weighted vertex average of per-face gradients of a vertex function.
pub fn vertex_gradient(mesh: &SurfaceMesh, topo: &Topology, values: &[f64]) -> Vec<Vec4> {
    let mut grads = vec![Vec4::zeros(); mesh.n_vertices()];
    let face_grads: Vec<Option<Vec4>> = (0..mesh.n_faces())
        .map(|f| {
            let [i, j, k] = mesh.faces[f];
            face_gradient(mesh, f, [values[i], values[j], values[k]])
        })
        .collect();
    for (v, g) in grads.iter_mut().enumerate() {
        let mut wsum = 0.0;
        for &f in &topo.vertex_faces[v] {
            if let Some(fg) = face_grads[f] {
                let a = mesh.face_area(f);
                *g += fg * a;
                wsum += a;
            }
        }
        if wsum > 0.0 {
            *g /= wsum;
        }
    }
    grads
}

pub fn kahler_angle(mesh: &SurfaceMesh, geom: &GeometryField, j: &ComplexStructure) -> AngleField {
    kahler_angle_with(mesh, geom, j, &AngleConfig::default())
}

pub fn kahler_angle_with(
    mesh: &SurfaceMesh,
    geom: &GeometryField,
    j: &ComplexStructure,
    cfg: &AngleConfig,
) -> AngleField {
    let topo = Topology::build(mesh);
    let nf = mesh.n_faces();
    let mut face_cos = vec![0.0; nf];
    let mut face_flag = vec![false; nf];
    for f in 0..nf {
        match geom.face_frame[f] {
            Some([e1, e2]) => face_cos[f] = j.omega(&e1, &e2),
            None => face_flag[f] = true,
        }
    }
    // Degenerate faces borrow the mean of their unflagged neighbours.
    for f in 0..nf {
        if face_flag[f] {
            let nb: Vec<f64> = topo
                .face_neighbors(mesh, f)
                .into_iter()
                .filter(|&g| !face_flag[g])
                .map(|g| face_cos[g])
                .collect();
            if !nb.is_empty() {
                face_cos[f] = nb.iter().sum::<f64>() / nb.len() as f64;
            }
        }
    }
    let nv = mesh.n_vertices();
    let mut vertex_cos_avg = vec![0.0; nv];
    for v in 0..nv {
        let mut wsum = 0.0;
        for &f in &topo.vertex_faces[v] {
            vertex_cos_avg[v] += geom.face_area[f] * face_cos[f];
            wsum += geom.face_area[f];
        }
        if wsum > 0.0 {
            vertex_cos_avg[v] /= wsum;
        }
    }
    let regular: Vec<bool> = (0..nv).map(|v| geom.is_regular(v)).collect();
    let vertex_cos: Vec<f64> = (0..nv)
        .map(|v| {
            if regular[v] {
                let [t1, t2] = geom.tangent[v];
                j.omega(&t1, &t2)
            } else {
                vertex_cos_avg[v]
            }
        })
        .collect();
    let grad_cos = vertex_gradient(mesh, &topo, &vertex_cos);
    let grad_alpha_sq = (0..nv)
        .map(|v| {
            let s2 = 1.0 - vertex_cos[v] * vertex_cos[v];
            (s2 > cfg.sin_floor).then(|| grad_cos[v].norm_squared() / s2)
        })
        .collect();
    AngleField {
        face_cos,
        face_flag,
        vertex_cos_avg,
        vertex_cos,
        grad_cos,
        grad_alpha_sq,
        regular,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Classification {
    Symplectic { eps0: f64 },
    Lagrangian,
    AlmostCalibrated { delta0: f64 },
    None,
}

/// Symplectic if `min cos alpha >= eps_sym`; Lagrangian if `max |cos alpha| <= eps_lag`,
/// refined to almost calibrated when `min cos beta > 0`.
pub fn classify(
    mesh: &SurfaceMesh,
    angles: &AngleField,
    omega: &HolomorphicVolumeForm,
    cfg: &AngleConfig,
) -> Classification {
    let min_cos = angles.min_cos();
    if min_cos >= cfg.eps_sym {
        return Classification::Symplectic { eps0: min_cos };
    }
    if angles.max_abs_cos() <= cfg.eps_lag {
        let lag_cfg = AngleConfig {
            beta_cos_tol: cfg.beta_cos_tol.max(cfg.eps_lag),
            ..*cfg
        };
        if let Ok(beta) = lagrangian_angle_with(mesh, omega, &lag_cfg) {
            let min_cos_beta = beta
                .face_beta
                .iter()
                .map(|b| b.cos())
                .fold(f64::INFINITY, f64::min);
            if beta.is_exact() && min_cos_beta > 0.0 {
                return Classification::AlmostCalibrated {
                    delta0: min_cos_beta,
                };
            }
        }
        return Classification::Lagrangian;
    }
    Classification::None
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Lagrangian-angle channel: `Omega|_face = e^{i beta} dmu`.
#[derive(Clone, Debug)]
pub struct LagrangianAngle {
    /// Principal value of `arg Omega(e1, e2)` per face.
    pub face_beta_raw: Vec<f64>,
    /// Values unwrapped along a spanning tree of the face-adjacency graph.
    pub face_beta: Vec<f64>,
    pub branch_flag: Vec<bool>,
    /// Vertex values consistent with the unwrapped face values.
    pub vertex_beta: Vec<f64>,
    /// Winding numbers of beta around the tree-cotree generator loops.
    pub generator_windings: Vec<i64>,
    /// `max | |Omega(e1, e2)| - 1 |` over faces.
    pub modulus_defect: f64,
}

impl LagrangianAngle {
    /// True when beta has no winding around any generator (exact mean curvature form).
    pub fn is_exact(&self) -> bool {
        self.generator_windings.iter().all(|&w| w == 0)
    }

    pub fn spread(&self) -> f64 {
        let lo = self
            .vertex_beta
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .vertex_beta
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    pub fn range(&self) -> (f64, f64) {
        let lo = self
            .vertex_beta
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .vertex_beta
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Winding of beta along a closed sequence of adjacent faces.
    pub fn winding_along(&self, faces: &[usize]) -> f64 {
        let n = faces.len();
        let total: f64 = (0..n)
            .map(|k| {
                wrap_angle(self.face_beta_raw[faces[(k + 1) % n]] - self.face_beta_raw[faces[k]])
            })
            .sum();
        total / (2.0 * PI)
    }
}

pub fn lagrangian_angle(
    mesh: &SurfaceMesh,
    omega: &HolomorphicVolumeForm,
) -> Result<LagrangianAngle> {
    lagrangian_angle_with(mesh, omega, &AngleConfig::default())
}

pub fn lagrangian_angle_with(
    mesh: &SurfaceMesh,
    omega: &HolomorphicVolumeForm,
    cfg: &AngleConfig,
) -> Result<LagrangianAngle> {
    let nf = mesh.n_faces();
    let mut raw = vec![0.0; nf];
    let mut modulus_defect: f64 = 0.0;
    for f in 0..nf {
        let [e1, e2] = mesh
            .face_frame(f)
            .ok_or_else(|| Error::DegenerateMesh(format!("face {f} has no frame")))?;
        let z = omega.eval(&e1, &e2);
        modulus_defect = modulus_defect.max((z.norm() - 1.0).abs());
        raw[f] = z.arg();
    }
    // |Omega(e1,e2)|^2 + cos^2 alpha = 1 for unit planes in C^2.
    let max_cos = (1.0 - (1.0 - modulus_defect).powi(2)).max(0.0).sqrt();
    if max_cos > cfg.beta_cos_tol {
        return Err(Error::AngleUndefined { max_cos });
    }

    let topo = Topology::build(mesh);
    let face_adj: Vec<Vec<usize>> = (0..nf).map(|f| topo.face_neighbors(mesh, f)).collect();

    // Spanning-forest unwrap of the face phases.
    let mut beta = vec![f64::NAN; nf];
    let mut branch_flag = vec![false; nf];
    let mut visited = vec![false; nf];
    for root in 0..nf {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        beta[root] = raw[root];
        let mut queue = VecDeque::from([root]);
        while let Some(f) = queue.pop_front() {
            for &g in &face_adj[f] {
                if visited[g] {
                    continue;
                }
                visited[g] = true;
                let d = wrap_angle(raw[g] - raw[f]);
                if d.abs() > cfg.branch_tol {
                    branch_flag[g] = true;
                }
                beta[g] = beta[f] + d;
                queue.push_back(g);
            }
        }
    }

    let generator_windings = generator_windings(mesh, &topo, &raw);

    // Vertex values: first incident face's unwrapped value plus the circular
    // mean of the wrapped offsets of all incident faces.
    let nv = mesh.n_vertices();
    let mut vertex_beta = vec![0.0; nv];
    for v in 0..nv {
        let faces = &topo.vertex_faces[v];
        if faces.is_empty() {
            continue;
        }
        let base = beta[faces[0]];
        let mut s = Complex::new(0.0, 0.0);
        for &f in faces {
            let a = mesh.face_area(f);
            s += Complex::from_polar(a, wrap_angle(raw[f] - raw[faces[0]]));
        }
        vertex_beta[v] = base + s.arg();
    }

    Ok(LagrangianAngle {
        face_beta_raw: raw,
        face_beta: beta,
        branch_flag,
        vertex_beta,
        generator_windings,
        modulus_defect,
    })
}

/// Windings of the face phase around the loops closed by the edges left
/// over by a tree-cotree decomposition.
fn generator_windings(mesh: &SurfaceMesh, topo: &Topology, raw: &[f64]) -> Vec<i64> {
    let nv = mesh.n_vertices();
    let ne = topo.edges.len();
    // Primal BFS spanning tree.
    let mut in_primal = vec![false; ne];
    let mut seen = vec![false; nv];
    for root in 0..nv {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &topo.vertex_neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    if let Some(e) = topo.edge_id(v, w) {
                        in_primal[e] = true;
                    }
                    queue.push_back(w);
                }
            }
        }
    }
    // Dual spanning tree through interior edges not in the primal tree.
    let nf = mesh.n_faces();
    let mut dual_parent = vec![usize::MAX; nf];
    let mut dual_depth = vec![0usize; nf];
    let mut reached = vec![false; nf];
    let mut in_dual = vec![false; ne];
    let crossing = |f: usize| -> Vec<(usize, usize)> {
        let tri = mesh.faces[f];
        (0..3)
            .filter_map(|k| {
                let e = topo.edge_id(tri[k], tri[(k + 1) % 3])?;
                if in_primal[e] || topo.edge_faces[e].len() != 2 {
                    return None;
                }
                let g = topo.edge_faces[e].iter().copied().find(|&g| g != f)?;
                Some((e, g))
            })
            .collect()
    };
    for root in 0..nf {
        if reached[root] {
            continue;
        }
        reached[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(f) = queue.pop_front() {
            for (e, g) in crossing(f) {
                if !reached[g] {
                    reached[g] = true;
                    in_dual[e] = true;
                    dual_parent[g] = f;
                    dual_depth[g] = dual_depth[f] + 1;
                    queue.push_back(g);
                }
            }
        }
    }
    let mut windings = Vec::new();
    for e in 0..ne {
        if in_primal[e] || in_dual[e] || topo.edge_faces[e].len() != 2 {
            continue;
        }
        let (f, g) = (topo.edge_faces[e][0], topo.edge_faces[e][1]);
        // Dual-tree path f -> lca <- g, closed by the crossing g -> f.
        let (mut a, mut b) = (f, g);
        let mut up = vec![a];
        let mut down = vec![b];
        while a != b {
            if dual_depth[a] >= dual_depth[b] && dual_parent[a] != usize::MAX {
                a = dual_parent[a];
                up.push(a);
            } else if dual_parent[b] != usize::MAX {
                b = dual_parent[b];
                down.push(b);
            } else {
                break;
            }
        }
        if a != b {
            continue;
        }
        down.pop();
        down.reverse();
        up.extend(down);
        let n = up.len();
        let total: f64 = (0..n)
            .map(|k| wrap_angle(raw[up[(k + 1) % n]] - raw[up[k]]))
            .sum();
        windings.push((total / (2.0 * PI)).round() as i64);
    }
    windings
}

/// RMS over edges of `(beta_j - beta_i) - omega(x_j - x_i, H_mid)`, normalized
/// by edge length so the result measures `d beta - omega(., H)`.
pub fn mean_curvature_form_residual(
    mesh: &SurfaceMesh,
    beta: &LagrangianAngle,
    geom: &GeometryField,
    j: &ComplexStructure,
) -> f64 {
    mean_curvature_form_residual_in(mesh, beta, geom, j, |_| true)
}

pub fn mean_curvature_form_residual_in(
    mesh: &SurfaceMesh,
    beta: &LagrangianAngle,
    geom: &GeometryField,
    j: &ComplexStructure,
    include: impl Fn(usize) -> bool,
) -> f64 {
    let topo = Topology::build(mesh);
    // Vertices touching a branch-flagged face are left out.
    let mut bad = vec![false; mesh.n_vertices()];
    for (f, &flag) in beta.branch_flag.iter().enumerate() {
        if flag {
            for &v in &mesh.faces[f] {
                bad[v] = true;
            }
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &[a, b] in &topo.edges {
        if bad[a]
            || bad[b]
            || !geom.is_regular(a)
            || !geom.is_regular(b)
            || !include(a)
            || !include(b)
        {
            continue;
        }
        let dx = mesh.vertices[b] - mesh.vertices[a];
        let h_mid = (geom.mean_curvature[a] + geom.mean_curvature[b]) * 0.5;
        let db = wrap_angle(beta.vertex_beta[b] - beta.vertex_beta[a]);
        let r = db - j.omega(&dx, &h_mid);
        num += r * r;
        den += dx.norm_squared();
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geometry;
    use crate::scenario;

    fn plane(e1: Vec4, e2: Vec4) -> SurfaceMesh {
        scenario::graph_mesh(1.0, 6, false, |x, y| e1 * x + e2 * y)
    }

    #[test]
    fn standard_structure_basics() {
        let (j, om) = standard_structure();
        assert_eq!(j.j * j.j, -Matrix4::identity());
        assert_eq!(j.omega(&Vec4::x(), &Vec4::y()), 1.0);
        let z = om.eval(&Vec4::x(), &Vec4::z());
        assert_eq!((z.re, z.im), (1.0, 0.0));
        let d = j.diagnostics();
        assert_eq!(d.orthogonality_error, 0.0);
        assert_eq!(d.antisymmetry_error, 0.0);
    }

    #[test]
    fn plane_kahler_angles() {
        let (j, _) = standard_structure();
        let hol = plane(Vec4::x(), Vec4::y());
        let lag = plane(Vec4::x(), Vec4::z());
        let th: f64 = 0.7;
        let tilted = plane(Vec4::x(), Vec4::new(0.0, th.cos(), th.sin(), 0.0));
        for (m, want) in [(&hol, 1.0), (&lag, 0.0), (&tilted, th.cos())] {
            let a = kahler_angle(m, &geometry(m), &j);
            for c in a.face_cos.iter().chain(a.vertex_cos.iter()) {
                assert!((c - want).abs() < 1e-12, "{c} vs {want}");
            }
        }
    }

    #[test]
    fn plane_lagrangian_angles() {
        let (_, om) = standard_structure();
        let b0 = lagrangian_angle(&plane(Vec4::x(), Vec4::z()), &om).unwrap();
        assert!(b0.face_beta.iter().all(|b| b.abs() < 1e-14));
        let b1 = lagrangian_angle(&plane(Vec4::x(), Vec4::w()), &om).unwrap();
        assert!(b1.face_beta.iter().all(|b| (b - PI / 2.0).abs() < 1e-14));
        assert!(b0.is_exact() && b1.is_exact());
    }

    #[test]
    fn sphere_has_no_lagrangian_angle() {
        let (_, om) = standard_structure();
        let m = scenario::icosphere(1.0, 2);
        assert!(matches!(
            lagrangian_angle(&m, &om),
            Err(Error::AngleUndefined { .. })
        ));
    }

    #[test]
    fn rotated_structure() {
        let j1 = rotate_structure(1.0).unwrap();
        let (j0, _) = standard_structure();
        assert_eq!(j1.j, j0.j);
        let j5 = rotate_structure(0.5).unwrap();
        assert!(j5.diagnostics().square_error == 0.0);
        assert!(j5.diagnostics().orthogonality_error > 0.1);
        assert!(j5.diagnostics().antisymmetry_error == 0.0);
        assert!(j5.diagnostics().invariance_error < 1e-15);
        assert!(rotate_structure(0.0).is_err());
        assert!(rotate_structure(1.5).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-7.0, -PI, -1.0, 0.0, PI, 3.5, 10.0] {
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI);
            assert!(
                ((x - w) / (2.0 * PI)).fract().abs() < 1e-12
                    || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12
            );
        }
    }

    #[test]
    fn grad_alpha_identity() {
        let (j, _) = standard_structure();
        let m = scenario::symplectic_perturbed_graph(0.5, 2, 3.0, 30).0;
        let a = kahler_angle(&m, &geometry(&m), &j);
        for v in 0..m.n_vertices() {
            if let Some(ga) = a.grad_alpha_sq[v] {
                let s2 = 1.0 - a.vertex_cos[v].powi(2);
                assert!((ga * s2 - a.grad_cos[v].norm_squared()).abs() <= 1e-12 * (1.0 + ga));
            }
        }
    }
}
