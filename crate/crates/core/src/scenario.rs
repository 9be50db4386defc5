//! Initial surfaces with their closed-form oracles.
//!
//! Coordinates follow `(x1, y1, x2, y2)`. Graphs over the `z1` plane are
//! `z -> (z, f(z))`; Lagrangian gradient graphs are `x -> (x, grad u(x))`
//! interleaved as `(x1, u_1, x2, u_2)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kahler::{face_cos_alpha, standard_structure};
use crate::mesh::{validate_mesh, BoundaryPolicy, SurfaceMesh, Vec4};

/// Smallest Kahler angle cosine a perturbed symplectic graph may start with.
pub const PERTURBED_MIN_COS: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExpectedClass {
    Symplectic,
    Lagrangian,
    AlmostCalibrated,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScenarioKind {
    RoundSphere {
        r0: f64,
    },
    CliffordTorus {
        r0: f64,
    },
    /// `w = sum_k c_k z^k` over `|z| <= r_trunc`.
    HolomorphicGraph {
        coeffs: Vec<(f64, f64)>,
        r_trunc: f64,
    },
    /// `u = amplitude * sin(k x1) sin(k x2)` over `[-half_width, half_width]^2`.
    LagrangianPotentialGraph {
        amplitude: f64,
        wavenumber: f64,
        half_width: f64,
    },
    SymplecticPerturbedGraph {
        eps: f64,
        seed: u64,
        r_trunc: f64,
    },
    /// Two parallel `z1`-plane patches at `z2 = 0` and `z2 = d`.
    TwoPlanes {
        d: f64,
        half_width: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub resolution: usize,
}

/// Closed-form facts about a scenario's flow.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleBundle {
    pub name: String,
    pub expected: ExpectedClass,
    /// Extinction / singular time when known in closed form.
    pub singular_time: Option<f64>,
    /// `r(t)^2 = r0^2 - rate * t` for the round examples.
    pub radius_sq_rate: Option<f64>,
    pub r0: Option<f64>,
    /// Face loops around the homology generators (Clifford torus).
    pub winding_loops: Vec<Vec<usize>>,
    /// Expected Lagrangian-angle winding along each loop.
    pub expected_winding: Vec<i64>,
    /// Perturbed graphs: amplitude actually used and the certified minimum cos alpha.
    pub effective_eps: Option<f64>,
    pub certified_min_cos: Option<f64>,
}

impl OracleBundle {
    fn named(name: &str, expected: ExpectedClass) -> Self {
        Self {
            name: name.to_string(),
            expected,
            singular_time: None,
            radius_sq_rate: None,
            r0: None,
            winding_loops: Vec::new(),
            expected_winding: Vec::new(),
            effective_eps: None,
            certified_min_cos: None,
        }
    }

    pub fn radius_sq(&self, t: f64) -> Option<f64> {
        Some(self.r0? * self.r0? - self.radius_sq_rate? * t)
    }

    /// Closed-form `|A|^2(t) = 2 / r(t)^2` for the sphere and Clifford torus.
    pub fn a2(&self, t: f64) -> Option<f64> {
        self.radius_sq(t).map(|r2| 2.0 / r2)
    }

    pub fn area(&self, t: f64) -> Option<f64> {
        let r2 = self.radius_sq(t)?;
        match self.name.as_str() {
            "round_sphere" => Some(4.0 * PI * r2),
            "clifford_torus" => Some(4.0 * PI * PI * r2),
            _ => None,
        }
    }
}

impl Scenario {
    pub fn new(kind: ScenarioKind, resolution: usize) -> Self {
        Self { kind, resolution }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::RoundSphere { .. } => "round_sphere",
            ScenarioKind::CliffordTorus { .. } => "clifford_torus",
            ScenarioKind::HolomorphicGraph { .. } => "holomorphic_graph",
            ScenarioKind::LagrangianPotentialGraph { .. } => "lagrangian_potential_graph",
            ScenarioKind::SymplecticPerturbedGraph { .. } => "symplectic_perturbed_graph",
            ScenarioKind::TwoPlanes { .. } => "two_planes",
        }
    }

    /// Builds a scenario from its name and flat string parameters.
    pub fn from_params(
        name: &str,
        resolution: usize,
        params: &BTreeMap<String, String>,
    ) -> Result<Self> {
        let num = |key: &str, default: f64| -> Result<f64> {
            match params.get(key) {
                None => Ok(default),
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("parameter {key} = {s:?} is not a number"))),
            }
        };
        let kind = match name {
            "round_sphere" => ScenarioKind::RoundSphere {
                r0: num("r0", 1.0)?,
            },
            "clifford_torus" => ScenarioKind::CliffordTorus {
                r0: num("r0", 1.0)?,
            },
            "holomorphic_graph" => {
                let coeffs = match params.get("f").map(|s| s.trim()) {
                    None | Some("z2") => vec![(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
                    Some("z3") => vec![(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
                    Some("zero") => vec![],
                    Some(list) => parse_coeffs(list)?,
                };
                ScenarioKind::HolomorphicGraph {
                    coeffs,
                    r_trunc: num("r_trunc", 2.0)?,
                }
            }
            "lagrangian_potential_graph" => ScenarioKind::LagrangianPotentialGraph {
                amplitude: num("amplitude", 0.5)?,
                wavenumber: num("wavenumber", 1.0)?,
                half_width: num("half_width", PI)?,
            },
            "symplectic_perturbed_graph" => ScenarioKind::SymplecticPerturbedGraph {
                eps: num("eps", 0.5)?,
                seed: num("seed", 0.0)? as u64,
                r_trunc: num("r_trunc", 3.0)?,
            },
            "two_planes" => ScenarioKind::TwoPlanes {
                d: num("d", 0.5)?,
                half_width: num("half_width", 2.0)?,
            },
            other => return Err(Error::Config(format!("unknown scenario {other:?}"))),
        };
        let s = Scenario::new(kind, resolution);
        s.check_params()?;
        Ok(s)
    }

    fn check_params(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{}: invalid {what}", self.name())));
        match &self.kind {
            ScenarioKind::RoundSphere { r0 } | ScenarioKind::CliffordTorus { r0 }
                if !(*r0 > 0.0) =>
            {
                bad("r0")
            }
            ScenarioKind::HolomorphicGraph { r_trunc, .. } if !(*r_trunc > 0.0) => bad("r_trunc"),
            ScenarioKind::SymplecticPerturbedGraph { r_trunc, eps, .. }
                if !(*r_trunc > 0.0) || !(*eps >= 0.0) =>
            {
                bad("r_trunc/eps")
            }
            ScenarioKind::LagrangianPotentialGraph { half_width, .. }
            | ScenarioKind::TwoPlanes { half_width, .. }
                if !(*half_width > 0.0) =>
            {
                bad("half_width")
            }
            _ if self.resolution == 0 => bad("resolution"),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<(SurfaceMesh, OracleBundle)> {
        self.check_params()?;
        let n = self.resolution;
        let (mesh, oracle) = match &self.kind {
            ScenarioKind::RoundSphere { r0 } => {
                let mut o = OracleBundle::named("round_sphere", ExpectedClass::Neither);
                o.r0 = Some(*r0);
                o.radius_sq_rate = Some(4.0);
                o.singular_time = Some(r0 * r0 / 4.0);
                (icosphere(*r0, n as u32), o)
            }
            ScenarioKind::CliffordTorus { r0 } => {
                let mut o = OracleBundle::named("clifford_torus", ExpectedClass::Lagrangian);
                o.r0 = Some(*r0);
                o.radius_sq_rate = Some(2.0);
                o.singular_time = Some(r0 * r0 / 2.0);
                o.winding_loops = clifford_loops(n);
                o.expected_winding = vec![1, 1];
                (clifford_torus(*r0, n), o)
            }
            ScenarioKind::HolomorphicGraph { coeffs, r_trunc } => {
                let c: Vec<Complex<f64>> = coeffs
                    .iter()
                    .map(|&(re, im)| Complex::new(re, im))
                    .collect();
                let o = OracleBundle::named("holomorphic_graph", ExpectedClass::Symplectic);
                (holomorphic_graph_complex(&c, *r_trunc, n), o)
            }
            ScenarioKind::LagrangianPotentialGraph {
                amplitude,
                wavenumber,
                half_width,
            } => {
                let expected =
                    if 2.0 * (amplitude * wavenumber * wavenumber).abs().atan() < PI / 2.0 {
                        ExpectedClass::AlmostCalibrated
                    } else {
                        ExpectedClass::Lagrangian
                    };
                let o = OracleBundle::named("lagrangian_potential_graph", expected);
                (
                    lagrangian_potential_graph(*amplitude, *wavenumber, *half_width, n),
                    o,
                )
            }
            ScenarioKind::SymplecticPerturbedGraph { eps, seed, r_trunc } => {
                let (mesh, used, min_cos) = symplectic_perturbed_graph(*eps, *seed, *r_trunc, n);
                let mut o =
                    OracleBundle::named("symplectic_perturbed_graph", ExpectedClass::Symplectic);
                o.effective_eps = Some(used);
                o.certified_min_cos = Some(min_cos);
                (mesh, o)
            }
            ScenarioKind::TwoPlanes { d, half_width } => {
                let o = OracleBundle::named("two_planes", ExpectedClass::Symplectic);
                (two_planes(*d, *half_width, n), o)
            }
        };
        let report = validate_mesh(&mesh);
        if !report.is_valid() {
            return Err(Error::InvalidMesh(format!(
                "{}: {}",
                self.name(),
                report.summary()
            )));
        }
        Ok((mesh, oracle))
    }
}

fn parse_coeffs(list: &str) -> Result<Vec<(f64, f64)>> {
    // "c0; c1; c2" with each entry "re" or "re,im".
    list.split(';')
        .map(|entry| {
            let parts: Vec<&str> = entry.split(',').map(str::trim).collect();
            let p = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad polynomial coefficient {entry:?}")))
            };
            match parts.as_slice() {
                [re] => Ok((p(re)?, 0.0)),
                [re, im] => Ok((p(re)?, p(im)?)),
                _ => Err(Error::Config(format!(
                    "bad polynomial coefficient {entry:?}"
                ))),
            }
        })
        .collect()
}

/// Regular icosahedron with unit circumradius in `R^3 x {0}`.
pub fn icosahedron() -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p| Vec4::new(p[0], p[1], p[2], 0.0).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    SurfaceMesh::new(vertices, faces, BoundaryPolicy::Closed)
}

/// Loop-subdivided icosahedron projected to the sphere of radius `r`.
pub fn icosphere(r: f64, levels: u32) -> SurfaceMesh {
    let mut mesh = icosahedron();
    for _ in 0..levels {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec4>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut verts = mesh.vertices.clone();
        for &[a, b, c] in &mesh.faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            faces.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        mesh = SurfaceMesh::new(verts, faces, BoundaryPolicy::Closed);
    }
    for v in &mut mesh.vertices {
        *v *= r;
    }
    mesh
}

/// `S^1(r) x S^1(r)` sampled on an `n x n` grid in `(theta1, theta2)`.
pub fn clifford_torus(r: f64, n: usize) -> SurfaceMesh {
    let idx = |i: usize, j: usize| (i % n) * n + (j % n);
    let mut vertices = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let t1 = 2.0 * PI * i as f64 / n as f64;
            let t2 = 2.0 * PI * j as f64 / n as f64;
            vertices.push(Vec4::new(
                r * t1.cos(),
                r * t1.sin(),
                r * t2.cos(),
                r * t2.sin(),
            ));
        }
    }
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    SurfaceMesh::new(vertices, faces, BoundaryPolicy::Closed)
}

/// Face loops of the Clifford grid running once around theta1 and once around theta2.
pub fn clifford_loops(n: usize) -> Vec<Vec<usize>> {
    let face = |i: usize, j: usize, lower: bool| 2 * ((i % n) * n + (j % n)) + usize::from(!lower);
    // Along theta1 at fixed j: lower(i,j) and upper(i,j) alternate through shared diagonals
    // and theta1-edges.
    let mut loop1 = Vec::with_capacity(2 * n);
    for i in 0..n {
        loop1.push(face(i, 0, false));
        loop1.push(face(i, 0, true));
    }
    let mut loop2 = Vec::with_capacity(2 * n);
    for j in 0..n {
        loop2.push(face(0, j, true));
        loop2.push(face(0, j, false));
    }
    vec![loop1, loop2]
}

/// Triangulated square grid `[-half, half]^2` with `n` intervals per side,
/// lifted by `lift`. When `disc` is set, only grid squares whose corners lie
/// in the inscribed disc are kept. Boundary vertices are pinned.
pub fn graph_mesh(half: f64, n: usize, disc: bool, lift: impl Fn(f64, f64) -> Vec4) -> SurfaceMesh {
    let h = 2.0 * half / n as f64;
    let coord = |i: usize| -half + h * i as f64;
    let inside = |i: usize, j: usize| {
        let (x, y) = (coord(i), coord(j));
        !disc || x * x + y * y <= half * half * (1.0 + 1e-12)
    };
    let mut index = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Vec4>| -> usize {
        let k = i * (n + 1) + j;
        if index[k] == usize::MAX {
            index[k] = vertices.len();
            vertices.push(lift(coord(i), coord(j)));
        }
        index[k]
    };
    for i in 0..n {
        for j in 0..n {
            if !(inside(i, j) && inside(i + 1, j) && inside(i, j + 1) && inside(i + 1, j + 1)) {
                continue;
            }
            let a = vid(i, j, &mut vertices);
            let b = vid(i + 1, j, &mut vertices);
            let c = vid(i + 1, j + 1, &mut vertices);
            let d = vid(i, j + 1, &mut vertices);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    SurfaceMesh::with_pinned_boundary(vertices, faces)
}

/// Flat `z1`-plane patch `[-half, half]^2` (holomorphic).
pub fn plane_patch(half: f64, n: usize) -> SurfaceMesh {
    graph_mesh(half, n, false, |x, y| Vec4::new(x, y, 0.0, 0.0))
}

/// Flat Lagrangian plane `span{dx1, dx2}` patch.
pub fn lagrangian_plane_patch(half: f64, n: usize) -> SurfaceMesh {
    graph_mesh(half, n, false, |x, y| Vec4::new(x, 0.0, y, 0.0))
}

/// Flat disc in the `z1` plane.
pub fn plane_disc(radius: f64, n: usize) -> SurfaceMesh {
    graph_mesh(radius, n, true, |x, y| Vec4::new(x, y, 0.0, 0.0))
}

fn eval_poly(coeffs: &[Complex<f64>], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .rev()
        .fold(Complex::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// Graph of a polynomial with real coefficients `coeffs[k] z^k` over the disc `|z| <= r`.
pub fn holomorphic_graph(coeffs: &[f64], r: f64, n: usize) -> SurfaceMesh {
    let c: Vec<Complex<f64>> = coeffs.iter().map(|&a| Complex::new(a, 0.0)).collect();
    holomorphic_graph_complex(&c, r, n)
}

pub fn holomorphic_graph_complex(coeffs: &[Complex<f64>], r: f64, n: usize) -> SurfaceMesh {
    graph_mesh(r, n, true, |x, y| {
        let w = eval_poly(coeffs, Complex::new(x, y));
        Vec4::new(x, y, w.re, w.im)
    })
}

/// Gradient graph of `u = a sin(k x1) sin(k x2)`.
pub fn lagrangian_potential_graph(amplitude: f64, k: f64, half: f64, n: usize) -> SurfaceMesh {
    graph_mesh(half, n, false, |x1, x2| {
        let u1 = amplitude * k * (k * x1).cos() * (k * x2).sin();
        let u2 = amplitude * k * (k * x1).sin() * (k * x2).cos();
        Vec4::new(x1, u1, x2, u2)
    })
}

/// Smooth random complex bump field used to perturb the `z1` plane.
#[derive(Clone, Debug)]
pub struct BumpField {
    pub centers: Vec<(f64, f64)>,
    pub amplitudes: Vec<Complex<f64>>,
    pub width: f64,
}

impl BumpField {
    pub fn seeded(seed: u64, r_trunc: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = 6;
        let mut centers = Vec::with_capacity(count);
        let mut amplitudes = Vec::with_capacity(count);
        for _ in 0..count {
            let rad = 0.4 * r_trunc * rng.random::<f64>().sqrt();
            let ang = 2.0 * PI * rng.random::<f64>();
            centers.push((rad * ang.cos(), rad * ang.sin()));
            let m = 0.5 + 0.5 * rng.random::<f64>();
            let ph = 2.0 * PI * rng.random::<f64>();
            amplitudes.push(Complex::from_polar(m, ph));
        }
        Self {
            centers,
            amplitudes,
            width: 0.15 * r_trunc,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex<f64> {
        let s2 = 2.0 * self.width * self.width;
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(&(cx, cy), a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / s2).exp())
            .sum()
    }
}

/// Seeded perturbation of the `z1` plane by `eps * bumps`. The amplitude is
/// reduced until every face has `cos alpha >= PERTURBED_MIN_COS`. Returns the
/// mesh, the amplitude used and the minimum face `cos alpha`.
pub fn symplectic_perturbed_graph(
    eps: f64,
    seed: u64,
    r_trunc: f64,
    n: usize,
) -> (SurfaceMesh, f64, f64) {
    let field = BumpField::seeded(seed, r_trunc);
    let (j, _) = standard_structure();
    let mut amp = eps;
    loop {
        let mesh = graph_mesh(r_trunc, n, true, |x, y| {
            let w = field.eval(x, y) * amp;
            Vec4::new(x, y, w.re, w.im)
        });
        let min_cos = (0..mesh.n_faces())
            .filter_map(|f| face_cos_alpha(&mesh, f, &j))
            .fold(f64::INFINITY, f64::min);
        if min_cos >= PERTURBED_MIN_COS || amp < 1e-6 {
            return (mesh, amp, min_cos);
        }
        amp *= 0.9;
    }
}

/// Polar triangulation of the disc `|z| <= radius` with `rings` concentric
/// rings (ring `k` carries `6k` vertices), lifted by `lift`. Boundary pinned.
pub fn polar_graph(radius: f64, rings: usize, lift: impl Fn(f64, f64) -> Vec4) -> SurfaceMesh {
    let h = radius / rings.max(1) as f64;
    let mut vertices = vec![lift(0.0, 0.0)];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(vertices.len());
        let m = 6 * k;
        for j in 0..m {
            let th = 2.0 * PI * j as f64 / m as f64;
            let r = h * k as f64;
            vertices.push(lift(r * th.cos(), r * th.sin()));
        }
    }
    let ring_len = |k: usize| if k == 0 { 1 } else { 6 * k };
    let mut faces = Vec::new();
    for k in 0..rings {
        let (m0, m1) = (ring_len(k), ring_len(k + 1));
        let (s0, s1) = (ring_start[k], ring_start[k + 1]);
        let (mut i, mut j) = (0usize, 0usize);
        // Merge the two rings by angle, emitting one triangle per advance.
        while i < m0 || j < m1 {
            let a0 = (i as f64 + 0.5) / m0 as f64;
            let a1 = (j as f64 + 0.5) / m1 as f64;
            let inner = s0 + i % m0;
            let outer = s1 + j % m1;
            if j < m1 && (i >= m0 || a1 <= a0) || k == 0 {
                faces.push([inner, outer, s1 + (j + 1) % m1]);
                j += 1;
            } else {
                faces.push([inner, outer, s0 + (i + 1) % m0]);
                i += 1;
            }
            if k == 0 && j >= m1 {
                break;
            }
        }
    }
    SurfaceMesh::with_pinned_boundary(vertices, faces)
}

/// Flat polar disc in the `z1` plane.
pub fn polar_disc(radius: f64, rings: usize) -> SurfaceMesh {
    polar_graph(radius, rings, |x, y| Vec4::new(x, y, 0.0, 0.0))
}

/// Two parallel `z1`-plane patches at `z2 = 0` and `z2 = d`.
pub fn two_planes(d: f64, half: f64, n: usize) -> SurfaceMesh {
    let a = plane_patch(half, n);
    let b = a.mapped(|p| Vec4::new(p[0], p[1], p[2] + d, p[3]));
    a.disjoint_union(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_mesh;

    #[test]
    fn generated_meshes_are_valid() {
        let meshes = [
            icosphere(1.0, 2),
            clifford_torus(1.0, 12),
            holomorphic_graph(&[0.0, 0.0, 1.0], 2.0, 20),
            lagrangian_potential_graph(0.5, 1.0, PI, 16),
            symplectic_perturbed_graph(0.5, 3, 3.0, 24).0,
            two_planes(0.5, 1.0, 8),
            plane_disc(1.0, 20),
            polar_disc(1.0, 8),
        ];
        for m in &meshes {
            let r = validate_mesh(m);
            assert!(r.is_valid(), "{}", r.summary());
        }
    }

    #[test]
    fn sphere_oracle_extinction() {
        let s = Scenario::new(ScenarioKind::RoundSphere { r0: 1.0 }, 4);
        let (mesh, o) = s.build().unwrap();
        assert_eq!(mesh.boundary_policy, BoundaryPolicy::Closed);
        assert_eq!(mesh.n_faces(), 20 * 4usize.pow(4));
        assert!((o.singular_time.unwrap() - 0.25).abs() < 1e-15);
        assert!(o.radius_sq(0.25).unwrap().abs() < 1e-15);
    }

    #[test]
    fn torus_oracle_consistent() {
        let s = Scenario::new(ScenarioKind::CliffordTorus { r0: 1.0 }, 16);
        let (_, o) = s.build().unwrap();
        assert!(o.radius_sq(o.singular_time.unwrap()).unwrap().abs() < 1e-15);
        assert_eq!(o.expected_winding, vec![1, 1]);
    }

    #[test]
    fn perturbed_graph_is_certified() {
        let (_, eps, min_cos) = symplectic_perturbed_graph(5.0, 7, 3.0, 24);
        assert!(min_cos >= PERTURBED_MIN_COS);
        assert!(eps < 5.0);
    }

    #[test]
    fn unknown_scenario_is_config_error() {
        let e = Scenario::from_params("klein_bottle", 4, &BTreeMap::new()).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let mut p = BTreeMap::new();
        p.insert("r0".to_string(), "-1".to_string());
        assert!(Scenario::from_params("round_sphere", 4, &p).is_err());
    }

    #[test]
    fn perturbed_graph_is_deterministic() {
        let a = symplectic_perturbed_graph(0.5, 11, 3.0, 20).0;
        let b = symplectic_perturbed_graph(0.5, 11, 3.0, 20).0;
        assert_eq!(a, b);
    }
}
