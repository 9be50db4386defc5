//! Blow-up analysis: Type I/II classification, parabolic rescaling around a
//! singular point, limit extraction and verification of the limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{linear_fit, FlowTrajectory, SingularTimeFit};
use crate::geometry::{
    cotan_laplacian, geometry_with, geometry_with_topology, GeometryConfig, GeometryField,
};
use crate::kahler::{
    kahler_angle_with, lagrangian_angle_with, rotate_structure, standard_structure, AngleConfig,
};
use crate::measure::{area_ratio, components_in_ball, edge_distances, quantization, Quantization};
use crate::mesh::{SurfaceMesh, Topology, Vec4};

/// Per-snapshot curvature readout used by every windowed supremum.
#[derive(Clone, Debug)]
pub struct CurvatureHistory {
    pub t: Vec<f64>,
    pub meshes: Vec<SurfaceMesh>,
    pub a2: Vec<Vec<f64>>,
    pub dual_area: Vec<Vec<f64>>,
    /// Vertices whose `|A|^2` is a genuine fit (not pinned, not imputed).
    pub regular: Vec<Vec<bool>>,
}

impl CurvatureHistory {
    pub fn from_trajectory(traj: &FlowTrajectory, cfg: &GeometryConfig) -> Self {
        let mut h = CurvatureHistory {
            t: Vec::new(),
            meshes: Vec::new(),
            a2: Vec::new(),
            dual_area: Vec::new(),
            regular: Vec::new(),
        };
        for s in &traj.snapshots {
            let g = geometry_with(&s.mesh, cfg);
            h.push(s.t, s.mesh.clone(), &g);
        }
        h
    }

    pub fn push(&mut self, t: f64, mesh: SurfaceMesh, g: &GeometryField) {
        self.t.push(t);
        self.meshes.push(mesh);
        self.a2.push(g.a2.clone());
        self.dual_area.push(g.dual_area.clone());
        self.regular
            .push((0..g.n_vertices()).map(|v| g.is_regular(v)).collect());
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `(value, snapshot, vertex)` of the largest `|A|^2` over snapshots with
    /// `t in [lo, hi]` and regular vertices in `B_rho(center)`. Ties go to the
    /// earliest time, then the smallest vertex index.
    pub fn window_max(
        &self,
        lo: f64,
        hi: f64,
        center: &Vec4,
        rho: f64,
    ) -> Option<(f64, usize, usize)> {
        let eps = 1e-12 * hi.abs().max(1.0);
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, &t) in self.t.iter().enumerate() {
            if t < lo - eps || t > hi + eps {
                continue;
            }
            for (v, p) in self.meshes[i].vertices.iter().enumerate() {
                if !self.regular[i][v] || (p - center).norm() > rho {
                    continue;
                }
                let a = self.a2[i][v];
                if best.is_none_or(|(b, _, _)| a > b) {
                    best = Some((a, i, v));
                }
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeVerdict {
    I,
    II,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeConfig {
    /// Trailing fraction of the pre-singular snapshots forming the approach window.
    pub window_frac: f64,
    /// Largest slope of `m` against `-ln(T - t)` still counted as bounded.
    pub slope_tol: f64,
    /// Growth of `m` over its early median that signals Type II.
    pub ratio_tol: f64,
    pub min_points: usize,
}

impl Default for TypeConfig {
    fn default() -> Self {
        Self {
            window_frac: 0.25,
            slope_tol: 0.05,
            ratio_tol: 3.0,
            min_points: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub verdict: TypeVerdict,
    pub t_hat: f64,
    /// `(t, (T - t) max |A|^2)`.
    pub series: Vec<(f64, f64)>,
    pub trailing_slope: f64,
    pub early_median: f64,
    /// Median of `m` over the approach window.
    pub final_m: f64,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn classify_type(
    traj: &FlowTrajectory,
    fit: &SingularTimeFit,
    cfg: &TypeConfig,
) -> Result<TypeReport> {
    let t_hat = fit.t_hat;
    let series: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .filter(|s| s.t < t_hat && s.summary.max_a2 > 0.0)
        .map(|s| (s.t, (t_hat - s.t) * s.summary.max_a2))
        .collect();
    let n = series.len();
    let w = ((n as f64 * cfg.window_frac).ceil() as usize).min(n);
    if w < cfg.min_points {
        return Err(Error::InsufficientSequence {
            valid: w,
            needed: cfg.min_points,
        });
    }
    let window = &series[n - w..];
    let pts: Vec<(f64, f64)> = window
        .iter()
        .map(|&(t, m)| (-(t_hat - t).ln(), m))
        .collect();
    let (slope, _, _) = linear_fit(&pts);
    let early: Vec<f64> = series[..(n / 2).max(1)].iter().map(|p| p.1).collect();
    let early_median = median(&early);
    let window_m: Vec<f64> = window.iter().map(|p| p.1).collect();
    let final_m = median(&window_m);
    let max_m = series.iter().map(|p| p.1).fold(0.0, f64::max);
    let last_m = window_m[window_m.len() - 1];
    let verdict = if last_m > cfg.ratio_tol * early_median {
        TypeVerdict::II
    } else if max_m <= cfg.ratio_tol * early_median && slope <= cfg.slope_tol {
        TypeVerdict::I
    } else {
        TypeVerdict::Undetermined
    };
    Ok(TypeReport {
        verdict,
        t_hat,
        series,
        trailing_slope: slope,
        early_median,
        final_m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// `r_k = r0 2^-k` with windows `[T - (r_k - sigma)^2, T - r_k^2 / 4]`.
    Dyadic { r0: f64, count: usize },
    /// Fixed `r` with `t_k -> T`: `t_k` is the first snapshot where the ball
    /// maximum of `|A|^2` passes `growth^(j+1)` times its initial value; the
    /// last `count` such times are kept.
    FixedRadius { r: f64, count: usize, growth: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub schedule: Schedule,
    pub sigma_samples: usize,
    pub norm_tol: f64,
    /// Vertices of the selected snapshot within this relative margin of the
    /// maximum count as ties; the smallest index wins.
    pub tie_rel_tol: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::FixedRadius {
                r: 4.0,
                count: 4,
                growth: 4.0,
            },
            sigma_samples: 64,
            norm_tol: 0.05,
            tie_rel_tol: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescalingEntry {
    pub k: usize,
    pub r: f64,
    pub sigma: f64,
    /// Upper end of the selection window.
    pub t_window: f64,
    /// Time of the curvature maximum in the window.
    pub t_k: f64,
    pub snapshot: usize,
    pub x_k: usize,
    pub x_pos: Vec4,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescalingParams {
    pub x0: Vec4,
    pub entries: Vec<RescalingEntry>,
    /// Indices `k` whose window was empty.
    pub empty: Vec<usize>,
}

/// Maximizes `sigma^2 sup |A|^2` over the sigma grid for one window family.
/// `window(rho)` gives the time interval for ball radius `rho = r - sigma`.
fn select_one(
    hist: &CurvatureHistory,
    x0: &Vec4,
    k: usize,
    r: f64,
    samples: usize,
    tie_rel_tol: f64,
    window: impl Fn(f64) -> (f64, f64),
) -> Option<RescalingEntry> {
    let mut best: Option<(f64, f64, (f64, usize, usize))> = None;
    for j in 1..=samples {
        let sigma = 0.5 * r * j as f64 / samples as f64;
        let rho = r - sigma;
        let (lo, hi) = window(rho);
        if lo > hi {
            continue;
        }
        if let Some(m) = hist.window_max(lo, hi, x0, rho) {
            let obj = sigma * sigma * m.0;
            if best.is_none_or(|(b, _, _)| obj > b) {
                best = Some((obj, sigma, m));
            }
        }
    }
    let (_, sigma, (a2, i, _)) = best?;
    if !(a2 > 0.0) {
        return None;
    }
    let (_, hi) = window(r - sigma);
    let rho = r - sigma;
    let v = (0..hist.meshes[i].n_vertices())
        .find(|&v| {
            hist.regular[i][v]
                && (hist.meshes[i].vertices[v] - x0).norm() <= rho
                && hist.a2[i][v] >= (1.0 - tie_rel_tol) * a2
        })
        .expect("the maximizer itself qualifies");
    Some(RescalingEntry {
        k,
        r,
        sigma,
        t_window: hi,
        t_k: hist.t[i],
        snapshot: i,
        x_k: v,
        x_pos: hist.meshes[i].vertices[v],
        lambda: hist.a2[i][v].sqrt(),
    })
}

/// Chooses `(r_k, sigma_k, t_k, x_k, lambda_k)` for each schedule entry.
pub fn select_rescaling(
    hist: &CurvatureHistory,
    x0: &Vec4,
    t_hat: Option<f64>,
    cfg: &SelectionConfig,
) -> Result<RescalingParams> {
    if hist.is_empty() {
        return Err(Error::InsufficientSequence {
            valid: 0,
            needed: 2,
        });
    }
    let mut entries = Vec::new();
    let mut empty = Vec::new();
    match cfg.schedule {
        Schedule::Dyadic { r0, count } => {
            let t = t_hat
                .ok_or_else(|| Error::Config("dyadic schedule needs a singular time".into()))?;
            for k in 0..count {
                let r = r0 * 0.5f64.powi(k as i32);
                let e = select_one(hist, x0, k, r, cfg.sigma_samples, cfg.tie_rel_tol, |rho| {
                    (t - rho * rho, t - r * r / 4.0)
                });
                match e {
                    Some(e) => entries.push(e),
                    None => empty.push(k),
                }
            }
        }
        Schedule::FixedRadius { r, count, growth } => {
            let ball_max: Vec<f64> = (0..hist.len())
                .map(|i| {
                    hist.window_max(hist.t[i], hist.t[i], x0, r)
                        .map_or(0.0, |m| m.0)
                })
                .collect();
            let base = ball_max[0];
            let mut times = Vec::new();
            if base > 0.0 && growth > 1.0 {
                let mut level = base * growth;
                for (i, &m) in ball_max.iter().enumerate() {
                    if m >= level {
                        times.push(hist.t[i]);
                        while level <= m {
                            level *= growth;
                        }
                    }
                }
            }
            let skip = times.len().saturating_sub(count);
            for (k, &tk) in times[skip..].iter().enumerate() {
                let e = select_one(hist, x0, k, r, cfg.sigma_samples, cfg.tie_rel_tol, |rho| {
                    (tk - rho * rho, tk)
                });
                match e {
                    Some(e) => entries.push(e),
                    None => empty.push(k),
                }
            }
            if times.is_empty() {
                return Err(Error::EmptyWindow { k: 0 });
            }
        }
    }
    if entries.len() < 2 {
        if entries.is_empty() {
            if let Some(&k) = empty.first() {
                return Err(Error::EmptyWindow { k });
            }
        }
        return Err(Error::InsufficientSequence {
            valid: entries.len(),
            needed: 2,
        });
    }
    Ok(RescalingParams {
        x0: *x0,
        entries,
        empty,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// `|A_k|` at the marked vertex of the `s = 0` snapshot, recomputed on the rescaled mesh.
    pub at_origin: f64,
    /// Largest rescaled `|A|^2` over the stack inside `B_{lambda (r - sigma/2)}`.
    pub max_a2: f64,
    pub ok: bool,
}

#[derive(Clone, Debug)]
pub struct RescaledStack {
    pub entry: RescalingEntry,
    /// Rescaled times `s = lambda^2 (t - t_k)`, increasing, ending at 0.
    pub s: Vec<f64>,
    pub meshes: Vec<SurfaceMesh>,
    pub normalization: Normalization,
}

impl RescaledStack {
    pub fn s_min(&self) -> f64 {
        -self.entry.lambda.powi(2) * self.entry.sigma.powi(2) / 4.0
    }

    pub fn last_mesh(&self) -> &SurfaceMesh {
        self.meshes.last().expect("stack is never empty")
    }
}

#[derive(Clone, Debug)]
pub struct RescalingSequence {
    pub params: RescalingParams,
    pub stacks: Vec<RescaledStack>,
}

/// Builds `F_k = lambda_k (F - X_k)` on every snapshot with
/// `t in [t_k - sigma_k^2 / 4, t_k]` (nearest recorded snapshots, no interpolation).
pub fn rescale(
    hist: &CurvatureHistory,
    params: &RescalingParams,
    cfg: &SelectionConfig,
    geom: &GeometryConfig,
) -> Result<RescalingSequence> {
    let mut stacks = Vec::new();
    for e in &params.entries {
        let l2 = e.lambda * e.lambda;
        let lo = e.t_k - e.sigma * e.sigma / 4.0;
        let eps = 1e-12 * e.t_k.abs().max(1.0);
        let mut s = Vec::new();
        let mut meshes = Vec::new();
        let mut max_a2: f64 = 0.0;
        let rho = e.r - e.sigma / 2.0;
        for i in 0..hist.len() {
            let t = hist.t[i];
            if t < lo - eps || t > e.t_k + eps {
                continue;
            }
            s.push(l2 * (t - e.t_k));
            meshes.push(hist.meshes[i].rescaled(e.lambda, &e.x_pos));
            for (v, p) in hist.meshes[i].vertices.iter().enumerate() {
                if hist.regular[i][v] && (p - params.x0).norm() <= rho {
                    max_a2 = max_a2.max(hist.a2[i][v] / l2);
                }
            }
        }
        let last = meshes.last().ok_or(Error::EmptyWindow { k: e.k })?;
        let g = geometry_with(last, geom);
        let at_origin = g.a2[e.x_k].sqrt();
        let ok = (at_origin - 1.0).abs() <= cfg.norm_tol && max_a2 <= 4.0 + cfg.norm_tol;
        stacks.push(RescaledStack {
            entry: e.clone(),
            s,
            meshes,
            normalization: Normalization {
                at_origin,
                max_a2,
                ok,
            },
        });
    }
    Ok(RescalingSequence {
        params: params.clone(),
        stacks,
    })
}

/// Distance from a point to a triangle in R^4.
pub fn point_triangle_distance(p: &Vec4, tri: [Vec4; 3]) -> f64 {
    let [a, b, c] = tri;
    let e0 = b - a;
    let e1 = c - a;
    let d = p - a;
    let g00 = e0.dot(&e0);
    let g01 = e0.dot(&e1);
    let g11 = e1.dot(&e1);
    let det = g00 * g11 - g01 * g01;
    if det > 0.0 {
        let r0 = e0.dot(&d);
        let r1 = e1.dot(&d);
        let u = (g11 * r0 - g01 * r1) / det;
        let v = (g00 * r1 - g01 * r0) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 {
            return (d - e0 * u - e1 * v).norm();
        }
    }
    let seg = |x: &Vec4, y: &Vec4| {
        let e = y - x;
        let l = e.norm_squared();
        let t = if l > 0.0 {
            ((p - x).dot(&e) / l).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (x + e * t)).norm()
    };
    seg(&a, &b).min(seg(&b, &c)).min(seg(&c, &a))
}

/// One-sided Hausdorff distance from the vertices of `from` to the surface
/// `to`, and the largest tangent-plane deviation `|P_from - P_to| / sqrt 2`
/// at those vertices (projectors compared at the nearest vertex of `to`).
pub fn hausdorff_and_normal(
    from: &SurfaceMesh,
    to: &SurfaceMesh,
    gfrom: &GeometryField,
    gto: &GeometryField,
) -> (f64, f64) {
    if from.n_vertices() == 0 || to.n_vertices() == 0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let topo = Topology::build(to);
    let mut haus: f64 = 0.0;
    let mut normal: f64 = 0.0;
    for (v, p) in from.vertices.iter().enumerate() {
        let (w, _) = to
            .vertices
            .iter()
            .enumerate()
            .map(|(w, q)| (w, (p - q).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let mut d = (p - to.vertices[w]).norm();
        // Faces within two rings of the nearest vertex.
        for u in topo.k_ring(w, 1) {
            for &f in &topo.vertex_faces[u] {
                d = d.min(point_triangle_distance(p, to.face_corners(f)));
            }
        }
        haus = haus.max(d);
        if gfrom.is_regular(v) && gto.is_regular(w) {
            let proj = |g: &GeometryField, x: usize| {
                let [t1, t2] = g.tangent[x];
                t1 * t1.transpose() + t2 * t2.transpose()
            };
            normal = normal.max((proj(gfrom, v) - proj(gto, w)).norm() / 2f64.sqrt());
        }
    }
    (haus, normal)
}

/// Faces with barycentre in `B_R(0)`.
pub fn restrict_to_ball(mesh: &SurfaceMesh, radius: f64) -> SurfaceMesh {
    let faces: Vec<usize> = (0..mesh.n_faces())
        .filter(|&f| mesh.face_barycenter(f).norm() <= radius)
        .collect();
    mesh.submesh(&faces).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceGauge {
    pub hausdorff: Vec<f64>,
    pub normal_deviation: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct LimitExtraction {
    pub limit: SurfaceMesh,
    pub gauge: ConvergenceGauge,
}

pub fn extract_limit(
    seq: &RescalingSequence,
    radius: f64,
    conv_tol: f64,
    geom: &GeometryConfig,
) -> Result<LimitExtraction> {
    let pieces: Vec<SurfaceMesh> = seq
        .stacks
        .iter()
        .map(|s| restrict_to_ball(s.last_mesh(), radius))
        .filter(|m| m.n_faces() > 0)
        .collect();
    if pieces.len() < 3 {
        return Err(Error::InsufficientSequence {
            valid: pieces.len(),
            needed: 3,
        });
    }
    let geoms: Vec<GeometryField> = pieces.iter().map(|m| geometry_with(m, geom)).collect();
    let mut hausdorff = Vec::new();
    let mut normal_deviation = Vec::new();
    for k in 1..pieces.len() {
        let (h, n) = hausdorff_and_normal(&pieces[k], &pieces[k - 1], &geoms[k], &geoms[k - 1]);
        hausdorff.push(h);
        normal_deviation.push(n);
    }
    // Gaps at roundoff level count as equal.
    let floor = 1e-10;
    let decreasing = hausdorff.windows(2).all(|w| w[1] <= w[0].max(floor));
    let last = *hausdorff.last().unwrap();
    Ok(LimitExtraction {
        limit: pieces.last().unwrap().clone(),
        gauge: ConvergenceGauge {
            converged: decreasing && last < conv_tol,
            hausdorff,
            normal_deviation,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitMode {
    Symplectic,
    Lagrangian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub minimal_tol: f64,
    pub holomorphic_tol: f64,
    pub curvature_tol: f64,
    pub spread_tol: f64,
    /// Outer truncation radius for the quantization estimate.
    pub quantization_radius: f64,
    pub area_radii: Vec<f64>,
    pub simplicity_samples: usize,
    pub angles: AngleSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleSettings {
    pub sin_floor: f64,
    pub eps_sym: f64,
    pub eps_lag: f64,
    pub beta_cos_tol: f64,
}

impl From<AngleSettings> for AngleConfig {
    fn from(a: AngleSettings) -> Self {
        AngleConfig {
            sin_floor: a.sin_floor,
            eps_sym: a.eps_sym,
            eps_lag: a.eps_lag,
            beta_cos_tol: a.beta_cos_tol,
            ..AngleConfig::default()
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let a = AngleConfig::default();
        Self {
            minimal_tol: 5e-2,
            holomorphic_tol: 1e-2,
            curvature_tol: 0.1,
            spread_tol: 1e-2,
            quantization_radius: 4.0,
            area_radii: vec![1.0, 2.0, 4.0, 8.0],
            simplicity_samples: 24,
            angles: AngleSettings {
                sin_floor: a.sin_floor,
                eps_sym: a.eps_sym,
                eps_lag: a.eps_lag,
                beta_cos_tol: a.beta_cos_tol,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub faces: usize,
    /// Largest sampled ratio of edge-path to Euclidean distance.
    pub simplicity_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub mode: LimitMode,
    pub type_report: Option<TypeReport>,
    pub vertices: usize,
    pub minimality_residual: f64,
    pub minimal: bool,
    pub holomorphicity_gap: Option<f64>,
    pub cos_alpha_spread: Option<f64>,
    /// Mean `cos alpha` level under the rotated structure when the angle is constant below 1.
    pub j_star_angle: Option<f64>,
    pub beta_spread: Option<f64>,
    pub beta_deviation: Option<f64>,
    /// False when `beta` winds around a homology generator; spread is then
    /// measured on the spanning-tree unwrapping.
    pub beta_exact: Option<bool>,
    pub min_k: f64,
    pub max_k: f64,
    pub curvature_window_ok: bool,
    pub a_at_origin: f64,
    pub max_a2: f64,
    /// RMS of `-Delta cos alpha - 2 |grad alpha|^2 cos alpha` where `sin^2 alpha > sin_floor`.
    pub e1_residual: Option<f64>,
    pub e1_vertices: usize,
    pub quantization: Quantization,
    pub components: Vec<ComponentReport>,
    pub area_ratios: Vec<(f64, f64)>,
    pub nontrivial: bool,
    pub verdict: String,
}

fn simplicity_ratio(mesh: &SurfaceMesh, topo: &Topology, faces: &[usize], samples: usize) -> f64 {
    let mut verts: Vec<usize> = faces.iter().flat_map(|&f| mesh.faces[f]).collect();
    verts.sort_unstable();
    verts.dedup();
    if verts.len() < 2 {
        return 1.0;
    }
    let stride = (verts.len() / samples.max(1)).max(1);
    let picks: Vec<usize> = verts.iter().copied().step_by(stride).collect();
    let min_sep = 2.0 * mesh.mean_edge_length();
    let mut worst: f64 = 1.0;
    for &a in &picks {
        let d = edge_distances(mesh, topo, a);
        for &b in &picks {
            let e = (mesh.vertices[a] - mesh.vertices[b]).norm();
            if b != a && e > min_sep && d[b].is_finite() {
                worst = worst.max(d[b] / e);
            }
        }
    }
    worst
}

/// Checks a candidate limit: minimality, holomorphicity or constant
/// Lagrangian angle, the curvature window, the angle identity, quantization,
/// components and area ratios.
pub fn verify_limit(
    mesh: &SurfaceMesh,
    mode: LimitMode,
    cfg: &VerifyConfig,
    geom_cfg: &GeometryConfig,
) -> Result<BlowupReport> {
    if mesh.n_faces() == 0 {
        return Err(Error::EmptyLimit);
    }
    let topo = Topology::build(mesh);
    let g = geometry_with_topology(mesh, &topo, geom_cfg);
    let regular: Vec<usize> = g.regular_vertices().collect();
    if regular.is_empty() {
        return Err(Error::EmptyLimit);
    }
    let (j, omega) = standard_structure();
    let acfg: AngleConfig = cfg.angles.into();
    let angles = kahler_angle_with(mesh, &g, &j, &acfg);

    let minimality_residual = regular.iter().map(|&v| g.h_norm(v)).fold(0.0, f64::max);
    let min_k = regular
        .iter()
        .map(|&v| g.gauss[v])
        .fold(f64::INFINITY, f64::min);
    let max_k = regular
        .iter()
        .map(|&v| g.gauss[v])
        .fold(f64::NEG_INFINITY, f64::max);
    let max_a2 = g.max_a2();
    let origin = (0..mesh.n_vertices())
        .filter(|&v| g.is_regular(v))
        .min_by(|&a, &b| mesh.vertices[a].norm().total_cmp(&mesh.vertices[b].norm()))
        .unwrap();
    let a_at_origin = g.a2[origin].sqrt();

    let (mut gap, mut spread, mut jstar, mut bspread, mut bdev, mut bexact) =
        (None, None, None, None, None, None);
    match mode {
        LimitMode::Symplectic => {
            let lo = angles.min_cos();
            let hi = angles.max_cos();
            gap = Some(1.0 - lo);
            spread = Some(hi - lo);
            let level =
                regular.iter().map(|&v| angles.vertex_cos[v]).sum::<f64>() / regular.len() as f64;
            if hi - lo < cfg.spread_tol && level > 0.0 && level < 1.0 - cfg.holomorphic_tol {
                let js = rotate_structure(level)?;
                let a2 = kahler_angle_with(mesh, &g, &js, &acfg);
                jstar = Some(
                    regular.iter().map(|&v| a2.vertex_cos[v]).sum::<f64>() / regular.len() as f64,
                );
            }
        }
        LimitMode::Lagrangian => {
            if let Ok(b) = lagrangian_angle_with(mesh, &omega, &acfg) {
                let vals: Vec<f64> = regular.iter().map(|&v| b.vertex_beta[v]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let (lo, hi) = vals
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), &x| {
                        (a.min(x), c.max(x))
                    });
                bspread = Some(hi - lo);
                bexact = Some(b.is_exact());
                bdev = Some(vals.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max));
            }
        }
    }

    // -Delta cos alpha = 2 |grad alpha|^2 cos alpha away from holomorphic points.
    let lap = cotan_laplacian(mesh, &g.dual_area, &angles.vertex_cos, 0.0);
    let mut e1_num = 0.0;
    let mut e1_den = 0.0;
    let mut e1_count = 0;
    for &v in &regular {
        if let Some(ga) = angles.grad_alpha_sq[v] {
            let r = -lap[v] - 2.0 * ga * angles.vertex_cos[v];
            e1_num += g.dual_area[v] * r * r;
            e1_den += g.dual_area[v];
            e1_count += 1;
        }
    }
    let e1_residual = (e1_den > 0.0).then(|| (e1_num / e1_den).sqrt());

    let quant = quantization(mesh, &Vec4::zeros(), cfg.quantization_radius);
    let comp_radius = cfg
        .area_radii
        .iter()
        .copied()
        .fold(cfg.quantization_radius, f64::max);
    let components = components_in_ball(mesh, &Vec4::zeros(), comp_radius)?
        .iter()
        .map(|c| ComponentReport {
            faces: c.len(),
            simplicity_ratio: simplicity_ratio(mesh, &topo, c, cfg.simplicity_samples),
        })
        .collect();
    let area_ratios = cfg
        .area_radii
        .iter()
        .map(|&r| Ok((r, area_ratio(mesh, &Vec4::zeros(), r)?)))
        .collect::<Result<Vec<_>>>()?;

    let minimal = minimality_residual <= cfg.minimal_tol;
    let curvature_window_ok = min_k >= -2.0 - cfg.curvature_tol && max_k <= cfg.curvature_tol;
    let nontrivial = max_a2 >= 0.5;
    let verdict = match (minimal, mode) {
        (false, _) => "minimality failed".to_string(),
        (true, _) if !nontrivial => "minimal, trivial (flat)".to_string(),
        (true, LimitMode::Symplectic) if gap.is_some_and(|x| x <= cfg.holomorphic_tol) => {
            "holomorphic curve".to_string()
        }
        (true, LimitMode::Symplectic) => "minimal, not holomorphic".to_string(),
        (true, LimitMode::Lagrangian) => "minimal Lagrangian".to_string(),
    };
    Ok(BlowupReport {
        mode,
        type_report: None,
        vertices: mesh.n_vertices(),
        minimality_residual,
        minimal,
        holomorphicity_gap: gap,
        cos_alpha_spread: spread,
        j_star_angle: jstar,
        beta_spread: bspread,
        beta_deviation: bdev,
        beta_exact: bexact,
        min_k,
        max_k,
        curvature_window_ok,
        a_at_origin,
        max_a2,
        e1_residual,
        e1_vertices: e1_count,
        quantization: quant,
        components,
        area_ratios,
        nontrivial,
        verdict,
    })
}

/// Rescales about the origin so that `|A| = 1` at the regular vertex nearest
/// to it. Returns the mesh and the factor used.
pub fn normalize_at_origin(
    mesh: &SurfaceMesh,
    geom_cfg: &GeometryConfig,
) -> Result<(SurfaceMesh, f64)> {
    let g = geometry_with(mesh, geom_cfg);
    let v = g
        .regular_vertices()
        .min_by(|&a, &b| mesh.vertices[a].norm().total_cmp(&mesh.vertices[b].norm()))
        .ok_or(Error::EmptyLimit)?;
    let lambda = g.a2[v].sqrt();
    if !(lambda > 0.0) {
        return Err(Error::Domain(
            "|A| vanishes at the origin; nothing to normalize".into(),
        ));
    }
    Ok((mesh.rescaled(lambda, &Vec4::zeros()), lambda))
}

/// `r^-2 int_{t - r^2}^{t} int_{Sigma_t cap B_r(X0)} |A|^2 dmu dt` by the
/// trapezoid rule over recorded snapshots and vertex lumping in space.
pub fn integral_curvature_window(
    hist: &CurvatureHistory,
    x0: &Vec4,
    r: f64,
    t: f64,
) -> Result<f64> {
    let lo = t - r * r;
    let eps = 1e-12 * t.abs().max(1.0);
    if hist.is_empty() || hist.t[0] > lo + eps || *hist.t.last().unwrap() < t - eps {
        return Err(Error::InsufficientCoverage(format!(
            "window [{lo}, {t}] not covered by recorded snapshots"
        )));
    }
    let spatial = |i: usize| -> f64 {
        hist.meshes[i]
            .vertices
            .iter()
            .enumerate()
            .filter(|(v, p)| hist.regular[i][*v] && (*p - x0).norm() <= r)
            .map(|(v, _)| hist.a2[i][v] * hist.dual_area[i][v])
            .sum()
    };
    let idx: Vec<usize> = (0..hist.len())
        .filter(|&i| hist.t[i] >= lo - eps && hist.t[i] <= t + eps)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InsufficientCoverage(
            "fewer than two snapshots in the window".into(),
        ));
    }
    let vals: Vec<f64> = idx.iter().map(|&i| spatial(i)).collect();
    let mut total = 0.0;
    for w in 0..idx.len() - 1 {
        total += 0.5 * (vals[w] + vals[w + 1]) * (hist.t[idx[w + 1]] - hist.t[idx[w]]);
    }
    Ok(total / (r * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    fn synthetic(n: usize) -> CurvatureHistory {
        // |A|^2 doubles per snapshot at vertex 5, stays 1 elsewhere.
        let mesh = scenario::plane_patch(1.0, 6);
        let g = geometry_with(&mesh, &GeometryConfig::default());
        let mut h = CurvatureHistory {
            t: Vec::new(),
            meshes: Vec::new(),
            a2: Vec::new(),
            dual_area: Vec::new(),
            regular: Vec::new(),
        };
        let hot = 24;
        for i in 0..n {
            h.push(i as f64 * 0.01, mesh.clone(), &g);
            let a2 = h.a2.last_mut().unwrap();
            for x in a2.iter_mut() {
                *x = 1.0;
            }
            a2[hot] = 2f64.powi(i as i32);
            let reg = h.regular.last_mut().unwrap();
            for r in reg.iter_mut() {
                *r = true;
            }
        }
        h
    }

    #[test]
    fn synthetic_selection_finds_known_maximizer() {
        let h = synthetic(12);
        let cfg = SelectionConfig {
            schedule: Schedule::FixedRadius {
                r: 3.0,
                count: 3,
                growth: 4.0,
            },
            ..Default::default()
        };
        let p = select_rescaling(&h, &Vec4::zeros(), None, &cfg).unwrap();
        for e in &p.entries {
            assert_eq!(e.x_k, 24);
            assert!((e.t_k - e.t_window).abs() < 1e-15);
            let i = e.snapshot;
            assert!((e.lambda * e.lambda - 2f64.powi(i as i32)).abs() < 1e-9);
        }
    }

    #[test]
    fn static_plane_has_empty_windows() {
        let mesh = scenario::plane_patch(1.0, 6);
        let g = geometry_with(&mesh, &GeometryConfig::default());
        let mut h = CurvatureHistory {
            t: vec![],
            meshes: vec![],
            a2: vec![],
            dual_area: vec![],
            regular: vec![],
        };
        for i in 0..4 {
            h.push(i as f64, mesh.clone(), &g);
        }
        let err =
            select_rescaling(&h, &Vec4::zeros(), None, &SelectionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyWindow { .. }));
    }

    #[test]
    fn point_triangle_cases() {
        let tri = [Vec4::zeros(), Vec4::x(), Vec4::y()];
        assert!((point_triangle_distance(&Vec4::new(0.2, 0.2, 1.0, 0.0), tri) - 1.0).abs() < 1e-15);
        assert!(
            (point_triangle_distance(&Vec4::new(-1.0, 0.0, 0.0, 0.0), tri) - 1.0).abs() < 1e-15
        );
        assert!((point_triangle_distance(&Vec4::new(0.0, 0.0, 0.0, 2.0), tri) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_limit_is_error() {
        let m = SurfaceMesh::new(vec![], vec![], crate::mesh::BoundaryPolicy::Closed);
        assert!(matches!(
            verify_limit(
                &m,
                LimitMode::Symplectic,
                &VerifyConfig::default(),
                &GeometryConfig::default()
            ),
            Err(Error::EmptyLimit)
        ));
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
