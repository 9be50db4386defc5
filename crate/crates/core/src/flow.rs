//! Mean curvature flow `dF/dt = H` on triangle meshes.
//!
//! The default integrator is the explicit midpoint rule with `H` recomputed
//! at the half step; a semi-implicit variant solves
//! `(M - dt L) X' = M X` with the stiffness `L` and lumped mass `M` frozen
//! at the current positions. Pinned boundary vertices never move.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    corner_angles, corner_cotangents, cotan_laplacian, cotan_mean_curvature,
    geometry_with_topology, mixed_areas, projector_frame, GeometryConfig, GeometryField,
};
use crate::io::{read_kf_mesh, write_kf_mesh};
use crate::kahler::{
    kahler_angle_with, lagrangian_angle_with, standard_structure, wrap_angle, AngleConfig,
    AngleField, HolomorphicVolumeForm, LagrangianAngle,
};
use crate::mesh::{validate_mesh, SurfaceMesh, Topology, Vec4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DtPolicy {
    ExplicitCfl { safety: f64 },
    Fixed { dt: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Rk2,
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemeshPolicy {
    Off,
    FlipSmooth { every: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt_policy: DtPolicy,
    pub scheme: Scheme,
    pub t_end: f64,
    /// Steps between recorded snapshots.
    pub snapshot_stride: usize,
    /// Stop once `max |A|^2` exceeds this multiple of its initial value.
    pub a2_stop_factor: f64,
    /// Absolute stop level; overrides the factor when set.
    pub a2_max_stop: Option<f64>,
    pub remesh: RemeshPolicy,
    pub max_steps: usize,
    pub geometry: GeometryConfig,
    pub provenance: String,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_policy: DtPolicy::ExplicitCfl { safety: 0.5 },
            scheme: Scheme::Rk2,
            t_end: 1.0,
            snapshot_stride: 10,
            a2_stop_factor: 1e4,
            a2_max_stop: None,
            remesh: RemeshPolicy::Off,
            max_steps: 2_000_000,
            geometry: GeometryConfig::default(),
            provenance: String::new(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        match self.dt_policy {
            DtPolicy::ExplicitCfl { safety } if !(safety > 0.0 && safety <= 1.0) => {
                return Err(Error::Config(format!("CFL safety {safety} outside (0, 1]")));
            }
            DtPolicy::Fixed { dt } if !(dt > 0.0) => {
                return Err(Error::Config(format!("dt {dt} must be positive")));
            }
            _ => {}
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!(
                "t_end {} must be positive",
                self.t_end
            )));
        }
        if !(self.a2_stop_factor > 0.0) || self.a2_max_stop.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("blow-up threshold must be positive".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot stride must be at least 1".into()));
        }
        if let RemeshPolicy::FlipSmooth { every: 0 } = self.remesh {
            return Err(Error::Config("remesh interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// `dt = safety * h_min^2 / 4`.
pub fn cfl_dt(mesh: &SurfaceMesh, safety: f64) -> Result<f64> {
    let floor = 1e-14 * mesh.bbox_scale().powi(2);
    if let Some(f) = (0..mesh.n_faces()).find(|&f| !(mesh.face_area(f) > floor)) {
        return Err(Error::DegenerateMesh(format!(
            "face {f} has area below the floor"
        )));
    }
    let h = mesh.min_edge_length();
    if !(h > 0.0) {
        return Err(Error::DegenerateMesh("zero-length edge".into()));
    }
    Ok(safety * h * h / 4.0)
}

/// Cotangent mean curvature with pinned vertices held still.
pub fn velocity(mesh: &SurfaceMesh, pinned: &[bool]) -> Vec<Vec4> {
    let da = mixed_areas(mesh);
    let mut h = cotan_mean_curvature(mesh, &da);
    for (v, p) in h.iter_mut().zip(pinned) {
        if *p {
            *v = Vec4::zeros();
        }
    }
    h
}

/// One explicit midpoint step.
pub fn step(mesh: &SurfaceMesh, dt: f64) -> Result<SurfaceMesh> {
    let pinned = mesh.pinned_mask();
    let v1 = velocity(mesh, &pinned);
    let half = displaced(mesh, &v1, 0.5 * dt);
    let v2 = velocity(&half, &pinned);
    let next = displaced(mesh, &v2, dt);
    check_step(&next)?;
    Ok(next)
}

fn displaced(mesh: &SurfaceMesh, vel: &[Vec4], dt: f64) -> SurfaceMesh {
    let mut out = mesh.clone();
    for (p, v) in out.vertices.iter_mut().zip(vel) {
        *p += v * dt;
    }
    out
}

/// Cheap per-step health check: finite positions and face areas above the floor.
fn check_step(mesh: &SurfaceMesh) -> Result<()> {
    if let Some(v) = mesh
        .vertices
        .iter()
        .position(|p| !p.iter().all(|x| x.is_finite()))
    {
        return Err(Error::DegenerateMesh(format!("vertex {v} is not finite")));
    }
    let floor = 1e-14 * mesh.bbox_scale().powi(2);
    if let Some(f) = (0..mesh.n_faces()).find(|&f| !(mesh.face_area(f) > floor)) {
        return Err(Error::DegenerateMesh(format!(
            "face {f} collapsed below the area floor"
        )));
    }
    Ok(())
}

/// Symmetric cotangent stiffness `L` (nonpositive diagonal).
fn stiffness_entries(mesh: &SurfaceMesh) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(mesh.n_faces() * 12);
    for f in 0..mesh.n_faces() {
        let cot = corner_cotangents(&mesh.face_corners(f));
        let idx = mesh.faces[f];
        for k in 0..3 {
            let i = idx[(k + 1) % 3];
            let j = idx[(k + 2) % 3];
            let w = 0.5 * cot[k];
            out.push((i, j, w));
            out.push((j, i, w));
            out.push((i, i, -w));
            out.push((j, j, -w));
        }
    }
    out
}

/// One backward step on the frozen-metric Laplacian.
pub fn step_semi_implicit(mesh: &SurfaceMesh, dt: f64) -> Result<SurfaceMesh> {
    let n = mesh.n_vertices();
    let pinned = mesh.pinned_mask();
    let mass = mixed_areas(mesh);
    let mut free_index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for v in 0..n {
        if !pinned[v] {
            free_index[v] = free.len();
            free.push(v);
        }
    }
    let m = free.len();
    let mut out = mesh.clone();
    if m == 0 {
        return Ok(out);
    }
    let mut coo = CooMatrix::new(m, m);
    let mut rhs = DMatrix::zeros(m, 4);
    for (k, &v) in free.iter().enumerate() {
        coo.push(k, k, mass[v]);
        for c in 0..4 {
            rhs[(k, c)] = mass[v] * mesh.vertices[v][c];
        }
    }
    for (i, j, w) in stiffness_entries(mesh) {
        if pinned[i] {
            continue;
        }
        let fi = free_index[i];
        if pinned[j] {
            // Known pinned value moves to the right-hand side.
            for c in 0..4 {
                rhs[(fi, c)] += dt * w * mesh.vertices[j][c];
            }
        } else {
            coo.push(fi, free_index[j], -dt * w);
        }
    }
    let a = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&a).map_err(|e| {
        Error::DegenerateMesh(format!("semi-implicit system not positive definite: {e}"))
    })?;
    let x = chol.solve(&rhs);
    for (k, &v) in free.iter().enumerate() {
        out.vertices[v] = Vec4::new(x[(k, 0)], x[(k, 1)], x[(k, 2)], x[(k, 3)]);
    }
    check_step(&out)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub t: f64,
    pub area: f64,
    pub max_a2: f64,
    pub min_cos_alpha: f64,
    pub max_h: f64,
    pub beta_range: Option<(f64, f64)>,
    pub remesh_flag: bool,
}

/// Geometry and angle fields of one snapshot.
pub struct SnapshotFields {
    pub geometry: GeometryField,
    pub angles: AngleField,
    pub beta: Option<LagrangianAngle>,
}

pub fn snapshot_fields(mesh: &SurfaceMesh, cfg: &GeometryConfig) -> SnapshotFields {
    let topo = Topology::build(mesh);
    let geom = geometry_with_topology(mesh, &topo, cfg);
    let (j, omega) = standard_structure();
    let acfg = AngleConfig::default();
    let angles = kahler_angle_with(mesh, &geom, &j, &acfg);
    let beta = lagrangian_angle_with(mesh, &omega, &acfg).ok();
    SnapshotFields {
        geometry: geom,
        angles,
        beta,
    }
}

pub fn summarize(
    mesh: &SurfaceMesh,
    t: f64,
    cfg: &GeometryConfig,
    remesh_flag: bool,
) -> (Summary, SnapshotFields) {
    let fields = snapshot_fields(mesh, cfg);
    let summary = Summary {
        t,
        area: mesh.total_area(),
        max_a2: fields.geometry.max_a2(),
        min_cos_alpha: fields.angles.min_cos(),
        max_h: fields.geometry.max_h(),
        beta_range: fields.beta.as_ref().map(|b| b.range()),
        remesh_flag,
    };
    (summary, fields)
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub mesh: SurfaceMesh,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    TEnd,
    BlowupThreshold,
    MeshFailure { t: f64, diagnostic: String },
    MaxSteps,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::TEnd => "t_end",
            Termination::BlowupThreshold => "blow-up-threshold",
            Termination::MeshFailure { .. } => "mesh-failure",
            Termination::MaxSteps => "max-steps",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    pub config: FlowConfig,
    /// Times of remesh events.
    pub remesh_events: Vec<f64>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn summaries(&self) -> Vec<Summary> {
        self.snapshots.iter().map(|s| s.summary.clone()).collect()
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots
            .last()
            .expect("trajectory has at least one snapshot")
    }
}

pub fn run(mesh: &SurfaceMesh, config: &FlowConfig) -> Result<FlowTrajectory> {
    run_from(mesh, 0.0, 0, config)
}

/// Integrates from time `t0`; used directly to resume from a checkpoint.
pub fn run_from(
    mesh: &SurfaceMesh,
    t0: f64,
    step0: usize,
    config: &FlowConfig,
) -> Result<FlowTrajectory> {
    config.validate()?;
    let report = validate_mesh(mesh);
    if !report.is_valid() {
        return Err(Error::InvalidMesh(report.summary()));
    }
    let (s0, _) = summarize(mesh, t0, &config.geometry, false);
    let stop = config
        .a2_max_stop
        .unwrap_or(config.a2_stop_factor * s0.max_a2.max(f64::MIN_POSITIVE));
    let mut traj = FlowTrajectory {
        snapshots: vec![Snapshot {
            t: t0,
            step: step0,
            mesh: mesh.clone(),
            summary: s0,
        }],
        termination: Termination::TEnd,
        config: config.clone(),
        remesh_events: Vec::new(),
    };
    let mut current = mesh.clone();
    let mut t = t0;
    let mut k = step0;
    let mut remeshed_since_snapshot = false;
    let t_tol = 1e-12 * config.t_end.abs().max(1.0);
    let record = |traj: &mut FlowTrajectory,
                  mesh: &SurfaceMesh,
                  t: f64,
                  k: usize,
                  flag: bool|
     -> Result<bool> {
        let rep = validate_mesh(mesh);
        if !rep.is_valid() {
            return Err(Error::MeshFailure {
                t,
                diagnostic: rep.summary(),
            });
        }
        let (s, _) = summarize(mesh, t, &config.geometry, flag);
        let blown = s.max_a2 >= stop;
        traj.snapshots.push(Snapshot {
            t,
            step: k,
            mesh: mesh.clone(),
            summary: s,
        });
        Ok(blown)
    };
    while t < config.t_end - t_tol {
        if k - step0 >= config.max_steps {
            traj.termination = Termination::MaxSteps;
            break;
        }
        let dt = match config.dt_policy {
            DtPolicy::ExplicitCfl { safety } => cfl_dt(&current, safety),
            DtPolicy::Fixed { dt } => Ok(dt),
        };
        let result = dt.and_then(|dt| {
            let dt = dt.min(config.t_end - t);
            let next = match config.scheme {
                Scheme::Rk2 => step(&current, dt),
                Scheme::SemiImplicit => step_semi_implicit(&current, dt),
            }?;
            Ok((next, dt))
        });
        let (next, dt) = match result {
            Ok(x) => x,
            Err(e) => {
                traj.termination = Termination::MeshFailure {
                    t,
                    diagnostic: e.to_string(),
                };
                break;
            }
        };
        current = next;
        t += dt;
        k += 1;
        if let RemeshPolicy::FlipSmooth { every } = config.remesh {
            if k.is_multiple_of(every) {
                let (m, rep) = remesh(&current);
                if rep.flips > 0 || rep.max_displacement > 0.0 {
                    current = m;
                    traj.remesh_events.push(t);
                    remeshed_since_snapshot = true;
                }
            }
        }
        // The cotangent H bounds |A|^2 from below through |H|^2 <= 2 |A|^2,
        // so the threshold is also checked between snapshots.
        let early = {
            let h = velocity(&current, &current.pinned_mask());
            h.iter().map(|v| v.norm_squared()).fold(0.0, f64::max) * 0.5 >= stop
        };
        let done = t >= config.t_end - t_tol;
        if (k - step0).is_multiple_of(config.snapshot_stride) || done || early {
            match record(&mut traj, &current, t, k, remeshed_since_snapshot) {
                Ok(true) => {
                    traj.termination = Termination::BlowupThreshold;
                    break;
                }
                Ok(false) => {}
                Err(Error::MeshFailure { t, diagnostic }) => {
                    traj.termination = Termination::MeshFailure { t, diagnostic };
                    break;
                }
                Err(e) => return Err(e),
            }
            remeshed_since_snapshot = false;
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub monotone: bool,
    /// Largest decrease of the series per unit time between consecutive samples.
    pub worst_rate: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub t: Vec<f64>,
    pub min_cos_alpha: Vec<f64>,
    pub max_a2: Vec<f64>,
    pub max_h: Vec<f64>,
    pub area: Vec<f64>,
    pub min_cos_verdict: Option<MonotoneVerdict>,
}

/// Worst per-unit-time decrease of a sampled series.
pub fn decrease_rate(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .filter(|(tw, _)| tw[1] > tw[0])
        .map(|(tw, yw)| (yw[0] - yw[1]) / (tw[1] - tw[0]))
        .fold(0.0, f64::max)
}

/// Nondecreasing within `tol` per unit time, in the form
/// `y_{k+1} >= y_k - tol (t_{k+1} - t_k)`.
pub fn monotone_verdict(t: &[f64], y: &[f64], tol: f64) -> MonotoneVerdict {
    let ok = t
        .windows(2)
        .zip(y.windows(2))
        .all(|(tw, yw)| yw[1] >= yw[0] - tol * (tw[1] - tw[0]) - 1e-12);
    MonotoneVerdict {
        monotone: ok,
        worst_rate: decrease_rate(t, y),
        tol,
    }
}

pub fn track_extrema(traj: &FlowTrajectory, tol_mp: f64) -> Result<Extrema> {
    if traj.snapshots.len() < 2 {
        return Err(Error::InsufficientSequence {
            valid: traj.snapshots.len(),
            needed: 2,
        });
    }
    let s = traj.summaries();
    let t: Vec<f64> = s.iter().map(|x| x.t).collect();
    let min_cos: Vec<f64> = s.iter().map(|x| x.min_cos_alpha).collect();
    let symplectic = min_cos[0] > 0.0;
    Ok(Extrema {
        min_cos_verdict: symplectic.then(|| monotone_verdict(&t, &min_cos, tol_mp)),
        t,
        min_cos_alpha: min_cos,
        max_a2: s.iter().map(|x| x.max_a2).collect(),
        max_h: s.iter().map(|x| x.max_h).collect(),
        area: s.iter().map(|x| x.area).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularTimeFit {
    pub t_hat: f64,
    /// Slope of `1 / max |A|^2` in `t`; `-4` for a shrinking sphere.
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the linear fit.
    pub residual: f64,
    pub n_points: usize,
}

/// Least-squares line through `(t, 1 / max |A|^2)` over the trailing fraction
/// of snapshots, extrapolated to zero.
pub fn estimate_singular_time(traj: &FlowTrajectory, window_frac: f64) -> Result<SingularTimeFit> {
    let s = traj.summaries();
    let n = s.len();
    let w = ((n as f64 * window_frac).ceil() as usize).clamp(2.min(n), n);
    if n < 2 {
        return Err(Error::NoBlowup("fewer than two snapshots".into()));
    }
    let pts: Vec<(f64, f64)> = s[n - w..]
        .iter()
        .filter(|x| x.max_a2 > 0.0)
        .map(|x| (x.t, 1.0 / x.max_a2))
        .collect();
    if pts.len() < 2 {
        return Err(Error::NoBlowup(
            "curvature vanishes over the fit window".into(),
        ));
    }
    let first = &s[n - w];
    let last = &s[n - 1];
    if !(last.max_a2 > first.max_a2 * (1.0 + 1e-9)) {
        return Err(Error::NoBlowup(
            "max |A|^2 is not increasing over the fit window".into(),
        ));
    }
    let (slope, intercept, residual) = linear_fit(&pts);
    if !(slope < 0.0) {
        return Err(Error::NoBlowup(format!(
            "fit slope {slope} is not negative"
        )));
    }
    Ok(SingularTimeFit {
        t_hat: -intercept / slope,
        slope,
        intercept,
        residual,
        n_points: pts.len(),
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, rms residual)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rms = (pts.iter().map(|p| (p.1 - a * p.0 - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemeshReport {
    pub flips: usize,
    pub skipped_flips: usize,
    pub max_displacement: f64,
    /// Largest estimated normal drift `|H| d^2 / 2` of a smoothing move.
    pub drift: f64,
    pub min_angle_before: f64,
    pub min_angle_after: f64,
}

pub fn min_face_angle(mesh: &SurfaceMesh) -> f64 {
    (0..mesh.n_faces())
        .flat_map(|f| corner_angles(&mesh.face_corners(f)))
        .fold(f64::INFINITY, f64::min)
}

/// Delaunay edge flips followed by one pass of tangential smoothing.
pub fn remesh(mesh: &SurfaceMesh) -> (SurfaceMesh, RemeshReport) {
    let min_before = min_face_angle(mesh);
    let mut out = mesh.clone();
    let (flips, skipped) = delaunay_flips(&mut out, 3);
    let (max_disp, drift) = tangential_smooth(&mut out, 0.5, 1e-3);
    let report = RemeshReport {
        flips,
        skipped_flips: skipped,
        max_displacement: max_disp,
        drift,
        min_angle_before: min_before,
        min_angle_after: min_face_angle(&out),
    };
    (out, report)
}

fn opposite(tri: [usize; 3], a: usize, b: usize) -> usize {
    tri.into_iter()
        .find(|&v| v != a && v != b)
        .unwrap_or(usize::MAX)
}

/// Flips interior edges whose opposite angles sum past `pi`, in up to `passes` sweeps.
pub fn delaunay_flips(mesh: &mut SurfaceMesh, passes: usize) -> (usize, usize) {
    let mut flips = 0;
    let mut skipped = 0;
    for _ in 0..passes {
        let topo = Topology::build(mesh);
        let mut touched = vec![false; mesh.n_faces()];
        let mut changed = false;
        for (e, &[a, b]) in topo.edges.iter().enumerate() {
            let ef = &topo.edge_faces[e];
            if ef.len() != 2 || touched[ef[0]] || touched[ef[1]] {
                continue;
            }
            let (f1, f2) = (ef[0], ef[1]);
            let c = opposite(mesh.faces[f1], a, b);
            let d = opposite(mesh.faces[f2], a, b);
            let angle_at = |o: usize| {
                let p = mesh.vertices[o];
                let u = mesh.vertices[a] - p;
                let w = mesh.vertices[b] - p;
                (u.dot(&w) / (u.norm() * w.norm())).clamp(-1.0, 1.0).acos()
            };
            if angle_at(c) + angle_at(d) <= std::f64::consts::PI + 1e-10 {
                continue;
            }
            if c == d || topo.edge_id(c, d).is_some() {
                skipped += 1;
                continue;
            }
            // Orient (x, y) as traversed by f1.
            let t1 = mesh.faces[f1];
            let pos = |v: usize| t1.iter().position(|&x| x == v).unwrap();
            let (x, y) = if (pos(a) + 1) % 3 == pos(b) {
                (a, b)
            } else {
                (b, a)
            };
            let new1 = [x, d, c];
            let new2 = [d, y, c];
            let before = mesh.face_area(f1) + mesh.face_area(f2);
            let (old1, old2) = (mesh.faces[f1], mesh.faces[f2]);
            mesh.faces[f1] = new1;
            mesh.faces[f2] = new2;
            let floor = 1e-14 * before;
            if !(mesh.face_area(f1) > floor && mesh.face_area(f2) > floor) {
                mesh.faces[f1] = old1;
                mesh.faces[f2] = old2;
                skipped += 1;
                continue;
            }
            touched[f1] = true;
            touched[f2] = true;
            flips += 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    (flips, skipped)
}

/// Moves free vertices toward their 1-ring centroid inside the estimated
/// tangent plane. Each move is capped so that `|H| d^2 / 2 <= drift_tol * l`
/// for the local mean edge length `l`. Returns `(max displacement, max drift)`.
pub fn tangential_smooth(mesh: &mut SurfaceMesh, step: f64, drift_tol: f64) -> (f64, f64) {
    let topo = Topology::build(mesh);
    let pinned = mesh.pinned_mask();
    let da = mixed_areas(mesh);
    let h = cotan_mean_curvature(mesh, &da);
    let mut moves = vec![Vec4::zeros(); mesh.n_vertices()];
    let mut max_disp: f64 = 0.0;
    let mut max_drift: f64 = 0.0;
    for v in 0..mesh.n_vertices() {
        if pinned[v] || topo.boundary_vertex[v] || topo.vertex_neighbors[v].is_empty() {
            continue;
        }
        let Some(([t1, t2], _)) = projector_frame(mesh, &topo, v) else {
            continue;
        };
        let nb = &topo.vertex_neighbors[v];
        let p = mesh.vertices[v];
        let centroid = nb.iter().map(|&w| mesh.vertices[w]).sum::<Vec4>() / nb.len() as f64;
        let l = nb
            .iter()
            .map(|&w| (mesh.vertices[w] - p).norm())
            .sum::<f64>()
            / nb.len() as f64;
        let delta = (centroid - p) * step;
        let mut tang = t1 * t1.dot(&delta) + t2 * t2.dot(&delta);
        let kappa = h[v].norm();
        let cap = if kappa > 0.0 {
            (2.0 * drift_tol * l / kappa).sqrt()
        } else {
            f64::INFINITY
        };
        let d = tang.norm();
        if d > cap {
            tang *= cap / d;
        }
        let d = tang.norm();
        max_disp = max_disp.max(d);
        max_drift = max_drift.max(0.5 * kappa * d * d);
        moves[v] = tang;
    }
    for (p, m) in mesh.vertices.iter_mut().zip(&moves) {
        *p += m;
    }
    (max_disp, max_drift)
}

/// Vertex Lagrangian angle read from the fitted tangent frames, shifted by
/// multiples of `2 pi` to agree with the unwrapped face-based values.
pub fn fitted_vertex_beta(
    geom: &GeometryField,
    omega: &HolomorphicVolumeForm,
    beta: &LagrangianAngle,
) -> Vec<f64> {
    (0..geom.n_vertices())
        .map(|v| {
            let reference = beta.vertex_beta[v];
            if !geom.is_regular(v) {
                return reference;
            }
            let [t1, t2] = geom.tangent[v];
            let raw = omega.eval(&t1, &t2).arg();
            reference + wrap_angle(raw - reference)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatResidual {
    /// Area-weighted RMS of `d beta / dt - Delta beta`.
    pub residual: f64,
    /// Area-weighted RMS of `Delta beta`, for scale.
    pub laplacian_scale: f64,
    pub vertices: usize,
}

/// Residual of `(d/dt - Delta) beta = 0` between two snapshots of a
/// Lagrangian flow, with the Laplacian averaged over both ends.
pub fn beta_heat_residual(
    before: &SurfaceMesh,
    after: &SurfaceMesh,
    dt: f64,
    geom_cfg: &GeometryConfig,
    include: impl Fn(usize) -> bool,
) -> Result<HeatResidual> {
    let (_, omega) = standard_structure();
    let acfg = AngleConfig::default();
    let fields = |m: &SurfaceMesh| -> Result<(GeometryField, Vec<f64>)> {
        let topo = Topology::build(m);
        let g = geometry_with_topology(m, &topo, geom_cfg);
        let b = lagrangian_angle_with(m, &omega, &acfg)?;
        let vb = fitted_vertex_beta(&g, &omega, &b);
        Ok((g, vb))
    };
    let (g0, b0) = fields(before)?;
    let (g1, b1) = fields(after)?;
    let l0 = cotan_laplacian(before, &g0.dual_area, &b0, 0.0);
    let l1 = cotan_laplacian(after, &g1.dual_area, &b1, 0.0);
    let mut num = 0.0;
    let mut scale = 0.0;
    let mut den = 0.0;
    let mut count = 0;
    for v in 0..before.n_vertices() {
        if !(include(v) && g0.is_regular(v) && g1.is_regular(v)) {
            continue;
        }
        let dbdt = wrap_angle(b1[v] - b0[v]) / dt;
        let lap = 0.5 * (l0[v] + l1[v]);
        let w = g0.dual_area[v];
        num += w * (dbdt - lap).powi(2);
        scale += w * lap * lap;
        den += w;
        count += 1;
    }
    if den == 0.0 {
        return Err(Error::Domain("no vertices in the residual region".into()));
    }
    Ok(HeatResidual {
        residual: (num / den).sqrt(),
        laplacian_scale: (scale / den).sqrt(),
        vertices: count,
    })
}

/// `beta~ = exp(-R t / 4) beta` for a Kahler-Einstein ambient scalar curvature `R`.
pub fn scalar_curvature_transform(beta: f64, t: f64, scalar_curvature: f64) -> f64 {
    (-scalar_curvature * t / 4.0).exp() * beta
}

pub const KF_TRAJ_HEADER: &str = "KF-TRAJ v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub index: usize,
    pub step: usize,
    pub t: f64,
    pub file: String,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajManifest {
    pub termination: Termination,
    /// `"t"` for flow time, `"s"` for rescaled stacks.
    pub time_axis: String,
    pub config: serde_json::Value,
    pub snapshots: Vec<SnapshotRecord>,
}

/// Writes `manifest.txt` plus one `KF-MESH v1` file per snapshot into `dir`.
pub fn write_checkpoint(
    dir: &Path,
    snapshots: &[(usize, f64, &SurfaceMesh, &Summary)],
    termination: &Termination,
    time_axis: &str,
    config: serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    for (i, &(step, t, mesh, summary)) in snapshots.iter().enumerate() {
        let file = format!("snap_{i:05}.kfmesh");
        write_kf_mesh(mesh, &dir.join(&file))?;
        records.push(SnapshotRecord {
            index: i,
            step,
            t,
            file,
            summary: summary.clone(),
        });
    }
    let mut text = String::from(KF_TRAJ_HEADER);
    text.push('\n');
    text += &format!("termination {}\n", serde_json::to_string(termination)?);
    text += &format!("time_axis {time_axis}\n");
    text += &format!("config {}\n", serde_json::to_string(&config)?);
    for r in &records {
        text += &format!("snapshot {}\n", serde_json::to_string(r)?);
    }
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

pub fn write_trajectory(dir: &Path, traj: &FlowTrajectory) -> Result<()> {
    let snaps: Vec<_> = traj
        .snapshots
        .iter()
        .map(|s| (s.step, s.t, &s.mesh, &s.summary))
        .collect();
    write_checkpoint(
        dir,
        &snaps,
        &traj.termination,
        "t",
        serde_json::to_value(&traj.config)?,
    )?;
    write_summary_csv(&dir.join("summary.csv"), &traj.summaries())
}

pub fn read_manifest(dir: &Path) -> Result<TrajManifest> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.trim() == KF_TRAJ_HEADER => {}
        _ => return Err(perr(1, "expected 'KF-TRAJ v1'")),
    }
    let mut termination = None;
    let mut time_axis = "t".to_string();
    let mut config = serde_json::Value::Null;
    let mut snapshots = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| perr(i + 1, "expected '<key> <value>'"))?;
        match key {
            "termination" => {
                termination =
                    Some(serde_json::from_str(rest).map_err(|e| perr(i + 1, &e.to_string()))?)
            }
            "time_axis" => time_axis = rest.trim().to_string(),
            "config" => {
                config = serde_json::from_str(rest).map_err(|e| perr(i + 1, &e.to_string()))?
            }
            "snapshot" => {
                snapshots.push(serde_json::from_str(rest).map_err(|e| perr(i + 1, &e.to_string()))?)
            }
            other => return Err(perr(i + 1, &format!("unknown key {other:?}"))),
        }
    }
    Ok(TrajManifest {
        termination: termination.ok_or_else(|| perr(0, "missing termination"))?,
        time_axis,
        config,
        snapshots,
    })
}

pub fn snapshot_path(dir: &Path, record: &SnapshotRecord) -> PathBuf {
    dir.join(&record.file)
}

/// Loads a flow-time checkpoint back into a trajectory.
pub fn read_trajectory(dir: &Path) -> Result<FlowTrajectory> {
    let manifest = read_manifest(dir)?;
    let config: FlowConfig = serde_json::from_value(manifest.config.clone())?;
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for r in &manifest.snapshots {
        snapshots.push(Snapshot {
            t: r.t,
            step: r.step,
            mesh: read_kf_mesh(&snapshot_path(dir, r))?,
            summary: r.summary.clone(),
        });
    }
    if snapshots.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "trajectory has no snapshots".into(),
        });
    }
    Ok(FlowTrajectory {
        snapshots,
        termination: manifest.termination,
        config,
        remesh_events: Vec::new(),
    })
}

/// Continues a stored trajectory from snapshot `index`.
pub fn resume(dir: &Path, index: usize, config: &FlowConfig) -> Result<FlowTrajectory> {
    let traj = read_trajectory(dir)?;
    let snap = traj
        .snapshots
        .get(index)
        .ok_or_else(|| Error::Config(format!("snapshot {index} not in checkpoint")))?;
    run_from(&snap.mesh, snap.t, snap.step, config)
}

/// Summary CSV with columns `t, area, max_A2, min_cos_alpha, max_H, remesh_flag`.
pub fn write_summary_csv(path: &Path, summaries: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "t",
        "area",
        "max_A2",
        "min_cos_alpha",
        "max_H",
        "remesh_flag",
    ])?;
    for s in summaries {
        w.write_record([
            format!("{:?}", s.t),
            format!("{:?}", s.area),
            format!("{:?}", s.max_a2),
            format!("{:?}", s.min_cos_alpha),
            format!("{:?}", s.max_h),
            (s.remesh_flag as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    #[test]
    fn cfl_formula() {
        let m = scenario::plane_patch(1.0, 8);
        let h = 0.25;
        assert!((cfl_dt(&m, 0.5).unwrap() - h * h / 8.0).abs() < 1e-15);
        let fine = scenario::plane_patch(1.0, 16);
        assert!((cfl_dt(&fine, 0.5).unwrap() * 4.0 - cfl_dt(&m, 0.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn cfl_rejects_collapsed_face() {
        let mut m = scenario::plane_patch(1.0, 2);
        let [a, b, _] = m.faces[0];
        m.vertices[b] = m.vertices[a];
        assert!(cfl_dt(&m, 0.5).is_err());
    }

    #[test]
    fn plane_does_not_move() {
        let m = scenario::plane_patch(1.0, 8);
        let dt = cfl_dt(&m, 0.5).unwrap();
        let next = step(&m, dt).unwrap();
        for (p, q) in m.vertices.iter().zip(&next.vertices) {
            assert!((p - q).norm() < 1e-14);
        }
        let semi = step_semi_implicit(&m, dt).unwrap();
        for (p, q) in m.vertices.iter().zip(&semi.vertices) {
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (a, b, r) = linear_fit(&pts);
        assert!((a + 0.5).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn monotone_verdict_tolerance() {
        let t = [0.0, 1.0, 2.0];
        assert!(monotone_verdict(&t, &[0.5, 0.5005, 0.5], 1e-3).monotone);
        assert!(!monotone_verdict(&t, &[0.5, 0.49, 0.5], 1e-3).monotone);
    }

    #[test]
    fn flips_fix_bad_diagonal() {
        // A unit square split along its longer-angle diagonal after shearing.
        let v = vec![
            Vec4::new(0.0, 0.0, 0.0, 0.0),
            Vec4::new(1.0, 0.0, 0.0, 0.0),
            Vec4::new(1.6, 0.3, 0.0, 0.0),
            Vec4::new(0.6, 0.3, 0.0, 0.0),
        ];
        let mut m = SurfaceMesh::with_pinned_boundary(v, vec![[0, 1, 2], [0, 2, 3]]);
        let before = min_face_angle(&m);
        let (flips, _) = delaunay_flips(&mut m, 2);
        assert_eq!(flips, 1);
        assert!(min_face_angle(&m) > before);
        assert!(validate_mesh(&m).is_valid());
    }

    #[test]
    fn scalar_transform_identity_at_zero_curvature() {
        assert_eq!(scalar_curvature_transform(0.7, 3.0, 0.0), 0.7);
        assert!((scalar_curvature_transform(1.0, 4.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
