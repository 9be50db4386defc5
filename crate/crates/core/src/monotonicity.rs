//! Backward heat kernel and weighted Gaussian densities with their
//! dissipation terms.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::fitted_vertex_beta;
use crate::geometry::{geometry_with_topology, GeometryConfig, GeometryField};
use crate::kahler::{
    kahler_angle_with, lagrangian_angle_with, standard_structure, vertex_gradient, AngleConfig,
};
use crate::mesh::{SurfaceMesh, Topology, Vec4};

/// `(4 pi (t0 - t))^-1 exp(-|X - X0|^2 / (4 (t0 - t)))`.
pub fn backward_heat_kernel(x: &Vec4, x0: &Vec4, t: f64, t0: f64) -> Result<f64> {
    if !(t < t0) {
        return Err(Error::Domain(format!(
            "backward heat kernel needs t < t0, got t = {t}, t0 = {t0}"
        )));
    }
    let tau = t0 - t;
    // exp underflows to exactly 0 for large arguments.
    Ok((-(x - x0).norm_squared() / (4.0 * tau)).exp() / (4.0 * PI * tau))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    Unweighted,
    /// `1 / cos alpha`.
    InverseCos,
    /// `beta^2`.
    BetaSquared,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::Unweighted => "unweighted",
            WeightMode::InverseCos => "inverse-cos",
            WeightMode::BetaSquared => "beta-squared",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub eps_sym: f64,
    pub mono_tol_base: f64,
    /// Multiple of the quadrature error estimate added to `mono_tol_base`.
    pub quadrature_factor: f64,
    pub geometry: GeometryConfig,
    pub angles_sin_floor: f64,
    pub beta_cos_tol: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        let a = AngleConfig::default();
        Self {
            eps_sym: a.eps_sym,
            mono_tol_base: 1e-2,
            quadrature_factor: 3.0,
            geometry: GeometryConfig::default(),
            angles_sin_floor: a.sin_floor,
            beta_cos_tol: a.beta_cos_tol,
        }
    }
}

impl DensityConfig {
    fn angles(&self) -> AngleConfig {
        AngleConfig {
            sin_floor: self.angles_sin_floor,
            eps_sym: self.eps_sym,
            beta_cos_tol: self.beta_cos_tol,
            ..AngleConfig::default()
        }
    }
}

/// Per-vertex fields a density evaluation needs.
#[derive(Clone, Debug)]
pub struct DensityFields {
    pub geometry: GeometryField,
    pub weight: Vec<f64>,
    /// Integrand of the gradient dissipation term without the kernel.
    pub grad_term: Vec<f64>,
    /// Vertices where the weight is singular (`cos alpha <= eps_sym`).
    pub singular: Vec<bool>,
    pub boundary: Vec<bool>,
}

pub fn density_fields(
    mesh: &SurfaceMesh,
    mode: WeightMode,
    cfg: &DensityConfig,
) -> Result<DensityFields> {
    let topo = Topology::build(mesh);
    let g = geometry_with_topology(mesh, &topo, &cfg.geometry);
    let n = mesh.n_vertices();
    let (j, omega) = standard_structure();
    let acfg = cfg.angles();
    let (weight, grad_term, singular) = match mode {
        WeightMode::Unweighted => (vec![1.0; n], vec![0.0; n], vec![false; n]),
        WeightMode::InverseCos => {
            let a = kahler_angle_with(mesh, &g, &j, &acfg);
            let mut w = vec![0.0; n];
            let mut gt = vec![0.0; n];
            let mut sing = vec![false; n];
            for v in 0..n {
                let c = a.vertex_cos[v];
                if c <= cfg.eps_sym {
                    sing[v] = true;
                    continue;
                }
                w[v] = 1.0 / c;
                gt[v] = 2.0 * a.grad_cos[v].norm_squared() / (c * c * c);
            }
            (w, gt, sing)
        }
        WeightMode::BetaSquared => {
            let b = lagrangian_angle_with(mesh, &omega, &acfg)?;
            let beta = fitted_vertex_beta(&g, &omega, &b);
            let grad = vertex_gradient(mesh, &topo, &beta);
            (
                beta.iter().map(|x| x * x).collect(),
                grad.iter().map(|d| d.norm_squared()).collect(),
                vec![false; n],
            )
        }
    };
    Ok(DensityFields {
        geometry: g,
        weight,
        grad_term,
        singular,
        boundary: topo.boundary_vertex.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub phi: f64,
    pub unweighted: f64,
    /// `|vertex lumping - face centroid rule|` for `phi`.
    pub quadrature_error: f64,
}

fn density_from(
    mesh: &SurfaceMesh,
    f: &DensityFields,
    s: f64,
    s0: f64,
    x0: &Vec4,
) -> Result<(Density, Vec<f64>)> {
    let rho: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|x| backward_heat_kernel(x, x0, s, s0))
        .collect::<Result<_>>()?;
    let mut phi = 0.0;
    let mut plain = 0.0;
    for v in 0..mesh.n_vertices() {
        let m = rho[v] * f.geometry.dual_area[v];
        if f.singular[v] && m > 0.0 {
            return Err(Error::WeightSingular {
                vertex: v,
                cos: 1.0 / f.weight[v].max(f64::MIN_POSITIVE),
            });
        }
        phi += f.weight[v] * m;
        plain += m;
    }
    let mut centroid = 0.0;
    for (fi, face) in mesh.faces.iter().enumerate() {
        let w = face.iter().map(|&v| f.weight[v]).sum::<f64>() / 3.0;
        let r = backward_heat_kernel(&mesh.face_barycenter(fi), x0, s, s0)?;
        centroid += f.geometry.face_area[fi] * w * r;
    }
    Ok((
        Density {
            phi,
            unweighted: plain,
            quadrature_error: (phi - centroid).abs(),
        },
        rho,
    ))
}

/// Vertex-lumped `int w rho dmu`, plus the unweighted density.
pub fn gaussian_density(
    mesh: &SurfaceMesh,
    s: f64,
    s0: f64,
    x0: &Vec4,
    mode: WeightMode,
    cfg: &DensityConfig,
) -> Result<Density> {
    let f = density_fields(mesh, mode, cfg)?;
    Ok(density_from(mesh, &f, s, s0, x0)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub s: f64,
    pub phi: f64,
    pub unweighted: f64,
    pub term_shrinker: f64,
    pub term_grad: f64,
    pub quadrature_error: f64,
    /// Largest edge inside the kernel support exceeds `sqrt(s0 - s)`.
    pub under_resolved: bool,
    /// Plane-comparison estimate of kernel mass lost beyond a pinned boundary.
    pub truncation_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicDissipation {
    pub s1: f64,
    pub s2: f64,
    pub phi_drop: f64,
    pub int_shrinker: f64,
    pub int_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub x0: Vec4,
    pub s0: f64,
    pub mode: WeightMode,
    pub samples: Vec<DensitySample>,
    pub mono_tol: f64,
    pub monotone: bool,
    /// Largest `phi(s2) - phi(s1)` over resolved pairs `s1 < s2`.
    pub worst_increase: f64,
    pub dyadic: Vec<DyadicDissipation>,
}

fn sample(
    mesh: &SurfaceMesh,
    f: &DensityFields,
    s: f64,
    s0: f64,
    x0: &Vec4,
) -> Result<DensitySample> {
    let (d, rho) = density_from(mesh, f, s, s0, x0)?;
    let tau = s0 - s;
    let g = &f.geometry;
    let mut shrink = 0.0;
    let mut grad = 0.0;
    for (v, x) in mesh.vertices.iter().enumerate() {
        let m = rho[v] * g.dual_area[v];
        if m == 0.0 {
            continue;
        }
        let r = g.mean_curvature[v] + g.normal_part(v, &(x - x0)) / (2.0 * tau);
        shrink += f.weight[v] * r.norm_squared() * m;
        grad += f.grad_term[v] * m;
    }
    // Kernel support: exp(-d^2 / 4 tau) >= 1e-6.
    let support = (4.0 * tau * 6.0 * std::f64::consts::LN_10).sqrt();
    let mut h: f64 = 0.0;
    let mut d_boundary = f64::INFINITY;
    for face in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let mid = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
            if (mid - x0).norm() <= support {
                h = h.max((mesh.vertices[a] - mesh.vertices[b]).norm());
            }
        }
    }
    for (v, x) in mesh.vertices.iter().enumerate() {
        if f.boundary[v] {
            d_boundary = d_boundary.min((x - x0).norm());
        }
    }
    let truncation_bias = if d_boundary.is_finite() {
        (-d_boundary * d_boundary / (4.0 * tau)).exp()
    } else {
        0.0
    };
    Ok(DensitySample {
        s,
        phi: d.phi,
        unweighted: d.unweighted,
        term_shrinker: shrink,
        term_grad: grad,
        quadrature_error: d.quadrature_error,
        under_resolved: h > tau.sqrt(),
        truncation_bias,
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&t| t < x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return ys[i];
    }
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

fn integrate(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    let mut pts = vec![(a, interp(xs, ys, a))];
    pts.extend(
        xs.iter()
            .zip(ys)
            .filter(|(x, _)| **x > a && **x < b)
            .map(|(x, y)| (*x, *y)),
    );
    pts.push((b, interp(xs, ys, b)));
    pts.windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum()
}

/// Trace of the density and both dissipation terms over a stack of
/// snapshots at increasing times `s < s0`.
pub fn density_trace(
    s: &[f64],
    meshes: &[SurfaceMesh],
    s0: f64,
    x0: &Vec4,
    mode: WeightMode,
    cfg: &DensityConfig,
) -> Result<DensityTrace> {
    if s.len() != meshes.len() {
        return Err(Error::Config(
            "stack times and meshes differ in length".into(),
        ));
    }
    let mut samples = Vec::with_capacity(s.len());
    for (&si, m) in s.iter().zip(meshes) {
        if si >= s0 {
            continue;
        }
        let f = density_fields(m, mode, cfg)?;
        samples.push(sample(m, &f, si, s0, x0)?);
    }
    let resolved: Vec<&DensitySample> = samples.iter().filter(|x| !x.under_resolved).collect();
    let quad = resolved
        .iter()
        .map(|x| x.quadrature_error)
        .fold(0.0, f64::max);
    let mono_tol = cfg.mono_tol_base + cfg.quadrature_factor * quad;
    let mut worst = f64::NEG_INFINITY;
    let mut running_min = f64::INFINITY;
    for x in &resolved {
        if running_min.is_finite() {
            worst = worst.max(x.phi - running_min);
        }
        running_min = running_min.min(x.phi);
    }
    // Dyadic intervals [s0 - 4 tau, s0 - 2 tau] inside the resolved range.
    let mut dyadic = Vec::new();
    if resolved.len() >= 2 {
        let xs: Vec<f64> = resolved.iter().map(|x| x.s).collect();
        let phi: Vec<f64> = resolved.iter().map(|x| x.phi).collect();
        let ts: Vec<f64> = resolved.iter().map(|x| x.term_shrinker).collect();
        let tg: Vec<f64> = resolved.iter().map(|x| x.term_grad).collect();
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        let mut tau = (s0 - hi) / 2.0;
        if tau > 0.0 {
            while s0 - 4.0 * tau >= lo {
                let (s1, s2) = (s0 - 4.0 * tau, s0 - 2.0 * tau);
                dyadic.push(DyadicDissipation {
                    s1,
                    s2,
                    phi_drop: interp(&xs, &phi, s1) - interp(&xs, &phi, s2),
                    int_shrinker: integrate(&xs, &ts, s1, s2),
                    int_grad: integrate(&xs, &tg, s1, s2),
                });
                tau *= 2.0;
            }
        }
    }
    let worst_increase = if worst.is_finite() { worst } else { 0.0 };
    Ok(DensityTrace {
        x0: *x0,
        s0,
        mode,
        samples,
        mono_tol,
        monotone: worst_increase <= mono_tol,
        worst_increase,
        dyadic,
    })
}

/// Trace CSV with columns `s, phi, term_shrinker, term_grad, under_resolved_flag`.
pub fn write_trace_csv(path: &Path, trace: &DensityTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "s",
        "phi",
        "term_shrinker",
        "term_grad",
        "under_resolved_flag",
    ])?;
    for x in &trace.samples {
        w.write_record([
            format!("{:?}", x.s),
            format!("{:?}", x.phi),
            format!("{:?}", x.term_shrinker),
            format!("{:?}", x.term_grad),
            x.under_resolved.to_string(),
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
    fn kernel_values() {
        let z = Vec4::zeros();
        assert!((backward_heat_kernel(&z, &z, 0.0, 1.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        let x = Vec4::new(2.0, 0.0, 0.0, 0.0);
        let v = backward_heat_kernel(&x, &z, 0.0, 1.0).unwrap();
        assert!((v - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-16);
        assert!(backward_heat_kernel(&z, &z, 1.0, 1.0).is_err());
        assert_eq!(
            backward_heat_kernel(&Vec4::new(1e3, 0.0, 0.0, 0.0), &z, 0.0, 1e-3).unwrap(),
            0.0
        );
    }

    #[test]
    fn kernel_parabolic_scaling() {
        let z = Vec4::zeros();
        let lam: f64 = 3.0;
        for (x, t) in [
            (Vec4::new(0.3, -0.2, 0.5, 0.1), -0.7),
            (Vec4::new(1.0, 2.0, -1.0, 0.0), -2.5),
        ] {
            let a = backward_heat_kernel(&(x * lam), &z, lam * lam * t, 0.0).unwrap();
            let b = backward_heat_kernel(&x, &z, t, 0.0).unwrap() / (lam * lam);
            assert!((a - b).abs() <= 1e-15 * b);
        }
    }

    #[test]
    fn plane_density_is_one() {
        let mesh = scenario::plane_disc(8.0, 48);
        let d = gaussian_density(
            &mesh,
            -0.5,
            0.0,
            &Vec4::zeros(),
            WeightMode::InverseCos,
            &DensityConfig::default(),
        )
        .unwrap();
        assert!((d.unweighted - 1.0).abs() < 1e-2, "{d:?}");
        assert!((d.phi - 1.0).abs() < 1e-2, "{d:?}");
    }

    #[test]
    fn lagrangian_plane_beta_density_vanishes() {
        let mesh = scenario::lagrangian_plane_patch(4.0, 16);
        let d = gaussian_density(
            &mesh,
            -0.5,
            0.0,
            &Vec4::zeros(),
            WeightMode::BetaSquared,
            &DensityConfig::default(),
        )
        .unwrap();
        assert!(d.phi.abs() < 1e-20);
    }

    #[test]
    fn lagrangian_plane_is_singular_for_inverse_cos() {
        let mesh = scenario::lagrangian_plane_patch(4.0, 16);
        let r = gaussian_density(
            &mesh,
            -0.5,
            0.0,
            &Vec4::zeros(),
            WeightMode::InverseCos,
            &DensityConfig::default(),
        );
        assert!(matches!(r, Err(Error::WeightSingular { .. })));
    }
}
