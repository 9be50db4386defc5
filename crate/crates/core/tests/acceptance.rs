//! Acceptance criteria. Each test prints exactly one `PASS`/`FAIL` line and
//! then asserts it. Run with `cargo test -p kflow-core --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use kflow_core::analysis::{
    analyze, AnalysisConfig, AnalysisOutput, AnalysisReport, BlowupAnalysis,
};
use kflow_core::flow::{
    beta_heat_residual, estimate_singular_time, linear_fit, run, track_extrema, FlowConfig,
    FlowTrajectory, RemeshPolicy,
};
use kflow_core::geometry::{geometry, GeometryField};
use kflow_core::kahler::{
    kahler_angle, lagrangian_angle, mean_curvature_form_residual, rotate_structure,
    standard_structure,
};
use kflow_core::measure::quantization;
use kflow_core::monotonicity::{density_trace, gaussian_density, DensityConfig, WeightMode};
use kflow_core::scenario::{
    clifford_loops, clifford_torus, holomorphic_graph, icosphere, lagrangian_potential_graph,
    plane_disc, plane_patch, symplectic_perturbed_graph,
};
use kflow_core::singularity::{
    classify_type, restrict_to_ball, Schedule, SelectionConfig, TypeConfig, TypeVerdict,
};
use kflow_core::{SurfaceMesh, Vec4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, ok: bool, detail: String) {
    println!(
        "{} criterion {n}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

fn near_singular_flow(mesh: &SurfaceMesh) -> FlowTrajectory {
    let cfg = FlowConfig {
        t_end: 1.0,
        snapshot_stride: 20,
        max_steps: 200_000,
        remesh: RemeshPolicy::FlipSmooth { every: 10 },
        ..Default::default()
    };
    run(mesh, &cfg).unwrap()
}

struct Blowup {
    traj: FlowTrajectory,
    out: AnalysisOutput,
}

impl Blowup {
    fn report(&self) -> &BlowupAnalysis {
        match &self.out.report {
            AnalysisReport::Blowup(b) => b,
            AnalysisReport::NoBlowup { reason, .. } => panic!("expected a blow-up, got: {reason}"),
        }
    }
}

fn sphere() -> &'static Blowup {
    static CELL: OnceLock<Blowup> = OnceLock::new();
    CELL.get_or_init(|| {
        let traj = near_singular_flow(&icosphere(1.0, 3));
        let out = analyze(&traj, &AnalysisConfig::default()).unwrap();
        Blowup { traj, out }
    })
}

const TORUS_N: usize = 32;

fn torus() -> &'static Blowup {
    static CELL: OnceLock<Blowup> = OnceLock::new();
    CELL.get_or_init(|| {
        let traj = near_singular_flow(&clifford_torus(1.0, TORUS_N));
        let cfg = AnalysisConfig {
            selection: SelectionConfig {
                schedule: Schedule::FixedRadius {
                    r: 3.0,
                    count: 4,
                    growth: 4.0,
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let out = analyze(&traj, &cfg).unwrap();
        Blowup { traj, out }
    })
}

const PERTURBED_T_END: f64 = 0.2;

fn perturbed() -> &'static Vec<FlowTrajectory> {
    static CELL: OnceLock<Vec<FlowTrajectory>> = OnceLock::new();
    CELL.get_or_init(|| {
        (0..5u64)
            .map(|seed| {
                let (mesh, _, _) = symplectic_perturbed_graph(0.5, seed, 3.0, 32);
                let cfg = FlowConfig {
                    t_end: PERTURBED_T_END,
                    snapshot_stride: 10,
                    ..Default::default()
                };
                run(&mesh, &cfg).unwrap()
            })
            .collect()
    })
}

fn planar_radius(x: &Vec4) -> f64 {
    x[0].hypot(x[1])
}

/// Largest interior `|K - (|H|^2 - |A|^2) / 2|`.
fn gauss_residual(g: &GeometryField, include: impl Fn(usize) -> bool) -> f64 {
    g.regular_vertices()
        .filter(|&v| include(v))
        .map(|v| (g.gauss_defect[v] - g.gauss[v]).abs())
        .fold(0.0, f64::max)
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[test]
fn c01_sphere_oracle() {
    let b = sphere();
    let rep = b.report();
    let t_hat = rep.fit.t_hat;
    let t_err = (t_hat - 0.25).abs() / 0.25;
    // Area against the closed form up to 80% of the extinction time, where the
    // closed-form area is still a sizeable fraction of the initial one.
    let area_err = b
        .traj
        .snapshots
        .iter()
        .filter(|s| s.t <= 0.8 * 0.25)
        .map(|s| (s.summary.area / (4.0 * PI * (1.0 - 4.0 * s.t)) - 1.0).abs())
        .fold(0.0, f64::max);
    let m = rep.type_report.final_m;
    let ok = t_err <= 0.02 && area_err <= 0.02 && (m - 0.5).abs() <= 0.05;
    verdict(
        1,
        ok,
        format!("T = {t_hat:.6} (rel err {t_err:.1e}), area rel err {area_err:.2e}, (T-t) max|A|^2 -> {m:.4}"),
    );
}

#[test]
fn c02_clifford_torus_oracle() {
    let b = torus();
    let rep = b.report();
    let t_hat = rep.fit.t_hat;
    let t_err = (t_hat - 0.5).abs() / 0.5;
    let pts: Vec<(f64, f64)> = b
        .traj
        .snapshots
        .iter()
        .filter(|s| s.t <= 0.8 * 0.5)
        .map(|s| {
            // r is the radius of each factor circle, so |x|^2 = 2 r^2.
            let v = &s.mesh.vertices;
            let r2 = v.iter().map(|x| 0.5 * x.norm_squared()).sum::<f64>() / v.len() as f64;
            (s.t, r2)
        })
        .collect();
    let (slope, _, _) = linear_fit(&pts);
    let m = rep.type_report.final_m;
    let (_, omega) = standard_structure();
    let loops = clifford_loops(TORUS_N);
    let mut winding_ok = true;
    for s in &b.traj.snapshots {
        let beta = lagrangian_angle(&s.mesh, &omega).unwrap();
        let w: Vec<f64> = loops.iter().map(|l| beta.winding_along(l)).collect();
        winding_ok &= w.iter().all(|x| (x - 1.0).abs() < 1e-6);
    }
    let ok = (slope + 2.0).abs() <= 0.04 && t_err <= 0.02 && (m - 1.0).abs() <= 0.1 && winding_ok;
    verdict(
        2,
        ok,
        format!(
            "r^2 slope {slope:.4}, T = {t_hat:.6} (rel err {t_err:.1e}), (T-t) max|A|^2 -> {m:.4}, \
             winding (1,1) on all {} snapshots: {winding_ok}",
            b.traj.snapshots.len()
        ),
    );
}

#[test]
fn c03_holomorphic_stationarity() {
    let r = 2.0;
    let (j, _) = standard_structure();
    let interior = |m: &SurfaceMesh, v: usize| planar_radius(&m.vertices[v]) <= 0.8 * r;
    let max_h = |n: usize| {
        let m = holomorphic_graph(&[0.0, 0.0, 1.0], r, n);
        let g = geometry(&m);
        let h = g
            .regular_vertices()
            .filter(|&v| interior(&m, v))
            .map(|v| g.h_norm(v))
            .fold(0.0, f64::max);
        (m, g, h)
    };
    let (_, _, h_coarse) = max_h(64);
    let (fine, g_fine, h_fine) = max_h(128);
    let p = order(h_coarse, h_fine);
    let angles = kahler_angle(&fine, &g_fine, &j);
    let gap = g_fine
        .regular_vertices()
        .map(|v| 1.0 - angles.vertex_cos[v])
        .fold(0.0, f64::max);

    let m = holomorphic_graph(&[0.0, 0.0, 1.0], r, 64);
    let g = geometry(&m);
    let h0 = g
        .regular_vertices()
        .filter(|&v| interior(&m, v))
        .map(|v| g.h_norm(v))
        .fold(0.0, f64::max);
    let traj = run(
        &m,
        &FlowConfig {
            t_end: 0.1,
            snapshot_stride: 1000,
            ..Default::default()
        },
    )
    .unwrap();
    let last = traj.last();
    let disp = (0..m.n_vertices())
        .filter(|&v| interior(&m, v))
        .map(|v| (last.mesh.vertices[v] - m.vertices[v]).norm())
        .fold(0.0, f64::max);
    let bound = 10.0 * h0 * last.t;
    let ok = p >= 1.5 && gap <= 1e-6 && disp <= bound;
    verdict(
        3,
        ok,
        format!(
            "max|H| {h_coarse:.2e} -> {h_fine:.2e} (order {p:.2}), 1 - min cos {gap:.1e}, \
             displacement {disp:.2e} <= {bound:.2e} at t = {:.3}",
            last.t
        ),
    );
}

#[test]
fn c04_maximum_principle() {
    let mut worst: f64 = 0.0;
    for traj in perturbed() {
        let ex = track_extrema(traj, 1e-3).unwrap();
        worst = worst.max(ex.min_cos_verdict.unwrap().worst_rate);
    }
    verdict(
        4,
        worst <= 1e-3,
        format!("worst min cos decrease rate over 5 seeds {worst:.2e} per unit time"),
    );
}

#[test]
fn c05_gauss_equation() {
    let closed = |_: usize| true;
    let sphere: Vec<f64> = [2u32, 3]
        .iter()
        .map(|&l| {
            let m = icosphere(1.0, l);
            gauss_residual(&geometry(&m), closed)
        })
        .collect();
    let torus: Vec<f64> = [16usize, 32]
        .iter()
        .map(|&n| {
            let m = clifford_torus(1.0, n);
            gauss_residual(&geometry(&m), closed)
        })
        .collect();
    let graph: Vec<f64> = [32usize, 64]
        .iter()
        .map(|&n| {
            let m = holomorphic_graph(&[0.0, 0.0, 1.0], 2.0, n);
            gauss_residual(&geometry(&m), |v| planar_radius(&m.vertices[v]) <= 1.6)
        })
        .collect();
    let ratios = [
        sphere[0] / sphere[1],
        torus[0] / torus[1],
        graph[0] / graph[1],
    ];
    // "Halves" is read as at least first order: the ratio may exceed 2.
    let ok = ratios.iter().all(|&q| q >= 2.0 * 0.7);
    verdict(
        5,
        ok,
        format!(
            "residual ratios under refinement: sphere {:.2} ({:.1e}), torus {:.2} ({:.1e}), z^2 {:.2} ({:.1e})",
            ratios[0], sphere[1], ratios[1], torus[1], ratios[2], graph[1]
        ),
    );
}

#[test]
fn c06_symplectic_monotonicity() {
    let cfg = DensityConfig::default();
    let traj = &perturbed()[0];
    let t: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let meshes: Vec<SurfaceMesh> = traj.snapshots.iter().map(|s| s.mesh.clone()).collect();
    let t0 = PERTURBED_T_END + 0.05;
    let direct = density_trace(
        &t,
        &meshes,
        t0,
        &Vec4::zeros(),
        WeightMode::InverseCos,
        &cfg,
    )
    .unwrap();

    // Same flow as a parabolically rescaled stack about its last snapshot.
    let lambda = 2.0;
    let t_k = *t.last().unwrap();
    let x_k = meshes.last().unwrap().vertices[0];
    let s: Vec<f64> = t.iter().map(|&x| lambda * lambda * (x - t_k)).collect();
    let stack: Vec<SurfaceMesh> = meshes.iter().map(|m| m.rescaled(lambda, &x_k)).collect();
    let x0 = (Vec4::zeros() - x_k) * lambda;
    let rescaled = density_trace(
        &s,
        &stack,
        lambda * lambda * (t0 - t_k),
        &x0,
        WeightMode::InverseCos,
        &cfg,
    )
    .unwrap();
    let drift = direct
        .samples
        .iter()
        .zip(&rescaled.samples)
        .map(|(a, b)| (a.phi - b.phi).abs())
        .fold(0.0, f64::max);

    let plane = plane_disc(8.0, 48);
    let flat = gaussian_density(
        &plane,
        -0.5,
        0.0,
        &Vec4::zeros(),
        WeightMode::InverseCos,
        &cfg,
    )
    .unwrap();
    let ok = direct.monotone && rescaled.monotone && (flat.phi - 1.0).abs() <= 0.01;
    verdict(
        6,
        ok,
        format!(
            "inverse-cos density monotone {} / rescaled {} (worst increase {:.1e}, tol {:.1e}, rescaling drift {drift:.1e}), \
             flat plane {:.5}",
            direct.monotone, rescaled.monotone, direct.worst_increase, direct.mono_tol, flat.phi
        ),
    );
}

#[test]
fn c07_self_shrinker_channel() {
    let rep = sphere().report();
    let worst = rep
        .traces
        .iter()
        .filter(|t| t.mode == WeightMode::Unweighted)
        .map(|t| t.max_term_shrinker)
        .fold(0.0, f64::max);
    let n = rep
        .traces
        .iter()
        .filter(|t| t.mode == WeightMode::Unweighted)
        .count();
    verdict(
        7,
        n > 0 && worst <= 1e-2,
        format!("max resolved term_shrinker over {n} sphere stacks {worst:.2e}"),
    );
}

#[test]
fn c08_lagrangian_identities() {
    let (j, omega) = standard_structure();
    let db: Vec<f64> = [16usize, 32]
        .iter()
        .map(|&n| {
            let m = clifford_torus(1.0, n);
            let g = geometry(&m);
            let b = lagrangian_angle(&m, &omega).unwrap();
            mean_curvature_form_residual(&m, &b, &g, &j)
        })
        .collect();
    let db_ratio = db[0] / db[1];

    let heat: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&n| {
            let m = lagrangian_potential_graph(0.5, 1.0, PI, n);
            let traj = run(
                &m,
                &FlowConfig {
                    t_end: 0.02,
                    snapshot_stride: 1,
                    max_steps: 2,
                    ..Default::default()
                },
            )
            .unwrap();
            let (a, b) = (&traj.snapshots[0], &traj.snapshots[1]);
            let inner = |v: usize| {
                a.mesh.vertices[v][0].abs() <= 0.6 * PI && a.mesh.vertices[v][2].abs() <= 0.6 * PI
            };
            beta_heat_residual(&a.mesh, &b.mesh, b.t - a.t, &Default::default(), inner)
                .unwrap()
                .residual
        })
        .collect();
    let heat_ok = heat.windows(2).all(|w| w[1] < w[0]) && heat[2] < 0.25 * heat[0];

    // The pinned boundary erodes the Lagrangian condition from the edge inward,
    // so the density is taken on an interior ball over a short window.
    let m = lagrangian_potential_graph(0.5, 1.0, PI, 32);
    let traj = run(
        &m,
        &FlowConfig {
            t_end: 0.25,
            snapshot_stride: 20,
            ..Default::default()
        },
    )
    .unwrap();
    let t: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let crop: Vec<SurfaceMesh> = traj
        .snapshots
        .iter()
        .map(|s| restrict_to_ball(&s.mesh, 0.75 * PI))
        .collect();
    let tr = density_trace(
        &t,
        &crop,
        0.3,
        &Vec4::zeros(),
        WeightMode::BetaSquared,
        &DensityConfig::default(),
    )
    .unwrap();
    let almost_calibrated = traj.snapshots[0]
        .summary
        .beta_range
        .is_some_and(|(lo, hi)| hi - lo < PI);

    let ok = db_ratio >= 2.0 * 0.7 && heat_ok && tr.monotone && almost_calibrated;
    verdict(
        8,
        ok,
        format!(
            "d beta residual {:.2e} -> {:.2e} (ratio {db_ratio:.2}), heat residual {:.2e} / {:.2e} / {:.2e}, \
             beta^2 density monotone {} (worst increase {:.1e}, tol {:.1e})",
            db[0], db[1], heat[0], heat[1], heat[2], tr.monotone, tr.worst_increase, tr.mono_tol
        ),
    );
}

#[test]
fn c09_quantization() {
    let z2 = holomorphic_graph(&[0.0, 0.0, 1.0], 2.0, 40);
    let q = quantization(&z2, &Vec4::zeros(), 4.0);
    let plane = plane_disc(2.0, 40);
    let qp = quantization(&plane, &Vec4::zeros(), 1.8);
    let shifted = z2.mapped(|x| x + Vec4::new(0.0, 0.0, 0.5, 0.0));
    let qd = quantization(&z2.disjoint_union(&shifted), &Vec4::zeros(), 4.0);
    let ok = q.distance <= 0.05
        && q.nearest_integer >= 1
        && qp.n_hat.abs() <= 0.01
        && (qd.n_hat - 2.0 * q.n_hat).abs() <= 0.1;
    verdict(
        9,
        ok,
        format!(
            "z^2 N = {:.4} ({}), plane N = {:.1e}, doubled N = {:.4}",
            q.n_hat, q.method, qp.n_hat, qd.n_hat
        ),
    );
}

#[test]
fn c10_rescaling_normalization() {
    let mut worst_norm: f64 = 0.0;
    let mut worst_a2: f64 = 0.0;
    let mut count = 0;
    for b in [sphere(), torus()] {
        for st in &b.report().stacks {
            worst_norm = worst_norm.max((st.normalization.at_origin - 1.0).abs());
            worst_a2 = worst_a2.max(st.normalization.max_a2);
            count += 1;
        }
    }
    let ok = count > 0 && worst_norm <= 0.05 && worst_a2 <= 4.2;
    verdict(
        10,
        ok,
        format!("{count} stacks: max ||A|(x_k) - 1| {worst_norm:.1e}, max |A|^2 {worst_a2:.3}"),
    );
}

#[test]
fn c11_area_ratio_bound() {
    let bound = 4.0 * PI * 1.1;
    let mut worst: f64 = 0.0;
    let mut by_radius = Vec::new();
    for b in [sphere(), torus()] {
        for st in &b.report().stacks {
            for &(r, a) in &st.area_ratios {
                worst = worst.max(a);
                by_radius.push((r, a));
            }
        }
    }
    // No growth trend: the largest radius never exceeds the smallest by more than the bound allows.
    let at = |r: f64| {
        by_radius
            .iter()
            .filter(|x| x.0 == r)
            .map(|x| x.1)
            .fold(0.0, f64::max)
    };
    let growth = at(8.0) - at(1.0);
    let ok = !by_radius.is_empty() && worst <= bound && growth <= 0.0;
    verdict(
        11,
        ok,
        format!("max area ratio {worst:.3} <= {bound:.3}; R = 8 minus R = 1 {growth:.3}"),
    );
}

#[test]
fn c12_scale_invariance() {
    let (j, _) = standard_structure();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for trial in 0..3 {
        let base = if trial == 0 {
            icosphere(1.0, 2)
        } else {
            plane_patch(1.0, 10)
        };
        let jitter: Vec<Vec4> = (0..base.n_vertices())
            .map(|_| Vec4::from_fn(|_, _| 0.05 * rng.random_range(-1.0..1.0)))
            .collect();
        let mut m = base.clone();
        for (x, d) in m.vertices.iter_mut().zip(&jitter) {
            *x += d;
        }
        let g = geometry(&m);
        let a = kahler_angle(&m, &g, &j);
        for lambda in [0.1, 3.0, 10.0] {
            let center = Vec4::new(0.3, -0.2, 0.1, 0.4);
            let ms = m.rescaled(lambda, &center);
            let gs = geometry(&ms);
            let as_ = kahler_angle(&ms, &gs, &j);
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            for v in g.regular_vertices() {
                worst = worst
                    .max((a.vertex_cos[v] - as_.vertex_cos[v]).abs())
                    .max(rel(g.h_norm(v), lambda * gs.h_norm(v)))
                    .max(rel(g.a2[v], lambda * lambda * gs.a2[v]))
                    .max(rel(g.gauss_defect[v], lambda * lambda * gs.gauss_defect[v]));
            }
        }
    }
    verdict(
        12,
        worst <= 1e-10,
        format!("worst relative deviation {worst:.1e} over 3 jittered meshes"),
    );
}

#[test]
fn c13_rotated_structure() {
    let mut worst_sq: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    for t in [0.3, 0.7] {
        let js = rotate_structure(t).unwrap();
        worst_sq = worst_sq.max(js.diagnostics().square_error);
        let e1 = Vec4::new(1.0, 0.0, 0.0, 0.0);
        let e2 = Vec4::new(0.0, t, (1.0 - t * t).sqrt(), 0.0);
        let plane = plane_patch(1.0, 8).mapped(|x| e1 * x[0] + e2 * x[1]);
        let g = geometry(&plane);
        let a = kahler_angle(&plane, &g, &js);
        worst_angle = a
            .face_cos
            .iter()
            .fold(worst_angle, |w, c| w.max((c - 1.0).abs()));
        worst_angle = g
            .regular_vertices()
            .fold(worst_angle, |w, v| w.max((a.vertex_cos[v] - 1.0).abs()));
    }
    verdict(
        13,
        worst_sq <= 1e-12 && worst_angle <= 1e-10,
        format!("max |J*^2 + I| {worst_sq:.1e}, constant-angle plane |cos - 1| {worst_angle:.1e}"),
    );
}

#[test]
fn c14_no_spurious_type_one() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (seed, traj) in perturbed().iter().enumerate() {
        match estimate_singular_time(traj, 0.25) {
            Err(e) => lines.push(format!("seed {seed}: no blow-up ({e})")),
            Ok(fit) => match classify_type(traj, &fit, &TypeConfig::default()) {
                Ok(r) => {
                    let bad = r.verdict == TypeVerdict::I
                        && r.trailing_slope > TypeConfig::default().slope_tol;
                    ok &= !bad;
                    lines.push(format!("seed {seed}: {:?}", r.verdict));
                }
                Err(e) => lines.push(format!("seed {seed}: not classified ({e})")),
            },
        }
    }
    verdict(14, ok, lines.join("; "));
}
