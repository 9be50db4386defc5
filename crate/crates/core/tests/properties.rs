use proptest::prelude::*;

use kflow_core::geometry::geometry;
use kflow_core::kahler::{kahler_angle, standard_structure};
use kflow_core::measure::quantization;
use kflow_core::monotonicity::backward_heat_kernel;
use kflow_core::scenario::{holomorphic_graph, icosphere, plane_disc};
use kflow_core::singularity::{normalize_at_origin, verify_limit, LimitMode, VerifyConfig};
use kflow_core::{SurfaceMesh, Vec4};

fn jittered_sphere(offsets: &[f64]) -> SurfaceMesh {
    let mut m = icosphere(1.0, 1);
    for (x, d) in m.vertices.iter_mut().zip(offsets.chunks(4)) {
        *x += Vec4::new(d[0], d[1], d[2], d[3]);
    }
    m
}

fn vec4() -> impl Strategy<Value = Vec4> {
    prop::array::uniform4(-2.0..2.0f64).prop_map(Vec4::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curvature_rescales_covariantly(
        offsets in prop::collection::vec(-0.05..0.05f64, 42 * 4),
        lambda in prop::sample::select(vec![0.1, 3.0, 10.0]),
        center in vec4(),
    ) {
        let (j, _) = standard_structure();
        let m = jittered_sphere(&offsets);
        let s = m.rescaled(lambda, &center);
        let (g, gs) = (geometry(&m), geometry(&s));
        let (a, as_) = (kahler_angle(&m, &g, &j), kahler_angle(&s, &gs, &j));
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
        for v in g.regular_vertices() {
            prop_assert!((a.vertex_cos[v] - as_.vertex_cos[v]).abs() < 1e-10);
            prop_assert!(rel(g.h_norm(v), lambda * gs.h_norm(v)) < 1e-10);
            prop_assert!(rel(g.a2[v], lambda * lambda * gs.a2[v]) < 1e-10);
            prop_assert!(rel(g.gauss_defect[v], lambda * lambda * gs.gauss_defect[v]) < 1e-10);
        }
    }

    #[test]
    fn kernel_parabolic_scaling(x in vec4(), x0 in vec4(), t in -3.0..-0.01f64, lambda in 0.1..10.0f64) {
        let k = backward_heat_kernel(&x, &x0, t, 0.0).unwrap();
        let ks = backward_heat_kernel(&(x * lambda), &(x0 * lambda), lambda * lambda * t, 0.0).unwrap();
        prop_assert!((ks * lambda * lambda - k).abs() <= 1e-12 * k.max(1e-300));
    }

    #[test]
    fn kernel_rejects_future_times(x in vec4(), t in 0.0..2.0f64) {
        prop_assert!(backward_heat_kernel(&x, &Vec4::zeros(), t, t * 0.5).is_err());
    }
}

#[test]
fn verification_is_idempotent_under_normalization() {
    let cfg = VerifyConfig::default();
    let g = Default::default();
    let m = holomorphic_graph(&[0.0, 0.0, 1.0], 2.0, 24);
    let (once, lambda) = normalize_at_origin(&m, &g).unwrap();
    let (twice, mu) = normalize_at_origin(&once, &g).unwrap();
    assert!((lambda - 4.0).abs() < 0.05 && (mu - 1.0).abs() < 1e-12);
    let a = verify_limit(&once, LimitMode::Symplectic, &cfg, &g).unwrap();
    let b = verify_limit(&twice, LimitMode::Symplectic, &cfg, &g).unwrap();
    assert_eq!(a.verdict, b.verdict);
    assert!((a.minimality_residual - b.minimality_residual).abs() < 1e-9);
    assert!((a.quantization.n_hat - b.quantization.n_hat).abs() < 1e-9);
    let again = verify_limit(&once, LimitMode::Symplectic, &cfg, &g).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn total_curvature_count_is_additive() {
    let z2 = holomorphic_graph(&[0.0, 0.0, 1.0], 2.0, 32);
    let plane = plane_disc(2.0, 32).mapped(|x| x + Vec4::new(0.0, 0.0, 1.5, 0.0));
    let z3 = holomorphic_graph(&[0.0, 0.0, 0.0, 1.0], 1.5, 32)
        .mapped(|x| x + Vec4::new(0.0, 0.0, -1.0, 0.0));
    let n = |m: &SurfaceMesh| quantization(m, &Vec4::zeros(), 4.0).samples[2].1;
    let (a, b, c) = (n(&z2), n(&plane), n(&z3));
    let union = z2.disjoint_union(&plane).disjoint_union(&z3);
    assert!(
        (n(&union) - (a + b + c)).abs() < 1e-9,
        "{} vs {}",
        n(&union),
        a + b + c
    );
    assert!(b.abs() < 1e-9);
}
