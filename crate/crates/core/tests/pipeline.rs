use kflow_core::analysis::{analyze, write_outputs, AnalysisConfig, AnalysisReport};
use kflow_core::flow::{read_trajectory, resume, run, write_trajectory, FlowConfig, Termination};
use kflow_core::geometry::GeometryConfig;
use kflow_core::io::{read_mesh, write_kf_mesh};
use kflow_core::scenario::{icosphere, plane_patch, Scenario, ScenarioKind};
use kflow_core::singularity::{select_rescaling, CurvatureHistory, Schedule, SelectionConfig};
use kflow_core::{Error, Vec4};

fn short_sphere_flow() -> kflow_core::flow::FlowTrajectory {
    let cfg = FlowConfig {
        t_end: 0.05,
        snapshot_stride: 10,
        ..Default::default()
    };
    run(&icosphere(1.0, 2), &cfg).unwrap()
}

#[test]
fn mesh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, _) = Scenario::new(ScenarioKind::CliffordTorus { r0: 1.3 }, 8)
        .build()
        .unwrap();
    let path = dir.path().join("torus.kfmesh");
    write_kf_mesh(&mesh, &path).unwrap();
    let back = read_mesh(&path).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.faces, mesh.faces);
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let traj = short_sphere_flow();
    assert!(matches!(traj.termination, Termination::TEnd));
    let dir = tempfile::tempdir().unwrap();
    write_trajectory(dir.path(), &traj).unwrap();
    let back = read_trajectory(dir.path()).unwrap();
    assert_eq!(back.snapshots.len(), traj.snapshots.len());
    for (a, b) in back.snapshots.iter().zip(&traj.snapshots) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.mesh.vertices, b.mesh.vertices);
    }
    // Resuming from an intermediate snapshot replays the same steps.
    let i = traj.snapshots.len() / 2;
    let resumed = resume(dir.path(), i, &traj.config).unwrap();
    let (x, y) = (resumed.last(), traj.last());
    assert_eq!(x.t, y.t);
    assert_eq!(x.mesh.vertices, y.mesh.vertices);
}

#[test]
fn flow_is_deterministic() {
    let a = short_sphere_flow();
    let b = short_sphere_flow();
    assert_eq!(a.last().mesh.vertices, b.last().mesh.vertices);
}

#[test]
fn dyadic_windows_miss_a_centred_shrinker() {
    let traj = short_sphere_flow();
    let hist = CurvatureHistory::from_trajectory(&traj, &GeometryConfig::default());
    let cfg = SelectionConfig {
        schedule: Schedule::Dyadic { r0: 0.5, count: 3 },
        ..Default::default()
    };
    let r = select_rescaling(&hist, &Vec4::zeros(), Some(0.25), &cfg);
    assert!(
        matches!(
            r,
            Err(Error::EmptyWindow { .. }) | Err(Error::InsufficientSequence { .. })
        ),
        "{r:?}"
    );
    let no_t = select_rescaling(&hist, &Vec4::zeros(), None, &cfg);
    assert!(matches!(no_t, Err(Error::Config(_))));
}

#[test]
fn fixed_radius_selection_normalizes_curvature() {
    let cfg = FlowConfig {
        t_end: 0.2,
        snapshot_stride: 5,
        ..Default::default()
    };
    let traj = run(&icosphere(1.0, 2), &cfg).unwrap();
    let hist = CurvatureHistory::from_trajectory(&traj, &GeometryConfig::default());
    let cfg = SelectionConfig {
        schedule: Schedule::FixedRadius {
            r: 4.0,
            count: 2,
            growth: 1.3,
        },
        ..Default::default()
    };
    let p = select_rescaling(&hist, &Vec4::zeros(), Some(0.25), &cfg).unwrap();
    assert!(!p.entries.is_empty());
    for e in &p.entries {
        let a2 = hist.a2[e.snapshot][e.x_k];
        assert!((e.lambda * e.lambda - a2).abs() < 1e-12 * a2);
        assert!(e.t_k <= 0.2 + 1e-12);
    }
}

#[test]
fn static_plane_reports_no_blowup() {
    let mesh = plane_patch(1.0, 8);
    let traj = run(
        &mesh,
        &FlowConfig {
            t_end: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    let out = analyze(&traj, &AnalysisConfig::default()).unwrap();
    assert!(matches!(out.report, AnalysisReport::NoBlowup { .. }));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out, true, &GeometryConfig::default()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(text.contains("\"outcome\": \"no_blowup\""));
}
