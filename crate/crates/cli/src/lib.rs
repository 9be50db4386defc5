//! Orchestration behind the `kflow` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use kflow_core::analysis::{analyze, write_outputs, AnalysisReport};
use kflow_core::flow::{
    read_trajectory, run, write_summary_csv, write_trajectory, Termination, KF_TRAJ_HEADER,
};
use kflow_core::io::{read_mesh, write_kf_mesh};
use kflow_core::singularity::{normalize_at_origin, verify_limit, BlowupReport, LimitMode};
use kflow_core::{Error, Result};

pub use config::RunConfig;

pub const LOCK_FILE: &str = ".kflow.lock";

/// Exclusive writer lock on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "{} is locked by another writer (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Caps the element-parallel worker pool from `KF_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("KF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("KF_THREADS = {v:?} is not a positive integer")))?;
    if n == 0 {
        return Err(Error::Config("KF_THREADS must be positive".into()));
    }
    // A pool built earlier in the same process wins; that is fine for tests.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Process exit status for a finished run.
pub fn termination_code(t: &Termination) -> i32 {
    match t {
        Termination::TEnd => 0,
        Termination::BlowupThreshold => 3,
        Termination::MeshFailure { .. } => 4,
        Termination::MaxSteps => 5,
    }
}

fn write_echo(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::write(out.join("config.echo.toml"), cfg.echo())?;
    fs::write(
        out.join("resolved.json"),
        serde_json::to_string_pretty(&cfg.resolved_json()?)?,
    )?;
    Ok(())
}

fn clear_checkpoint(dir: &Path) -> Result<()> {
    let manifest = dir.join("manifest.txt");
    let ours = fs::read_to_string(&manifest).is_ok_and(|t| t.starts_with(KF_TRAJ_HEADER));
    if ours {
        fs::remove_dir_all(dir)?;
    } else if dir.exists() {
        return Err(Error::Config(format!(
            "{} exists and is not a trajectory checkpoint",
            dir.display()
        )));
    }
    Ok(())
}

pub const PLOT_SCRIPT: &str = r#"# Plots the CSV outputs of a kflow output directory.
# usage: python plot.py <out-dir>
import csv, glob, os, sys

import matplotlib.pyplot as plt

out = sys.argv[1] if len(sys.argv) > 1 else "."


def load(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) if r[k] not in ("true", "false") else r[k] == "true" for r in rows] for k in rows[0]} if rows else {}


summary = os.path.join(out, "summary.csv")
if os.path.exists(summary):
    s = load(summary)
    fig, ax = plt.subplots(2, 2, figsize=(9, 6))
    for a, key in zip(ax.flat, ["area", "max_A2", "min_cos_alpha", "max_H"]):
        a.plot(s["t"], s[key])
        a.set_xlabel("t")
        a.set_title(key)
    fig.tight_layout()
    fig.savefig(os.path.join(out, "summary.png"))

for path in sorted(glob.glob(os.path.join(out, "trace_*.csv"))):
    tr = load(path)
    if not tr:
        continue
    fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
    ax[0].plot(tr["s"], tr["phi"], marker=".")
    ax[0].set_title("phi")
    ax[1].semilogy(tr["s"], [max(x, 1e-300) for x in tr["term_shrinker"]], label="term_shrinker")
    ax[1].semilogy(tr["s"], [max(x, 1e-300) for x in tr["term_grad"]], label="term_grad")
    ax[1].legend()
    for a in ax:
        a.set_xlabel("s")
    fig.tight_layout()
    fig.savefig(path[:-4] + ".png")
"#;

fn write_plot_script(out: &Path) -> Result<()> {
    fs::write(out.join("plot.py"), PLOT_SCRIPT)?;
    Ok(())
}

pub struct RunOutcome {
    pub termination: Termination,
    pub snapshots: usize,
    pub t_final: f64,
}

/// `run`: flow the scenario and write the checkpoint, summary CSV and config echo.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let _lock = DirLock::acquire(out)?;
    write_echo(out, cfg)?;
    let (mesh, oracle) = cfg.scenario()?.build()?;
    write_kf_mesh(&mesh, &out.join("initial.kfmesh"))?;
    fs::write(
        out.join("oracle.json"),
        serde_json::to_string_pretty(&oracle)?,
    )?;
    let traj = run(&mesh, &cfg.flow_config()?)?;
    let dir = out.join("traj");
    clear_checkpoint(&dir)?;
    write_trajectory(&dir, &traj)?;
    write_summary_csv(&out.join("summary.csv"), &traj.summaries())?;
    write_plot_script(out)?;
    Ok(RunOutcome {
        termination: traj.termination.clone(),
        snapshots: traj.snapshots.len(),
        t_final: traj.last().t,
    })
}

/// `analyze`: blow-up analysis of a checkpoint; writes `report.json` and trace CSVs.
pub fn cmd_analyze(traj_dir: &Path, cfg: &RunConfig, out: &Path) -> Result<AnalysisReport> {
    cfg.validate()?;
    let _lock = DirLock::acquire(out)?;
    write_echo(out, cfg)?;
    let traj = read_trajectory(traj_dir)?;
    let acfg = cfg.analysis_config()?;
    let result = analyze(&traj, &acfg)?;
    write_outputs(out, &result, cfg.write_stacks, &acfg.geometry)?;
    write_plot_script(out)?;
    Ok(result.report)
}

/// `verify`: checks a standalone mesh as a blow-up limit candidate.
pub fn cmd_verify(
    mesh_path: &Path,
    mode: LimitMode,
    normalize: bool,
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<BlowupReport> {
    cfg.validate()?;
    let mut mesh = read_mesh(mesh_path)?;
    if normalize {
        mesh = normalize_at_origin(&mesh, &cfg.geometry()?)?.0;
    }
    let report = verify_limit(&mesh, mode, &cfg.verify_config(), &cfg.geometry()?)?;
    if let Some(out) = out {
        let _lock = DirLock::acquire(out)?;
        fs::write(
            out.join("verify.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(report)
}

/// `report`: human-readable digest of whatever a directory contains.
pub fn cmd_report(out: &Path) -> Result<String> {
    let mut text = String::new();
    let summary = out.join("summary.csv");
    if summary.exists() {
        let mut r = csv::Reader::from_path(&summary)?;
        let rows: Vec<csv::StringRecord> = r.records().collect::<std::result::Result<_, _>>()?;
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            text += &format!(
                "flow: {} snapshots, t {} -> {}, area {} -> {}, max|A|^2 {} -> {}\n",
                rows.len(),
                &first[0],
                &last[0],
                &first[1],
                &last[1],
                &first[2],
                &last[2]
            );
        }
    }
    let report = out.join("report.json");
    if report.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report)?)?;
        match v["outcome"].as_str() {
            Some("no_blowup") => {
                text += &format!(
                    "analysis: no blow-up ({})\n",
                    v["reason"].as_str().unwrap_or("")
                )
            }
            Some("blowup") => {
                let tr = &v["type_report"];
                text += &format!(
                    "analysis: T = {}, type {}, m -> {}\n",
                    v["fit"]["t_hat"], tr["verdict"], tr["final_m"]
                );
                for s in v["stacks"].as_array().into_iter().flatten() {
                    text += &format!(
                        "  stack k={} lambda={} sigma={} |A|(0)={} max|A|^2={}\n",
                        s["entry"]["k"],
                        s["entry"]["lambda"],
                        s["entry"]["sigma"],
                        s["normalization"]["at_origin"],
                        s["normalization"]["max_a2"]
                    );
                }
                if let Some(rep) = v.get("report").filter(|r| !r.is_null()) {
                    text += &format!(
                        "  limit: {}; max|H| = {}, N = {}\n",
                        rep["verdict"], rep["minimality_residual"], rep["quantization"]["n_hat"]
                    );
                } else {
                    text += &format!("  limit: {}\n", v["limit_error"]);
                }
                for t in v["traces"].as_array().into_iter().flatten() {
                    text += &format!(
                        "  trace k={} {}: monotone {} (worst increase {}), max shrinker term {}\n",
                        t["k"],
                        t["mode"],
                        t["monotone"],
                        t["worst_increase"],
                        t["max_term_shrinker"]
                    );
                }
            }
            _ => text += "analysis: unrecognized report\n",
        }
    }
    let verify = out.join("verify.json");
    if verify.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&verify)?)?;
        text += &format!(
            "verify: {}; max|H| = {}, N = {}\n",
            v["verdict"], v["minimality_residual"], v["quantization"]["n_hat"]
        );
    }
    if text.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no kflow outputs",
            out.display()
        )));
    }
    write_plot_script(out)?;
    Ok(text)
}
