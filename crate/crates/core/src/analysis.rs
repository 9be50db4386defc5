//! End-to-end blow-up analysis of a recorded trajectory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    estimate_singular_time, summarize, track_extrema, write_checkpoint, Extrema, FlowTrajectory,
    SingularTimeFit, Termination,
};
use crate::geometry::GeometryConfig;
use crate::mesh::Vec4;
use crate::monotonicity::{
    density_trace, write_trace_csv, DensityConfig, DensityTrace, WeightMode,
};
use crate::singularity::{
    classify_type, extract_limit, integral_curvature_window, rescale, select_rescaling,
    BlowupReport, ConvergenceGauge, CurvatureHistory, LimitMode, Normalization, RescaledStack,
    RescalingEntry, RescalingSequence, SelectionConfig, TypeConfig, TypeReport, VerifyConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub fit_window_frac: f64,
    pub type_config: TypeConfig,
    pub tol_mp: f64,
    pub selection: SelectionConfig,
    /// Singular point; `None` picks the centroid of the final snapshot near its curvature maximum.
    pub x0: Option<Vec4>,
    pub limit_radius: f64,
    pub conv_tol: f64,
    /// `None` infers the mode from the initial Kahler angle.
    pub mode: Option<LimitMode>,
    pub verify: VerifyConfig,
    pub density: DensityConfig,
    pub geometry: GeometryConfig,
    pub window_radii: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            fit_window_frac: 0.25,
            type_config: TypeConfig::default(),
            tol_mp: 1e-3,
            selection: SelectionConfig::default(),
            x0: None,
            limit_radius: 4.0,
            conv_tol: 1e-2,
            mode: None,
            verify: VerifyConfig::default(),
            density: DensityConfig::default(),
            geometry: GeometryConfig::default(),
            window_radii: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackSummary {
    pub entry: RescalingEntry,
    pub snapshots: usize,
    pub s_min: f64,
    pub normalization: Normalization,
    /// `(R, area ratio)` of the `s = 0` snapshot.
    pub area_ratios: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub k: usize,
    pub mode: WeightMode,
    pub monotone: bool,
    pub worst_increase: f64,
    pub mono_tol: f64,
    pub max_term_shrinker: f64,
    pub last_term_shrinker: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupAnalysis {
    pub fit: SingularTimeFit,
    pub type_report: TypeReport,
    pub x0: Vec4,
    pub mode: LimitMode,
    pub stacks: Vec<StackSummary>,
    pub gauge: Option<ConvergenceGauge>,
    pub report: Option<BlowupReport>,
    /// Why no limit report was produced, when it was not.
    pub limit_error: Option<String>,
    pub traces: Vec<TraceSummary>,
    /// `(r, r^-2 int int |A|^2)` over a dyadic radius sweep at the last snapshot.
    pub curvature_windows: Vec<(f64, f64)>,
    pub extrema: Extrema,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AnalysisReport {
    NoBlowup {
        reason: String,
        termination: Termination,
        extrema: Extrema,
    },
    Blowup(Box<BlowupAnalysis>),
}

/// Everything produced by an analysis, including data too large for the report.
pub struct AnalysisOutput {
    pub report: AnalysisReport,
    pub sequence: Option<RescalingSequence>,
    pub traces: Vec<DensityTrace>,
}

fn default_x0(traj: &FlowTrajectory, hist: &CurvatureHistory) -> Vec4 {
    let i = hist.len() - 1;
    let mesh = &traj.snapshots[i].mesh;
    let Some((a2, _, v)) = hist.window_max(hist.t[i], hist.t[i], &Vec4::zeros(), f64::INFINITY)
    else {
        return Vec4::zeros();
    };
    let reach = 4.0 / a2.sqrt();
    let p = mesh.vertices[v];
    let mut sum = Vec4::zeros();
    let mut w = 0.0;
    for (u, x) in mesh.vertices.iter().enumerate() {
        if (x - p).norm() <= reach {
            sum += x * hist.dual_area[i][u];
            w += hist.dual_area[i][u];
        }
    }
    if w > 0.0 {
        sum / w
    } else {
        p
    }
}

fn infer_mode(traj: &FlowTrajectory, cfg: &AnalysisConfig) -> LimitMode {
    let first = &traj.snapshots[0].summary;
    if first.beta_range.is_some() && first.min_cos_alpha.abs() <= cfg.verify.angles.beta_cos_tol {
        LimitMode::Lagrangian
    } else {
        LimitMode::Symplectic
    }
}

pub fn analyze(traj: &FlowTrajectory, cfg: &AnalysisConfig) -> Result<AnalysisOutput> {
    let extrema = track_extrema(traj, cfg.tol_mp)?;
    let fit = match estimate_singular_time(traj, cfg.fit_window_frac) {
        Ok(f) => f,
        Err(Error::NoBlowup(reason)) => {
            return Ok(AnalysisOutput {
                report: AnalysisReport::NoBlowup {
                    reason,
                    termination: traj.termination.clone(),
                    extrema,
                },
                sequence: None,
                traces: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let type_report = classify_type(traj, &fit, &cfg.type_config)?;
    let hist = CurvatureHistory::from_trajectory(traj, &cfg.geometry);
    let x0 = cfg.x0.unwrap_or_else(|| default_x0(traj, &hist));
    let mode = cfg.mode.unwrap_or_else(|| infer_mode(traj, cfg));

    let params = select_rescaling(&hist, &x0, Some(fit.t_hat), &cfg.selection)?;
    let seq = rescale(&hist, &params, &cfg.selection, &cfg.geometry)?;
    let mut stacks = Vec::new();
    for st in &seq.stacks {
        let area_ratios = cfg
            .verify
            .area_radii
            .iter()
            .map(|&r| {
                Ok((
                    r,
                    crate::measure::area_ratio(st.last_mesh(), &Vec4::zeros(), r)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        stacks.push(StackSummary {
            entry: st.entry.clone(),
            snapshots: st.s.len(),
            s_min: st.s_min(),
            normalization: st.normalization.clone(),
            area_ratios,
        });
    }

    let (gauge, report, limit_error) =
        match extract_limit(&seq, cfg.limit_radius, cfg.conv_tol, &cfg.geometry) {
            Ok(lim) => {
                match crate::singularity::verify_limit(&lim.limit, mode, &cfg.verify, &cfg.geometry)
                {
                    Ok(mut rep) => {
                        rep.type_report = Some(type_report.clone());
                        (Some(lim.gauge), Some(rep), None)
                    }
                    Err(e) => (Some(lim.gauge), None, Some(e.to_string())),
                }
            }
            Err(e) => (None, None, Some(e.to_string())),
        };

    let mut traces = Vec::new();
    let mut trace_summaries = Vec::new();
    for st in &seq.stacks {
        let e = &st.entry;
        let x0k = (x0 - e.x_pos) * e.lambda;
        let s0 = e.lambda * e.lambda * (fit.t_hat - e.t_k);
        let mut modes = vec![WeightMode::Unweighted];
        match mode {
            LimitMode::Lagrangian => modes.push(WeightMode::BetaSquared),
            LimitMode::Symplectic
                if traj.snapshots[0].summary.min_cos_alpha > cfg.density.eps_sym =>
            {
                modes.push(WeightMode::InverseCos)
            }
            LimitMode::Symplectic => {}
        }
        for m in modes {
            match density_trace(&st.s, &st.meshes, s0, &x0k, m, &cfg.density) {
                Ok(tr) => {
                    let shr: Vec<f64> = tr
                        .samples
                        .iter()
                        .filter(|x| !x.under_resolved)
                        .map(|x| x.term_shrinker)
                        .collect();
                    trace_summaries.push(TraceSummary {
                        k: e.k,
                        mode: m,
                        monotone: tr.monotone,
                        worst_increase: tr.worst_increase,
                        mono_tol: tr.mono_tol,
                        max_term_shrinker: shr.iter().copied().fold(0.0, f64::max),
                        last_term_shrinker: shr.last().copied().unwrap_or(f64::NAN),
                    });
                    traces.push(tr);
                }
                // An angle that stops being defined late in a stack only removes that channel.
                Err(Error::AngleUndefined { .. }) | Err(Error::WeightSingular { .. }) => {}
                Err(err) => return Err(err),
            }
        }
    }

    let t_last = *hist.t.last().unwrap();
    let span = (t_last - hist.t[0]).max(0.0).sqrt();
    let mut curvature_windows = Vec::new();
    for j in 0..cfg.window_radii {
        let r = span * 0.5f64.powi(j as i32);
        if r > 0.0 {
            curvature_windows.push((r, integral_curvature_window(&hist, &x0, r, t_last)?));
        }
    }

    Ok(AnalysisOutput {
        report: AnalysisReport::Blowup(Box::new(BlowupAnalysis {
            fit,
            type_report,
            x0,
            mode,
            stacks,
            gauge,
            report,
            limit_error,
            traces: trace_summaries,
            curvature_windows,
            extrema,
        })),
        sequence: Some(seq),
        traces,
    })
}

/// Writes a rescaled stack as a checkpoint with an `s` time axis.
pub fn write_stack(dir: &Path, stack: &RescaledStack, geometry: &GeometryConfig) -> Result<()> {
    let summaries: Vec<_> = stack
        .s
        .iter()
        .zip(&stack.meshes)
        .map(|(&s, m)| summarize(m, s, geometry, false).0)
        .collect();
    let snaps: Vec<_> = stack
        .s
        .iter()
        .zip(&stack.meshes)
        .zip(&summaries)
        .enumerate()
        .map(|(i, ((&s, m), sum))| (i, s, m, sum))
        .collect();
    write_checkpoint(
        dir,
        &snaps,
        &Termination::TEnd,
        "s",
        serde_json::to_value(&stack.entry)?,
    )
}

/// Writes `report.json`, one trace CSV per density trace and, optionally, the stacks.
pub fn write_outputs(
    dir: &Path,
    out: &AnalysisOutput,
    with_stacks: bool,
    geometry: &GeometryConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&out.report)?,
    )?;
    let mut seen = std::collections::BTreeMap::new();
    for tr in &out.traces {
        let k = seen.entry(tr.mode.as_str()).or_insert(0usize);
        write_trace_csv(
            &dir.join(format!("trace_{}_k{}.csv", tr.mode.as_str(), k)),
            tr,
        )?;
        *k += 1;
    }
    if with_stacks {
        if let Some(seq) = &out.sequence {
            for st in &seq.stacks {
                write_stack(&dir.join(format!("stack_k{}", st.entry.k)), st, geometry)?;
            }
        }
    }
    Ok(())
}
