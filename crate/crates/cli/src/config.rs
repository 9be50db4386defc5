//! Flat key-value run configuration (TOML syntax, top-level keys only).

use std::collections::BTreeMap;
use std::path::Path;

use kflow_core::analysis::AnalysisConfig;
use kflow_core::flow::{DtPolicy, FlowConfig, RemeshPolicy, Scheme};
use kflow_core::geometry::{FitOrder, GeometryConfig};
use kflow_core::kahler::AngleConfig;
use kflow_core::monotonicity::DensityConfig;
use kflow_core::scenario::Scenario;
use kflow_core::singularity::{
    AngleSettings, LimitMode, Schedule, SelectionConfig, TypeConfig, VerifyConfig,
};
use kflow_core::{Error, Result, Vec4};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,

    pub scenario: String,
    pub resolution: usize,
    pub seed: u64,
    pub r0: Option<f64>,
    /// `z2`, `z3`, `zero` or `re:im,re:im,...` coefficients.
    pub f: Option<String>,
    pub r_trunc: Option<f64>,
    pub amplitude: Option<f64>,
    pub wavenumber: Option<f64>,
    pub half_width: Option<f64>,
    pub eps: Option<f64>,
    pub d: Option<f64>,

    /// `cfl` or `fixed`.
    pub dt_policy: String,
    pub cfl_safety: f64,
    pub dt: Option<f64>,
    /// `rk2` or `semi-implicit`.
    pub scheme: String,
    pub t_end: f64,
    pub snapshot_stride: usize,
    pub a2_stop_factor: f64,
    pub a2_max_stop: Option<f64>,
    /// Steps between flip-and-smooth passes; 0 disables remeshing.
    pub remesh_every: usize,
    pub max_steps: usize,

    /// `cubic` or `quadratic`.
    pub fit_order: String,
    pub frame_iterations: usize,
    pub rank_tol: f64,
    pub stencil_rings: usize,

    pub fit_window_frac: f64,
    pub type_window_frac: f64,
    pub slope_tol: f64,
    pub ratio_tol: f64,
    pub type_min_points: usize,
    pub tol_mp: f64,

    /// `fixed-radius` or `dyadic`.
    pub schedule: String,
    pub rescale_r: f64,
    pub rescale_count: usize,
    pub rescale_growth: f64,
    pub dyadic_r0: f64,
    pub sigma_samples: usize,
    pub norm_tol: f64,
    pub tie_rel_tol: f64,
    pub x0: Option<[f64; 4]>,
    pub limit_radius: f64,
    pub conv_tol: f64,
    /// `auto`, `symplectic` or `lagrangian`.
    pub mode: String,

    pub minimal_tol: f64,
    pub holomorphic_tol: f64,
    pub curvature_tol: f64,
    pub spread_tol: f64,
    pub quantization_radius: f64,
    pub area_radii: Vec<f64>,
    pub simplicity_samples: usize,

    pub sin_floor: f64,
    pub eps_sym: f64,
    pub eps_lag: f64,
    pub beta_cos_tol: f64,
    pub mono_tol_base: f64,
    pub quadrature_factor: f64,
    pub window_radii: usize,
    pub write_stacks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let flow = FlowConfig::default();
        let geom = GeometryConfig::default();
        let an = AnalysisConfig::default();
        let angles = AngleConfig::default();
        let (r, count, growth) = match an.selection.schedule {
            Schedule::FixedRadius { r, count, growth } => (r, count, growth),
            Schedule::Dyadic { .. } => unreachable!("fixed radius is the default schedule"),
        };
        let cfl = match flow.dt_policy {
            DtPolicy::ExplicitCfl { safety } => safety,
            DtPolicy::Fixed { .. } => 0.5,
        };
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: "round_sphere".into(),
            resolution: 3,
            seed: 0,
            r0: None,
            f: None,
            r_trunc: None,
            amplitude: None,
            wavenumber: None,
            half_width: None,
            eps: None,
            d: None,
            dt_policy: "cfl".into(),
            cfl_safety: cfl,
            dt: None,
            scheme: "rk2".into(),
            t_end: flow.t_end,
            snapshot_stride: flow.snapshot_stride,
            a2_stop_factor: flow.a2_stop_factor,
            a2_max_stop: flow.a2_max_stop,
            remesh_every: 0,
            max_steps: flow.max_steps,
            fit_order: "cubic".into(),
            frame_iterations: geom.frame_iterations,
            rank_tol: geom.rank_tol,
            stencil_rings: geom.stencil_rings,
            fit_window_frac: an.fit_window_frac,
            type_window_frac: an.type_config.window_frac,
            slope_tol: an.type_config.slope_tol,
            ratio_tol: an.type_config.ratio_tol,
            type_min_points: an.type_config.min_points,
            tol_mp: an.tol_mp,
            schedule: "fixed-radius".into(),
            rescale_r: r,
            rescale_count: count,
            rescale_growth: growth,
            dyadic_r0: 1.0,
            sigma_samples: an.selection.sigma_samples,
            norm_tol: an.selection.norm_tol,
            tie_rel_tol: an.selection.tie_rel_tol,
            x0: None,
            limit_radius: an.limit_radius,
            conv_tol: an.conv_tol,
            mode: "auto".into(),
            minimal_tol: an.verify.minimal_tol,
            holomorphic_tol: an.verify.holomorphic_tol,
            curvature_tol: an.verify.curvature_tol,
            spread_tol: an.verify.spread_tol,
            quantization_radius: an.verify.quantization_radius,
            area_radii: an.verify.area_radii.clone(),
            simplicity_samples: an.verify.simplicity_samples,
            sin_floor: angles.sin_floor,
            eps_sym: angles.eps_sym,
            eps_lag: angles.eps_lag,
            beta_cos_tol: angles.beta_cos_tol,
            mono_tol_base: an.density.mono_tol_base,
            quadrature_factor: an.density.quadrature_factor,
            window_radii: an.window_radii,
            write_stacks: false,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every knob, including defaults, as a config file that parses back to `self`.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cfl_safety", self.cfl_safety),
            ("a2_stop_factor", self.a2_stop_factor),
            ("rank_tol", self.rank_tol),
            ("fit_window_frac", self.fit_window_frac),
            ("type_window_frac", self.type_window_frac),
            ("slope_tol", self.slope_tol),
            ("ratio_tol", self.ratio_tol),
            ("tol_mp", self.tol_mp),
            ("rescale_r", self.rescale_r),
            ("dyadic_r0", self.dyadic_r0),
            ("norm_tol", self.norm_tol),
            ("limit_radius", self.limit_radius),
            ("conv_tol", self.conv_tol),
            ("minimal_tol", self.minimal_tol),
            ("holomorphic_tol", self.holomorphic_tol),
            ("curvature_tol", self.curvature_tol),
            ("spread_tol", self.spread_tol),
            ("quantization_radius", self.quantization_radius),
            ("sin_floor", self.sin_floor),
            ("eps_sym", self.eps_sym),
            ("eps_lag", self.eps_lag),
            ("beta_cos_tol", self.beta_cos_tol),
            ("mono_tol_base", self.mono_tol_base),
            ("quadrature_factor", self.quadrature_factor),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(cfg_err(format!("{k} must be positive, got {v}")));
            }
        }
        if !(self.tie_rel_tol >= 0.0 && self.tie_rel_tol < 1.0) {
            return Err(cfg_err("tie_rel_tol must lie in [0, 1)"));
        }
        if self.rescale_growth <= 1.0 {
            return Err(cfg_err("rescale_growth must exceed 1"));
        }
        if self.sigma_samples == 0 || self.snapshot_stride == 0 || self.resolution == 0 {
            return Err(cfg_err(
                "sigma_samples, snapshot_stride and resolution must be positive",
            ));
        }
        if self.area_radii.iter().any(|&r| !(r > 0.0)) {
            return Err(cfg_err("area_radii must be positive"));
        }
        self.flow_config()?.validate()?;
        self.analysis_config()?;
        self.scenario()?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut params = BTreeMap::new();
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                params.insert(k.to_string(), format!("{v:?}"));
            }
        };
        put("r0", self.r0);
        put("r_trunc", self.r_trunc);
        put("amplitude", self.amplitude);
        put("wavenumber", self.wavenumber);
        put("half_width", self.half_width);
        put("eps", self.eps);
        put("d", self.d);
        params.insert("seed".into(), self.seed.to_string());
        if let Some(f) = &self.f {
            params.insert("f".into(), f.clone());
        }
        Scenario::from_params(&self.scenario, self.resolution, &params)
    }

    pub fn geometry(&self) -> Result<GeometryConfig> {
        let fit_order = match self.fit_order.as_str() {
            "cubic" => FitOrder::Cubic,
            "quadratic" => FitOrder::Quadratic,
            o => return Err(cfg_err(format!("unknown fit_order {o:?}"))),
        };
        Ok(GeometryConfig {
            fit_order,
            frame_iterations: self.frame_iterations,
            rank_tol: self.rank_tol,
            stencil_rings: self.stencil_rings,
        })
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let dt_policy = match self.dt_policy.as_str() {
            "cfl" => DtPolicy::ExplicitCfl {
                safety: self.cfl_safety,
            },
            "fixed" => DtPolicy::Fixed {
                dt: self
                    .dt
                    .ok_or_else(|| cfg_err("dt_policy = \"fixed\" needs dt"))?,
            },
            o => return Err(cfg_err(format!("unknown dt_policy {o:?}"))),
        };
        let scheme = match self.scheme.as_str() {
            "rk2" => Scheme::Rk2,
            "semi-implicit" => Scheme::SemiImplicit,
            o => return Err(cfg_err(format!("unknown scheme {o:?}"))),
        };
        Ok(FlowConfig {
            dt_policy,
            scheme,
            t_end: self.t_end,
            snapshot_stride: self.snapshot_stride,
            a2_stop_factor: self.a2_stop_factor,
            a2_max_stop: self.a2_max_stop,
            remesh: if self.remesh_every == 0 {
                RemeshPolicy::Off
            } else {
                RemeshPolicy::FlipSmooth {
                    every: self.remesh_every,
                }
            },
            max_steps: self.max_steps,
            geometry: self.geometry()?,
            provenance: format!("{} n={} seed={}", self.scenario, self.resolution, self.seed),
        })
    }

    pub fn analysis_config(&self) -> Result<AnalysisConfig> {
        let schedule = match self.schedule.as_str() {
            "fixed-radius" => Schedule::FixedRadius {
                r: self.rescale_r,
                count: self.rescale_count,
                growth: self.rescale_growth,
            },
            "dyadic" => Schedule::Dyadic {
                r0: self.dyadic_r0,
                count: self.rescale_count,
            },
            o => return Err(cfg_err(format!("unknown schedule {o:?}"))),
        };
        let mode = match self.mode.as_str() {
            "auto" => None,
            "symplectic" => Some(LimitMode::Symplectic),
            "lagrangian" => Some(LimitMode::Lagrangian),
            o => return Err(cfg_err(format!("unknown mode {o:?}"))),
        };
        let geometry = self.geometry()?;
        Ok(AnalysisConfig {
            fit_window_frac: self.fit_window_frac,
            type_config: TypeConfig {
                window_frac: self.type_window_frac,
                slope_tol: self.slope_tol,
                ratio_tol: self.ratio_tol,
                min_points: self.type_min_points,
            },
            tol_mp: self.tol_mp,
            selection: SelectionConfig {
                schedule,
                sigma_samples: self.sigma_samples,
                norm_tol: self.norm_tol,
                tie_rel_tol: self.tie_rel_tol,
            },
            x0: self.x0.map(|x| Vec4::new(x[0], x[1], x[2], x[3])),
            limit_radius: self.limit_radius,
            conv_tol: self.conv_tol,
            mode,
            verify: self.verify_config(),
            density: DensityConfig {
                eps_sym: self.eps_sym,
                mono_tol_base: self.mono_tol_base,
                quadrature_factor: self.quadrature_factor,
                geometry,
                angles_sin_floor: self.sin_floor,
                beta_cos_tol: self.beta_cos_tol,
            },
            geometry,
            window_radii: self.window_radii,
        })
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            minimal_tol: self.minimal_tol,
            holomorphic_tol: self.holomorphic_tol,
            curvature_tol: self.curvature_tol,
            spread_tol: self.spread_tol,
            quantization_radius: self.quantization_radius,
            area_radii: self.area_radii.clone(),
            simplicity_samples: self.simplicity_samples,
            angles: AngleSettings {
                sin_floor: self.sin_floor,
                eps_sym: self.eps_sym,
                eps_lag: self.eps_lag,
                beta_cos_tol: self.beta_cos_tol,
            },
        }
    }

    /// The fully resolved objects every command actually uses.
    pub fn resolved_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "schema_version": self.schema_version,
            "scenario": self.scenario()?,
            "flow": self.flow_config()?,
            "analysis": self.analysis_config()?,
        }))
    }
}
