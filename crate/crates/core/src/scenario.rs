// SPDX-License-Identifier: Apache-2.0

//! Scenario configuration, the end-to-end pipeline and CSV sweeps.
//!
//! A scenario emits two particles from a common event O. Particle 1 reaches
//! the left detector L, particle 2 the right detector R. The right settings
//! `b` and `c` are transported R -> O -> L and projected onto the observer
//! frame at L, where they meet the left setting `a`.
//!
//! Configuration files are strict JSON:
//!
//! ```json
//! {
//!   "scenario_id": "flat-baseline",
//!   "metric": { "kind": "minkowski" },
//!   "origin": [0, 0, 0, 0],
//!   "u1": { "spatial": [-0.6, 0, 0] },
//!   "u2": { "spatial": [0.6, 0, 0] },
//!   "stop1": { "kind": "proper_time", "value": 1 },
//!   "stop2": { "kind": "proper_time", "value": 1 },
//!   "frame_choice": "static",
//!   "settings": { "a": { "angle_deg": 0 }, "b": { "angle_deg": 60 }, "c": { "angle_deg": 120 } },
//!   "tol": 1e-12,
//!   "mc": { "n": 100000, "seed": 0, "audit": true }
//! }
//! ```

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bell::{
    find_max_violation, generalized_bell_check, violation_condition, InequalityReport, Search, SettingsTriple,
    ViolationAngles,
};
use crate::error::Error;
use crate::frames::{
    build_comoving_frame, build_static_frame, embed_direction, project_to_frame, Direction3, FrameChoice, LocalFrame,
    ProjectionResult,
};
use crate::geodesic::{
    integrate_geodesic, transport_r_to_l, Drifts, GeodesicKind, GeodesicPath, IntegratorOptions, StopCondition,
    StopKind, DEFAULT_EVENT_TOL, DEFAULT_TOL,
};
use crate::geometry::{FourVector, MetricSpec, SpacetimePoint, DEFAULT_HORIZON_EPS};
use crate::lhv::{lhv_inequality_audit, make_sign_model, AuditCase, AuditReport, MIN_SAMPLES};

pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// Largest conservation drift a run may report before it is marked failed,
/// with the normalization drift taken relative to its conditioning.
pub const DRIFT_LIMIT: f64 = 1e-6;

pub const CSV_HEADER: [&str; 14] = [
    "scenario_id",
    "status",
    "theta_ab_deg",
    "theta_ac_deg",
    "theta_bc_deg",
    "w_b",
    "w_c",
    "P_ab",
    "P_ac",
    "P_bc",
    "lhs",
    "rhs",
    "margin",
    "violated",
];

/// Pipeline stage that raised an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GeodesicLeft,
    GeodesicRight,
    Frames,
    Transport,
    Projection,
    Audit,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::GeodesicLeft => "geodesic_left",
            Stage::GeodesicRight => "geodesic_right",
            Stage::Frames => "frames",
            Stage::Transport => "transport",
            Stage::Projection => "projection",
            Stage::Audit => "audit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
}

impl ScenarioError {
    /// True for errors in the configuration rather than in the computation.
    pub fn is_config(&self) -> bool {
        !matches!(self, ScenarioError::Stage { .. })
    }

    fn validation(field: &str, reason: impl Into<String>) -> Self {
        ScenarioError::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

fn staged<T>(stage: Stage, r: crate::error::Result<T>) -> Result<T, ScenarioError> {
    r.map_err(|source| ScenarioError::Stage { stage, source })
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario_id: Option<String>,
    metric: Option<RawMetric>,
    origin: Option<[f64; 4]>,
    u1: Option<RawVelocity>,
    u2: Option<RawVelocity>,
    stop1: Option<RawStop>,
    stop2: Option<RawStop>,
    #[serde(default)]
    frame_choice: FrameChoice,
    settings: RawSettings,
    tol: Option<f64>,
    #[serde(default)]
    mc: RawMc,
    synthetic: Option<RawSynthetic>,
    sweep: Option<SweepSpec>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawMetric {
    Minkowski,
    Schwarzschild { mass: f64, horizon_eps: Option<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawVelocity {
    Full([f64; 4]),
    Spatial(SpatialVelocity),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpatialVelocity {
    spatial: [f64; 3],
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum StopName {
    ProperTime,
    Radius,
    CoordinateTime,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStop {
    kind: StopName,
    value: f64,
    tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDirection {
    Vector([f64; 3]),
    Angle(AngleDirection),
    Spherical(SphericalDirection),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AngleDirection {
    angle_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphericalDirection {
    polar_deg: f64,
    azimuth_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSettings {
    a: RawDirection,
    b: RawDirection,
    c: RawDirection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMc {
    n: Option<usize>,
    seed: Option<u64>,
    audit: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    w_b: f64,
    w_c: f64,
    b_rl: Option<RawDirection>,
    c_rl: Option<RawDirection>,
}

// ---------------------------------------------------------------------------
// Validated configuration

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// In-plane angle of `a` in degrees.
    AAngleDeg,
    BAngleDeg,
    CAngleDeg,
    /// Common factor applied to both synthetic weights.
    WScale,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::AAngleDeg => "a_angle_deg",
            SweepParameter::BAngleDeg => "b_angle_deg",
            SweepParameter::CAngleDeg => "c_angle_deg",
            SweepParameter::WScale => "w_scale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl SweepSpec {
    /// `start + i * step` for every i with the value not beyond `end`.
    pub fn values(&self) -> Vec<f64> {
        if self.end < self.start {
            return Vec::new();
        }
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kinematics {
    pub origin: [f64; 4],
    /// Initial tangent of particle 1 (towards L), time component completed.
    pub u1: [f64; 4],
    /// Initial tangent of particle 2 (towards R).
    pub u2: [f64; 4],
    pub geodesic_kind: GeodesicKind,
    pub stop1: StopCondition,
    pub stop2: StopCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    pub audit: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_MC_SAMPLES,
            seed: 0,
            audit: true,
        }
    }
}

/// Weights and transported directions given directly instead of computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Synthetic {
    pub w_b: f64,
    pub w_c: f64,
    /// Defaults to `settings.b` when absent.
    pub b_rl: Option<Direction3>,
    pub c_rl: Option<Direction3>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub metric: MetricSpec,
    #[serde(skip_serializing_if = "Option::is_none", flatten)]
    pub kinematics: Option<Kinematics>,
    pub frame_choice: FrameChoice,
    pub settings: SettingsTriple,
    pub tol: f64,
    pub mc: McConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<Synthetic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// Reads and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

/// Parses and validates a scenario from JSON text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            line: inner.line(),
            column: inner.column(),
            field,
            message: without_location(&inner),
        }
    })?;
    de.end().map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        field: ".".into(),
        message: without_location(&e),
    })?;
    resolve(raw)
}

fn without_location(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    let suffix = format!(" at line {} column {}", e.line(), e.column());
    msg.strip_suffix(&suffix).map(str::to_string).unwrap_or(msg)
}

fn finite(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::validation(field, "must be finite"))
    }
}

fn direction(field: &str, d: &RawDirection) -> Result<Direction3, ScenarioError> {
    match d {
        RawDirection::Vector(v) => {
            for x in v {
                finite(field, *x)?;
            }
            Direction3::new(*v).map_err(|_| ScenarioError::validation(field, "direction vector must be nonzero"))
        }
        RawDirection::Angle(a) => Ok(Direction3::in_plane_deg(finite(field, a.angle_deg)?)),
        RawDirection::Spherical(s) => Ok(Direction3::spherical(
            finite(field, s.polar_deg)?.to_radians(),
            finite(field, s.azimuth_deg)?.to_radians(),
        )),
    }
}

fn stop(field: &str, raw: &RawStop, spec: &MetricSpec) -> Result<StopCondition, ScenarioError> {
    let value = finite(field, raw.value)?;
    let kind = match raw.kind {
        StopName::ProperTime => StopKind::ProperTime(value),
        StopName::Radius => StopKind::Radius(value),
        StopName::CoordinateTime => StopKind::CoordinateTime(value),
    };
    let cond = StopCondition {
        kind,
        tol: raw.tol.unwrap_or(DEFAULT_EVENT_TOL),
    };
    cond.validate(spec).map_err(|e| match e {
        Error::HorizonDomain { guard, .. } => {
            ScenarioError::validation(field, format!("target radius inside horizon guard r > {guard}"))
        }
        other => ScenarioError::validation(field, other.to_string()),
    })?;
    Ok(cond)
}

// Completes or checks an initial tangent and classifies it.
fn velocity(
    field: &str,
    raw: &RawVelocity,
    spec: &MetricSpec,
    origin: &SpacetimePoint,
) -> Result<([f64; 4], GeodesicKind), ScenarioError> {
    match raw {
        RawVelocity::Spatial(s) => {
            for x in s.spatial {
                finite(field, x)?;
            }
            let u = spec
                .complete_time_component(origin, s.spatial, GeodesicKind::Timelike.normalization())
                .map_err(|e| ScenarioError::validation(field, e.to_string()))?;
            Ok((u.as_array(), GeodesicKind::Timelike))
        }
        RawVelocity::Full(u) => {
            for x in u {
                finite(field, *x)?;
            }
            if u[0] <= 0.0 {
                return Err(ScenarioError::validation(
                    field,
                    "tangent must be future-pointing (u^t > 0)",
                ));
            }
            let g = spec
                .metric_at(origin)
                .map_err(|e| ScenarioError::validation(field, e.to_string()))?;
            let v = FourVector::new(*u, *origin);
            let norm = g
                .inner(&v, &v)
                .map_err(|e| ScenarioError::validation(field, e.to_string()))?;
            let m = g.matrix();
            let scale = (0..4).map(|i| (m[(i, i)] * u[i] * u[i]).abs()).sum::<f64>().max(1.0);
            if (norm + 1.0).abs() <= 1e-9 * scale {
                Ok((*u, GeodesicKind::Timelike))
            } else if norm.abs() <= 1e-9 * scale {
                Ok((*u, GeodesicKind::Null))
            } else {
                Err(ScenarioError::validation(
                    field,
                    format!("g(u,u) = {norm}, expected -1 (timelike) or 0 (null)"),
                ))
            }
        }
    }
}

fn resolve(raw: RawConfig) -> Result<ScenarioConfig, ScenarioError> {
    let metric = match raw.metric {
        None | Some(RawMetric::Minkowski) => MetricSpec::Minkowski,
        Some(RawMetric::Schwarzschild { mass, horizon_eps }) => {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(ScenarioError::validation("metric.mass", "must be positive"));
            }
            let eps = horizon_eps.unwrap_or(DEFAULT_HORIZON_EPS);
            MetricSpec::schwarzschild_with_guard(mass, eps)
                .map_err(|_| ScenarioError::validation("metric.horizon_eps", "must be positive"))?
        }
    };
    if raw.metric.is_none() && raw.synthetic.is_none() {
        return Err(ScenarioError::validation(
            "metric",
            "required unless a synthetic block is given",
        ));
    }

    let settings = SettingsTriple::new(
        direction("settings.a", &raw.settings.a)?,
        direction("settings.b", &raw.settings.b)?,
        direction("settings.c", &raw.settings.c)?,
    );

    let tol = raw.tol.unwrap_or(DEFAULT_TOL);
    if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
        return Err(ScenarioError::validation("tol", "must lie in (0, 1)"));
    }

    let mc = McConfig {
        n: raw.mc.n.unwrap_or(DEFAULT_MC_SAMPLES),
        seed: raw.mc.seed.unwrap_or(0),
        audit: raw.mc.audit.unwrap_or(true),
    };
    if mc.n < MIN_SAMPLES {
        return Err(ScenarioError::validation(
            "mc.n",
            format!("must be at least {MIN_SAMPLES}"),
        ));
    }

    let geometric = [
        ("origin", raw.origin.is_some()),
        ("u1", raw.u1.is_some()),
        ("u2", raw.u2.is_some()),
        ("stop1", raw.stop1.is_some()),
        ("stop2", raw.stop2.is_some()),
    ];
    let (kinematics, synthetic) = match raw.synthetic {
        Some(s) => {
            if let Some((name, _)) = geometric.iter().find(|(_, present)| *present) {
                return Err(ScenarioError::validation(
                    name,
                    "not allowed together with a synthetic block",
                ));
            }
            for (name, w) in [("synthetic.w_b", s.w_b), ("synthetic.w_c", s.w_c)] {
                if !(0.0..=1.0).contains(&w) {
                    return Err(ScenarioError::validation(name, "must lie in [0, 1]"));
                }
            }
            let b_rl = s.b_rl.as_ref().map(|d| direction("synthetic.b_rl", d)).transpose()?;
            let c_rl = s.c_rl.as_ref().map(|d| direction("synthetic.c_rl", d)).transpose()?;
            (
                None,
                Some(Synthetic {
                    w_b: s.w_b,
                    w_c: s.w_c,
                    b_rl,
                    c_rl,
                }),
            )
        }
        None => {
            if let Some((name, _)) = geometric.iter().find(|(_, present)| !*present) {
                return Err(ScenarioError::validation(name, "required"));
            }
            let origin = raw.origin.unwrap();
            for x in origin {
                finite("origin", x)?;
            }
            let o = SpacetimePoint::new(origin, metric.chart());
            metric.validate_point(&o).map_err(|e| match e {
                Error::HorizonDomain { .. } => ScenarioError::validation("origin", "origin inside horizon guard"),
                other => ScenarioError::validation("origin", other.to_string()),
            })?;
            let (u1, k1) = velocity("u1", raw.u1.as_ref().unwrap(), &metric, &o)?;
            let (u2, k2) = velocity("u2", raw.u2.as_ref().unwrap(), &metric, &o)?;
            if k1 != k2 {
                return Err(ScenarioError::validation(
                    "u2",
                    "u1 and u2 must both be timelike or both null",
                ));
            }
            let same = u1
                .iter()
                .zip(u2.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
            if same {
                return Err(ScenarioError::validation("u2", "must differ from u1"));
            }
            let stop1 = stop("stop1", raw.stop1.as_ref().unwrap(), &metric)?;
            let stop2 = stop("stop2", raw.stop2.as_ref().unwrap(), &metric)?;
            (
                Some(Kinematics {
                    origin,
                    u1,
                    u2,
                    geodesic_kind: k1,
                    stop1,
                    stop2,
                }),
                None,
            )
        }
    };

    if let Some(sw) = &raw.sweep {
        for (name, v) in [
            ("sweep.start", sw.start),
            ("sweep.end", sw.end),
            ("sweep.step", sw.step),
        ] {
            finite(name, v)?;
        }
        if sw.step <= 0.0 {
            return Err(ScenarioError::validation("sweep.step", "must be positive"));
        }
        if sw.parameter == SweepParameter::WScale && synthetic.is_none() {
            return Err(ScenarioError::validation(
                "sweep.parameter",
                "w_scale needs a synthetic block",
            ));
        }
    }

    Ok(ScenarioConfig {
        scenario_id: raw.scenario_id.unwrap_or_else(|| "scenario".into()),
        metric,
        kinematics,
        frame_choice: raw.frame_choice,
        settings,
        tol,
        mc,
        synthetic,
        sweep: raw.sweep,
    })
}

// ---------------------------------------------------------------------------
// Pipeline

/// Both geodesics and the observer frames at their endpoints.
#[derive(Debug, Clone)]
pub struct ScenarioGeometry {
    pub geo_l: GeodesicPath,
    pub geo_r: GeodesicPath,
    pub frame_l: LocalFrame,
    pub frame_r: LocalFrame,
}

fn observer_frame(spec: &MetricSpec, path: &GeodesicPath, choice: FrameChoice) -> crate::error::Result<LocalFrame> {
    match choice {
        FrameChoice::Static => build_static_frame(spec, &path.end_point()),
        FrameChoice::Comoving => build_comoving_frame(spec, &path.end_point(), &path.end_tangent()),
    }
}

fn checked_drifts(stage: Stage, path: &GeodesicPath) -> Result<Drifts, ScenarioError> {
    let d = path.drifts();
    if d.max_conditioned() > DRIFT_LIMIT {
        return Err(ScenarioError::Stage {
            stage,
            source: Error::DriftExceeded {
                drift: d.max_conditioned(),
                limit: DRIFT_LIMIT,
            },
        });
    }
    Ok(d)
}

impl ScenarioGeometry {
    /// Integrates both geodesics and builds the frames at L and R.
    pub fn prepare(
        metric: &MetricSpec,
        k: &Kinematics,
        frame_choice: FrameChoice,
        tol: f64,
    ) -> Result<Self, ScenarioError> {
        let opts = IntegratorOptions::with_tol(tol);
        let o = SpacetimePoint::new(k.origin, metric.chart());
        let u1 = FourVector::new(k.u1, o);
        let u2 = FourVector::new(k.u2, o);
        let geo_l = staged(
            Stage::GeodesicLeft,
            integrate_geodesic(metric, &o, &u1, &k.stop1, k.geodesic_kind, &opts),
        )?;
        checked_drifts(Stage::GeodesicLeft, &geo_l)?;
        let geo_r = staged(
            Stage::GeodesicRight,
            integrate_geodesic(metric, &o, &u2, &k.stop2, k.geodesic_kind, &opts),
        )?;
        checked_drifts(Stage::GeodesicRight, &geo_r)?;
        let frame_l = staged(Stage::Frames, observer_frame(metric, &geo_l, frame_choice))?;
        let frame_r = staged(Stage::Frames, observer_frame(metric, &geo_r, frame_choice))?;
        Ok(Self {
            geo_l,
            geo_r,
            frame_l,
            frame_r,
        })
    }

    /// Transports a right-frame direction to L and projects it there.
    pub fn project(&self, d: &Direction3) -> Result<ProjectionResult, ScenarioError> {
        let v_r = embed_direction(&self.frame_r, d);
        let v_l = staged(Stage::Transport, transport_r_to_l(&self.geo_l, &self.geo_r, &v_r))?;
        staged(Stage::Projection, project_to_frame(&self.frame_l, &v_l.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodesicSummary {
    pub start: [f64; 4],
    pub end: [f64; 4],
    pub end_tangent: [f64; 4],
    pub affine_length: f64,
    pub steps: usize,
    pub drifts: Drifts,
}

impl GeodesicSummary {
    fn of(path: &GeodesicPath) -> Self {
        Self {
            start: path.start_point().coords,
            end: path.end_point().coords,
            end_tangent: path.end_tangent().as_array(),
            affine_length: path.affine_length(),
            steps: path.len().saturating_sub(1),
            drifts: path.drifts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    /// Path of particle 1, O -> L.
    pub geodesic_left: Option<GeodesicSummary>,
    /// Path of particle 2, O -> R.
    pub geodesic_right: Option<GeodesicSummary>,
    pub proj_b: ProjectionResult,
    pub proj_c: ProjectionResult,
    pub inequality: InequalityReport,
    pub violation: ViolationAngles,
    pub audit: Option<AuditReport>,
    #[serde(skip)]
    pub elapsed: Duration,
}

fn synthetic_projections(
    s: &Synthetic,
    settings: &SettingsTriple,
    scale: f64,
) -> Result<(ProjectionResult, ProjectionResult), ScenarioError> {
    let b = s.b_rl.unwrap_or(settings.b);
    let c = s.c_rl.unwrap_or(settings.c);
    let pb = staged(Stage::Projection, ProjectionResult::synthetic(s.w_b * scale, b))?;
    let pc = staged(Stage::Projection, ProjectionResult::synthetic(s.w_c * scale, c))?;
    Ok((pb, pc))
}

/// Runs the full pipeline for one configuration.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let started = Instant::now();
    let (geometry, proj_b, proj_c) = match (&cfg.synthetic, &cfg.kinematics) {
        (Some(s), _) => {
            let (pb, pc) = synthetic_projections(s, &cfg.settings, 1.0)?;
            (None, pb, pc)
        }
        (None, Some(k)) => {
            let g = ScenarioGeometry::prepare(&cfg.metric, k, cfg.frame_choice, cfg.tol)?;
            let pb = g.project(&cfg.settings.b)?;
            let pc = g.project(&cfg.settings.c)?;
            (Some(g), pb, pc)
        }
        (None, None) => return Err(ScenarioError::validation("origin", "required")),
    };
    let inequality = generalized_bell_check(&cfg.settings.a, &proj_b, &proj_c);
    let violation = violation_condition(&cfg.settings.a, &proj_b, &proj_c);
    let audit = if cfg.mc.audit {
        let case = AuditCase {
            settings: cfg.settings,
            proj_b,
            proj_c,
        };
        let model = make_sign_model(cfg.mc.seed);
        Some(staged(
            Stage::Audit,
            lhv_inequality_audit(&model, &[case], cfg.mc.n, cfg.mc.seed),
        )?)
    } else {
        None
    };
    Ok(RunReport {
        config: cfg.clone(),
        geodesic_left: geometry.as_ref().map(|g| GeodesicSummary::of(&g.geo_l)),
        geodesic_right: geometry.as_ref().map(|g| GeodesicSummary::of(&g.geo_r)),
        proj_b,
        proj_c,
        inequality,
        violation,
        audit,
        elapsed: started.elapsed(),
    })
}

impl RunReport {
    pub fn csv_row(&self) -> CsvRow {
        CsvRow::from_report(
            self.config.scenario_id.clone(),
            &self.config.settings.a,
            &self.inequality,
        )
    }

    pub fn audit_passed(&self) -> bool {
        self.audit.as_ref().map_or(true, |a| a.passed)
    }

    /// Plain-text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = &self.inequality;
        s += &format!("scenario {}\n", self.config.scenario_id);
        for (name, g) in [("left", &self.geodesic_left), ("right", &self.geodesic_right)] {
            if let Some(g) = g {
                s += &format!(
                    "  geodesic {name}: end {:?}, affine length {:.6}, {} steps, drifts (norm {:.1e}, E {:.1e}, L {:.1e})\n",
                    g.end, g.affine_length, g.steps, g.drifts.normalization, g.drifts.energy, g.drifts.angular_momentum
                );
            }
        }
        s += &format!(
            "  w_b = {:.12}  w_c = {:.12}{}\n",
            r.w_b,
            r.w_c,
            if r.swapped {
                "  (arms swapped so that w_b >= w_c)"
            } else {
                ""
            }
        );
        s += &format!("  b_RL = {:?}\n  c_RL = {:?}\n", r.b_rl.as_array(), r.c_rl.as_array());
        s += &format!(
            "  P(a,b) = {:.12}  P(a,c) = {:.12}  P(b,c) = {:.12}\n",
            r.p_ab, r.p_ac, r.p_bc
        );
        s += &format!(
            "  lhs = {:.12}  rhs = {:.12}  margin = {:.12}  violated = {}\n",
            r.lhs, r.rhs, r.margin, r.violated
        );
        let v = &self.violation;
        s += &format!(
            "  |d| = {:.12}  cos phi = {:.12}  cos theta = {:.12}\n",
            v.d_norm, v.cos_phi, v.cos_theta
        );
        if let Some(a) = &self.audit {
            for c in &a.cases {
                s += &format!(
                    "  LHV audit (n = {}, seed = {}): lhs = {:.6}  rhs = {:.6}  sigma = {:.2e}  {}\n",
                    a.n,
                    a.seed,
                    c.lhs,
                    c.rhs,
                    c.combined_stderr,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
        }
        s
    }
}

/// Sign-model audit of the configured settings and of the same settings with
/// `a` replaced by the quantum-optimal left setting `d / |d|`.
pub fn audit_scenario(cfg: &ScenarioConfig, n: usize, seed: u64) -> Result<AuditReport, ScenarioError> {
    let mut quiet = cfg.clone();
    quiet.mc.audit = false;
    let report = run_scenario(&quiet)?;
    let mut cases = vec![AuditCase {
        settings: cfg.settings,
        proj_b: report.proj_b,
        proj_c: report.proj_c,
    }];
    if let Ok((a_star, _)) = find_max_violation(&report.proj_b, &report.proj_c, Search::Analytic) {
        cases.push(AuditCase {
            settings: SettingsTriple {
                a: a_star,
                ..cfg.settings
            },
            proj_b: report.proj_b,
            proj_c: report.proj_c,
        });
    }
    let model = make_sign_model(seed);
    staged(Stage::Audit, lhv_inequality_audit(&model, &cases, n, seed))
}

// ---------------------------------------------------------------------------
// CSV rows

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    HorizonGuard,
    HorizonApproach,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::HorizonGuard => "horizon_guard",
            RowStatus::HorizonApproach => "horizon_approach",
            RowStatus::Error => "error",
        }
    }

    pub fn of_error(e: &ScenarioError) -> Self {
        match e {
            ScenarioError::Stage {
                source: Error::HorizonDomain { .. } | Error::StaticFrameUnavailable,
                ..
            } => RowStatus::HorizonGuard,
            ScenarioError::Stage {
                source: Error::HorizonApproach { .. },
                ..
            } => RowStatus::HorizonApproach,
            _ => RowStatus::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowValues {
    pub theta_ab_deg: f64,
    pub theta_ac_deg: f64,
    pub theta_bc_deg: f64,
    pub w_b: f64,
    pub w_c: f64,
    pub p_ab: f64,
    pub p_ac: f64,
    pub p_bc: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scenario_id: String,
    pub status: RowStatus,
    /// Absent for failed rows.
    pub values: Option<RowValues>,
}

impl CsvRow {
    /// Row for an inequality report; angles are taken in the left frame
    /// against the (possibly swapped) transported directions.
    pub fn from_report(scenario_id: String, a: &Direction3, r: &InequalityReport) -> Self {
        Self {
            scenario_id,
            status: RowStatus::Ok,
            values: Some(RowValues {
                theta_ab_deg: a.angle_to(&r.b_rl).to_degrees(),
                theta_ac_deg: a.angle_to(&r.c_rl).to_degrees(),
                theta_bc_deg: r.b_rl.angle_to(&r.c_rl).to_degrees(),
                w_b: r.w_b,
                w_c: r.w_c,
                p_ab: r.p_ab,
                p_ac: r.p_ac,
                p_bc: r.p_bc,
                lhs: r.lhs,
                rhs: r.rhs,
                margin: r.margin,
                violated: r.violated,
            }),
        }
    }

    pub fn failed(scenario_id: String, e: &ScenarioError) -> Self {
        Self {
            scenario_id,
            status: RowStatus::of_error(e),
            values: None,
        }
    }

    fn record(&self) -> Vec<String> {
        let mut rec = vec![self.scenario_id.clone(), self.status.as_str().to_string()];
        match &self.values {
            Some(v) => {
                for x in [
                    v.theta_ab_deg,
                    v.theta_ac_deg,
                    v.theta_bc_deg,
                    v.w_b,
                    v.w_c,
                    v.p_ab,
                    v.p_ac,
                    v.p_bc,
                    v.lhs,
                    v.rhs,
                    v.margin,
                ] {
                    rec.push(format_real(x));
                }
                rec.push(v.violated.to_string());
            }
            None => rec.extend(std::iter::repeat(String::new()).take(12)),
        }
        rec
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the header and `rows` as CSV.
pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()
}

pub fn csv_string(rows: &[CsvRow]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

// ---------------------------------------------------------------------------
// Sweeps

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ScenarioError> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(ScenarioError::validation("workers", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ScenarioError::validation("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn sweep_settings(base: &SettingsTriple, p: SweepParameter, v: f64) -> SettingsTriple {
    let mut s = *base;
    match p {
        SweepParameter::AAngleDeg => s.a = Direction3::in_plane_deg(v),
        SweepParameter::BAngleDeg => s.b = Direction3::in_plane_deg(v),
        SweepParameter::CAngleDeg => s.c = Direction3::in_plane_deg(v),
        SweepParameter::WScale => {}
    }
    s
}

/// One CSV row per sweep point, in sweep order. Geometry is integrated once;
/// rows are evaluated in parallel and failed rows carry their status.
pub fn run_sweep(cfg: &ScenarioConfig, workers: Option<usize>) -> Result<Vec<CsvRow>, ScenarioError> {
    use rayon::prelude::*;
    let sweep = cfg
        .sweep
        .ok_or_else(|| ScenarioError::validation("sweep", "the configuration has no sweep block"))?;
    let values = sweep.values();
    let id = |v: f64| format!("{}/{}={}", cfg.scenario_id, sweep.parameter.name(), v);
    with_workers(workers, || {
        let geometry = match (&cfg.synthetic, &cfg.kinematics) {
            (None, Some(k)) => Some(ScenarioGeometry::prepare(&cfg.metric, k, cfg.frame_choice, cfg.tol)),
            _ => None,
        };
        values
            .par_iter()
            .map(|&v| {
                let settings = sweep_settings(&cfg.settings, sweep.parameter, v);
                let projections = match (&cfg.synthetic, &geometry) {
                    (Some(s), _) => {
                        let scale = if sweep.parameter == SweepParameter::WScale {
                            v
                        } else {
                            1.0
                        };
                        synthetic_projections(s, &settings, scale)
                    }
                    (None, Some(Ok(g))) => g.project(&settings.b).and_then(|pb| Ok((pb, g.project(&settings.c)?))),
                    (None, Some(Err(e))) => Err(e.clone()),
                    (None, None) => Err(ScenarioError::validation("origin", "required")),
                };
                match projections {
                    Ok((pb, pc)) => {
                        let report = generalized_bell_check(&settings.a, &pb, &pc);
                        CsvRow::from_report(id(v), &settings.a, &report)
                    }
                    Err(e) => CsvRow::failed(id(v), &e),
                }
            })
            .collect()
    })
}

/// Exterior Schwarzschild study of the projection weight as the right
/// detector approaches the horizon.
///
/// O sits at `r_start` on the equator. Particle 2 falls radially from rest
/// at O and is read out at radius r; particle 1 leaves O outwards at local
/// speed 0.1 and is read out after unit proper time. Both observers are
/// static and the settings are 0, 60 and 120 degrees in the plane of the
/// radial and polar legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonSweep {
    pub mass: f64,
    pub r_start: f64,
    pub r_end: f64,
    pub steps: usize,
    pub horizon_eps: f64,
    pub tol: f64,
}

impl HorizonSweep {
    pub fn new(mass: f64, r_start: f64, r_end: f64, steps: usize) -> Self {
        Self {
            mass,
            r_start,
            r_end,
            steps,
            horizon_eps: DEFAULT_HORIZON_EPS,
            tol: DEFAULT_TOL,
        }
    }

    /// Readout radii from `r_start` to `r_end` inclusive.
    pub fn radii(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.r_start],
            n => {
                let span = self.r_end - self.r_start;
                (0..n)
                    .map(|i| self.r_start + span * (i as f64 / (n - 1) as f64))
                    .collect()
            }
        }
    }

    /// Scenario with the right detector at radius `r`.
    pub fn scenario(&self, r: f64) -> Result<ScenarioConfig, ScenarioError> {
        let metric = MetricSpec::schwarzschild_with_guard(self.mass, self.horizon_eps)
            .map_err(|e| ScenarioError::validation("mass", e.to_string()))?;
        let o = SpacetimePoint::equatorial(0.0, self.r_start, 0.0);
        let frame = build_static_frame(&metric, &o)
            .map_err(|_| ScenarioError::validation("r_start", "origin inside horizon guard"))?;
        let speed: f64 = 0.1;
        let gamma = 1.0 / (1.0 - speed * speed).sqrt();
        let u1 = (frame.leg(0).components + frame.leg(1).components * speed) * gamma;
        let u2 = frame.leg(0).components;
        Ok(ScenarioConfig {
            scenario_id: format!("r={r}"),
            metric,
            kinematics: Some(Kinematics {
                origin: o.coords,
                u1: u1.into(),
                u2: u2.into(),
                geodesic_kind: GeodesicKind::Timelike,
                stop1: StopCondition::proper_time(1.0),
                stop2: StopCondition::radius(r),
            }),
            frame_choice: FrameChoice::Static,
            settings: SettingsTriple::coplanar_deg(0.0, 60.0, 120.0),
            tol: self.tol,
            mc: McConfig {
                audit: false,
                ..McConfig::default()
            },
            synthetic: None,
            sweep: None,
        })
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(ScenarioError::validation("mass", "must be positive"));
        }
        if !(self.horizon_eps.is_finite() && self.horizon_eps > 0.0) {
            return Err(ScenarioError::validation("horizon_eps", "must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0 && self.tol < 1.0) {
            return Err(ScenarioError::validation("tol", "must lie in (0, 1)"));
        }
        if !self.r_start.is_finite() || self.r_start <= 2.0 * self.mass * (1.0 + self.horizon_eps) {
            return Err(ScenarioError::validation("r_start", "origin inside horizon guard"));
        }
        if !self.r_end.is_finite() || self.r_end > self.r_start {
            return Err(ScenarioError::validation(
                "r_end",
                "must be finite and not above r_start",
            ));
        }
        Ok(())
    }
}

/// One row per readout radius, ordered as [`HorizonSweep::radii`].
pub fn run_horizon_sweep(sweep: &HorizonSweep, workers: Option<usize>) -> Result<Vec<CsvRow>, ScenarioError> {
    use rayon::prelude::*;
    sweep.validate()?;
    let radii = sweep.radii();
    with_workers(workers, || {
        radii
            .par_iter()
            .map(|&r| {
                let cfg = match sweep.scenario(r) {
                    Ok(c) => c,
                    Err(e) => return CsvRow::failed(format!("r={r}"), &e),
                };
                match run_scenario(&cfg) {
                    Ok(report) => report.csv_row(),
                    Err(e) => CsvRow::failed(cfg.scenario_id, &e),
                }
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Flat-space self test

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
    pub passed: bool,
}

/// Minkowski baseline: particles leave the origin with u^x = -0.6 and +0.6
/// and are read out after unit proper time by static observers.
pub fn flat_baseline(settings: SettingsTriple) -> ScenarioConfig {
    let ut = 1.36_f64.sqrt();
    let stop = StopCondition::proper_time(1.0);
    ScenarioConfig {
        scenario_id: "flat-baseline".into(),
        metric: MetricSpec::Minkowski,
        kinematics: Some(Kinematics {
            origin: [0.0; 4],
            u1: [ut, -0.6, 0.0, 0.0],
            u2: [ut, 0.6, 0.0, 0.0],
            geodesic_kind: GeodesicKind::Timelike,
            stop1: stop,
            stop2: stop,
        }),
        frame_choice: FrameChoice::Static,
        settings,
        tol: DEFAULT_TOL,
        mc: McConfig::default(),
        synthetic: None,
        sweep: None,
    }
}

/// Checks the flat-space reduction on `trials` random settings drawn from
/// `seed`, plus the canonical 0/60/120 degree violation.
pub fn flat_space_selftest(seed: u64, trials: usize) -> Result<SelftestReport, ScenarioError> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, UnitSphere};

    const TOL: f64 = 1e-9;
    let base = flat_baseline(SettingsTriple::coplanar_deg(0.0, 60.0, 120.0));
    let geometry = ScenarioGeometry::prepare(
        &base.metric,
        base.kinematics.as_ref().expect("baseline has kinematics"),
        base.frame_choice,
        base.tol,
    )?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || Direction3::new(UnitSphere.sample(&mut rng)).expect("unit sphere sample");
    let (mut dw, mut dp, mut dform) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..trials {
        let s = SettingsTriple::new(draw(), draw(), draw());
        let pb = geometry.project(&s.b)?;
        let pc = geometry.project(&s.c)?;
        let r = generalized_bell_check(&s.a, &pb, &pc);
        dw = dw.max((pb.w - 1.0).abs()).max((pc.w - 1.0).abs());
        dp = dp
            .max((r.p_ab + s.a.dot(&r.b_rl)).abs())
            .max((crate::bell::quantum_correlation(&s.a, &pb) + s.a.dot(&s.b)).abs())
            .max((crate::bell::quantum_correlation(&s.a, &pc) + s.a.dot(&s.c)).abs());
        dform = dform.max((r.rhs - (1.0 + r.p_bc)).abs());
    }

    let mut cfg = base.clone();
    cfg.mc.audit = false;
    let r = run_scenario(&cfg)?.inequality;
    let canon_err = (r.lhs - 1.0).abs().max((r.rhs - 0.5).abs()).max((r.margin - 0.5).abs());

    let checks = vec![
        SelftestCheck {
            name: "unit_weight",
            passed: dw <= TOL,
            detail: format!("max |w - 1| = {dw:.3e} over {trials} random settings"),
        },
        SelftestCheck {
            name: "singlet_correlation",
            passed: dp <= TOL,
            detail: format!("max |P(a,b) + cos theta_ab| = {dp:.3e}"),
        },
        SelftestCheck {
            name: "classic_bell_form",
            passed: dform <= TOL,
            detail: format!("max |rhs - (1 + P(b,c))| = {dform:.3e}"),
        },
        SelftestCheck {
            name: "canonical_violation",
            passed: canon_err <= TOL && r.violated,
            detail: format!("lhs = {:.12}, rhs = {:.12}, margin = {:.12}", r.lhs, r.rhs, r.margin),
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(SelftestReport { checks, passed })
}
