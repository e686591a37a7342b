// SPDX-License-Identifier: Apache-2.0

//! Geodesic integration and Levi-Civita parallel transport along stored paths.
//!
//! Geodesics are integrated with adaptive Dormand-Prince 5(4) steps and kept
//! as the sequence of accepted steps. Transport re-integrates the coupled
//! (x, u, v) system across each stored step with its own error control,
//! restarting every step from the stored sample.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FourVector, MetricSpec, SpacetimePoint};
use crate::integrator::{dopri_step, error_ratio, error_ratio_per_unit_step, initial_step};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_EVENT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeodesicKind {
    #[default]
    Timelike,
    Null,
}

impl GeodesicKind {
    /// Value of g(u,u) along the curve.
    pub fn normalization(self) -> f64 {
        match self {
            GeodesicKind::Timelike => -1.0,
            GeodesicKind::Null => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum StopKind {
    /// Affine parameter (proper time for timelike curves) reaches the value.
    ProperTime(f64),
    /// Areal radius (Schwarzschild) or Euclidean radius (Minkowski) is reached.
    Radius(f64),
    /// Coordinate time t reaches the value.
    CoordinateTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StopCondition {
    #[serde(flatten)]
    pub kind: StopKind,
    /// Accuracy of the terminal event location.
    pub tol: f64,
}

impl StopCondition {
    pub fn proper_time(tau_max: f64) -> Self {
        Self {
            kind: StopKind::ProperTime(tau_max),
            tol: DEFAULT_EVENT_TOL,
        }
    }

    pub fn radius(r_target: f64) -> Self {
        Self {
            kind: StopKind::Radius(r_target),
            tol: DEFAULT_EVENT_TOL,
        }
    }

    pub fn coordinate_time(t_max: f64) -> Self {
        Self {
            kind: StopKind::CoordinateTime(t_max),
            tol: DEFAULT_EVENT_TOL,
        }
    }

    pub fn validate(&self, spec: &MetricSpec) -> Result<()> {
        let target = match self.kind {
            StopKind::ProperTime(v) | StopKind::Radius(v) | StopKind::CoordinateTime(v) => v,
        };
        if !(target.is_finite() && target >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop target must be finite and non-negative, got {target}"
            )));
        }
        if let StopKind::Radius(r) = self.kind {
            if r <= spec.horizon_guard() {
                return Err(Error::HorizonDomain {
                    r,
                    guard: spec.horizon_guard(),
                });
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument("event tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn radius(spec: &MetricSpec, x: &[f64; 4]) -> f64 {
    match spec {
        MetricSpec::Minkowski => (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt(),
        MetricSpec::Schwarzschild { .. } => x[1],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Absolute and relative error tolerance per step.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicSample {
    pub tau: f64,
    pub x: [f64; 4],
    pub u: [f64; 4],
}

/// Maximum deviations of the conserved quantities along a path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Drifts {
    /// max |g(u,u) - n0|
    pub normalization: f64,
    /// max |g(u,u) - n0| / max(1, sum |g_mm u^m u^m|), the normalization drift
    /// relative to the size of the terms that cancel in g(u,u).
    pub normalization_conditioned: f64,
    /// max |E - E0| / max(|E0|, 1)
    pub energy: f64,
    /// max |L - L0| / max(|L0|, 1)
    pub angular_momentum: f64,
}

impl Drifts {
    pub fn max(&self) -> f64 {
        self.normalization.max(self.energy).max(self.angular_momentum)
    }

    /// Largest drift with the normalization taken relative to its conditioning.
    pub fn max_conditioned(&self) -> f64 {
        self.normalization_conditioned
            .max(self.energy)
            .max(self.angular_momentum)
    }
}

/// A geodesic stored as its accepted integration steps.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    samples: Vec<GeodesicSample>,
    spec: MetricSpec,
    tol: f64,
    kind: GeodesicKind,
}

impl GeodesicPath {
    pub fn samples(&self) -> &[GeodesicSample] {
        &self.samples
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn kind(&self) -> GeodesicKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// True for a zero-length path (start and end coincide).
    pub fn is_degenerate(&self) -> bool {
        self.samples.len() < 2
    }

    fn point(&self, s: &GeodesicSample) -> SpacetimePoint {
        SpacetimePoint::new(s.x, self.spec.chart())
    }

    pub fn start_point(&self) -> SpacetimePoint {
        self.point(&self.samples[0])
    }

    pub fn end_point(&self) -> SpacetimePoint {
        self.point(self.samples.last().expect("path has at least one sample"))
    }

    pub fn start_tangent(&self) -> FourVector {
        FourVector::new(self.samples[0].u, self.start_point())
    }

    pub fn end_tangent(&self) -> FourVector {
        let s = self.samples.last().expect("path has at least one sample");
        FourVector::new(s.u, self.end_point())
    }

    pub fn affine_length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.tau) - self.samples[0].tau
    }

    pub fn drifts(&self) -> Drifts {
        let n0 = self.kind.normalization();
        let first = &self.samples[0];
        let (e0, l0) = self.spec.conserved_quantities(&first.x, &first.u);
        let mut d = Drifts::default();
        for s in &self.samples {
            let g = self.spec.metric_components(&s.x);
            let u = Vector4::from(s.u);
            let norm = (u.transpose() * g * u)[0];
            let gross = (0..4).map(|i| (g[(i, i)] * u[i] * u[i]).abs()).sum::<f64>().max(1.0);
            let (e, l) = self.spec.conserved_quantities(&s.x, &s.u);
            d.normalization = d.normalization.max((norm - n0).abs());
            d.normalization_conditioned = d.normalization_conditioned.max((norm - n0).abs() / gross);
            d.energy = d.energy.max((e - e0).abs() / e0.abs().max(1.0));
            d.angular_momentum = d.angular_momentum.max((l - l0).abs() / l0.abs().max(1.0));
        }
        d
    }
}

fn geodesic_rhs(spec: &MetricSpec, y: &[f64; 8]) -> Result<[f64; 8]> {
    let x = [y[0], y[1], y[2], y[3]];
    let u = [y[4], y[5], y[6], y[7]];
    spec.validate_coords(&x)?;
    let acc = spec.contract(&x, &u, &u);
    Ok([u[0], u[1], u[2], u[3], -acc[0], -acc[1], -acc[2], -acc[3]])
}

/// Roundoff floor of a step of length `h` from `y`: the gross size of the
/// terms summed in the right-hand side, amplified by the conditioning of the
/// metric functions in r.
fn geodesic_noise(spec: &MetricSpec, y: &[f64; 8], h: f64) -> [f64; 8] {
    let mut out = [0.0; 8];
    let (cond, gamma) = match spec {
        MetricSpec::Minkowski => (1.0, None),
        MetricSpec::Schwarzschild { mass, .. } => {
            let x = [y[0], y[1], y[2], y[3]];
            (
                (y[1] / (y[1] - 2.0 * mass)).abs(),
                Some(spec.christoffel_components(&x)),
            )
        }
    };
    let scale = 64.0 * f64::EPSILON * h.abs() * cond;
    for mu in 0..4 {
        out[mu] = scale * y[4 + mu].abs();
        if let Some(g) = &gamma {
            let mut gross = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    gross += (g[mu][a][b] * y[4 + a] * y[4 + b]).abs();
                }
            }
            out[4 + mu] = scale * gross;
        }
    }
    out
}

fn transport_rhs(spec: &MetricSpec, y: &[f64; 12]) -> Result<[f64; 12]> {
    let x = [y[0], y[1], y[2], y[3]];
    let u = [y[4], y[5], y[6], y[7]];
    let v = [y[8], y[9], y[10], y[11]];
    spec.validate_coords(&x)?;
    let acc = spec.contract(&x, &u, &u);
    let dv = spec.contract(&x, &u, &v);
    Ok([
        u[0], u[1], u[2], u[3], -acc[0], -acc[1], -acc[2], -acc[3], -dv[0], -dv[1], -dv[2], -dv[3],
    ])
}

fn split(y: &[f64; 8]) -> ([f64; 4], [f64; 4]) {
    ([y[0], y[1], y[2], y[3]], [y[4], y[5], y[6], y[7]])
}

/// Integrates the geodesic equation from `(x0, u0)` until `stop` fires.
pub fn integrate_geodesic(
    spec: &MetricSpec,
    x0: &SpacetimePoint,
    u0: &FourVector,
    stop: &StopCondition,
    kind: GeodesicKind,
    opts: &IntegratorOptions,
) -> Result<GeodesicPath> {
    spec.validate_point(x0)?;
    stop.validate(spec)?;
    if !u0.base.coincides(x0) {
        return Err(Error::BasePointMismatch);
    }
    if !u0.is_finite() {
        return Err(Error::InvalidArgument("non-finite initial tangent".into()));
    }
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let g = spec.metric_at(x0)?;
    let n0 = kind.normalization();
    let norm = g.inner_raw(&u0.components, &u0.components);
    let scale = u0.components.iter().fold(1.0_f64, |m, c| m.max(c * c));
    if (norm - n0).abs() > 1e-9 * scale {
        return Err(Error::BadNormalization {
            value: norm,
            expected: n0,
        });
    }
    if kind == GeodesicKind::Null && u0.components.iter().all(|&c| c == 0.0) {
        return Err(Error::BadNormalization {
            value: 0.0,
            expected: 0.0,
        });
    }

    let rhs = |y: &[f64; 8]| geodesic_rhs(spec, y);
    let event = |tau: f64, y: &[f64; 8]| -> f64 {
        match stop.kind {
            StopKind::ProperTime(t) => tau - t,
            StopKind::Radius(r) => radius(spec, &[y[0], y[1], y[2], y[3]]) - r,
            StopKind::CoordinateTime(t) => y[0] - t,
        }
    };

    let mut y = [0.0; 8];
    y[..4].copy_from_slice(&x0.coords);
    y[4..].copy_from_slice(&u0.as_array());
    let mut tau = 0.0;
    let mut samples = vec![GeodesicSample {
        tau,
        x: x0.coords,
        u: u0.as_array(),
    }];
    let path = |samples: Vec<GeodesicSample>| GeodesicPath {
        samples,
        spec: *spec,
        tol: opts.tol,
        kind,
    };

    let g_start = event(tau, &y);
    if g_start.abs() <= stop.tol {
        return Ok(path(samples));
    }
    let start_sign = g_start.signum();
    if matches!(stop.kind, StopKind::ProperTime(_) | StopKind::CoordinateTime(_)) && start_sign > 0.0 {
        return Err(Error::InvalidArgument(
            "stop target lies in the past of the origin".into(),
        ));
    }

    let mut k1 = rhs(&y)?;
    let mut h = initial_step(&rhs, &y, &k1, opts.tol);
    let mut steps = 0usize;
    let mut hit_guard: Option<f64> = None;
    loop {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepFailure(format!(
                "no stop event after {} steps (tau = {tau})",
                opts.max_steps
            )));
        }
        let mut final_step = false;
        if let StopKind::ProperTime(t) = stop.kind {
            if tau + h >= t {
                h = t - tau;
                final_step = true;
            }
        }
        let h_min = 1e-14 * tau.abs().max(1.0);
        if h < h_min && !final_step {
            return Err(match hit_guard {
                Some(r) => Error::HorizonApproach { r },
                None if y.iter().any(|v| v.abs() > 1e100) => Error::StepFailure(format!(
                    "solution diverged at tau = {tau:e} before reaching the stop condition"
                )),
                None => Error::StepFailure(format!("step size underflow at tau = {tau}")),
            });
        }

        let trial = match dopri_step(&rhs, &y, &k1, h) {
            Ok(t) => t,
            Err(Error::HorizonDomain { r, .. }) => {
                hit_guard = Some(r);
                h *= 0.25;
                continue;
            }
            Err(Error::InvalidChart(_)) => {
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        // Error per unit step.
        let err = error_ratio_per_unit_step(&trial.err, &y, &trial.y, opts.tol, h, &geodesic_noise(spec, &y, h));
        if !err.is_finite() || err > 1.0 {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.25)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= factor;
            continue;
        }

        let tau_new = if final_step {
            match stop.kind {
                StopKind::ProperTime(t) => t,
                _ => unreachable!(),
            }
        } else {
            tau + h
        };
        let g_new = event(tau_new, &trial.y);
        if final_step || g_new * start_sign <= 0.0 {
            let (x_end, u_end, tau_end) = if final_step {
                let (x, u) = split(&trial.y);
                (x, u, tau_new)
            } else {
                locate_event(&rhs, &event, &y, &k1, tau, h, g_new, stop.tol)?
            };
            samples.push(GeodesicSample {
                tau: tau_end,
                x: x_end,
                u: u_end,
            });
            return Ok(path(samples));
        }

        let (x, u) = split(&trial.y);
        y = trial.y;
        tau = tau_new;
        k1 = trial.dy;
        samples.push(GeodesicSample { tau, x, u });
        h *= (0.9 * err.max(1e-10).powf(-0.25)).clamp(0.2, 5.0);
        hit_guard = None;
    }
}

/// Bisects the step length in (0, h] until the event function is within `tol`.
#[allow(clippy::too_many_arguments)]
fn locate_event<F, G>(
    rhs: &F,
    event: &G,
    y: &[f64; 8],
    k1: &[f64; 8],
    tau: f64,
    h: f64,
    g_hi: f64,
    tol: f64,
) -> Result<([f64; 4], [f64; 4], f64)>
where
    F: Fn(&[f64; 8]) -> Result<[f64; 8]>,
    G: Fn(f64, &[f64; 8]) -> f64,
{
    let g_lo = event(tau, y);
    let mut lo = 0.0;
    let mut hi = h;
    let mut best = dopri_step(rhs, y, k1, h)?.y;
    let mut best_h = h;
    if g_hi.abs() <= tol {
        let (x, u) = split(&best);
        return Ok((x, u, tau + h));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ym = dopri_step(rhs, y, k1, mid)?.y;
        let gm = event(tau + mid, &ym);
        if gm.abs() <= tol {
            best = ym;
            best_h = mid;
            break;
        }
        if gm * g_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            best = ym;
            best_h = mid;
        }
    }
    let (x, u) = split(&best);
    Ok((x, u, tau + best_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportedVector {
    pub v: FourVector,
    /// (affine parameter along the traversal, components) per stored sample.
    pub history: Option<Vec<(f64, [f64; 4])>>,
}

/// Parallel-transports `v0` along `path` in the given direction.
pub fn parallel_transport(path: &GeodesicPath, v0: &FourVector, direction: Direction) -> Result<TransportedVector> {
    transport_impl(path, v0, direction, false)
}

/// As [`parallel_transport`], additionally recording the components at every sample.
pub fn parallel_transport_traced(
    path: &GeodesicPath,
    v0: &FourVector,
    direction: Direction,
) -> Result<TransportedVector> {
    transport_impl(path, v0, direction, true)
}

fn transport_impl(
    path: &GeodesicPath,
    v0: &FourVector,
    direction: Direction,
    trace: bool,
) -> Result<TransportedVector> {
    let (start, end) = match direction {
        Direction::Forward => (path.start_point(), path.end_point()),
        Direction::Backward => (path.end_point(), path.start_point()),
    };
    if !v0.base.coincides(&start) {
        return Err(Error::BasePointMismatch);
    }
    if !v0.is_finite() {
        return Err(Error::InvalidArgument("non-finite vector".into()));
    }
    let spec = path.spec;
    let rhs = |y: &[f64; 12]| transport_rhs(&spec, y);

    // Traversal order; backward reverses the samples and negates the tangent.
    let n = path.samples.len();
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..n).collect(),
        Direction::Backward => (0..n).rev().collect(),
    };
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };

    let mut v = v0.as_array();
    let mut history = trace.then(|| vec![(0.0, v)]);
    let mut sigma = 0.0;
    let mut h_hint = f64::INFINITY;
    for w in order.windows(2) {
        let (a, b) = (&path.samples[w[0]], &path.samples[w[1]]);
        let span = (b.tau - a.tau).abs();
        let mut y = [0.0; 12];
        y[..4].copy_from_slice(&a.x);
        for i in 0..4 {
            y[4 + i] = sign * a.u[i];
            y[8 + i] = v[i];
        }
        let (y_end, hint) = integrate_span(&rhs, y, span, h_hint, path.tol)?;
        h_hint = hint;
        v = [y_end[8], y_end[9], y_end[10], y_end[11]];
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::StepFailure("transported vector became non-finite".into()));
        }
        sigma += span;
        if let Some(hist) = history.as_mut() {
            hist.push((sigma, v));
        }
    }
    Ok(TransportedVector {
        v: FourVector::new(v, end),
        history,
    })
}

// Adaptive integration of the coupled (x, u, v) system across one stored
// geodesic step of length `span`. Returns the end state and a step hint.
fn integrate_span<F>(rhs: &F, mut y: [f64; 12], span: f64, h_hint: f64, tol: f64) -> Result<([f64; 12], f64)>
where
    F: Fn(&[f64; 12]) -> Result<[f64; 12]>,
{
    let mut k1 = rhs(&y)?;
    let mut h = if h_hint.is_finite() {
        h_hint
    } else {
        initial_step(rhs, &y, &k1, tol)
    };
    let mut done = 0.0;
    let mut hint = h;
    let mut attempts = 0usize;
    while done < span {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::StepFailure("transport did not converge".into()));
        }
        let last = done + h >= span;
        let step_h = if last { span - done } else { h };
        if step_h < 1e-15 * span.max(1.0) && !last {
            return Err(Error::StepFailure("transport step size underflow".into()));
        }
        let trial = match dopri_step(rhs, &y, &k1, step_h) {
            Ok(t) => t,
            Err(Error::HorizonDomain { r, .. }) => {
                if step_h < 1e-12 {
                    return Err(Error::HorizonApproach { r });
                }
                h = 0.25 * step_h;
                continue;
            }
            Err(e) => return Err(e),
        };
        let err = error_ratio(&trial.err, &y, &trial.y, tol);
        if !err.is_finite() || err > 1.0 {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h = step_h * factor;
            continue;
        }
        y = trial.y;
        k1 = trial.dy;
        let grown = step_h * (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        if last {
            // A clipped final step says little about the natural step size.
            hint = if step_h < h { h } else { grown };
            break;
        }
        done += step_h;
        h = grown;
        hint = h;
    }
    Ok((y, hint))
}

/// Transports `v_r` from R back to the common origin along `geo_r`, then
/// forward to L along `geo_l`.
pub fn transport_r_to_l(geo_l: &GeodesicPath, geo_r: &GeodesicPath, v_r: &FourVector) -> Result<TransportedVector> {
    if geo_l.spec != geo_r.spec {
        return Err(Error::InvalidArgument("geodesics live in different metrics".into()));
    }
    let o_l = geo_l.start_point();
    let o_r = geo_r.start_point();
    let separation = o_l.separation(&o_r);
    if separation > 1e-9 {
        return Err(Error::CommonOriginMismatch { separation });
    }
    let at_origin = parallel_transport(geo_r, v_r, Direction::Backward)?;
    let rebased = FourVector::from_vector(at_origin.v.components, o_l);
    parallel_transport(geo_l, &rebased, Direction::Forward)
}
