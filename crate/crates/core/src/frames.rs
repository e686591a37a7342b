// SPDX-License-Identifier: Apache-2.0

//! Orthonormal tetrads at detection events and the normalized projection
//! of transported measurement directions onto them.

use std::fmt;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FourVector, MetricSpec, MetricTensor, SpacetimePoint};

/// Projections with spatial weight below this have no usable direction.
pub const DEGENERATE_W: f64 = 1e-9;

const GS_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    /// Observer at rest in the coordinate chart (along the time Killing vector).
    #[default]
    Static,
    /// Observer moving with the particle.
    Comoving,
}

/// A unit 3-vector expressed in the spatial triad of a [`LocalFrame`].
#[derive(Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Direction3([f64; 3]);

impl fmt::Debug for Direction3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Direction3({:?})", self.0)
    }
}

impl Direction3 {
    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(Self([v[0] / n, v[1] / n, v[2] / n]))
    }

    pub const fn x() -> Self {
        Self([1.0, 0.0, 0.0])
    }

    /// Direction in the plane of the first two spatial legs, angle in radians
    /// measured from the first leg.
    pub fn in_plane(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self([c, s, 0.0])
    }

    pub fn in_plane_deg(angle_deg: f64) -> Self {
        Self::in_plane(angle_deg.to_radians())
    }

    /// Spherical angles in radians: polar from leg 3, azimuth from leg 1.
    pub fn spherical(polar: f64, azimuth: f64) -> Self {
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Self([sp * ca, sp * sa, cp])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &Direction3) -> f64 {
        dot3(&self.0, &other.0)
    }

    pub fn dot_raw(&self, v: &[f64; 3]) -> f64 {
        dot3(&self.0, v)
    }

    pub fn neg(&self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }

    /// Angle to `other` in radians.
    pub fn angle_to(&self, other: &Direction3) -> f64 {
        self.dot(other).clamp(-1.0, 1.0).acos()
    }
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Orthonormal tetrad {e0, e1, e2, e3} at an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    base: SpacetimePoint,
    legs: [Vector4<f64>; 4],
    metric: MetricTensor,
}

impl LocalFrame {
    pub fn base(&self) -> &SpacetimePoint {
        &self.base
    }

    pub fn leg(&self, a: usize) -> FourVector {
        FourVector::from_vector(self.legs[a], self.base)
    }

    pub fn metric(&self) -> &MetricTensor {
        &self.metric
    }

    /// Largest deviation of the Gram matrix g(e_a, e_b) from diag(-1, 1, 1, 1).
    pub fn orthonormality_error(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let eta = match (a, b) {
                    (0, 0) => -1.0,
                    _ if a == b => 1.0,
                    _ => 0.0,
                };
                m = m.max((self.metric.inner_raw(&self.legs[a], &self.legs[b]) - eta).abs());
            }
        }
        m
    }

    /// Tetrad components v^a = eta^{ab} g(e_b, v).
    pub fn tetrad_components(&self, v: &FourVector) -> Result<[f64; 4]> {
        if !v.base.coincides(&self.base) {
            return Err(Error::BasePointMismatch);
        }
        Ok(self.components_raw(&v.components))
    }

    fn components_raw(&self, v: &Vector4<f64>) -> [f64; 4] {
        [
            -self.metric.inner_raw(&self.legs[0], v),
            self.metric.inner_raw(&self.legs[1], v),
            self.metric.inner_raw(&self.legs[2], v),
            self.metric.inner_raw(&self.legs[3], v),
        ]
    }
}

/// Frame of the observer at rest in the chart, e0 along the time Killing vector.
pub fn build_static_frame(spec: &MetricSpec, p: &SpacetimePoint) -> Result<LocalFrame> {
    let metric = spec.metric_at(p).map_err(|e| match e {
        Error::HorizonDomain { .. } => Error::StaticFrameUnavailable,
        other => other,
    })?;
    if let MetricSpec::Minkowski = spec {
        return Ok(LocalFrame {
            base: *p,
            legs: [
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                Vector4::new(0.0, 1.0, 0.0, 0.0),
                Vector4::new(0.0, 0.0, 1.0, 0.0),
                Vector4::new(0.0, 0.0, 0.0, 1.0),
            ],
            metric,
        });
    }
    let gtt = metric.component(0, 0);
    if gtt >= 0.0 {
        return Err(Error::StaticFrameUnavailable);
    }
    let e0 = Vector4::new(1.0 / (-gtt).sqrt(), 0.0, 0.0, 0.0);
    gram_schmidt(metric, *p, e0)
}

/// Frame carried by an observer with unit timelike four-velocity `u`.
pub fn build_comoving_frame(spec: &MetricSpec, p: &SpacetimePoint, u: &FourVector) -> Result<LocalFrame> {
    let metric = spec.metric_at(p)?;
    if !u.base.coincides(p) {
        return Err(Error::BasePointMismatch);
    }
    let norm = metric.inner_raw(&u.components, &u.components);
    let scale = u.components.iter().fold(1.0_f64, |m, c| m.max(c * c));
    if (norm + 1.0).abs() > 1e-9 * scale || u.components[0] <= 0.0 {
        return Err(Error::BadNormalization {
            value: norm,
            expected: -1.0,
        });
    }
    gram_schmidt(metric, *p, u.components)
}

// Orthonormalizes the spatial coordinate basis against e0, in leg order
// (x, y, z) or (r, theta, phi). Two passes of modified Gram-Schmidt.
fn gram_schmidt(metric: MetricTensor, base: SpacetimePoint, e0: Vector4<f64>) -> Result<LocalFrame> {
    let mut legs = [e0, Vector4::zeros(), Vector4::zeros(), Vector4::zeros()];
    let signs = [-1.0, 1.0, 1.0, 1.0];
    for k in 1..4 {
        let mut v = Vector4::zeros();
        v[k] = 1.0;
        let initial = metric.inner_raw(&v, &v).abs().sqrt();
        for _pass in 0..2 {
            for j in 0..k {
                let c = metric.inner_raw(&legs[j], &v) * signs[j];
                v -= legs[j] * c;
            }
        }
        let n2 = metric.inner_raw(&v, &v);
        let pivot = if n2 > 0.0 { n2.sqrt() / initial } else { 0.0 };
        if pivot < GS_PIVOT {
            return Err(Error::DegenerateBasis { pivot });
        }
        legs[k] = v / n2.sqrt();
    }
    Ok(LocalFrame { base, legs, metric })
}

/// Spacelike unit vector d^1 e1 + d^2 e2 + d^3 e3.
pub fn embed_direction(frame: &LocalFrame, d: &Direction3) -> FourVector {
    let d = d.as_array();
    let v = frame.legs[1] * d[0] + frame.legs[2] * d[1] + frame.legs[3] * d[2];
    FourVector::from_vector(v, frame.base)
}

/// Weight and unit direction of a transported vector as seen in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionResult {
    /// Euclidean norm of the spatial part of the normalized tetrad 4-tuple.
    pub w: f64,
    /// Unit spatial direction; arbitrary when `degenerate`.
    pub direction: Direction3,
    /// Time component of the normalized tetrad 4-tuple.
    pub time_component: f64,
    pub degenerate: bool,
}

impl ProjectionResult {
    /// A projection given directly by its weight and direction.
    pub fn synthetic(w: f64, direction: Direction3) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidArgument(format!("w must lie in [0, 1], got {w}")));
        }
        Ok(Self {
            w,
            direction,
            time_component: (1.0 - w * w).max(0.0).sqrt(),
            degenerate: w < DEGENERATE_W,
        })
    }

    pub fn w2(&self) -> f64 {
        self.w * self.w
    }
}

/// Normalizes the tetrad components of `v` to unit Euclidean length and
/// splits them into a weight `w` (spatial magnitude) and a unit direction.
pub fn project_to_frame(frame: &LocalFrame, v: &FourVector) -> Result<ProjectionResult> {
    let c = frame.tetrad_components(v)?;
    project_components(c)
}

/// As [`project_to_frame`] for tetrad components that are already known.
pub fn project_components(c: [f64; 4]) -> Result<ProjectionResult> {
    if !c.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite tetrad components".into()));
    }
    let scale = c.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroVector);
    }
    let s = [c[0] / scale, c[1] / scale, c[2] / scale, c[3] / scale];
    let total = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + s[3] * s[3]).sqrt();
    let spatial = [s[1] / total, s[2] / total, s[3] / total];
    let time_component = s[0] / total;
    let w = norm3(&spatial).min(1.0);
    let degenerate = w < DEGENERATE_W;
    let direction = if norm3(&spatial) > 0.0 {
        Direction3::new(spatial)?
    } else {
        Direction3::x()
    };
    Ok(ProjectionResult {
        w,
        direction,
        time_component,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minkowski_static_frame_is_coordinate_basis() {
        let p = SpacetimePoint::cartesian(1.0, 2.0, 3.0, 4.0);
        let f = build_static_frame(&MetricSpec::Minkowski, &p).unwrap();
        for a in 0..4 {
            let mut e = [0.0; 4];
            e[a] = 1.0;
            assert_eq!(f.leg(a).as_array(), e);
        }
        assert_eq!(f.orthonormality_error(), 0.0);
    }

    #[test]
    fn schwarzschild_static_frame_at_r8() {
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let p = SpacetimePoint::equatorial(0.0, 8.0, 0.0);
        let f = build_static_frame(&spec, &p).unwrap();
        assert_relative_eq!(f.leg(0).components[0], 1.1547005383792517, epsilon = 1e-15);
        assert_relative_eq!(f.leg(1).components[1], 0.8660254037844386, epsilon = 1e-15);
        assert_relative_eq!(f.leg(2).components[2], 1.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(f.leg(3).components[3], 1.0 / 8.0, epsilon = 1e-15);
        assert!(f.orthonormality_error() < 1e-12);
    }

    #[test]
    fn static_frame_unavailable_inside_guard() {
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let p = SpacetimePoint::equatorial(0.0, 1.5, 0.0);
        assert_eq!(
            build_static_frame(&spec, &p).unwrap_err(),
            Error::StaticFrameUnavailable
        );
    }

    #[test]
    fn boosted_comoving_frame() {
        let p = SpacetimePoint::cartesian(0.0, 0.0, 0.0, 0.0);
        let u = FourVector::new([1.0_f64.cosh(), 1.0_f64.sinh(), 0.0, 0.0], p);
        let f = build_comoving_frame(&MetricSpec::Minkowski, &p, &u).unwrap();
        let e1 = f.leg(1).as_array();
        assert_relative_eq!(e1[0], 1.1752011936438014, epsilon = 1e-12);
        assert_relative_eq!(e1[1], 1.5430806348152437, epsilon = 1e-12);
        assert!(f.orthonormality_error() < 1e-9);
    }

    #[test]
    fn comoving_frame_rejects_non_unit_velocity() {
        let p = SpacetimePoint::cartesian(0.0, 0.0, 0.0, 0.0);
        let u = FourVector::new([1.0, 0.5, 0.0, 0.0], p);
        assert!(matches!(
            build_comoving_frame(&MetricSpec::Minkowski, &p, &u),
            Err(Error::BadNormalization { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let r = project_components([0.0, 0.0, 2.0, 0.0]).unwrap();
        assert_eq!(r.w, 1.0);
        assert_eq!(r.direction.as_array(), [0.0, 1.0, 0.0]);

        let r = project_components([1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(r.w, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(r.direction.as_array(), [1.0, 0.0, 0.0]);

        let r = project_components([3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.w, 0.0);
        assert!(r.degenerate);

        assert_eq!(project_components([0.0; 4]).unwrap_err(), Error::ZeroVector);
    }

    #[test]
    fn embed_then_project_round_trip() {
        let spec = MetricSpec::schwarzschild(1.0).unwrap();
        let p = SpacetimePoint::schwarzschild(0.0, 7.0, 1.2, 0.4);
        let u = spec.complete_time_component(&p, [0.1, 0.02, -0.03], -1.0).unwrap();
        let f = build_comoving_frame(&spec, &p, &u).unwrap();
        let d = Direction3::new([0.3, -0.4, 0.5]).unwrap();
        let v = embed_direction(&f, &d);
        let g = f.metric();
        assert!((g.inner(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert!(g.inner(&v, &f.leg(0)).unwrap().abs() < 1e-10);
        let proj = project_to_frame(&f, &v).unwrap();
        assert!((proj.w - 1.0).abs() < 1e-10);
        for (a, b) in proj.direction.as_array().iter().zip(d.as_array()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn synthetic_projection_validates_range() {
        assert!(ProjectionResult::synthetic(1.2, Direction3::x()).is_err());
        let p = ProjectionResult::synthetic(0.8, Direction3::x()).unwrap();
        assert_relative_eq!(p.w2(), 0.64, epsilon = 1e-15);
        assert!(ProjectionResult::synthetic(0.0, Direction3::x()).unwrap().degenerate);
    }
}
