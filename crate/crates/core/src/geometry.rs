// SPDX-License-Identifier: Apache-2.0

//! Spacetime metrics, Christoffel symbols and metric inner products.
//!
//! Geometric units (G = c = 1) with signature (-,+,+,+). Minkowski space
//! uses Cartesian coordinates (t, x, y, z); Schwarzschild uses the exterior
//! chart (t, r, theta, phi) where theta is the polar angle.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative guard above r = 2M.
pub const DEFAULT_HORIZON_EPS: f64 = 1e-6;

/// Polar angles closer than this to the axis are treated as a chart singularity.
const POLAR_AXIS_GUARD: f64 = 1e-10;

/// Relative tolerance used when comparing base points.
pub const BASE_POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// (t, x, y, z)
    Cartesian,
    /// (t, r, theta, phi)
    Schwarzschild,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacetimePoint {
    pub coords: [f64; 4],
    pub chart: Chart,
}

impl SpacetimePoint {
    pub fn new(coords: [f64; 4], chart: Chart) -> Self {
        Self { coords, chart }
    }

    pub fn cartesian(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self::new([t, x, y, z], Chart::Cartesian)
    }

    pub fn schwarzschild(t: f64, r: f64, theta: f64, phi: f64) -> Self {
        Self::new([t, r, theta, phi], Chart::Schwarzschild)
    }

    /// Equatorial Schwarzschild point (theta = pi/2).
    pub fn equatorial(t: f64, r: f64, phi: f64) -> Self {
        Self::schwarzschild(t, r, std::f64::consts::FRAC_PI_2, phi)
    }

    /// Coordinate distance (max-norm) between two points of the same chart.
    pub fn separation(&self, other: &SpacetimePoint) -> f64 {
        if self.chart != other.chart {
            return f64::INFINITY;
        }
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when both points are the same event within [`BASE_POINT_TOL`].
    pub fn coincides(&self, other: &SpacetimePoint) -> bool {
        let scale = self
            .coords
            .iter()
            .chain(other.coords.iter())
            .fold(1.0_f64, |m, c| m.max(c.abs()));
        self.separation(other) <= BASE_POINT_TOL * scale
    }
}

/// A contravariant vector attached to an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourVector {
    pub components: Vector4<f64>,
    pub base: SpacetimePoint,
}

impl FourVector {
    pub fn new(components: [f64; 4], base: SpacetimePoint) -> Self {
        Self {
            components: Vector4::from(components),
            base,
        }
    }

    pub fn from_vector(components: Vector4<f64>, base: SpacetimePoint) -> Self {
        Self { components, base }
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.components.into()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Minkowski,
    Schwarzschild { mass: f64, horizon_eps: f64 },
}

impl MetricSpec {
    pub fn minkowski() -> Self {
        MetricSpec::Minkowski
    }

    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::schwarzschild_with_guard(mass, DEFAULT_HORIZON_EPS)
    }

    pub fn schwarzschild_with_guard(mass: f64, horizon_eps: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Schwarzschild mass must be positive, got {mass}"
            )));
        }
        if !(horizon_eps.is_finite() && horizon_eps > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon guard must be positive, got {horizon_eps}"
            )));
        }
        Ok(MetricSpec::Schwarzschild { mass, horizon_eps })
    }

    pub fn chart(&self) -> Chart {
        match self {
            MetricSpec::Minkowski => Chart::Cartesian,
            MetricSpec::Schwarzschild { .. } => Chart::Schwarzschild,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            MetricSpec::Minkowski => 0.0,
            MetricSpec::Schwarzschild { mass, .. } => *mass,
        }
    }

    /// Smallest admissible radius, 2M(1 + eps). Zero for Minkowski.
    pub fn horizon_guard(&self) -> f64 {
        match self {
            MetricSpec::Minkowski => 0.0,
            MetricSpec::Schwarzschild { mass, horizon_eps } => 2.0 * mass * (1.0 + horizon_eps),
        }
    }

    /// Checks that `p` lies in the domain of this metric's chart.
    pub fn validate_point(&self, p: &SpacetimePoint) -> Result<()> {
        if p.chart != self.chart() {
            return Err(Error::InvalidChart(format!(
                "{:?} point used with {:?} metric",
                p.chart,
                self.chart()
            )));
        }
        self.validate_coords(&p.coords)
    }

    pub(crate) fn validate_coords(&self, x: &[f64; 4]) -> Result<()> {
        if !x.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidChart("non-finite coordinates".into()));
        }
        if let MetricSpec::Schwarzschild { .. } = self {
            let guard = self.horizon_guard();
            if x[1] <= guard {
                return Err(Error::HorizonDomain { r: x[1], guard });
            }
            if x[2] <= POLAR_AXIS_GUARD || x[2] >= std::f64::consts::PI - POLAR_AXIS_GUARD {
                return Err(Error::InvalidChart(format!(
                    "polar angle {} is on the coordinate axis",
                    x[2]
                )));
            }
        }
        Ok(())
    }

    /// Metric components at `p`.
    pub fn metric_at(&self, p: &SpacetimePoint) -> Result<MetricTensor> {
        self.validate_point(p)?;
        Ok(MetricTensor {
            g: self.metric_components(&p.coords),
            base: *p,
        })
    }

    /// Closed-form metric components; assumes the coordinates are valid.
    pub(crate) fn metric_components(&self, x: &[f64; 4]) -> Matrix4<f64> {
        match self {
            MetricSpec::Minkowski => Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, 1.0, 1.0)),
            MetricSpec::Schwarzschild { mass, .. } => {
                let r = x[1];
                let f = 1.0 - 2.0 * mass / r;
                let s = x[2].sin();
                Matrix4::from_diagonal(&Vector4::new(-f, 1.0 / f, r * r, r * r * s * s))
            }
        }
    }

    /// Christoffel symbols of the second kind at `p`.
    pub fn christoffel_at(&self, p: &SpacetimePoint) -> Result<ChristoffelSymbols> {
        self.validate_point(p)?;
        Ok(ChristoffelSymbols {
            gamma: self.christoffel_components(&p.coords),
            base: *p,
        })
    }

    pub(crate) fn christoffel_components(&self, x: &[f64; 4]) -> [[[f64; 4]; 4]; 4] {
        let mut g = [[[0.0; 4]; 4]; 4];
        if let MetricSpec::Schwarzschild { mass, .. } = *self {
            let r = x[1];
            let (s, c) = x[2].sin_cos();
            let f = 1.0 - 2.0 * mass / r;
            let m_r2 = mass / (r * r);

            g[0][0][1] = m_r2 / f;
            g[0][1][0] = g[0][0][1];

            g[1][0][0] = m_r2 * f;
            g[1][1][1] = -m_r2 / f;
            g[1][2][2] = -r * f;
            g[1][3][3] = -r * f * s * s;

            g[2][1][2] = 1.0 / r;
            g[2][2][1] = g[2][1][2];
            g[2][3][3] = -s * c;

            g[3][1][3] = 1.0 / r;
            g[3][3][1] = g[3][1][3];
            g[3][2][3] = c / s;
            g[3][3][2] = g[3][2][3];
        }
        g
    }

    /// Returns Gamma^mu_{ab} u^a v^b at coordinates `x` without validation.
    pub(crate) fn contract(&self, x: &[f64; 4], u: &[f64; 4], v: &[f64; 4]) -> [f64; 4] {
        match self {
            MetricSpec::Minkowski => [0.0; 4],
            MetricSpec::Schwarzschild { .. } => {
                let gamma = self.christoffel_components(x);
                contract_components(&gamma, u, v)
            }
        }
    }

    /// Killing energy E and axial angular momentum L_z of a tangent `u` at `x`.
    ///
    /// For Minkowski these are u^t and x u^y - y u^x.
    pub fn conserved_quantities(&self, x: &[f64; 4], u: &[f64; 4]) -> (f64, f64) {
        match self {
            MetricSpec::Minkowski => (u[0], x[1] * u[2] - x[2] * u[1]),
            MetricSpec::Schwarzschild { mass, .. } => {
                let r = x[1];
                let s = x[2].sin();
                ((1.0 - 2.0 * mass / r) * u[0], r * r * s * s * u[3])
            }
        }
    }

    /// Time component that makes `(u^t, spatial)` satisfy g(u,u) = `norm`,
    /// future-pointing. `norm` is -1 for timelike and 0 for null tangents.
    pub fn complete_time_component(&self, p: &SpacetimePoint, spatial: [f64; 3], norm: f64) -> Result<FourVector> {
        let g = self.metric_at(p)?;
        let gm = g.matrix();
        let mut spatial_sq = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                spatial_sq += gm[(i + 1, j + 1)] * spatial[i] * spatial[j];
            }
        }
        let gtt = gm[(0, 0)];
        if gtt >= 0.0 {
            return Err(Error::StaticFrameUnavailable);
        }
        let ut_sq = (norm - spatial_sq) / gtt;
        if ut_sq < 0.0 {
            return Err(Error::BadNormalization {
                value: spatial_sq,
                expected: norm,
            });
        }
        Ok(FourVector::new([ut_sq.sqrt(), spatial[0], spatial[1], spatial[2]], *p))
    }
}

pub(crate) fn contract_components(gamma: &[[[f64; 4]; 4]; 4], u: &[f64; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (mu, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for a in 0..4 {
            if u[a] == 0.0 {
                continue;
            }
            for b in 0..4 {
                acc += gamma[mu][a][b] * u[a] * v[b];
            }
        }
        *o = acc;
    }
    out
}

/// Metric tensor g_{mu nu} at a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricTensor {
    g: Matrix4<f64>,
    base: SpacetimePoint,
}

impl MetricTensor {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.g
    }

    pub fn base(&self) -> &SpacetimePoint {
        &self.base
    }

    pub fn component(&self, mu: usize, nu: usize) -> f64 {
        self.g[(mu, nu)]
    }

    pub fn inverse(&self) -> Option<Matrix4<f64>> {
        self.g.try_inverse()
    }

    /// Counts of (negative, positive) eigenvalues.
    pub fn signature(&self) -> (usize, usize) {
        let eig = self.g.symmetric_eigen();
        let neg = eig.eigenvalues.iter().filter(|&&e| e < 0.0).count();
        let pos = eig.eigenvalues.iter().filter(|&&e| e > 0.0).count();
        (neg, pos)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..4).all(|i| (0..4).all(|j| (self.g[(i, j)] - self.g[(j, i)]).abs() <= tol))
    }

    /// g_{mu nu} u^mu v^nu.
    pub fn inner(&self, u: &FourVector, v: &FourVector) -> Result<f64> {
        inner(self, u, v)
    }

    /// Inner product of raw component arrays, skipping base-point checks.
    pub(crate) fn inner_raw(&self, u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
        symmetric_form(&self.g, u, v)
    }
}

/// g_{mu nu} u^mu v^nu. Both vectors must be based at the metric's event.
pub fn inner(g: &MetricTensor, u: &FourVector, v: &FourVector) -> Result<f64> {
    if !g.base.coincides(&u.base) || !g.base.coincides(&v.base) {
        return Err(Error::BasePointMismatch);
    }
    Ok(symmetric_form(&g.g, &u.components, &v.components))
}

// Sums g_ij (u_i v_j + u_j v_i) / 2 over i <= j so that the result is
// bit-for-bit symmetric in (u, v).
fn symmetric_form(g: &Matrix4<f64>, u: &Vector4<f64>, v: &Vector4<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        acc += g[(i, i)] * (u[i] * v[i]);
        for j in (i + 1)..4 {
            let gij = 0.5 * (g[(i, j)] + g[(j, i)]);
            if gij != 0.0 {
                acc += gij * (u[i] * v[j] + u[j] * v[i]);
            }
        }
    }
    acc
}

/// Gamma^mu_{alpha beta} at a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffelSymbols {
    gamma: [[[f64; 4]; 4]; 4],
    base: SpacetimePoint,
}

impl ChristoffelSymbols {
    pub fn get(&self, mu: usize, alpha: usize, beta: usize) -> f64 {
        self.gamma[mu][alpha][beta]
    }

    pub fn base(&self) -> &SpacetimePoint {
        &self.base
    }

    pub fn components(&self) -> &[[[f64; 4]; 4]; 4] {
        &self.gamma
    }

    /// Gamma^mu_{ab} u^a v^b.
    pub fn contract(&self, u: &[f64; 4], v: &[f64; 4]) -> [f64; 4] {
        contract_components(&self.gamma, u, v)
    }

    /// Largest absolute componentwise difference to `other`.
    pub fn max_abs_diff(&self, other: &ChristoffelSymbols) -> f64 {
        let mut m: f64 = 0.0;
        for mu in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    m = m.max((self.gamma[mu][a][b] - other.gamma[mu][a][b]).abs());
                }
            }
        }
        m
    }
}

/// Christoffel symbols rebuilt from centred finite differences of
/// [`MetricSpec::metric_at`], for validating the closed forms.
///
/// `h` is the coordinate step; every stencil point must stay in the chart.
pub fn christoffel_finite_difference(spec: &MetricSpec, p: &SpacetimePoint, h: f64) -> Result<ChristoffelSymbols> {
    let g0 = spec.metric_at(p)?;
    let ginv = g0
        .inverse()
        .ok_or_else(|| Error::InvalidArgument("singular metric".into()))?;

    // dg[k] = d g_{ij} / d x^k
    let mut dg = [Matrix4::<f64>::zeros(); 4];
    for (k, dgk) in dg.iter_mut().enumerate() {
        let mut plus = *p;
        let mut minus = *p;
        plus.coords[k] += h;
        minus.coords[k] -= h;
        let gp = spec.metric_at(&plus)?;
        let gm = spec.metric_at(&minus)?;
        *dgk = (gp.matrix() - gm.matrix()) / (2.0 * h);
    }

    let mut gamma = [[[0.0; 4]; 4]; 4];
    for mu in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                let mut acc = 0.0;
                for nu in 0..4 {
                    acc += ginv[(mu, nu)] * (dg[a][(nu, b)] + dg[b][(nu, a)] - dg[nu][(a, b)]);
                }
                gamma[mu][a][b] = 0.5 * acc;
            }
        }
    }
    Ok(ChristoffelSymbols { gamma, base: *p })
}
