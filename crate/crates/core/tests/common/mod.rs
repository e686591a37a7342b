// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use relbell::scenario::Kinematics;
use relbell::{
    build_static_frame, Direction3, FrameChoice, GeodesicKind, MetricSpec, ScenarioGeometry, SpacetimePoint,
    StopCondition,
};

pub fn random_direction(rng: &mut ChaCha8Rng) -> Direction3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Direction3::new(v).unwrap()
}

/// Four-velocity with speed `v` along `n` relative to the static observer at `p`.
pub fn boosted(spec: &MetricSpec, p: &SpacetimePoint, v: f64, n: &Direction3) -> [f64; 4] {
    let f = build_static_frame(spec, p).unwrap();
    let gamma = 1.0 / (1.0 - v * v).sqrt();
    let n = n.as_array();
    let mut u = f.leg(0).components;
    for (i, ni) in n.iter().enumerate() {
        u += f.leg(i + 1).components * (v * ni);
    }
    (u * gamma).into()
}

/// Random short timelike scenario in Schwarzschild with M = 1.
pub fn random_kinematics(rng: &mut ChaCha8Rng) -> Kinematics {
    let spec = MetricSpec::schwarzschild(1.0).unwrap();
    let r0 = rng.random_range(6.0..40.0);
    let theta = rng.random_range(0.5..2.6);
    let phi = rng.random_range(-3.0..3.0);
    let o = SpacetimePoint::schwarzschild(0.0, r0, theta, phi);
    let (d1, d2) = (random_direction(rng), random_direction(rng));
    let (v1, v2) = (rng.random_range(0.0..0.6), rng.random_range(0.05..0.6));
    Kinematics {
        origin: o.coords,
        u1: boosted(&spec, &o, v1, &d1),
        u2: boosted(&spec, &o, v2, &d2),
        geodesic_kind: GeodesicKind::Timelike,
        stop1: StopCondition::proper_time(rng.random_range(0.5..5.0)),
        stop2: StopCondition::proper_time(rng.random_range(0.5..5.0)),
    }
}

pub fn random_geometry(rng: &mut ChaCha8Rng, tol: f64) -> ScenarioGeometry {
    let k = random_kinematics(rng);
    let frame = if rng.random_bool(0.5) {
        FrameChoice::Static
    } else {
        FrameChoice::Comoving
    };
    ScenarioGeometry::prepare(&MetricSpec::schwarzschild(1.0).unwrap(), &k, frame, tol).unwrap()
}
