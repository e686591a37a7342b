// SPDX-License-Identifier: Apache-2.0

//! Weighted singlet correlations, the curved-spacetime Bell inequality and
//! the search for measurement settings that violate it.
//!
//! With `d = w_b^2 b_RL - w_c^2 c_RL` the inequality reads
//! `|a . d| <= b_RL . d`, so a violating `a` exists whenever `b_RL` is not
//! parallel to `d`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::{dot3, norm3, Direction3, ProjectionResult};

/// Noise floor for the violation flag on exact evaluations.
pub const TOL_INEQ: f64 = 1e-12;

/// The arms are exchanged only when w_c exceeds w_b by more than this.
pub const SWAP_TOL: f64 = 1e-12;

/// Below this norm the difference vector `d` has no direction.
pub const D_DEGENERATE: f64 = 1e-12;

/// Measurement settings: `a` in the left frame, `b` and `c` in the right frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SettingsTriple {
    pub a: Direction3,
    pub b: Direction3,
    pub c: Direction3,
}

impl SettingsTriple {
    pub fn new(a: Direction3, b: Direction3, c: Direction3) -> Self {
        Self { a, b, c }
    }

    /// Coplanar settings given as angles in degrees.
    pub fn coplanar_deg(a: f64, b: f64, c: f64) -> Self {
        Self::new(
            Direction3::in_plane_deg(a),
            Direction3::in_plane_deg(b),
            Direction3::in_plane_deg(c),
        )
    }
}

/// P(a, b) = -(a . b_RL) w_b^2, exactly zero for a degenerate projection.
pub fn quantum_correlation(a: &Direction3, proj_b: &ProjectionResult) -> f64 {
    if proj_b.degenerate {
        return 0.0;
    }
    -a.dot(&proj_b.direction) * proj_b.w2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub violated: bool,
    pub p_ab: f64,
    pub p_ac: f64,
    pub p_bc: f64,
    pub w_b: f64,
    pub w_c: f64,
    pub b_rl: Direction3,
    pub c_rl: Direction3,
    /// The b and c arms were exchanged so that w_b >= w_c.
    pub swapped: bool,
    /// At least one arm has a degenerate projection (w ~ 0).
    pub degenerate_arm: bool,
}

fn ordered<'a>(
    proj_b: &'a ProjectionResult,
    proj_c: &'a ProjectionResult,
) -> (&'a ProjectionResult, &'a ProjectionResult, bool) {
    if proj_c.w - proj_b.w > SWAP_TOL {
        (proj_c, proj_b, true)
    } else {
        (proj_b, proj_c, false)
    }
}

/// Evaluates `|P(a,b) - P(a,c)| <= w_b^2 + P(b_RL, c)` with the quantum
/// correlation law. The arms are ordered so that `w_b >= w_c`.
pub fn generalized_bell_check(
    a: &Direction3,
    proj_b: &ProjectionResult,
    proj_c: &ProjectionResult,
) -> InequalityReport {
    let (pb, pc, swapped) = ordered(proj_b, proj_c);
    let p_ab = quantum_correlation(a, pb);
    let p_ac = quantum_correlation(a, pc);
    let p_bc = quantum_correlation(&pb.direction, pc);
    let w2_b = if pb.degenerate { 0.0 } else { pb.w2() };
    let lhs = (p_ab - p_ac).abs();
    let rhs = w2_b + p_bc;
    let margin = lhs - rhs;
    InequalityReport {
        lhs,
        rhs,
        margin,
        violated: margin > TOL_INEQ,
        p_ab,
        p_ac,
        p_bc,
        w_b: pb.w,
        w_c: pc.w,
        b_rl: pb.direction,
        c_rl: pc.direction,
        swapped,
        degenerate_arm: pb.degenerate || pc.degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationAngles {
    /// w_b^2 b_RL - w_c^2 c_RL (after ordering the arms).
    pub d: [f64; 3],
    pub d_norm: f64,
    pub cos_phi: f64,
    pub cos_theta: f64,
    /// |cos phi| <= cos theta; vacuously true when d vanishes.
    pub condition_holds: bool,
    pub swapped: bool,
}

fn difference_vector(pb: &ProjectionResult, pc: &ProjectionResult) -> [f64; 3] {
    let wb2 = if pb.degenerate { 0.0 } else { pb.w2() };
    let wc2 = if pc.degenerate { 0.0 } else { pc.w2() };
    let b = pb.direction.as_array();
    let c = pc.direction.as_array();
    [
        wb2 * b[0] - wc2 * c[0],
        wb2 * b[1] - wc2 * c[1],
        wb2 * b[2] - wc2 * c[2],
    ]
}

/// Angle form of the inequality: `|cos phi| <= cos theta` where phi is the
/// angle between `a` and `d`, theta the angle between `b_RL` and `d`.
pub fn violation_condition(a: &Direction3, proj_b: &ProjectionResult, proj_c: &ProjectionResult) -> ViolationAngles {
    let (pb, pc, swapped) = ordered(proj_b, proj_c);
    let d = difference_vector(pb, pc);
    let d_norm = norm3(&d);
    if d_norm <= D_DEGENERATE {
        return ViolationAngles {
            d,
            d_norm,
            cos_phi: 0.0,
            cos_theta: 0.0,
            condition_holds: true,
            swapped,
        };
    }
    let cos_phi = (a.dot_raw(&d) / d_norm).clamp(-1.0, 1.0);
    let cos_theta = (pb.direction.dot_raw(&d) / d_norm).clamp(-1.0, 1.0);
    ViolationAngles {
        d,
        d_norm,
        cos_phi,
        cos_theta,
        condition_holds: cos_phi.abs() <= cos_theta + TOL_INEQ,
        swapped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    /// a* = d / |d|, which attains |cos phi| = 1.
    Analytic,
    /// n x n sphere grid followed by local descent.
    Grid(usize),
}

/// The left setting `a*` maximizing the inequality margin, and its report.
pub fn find_max_violation(
    proj_b: &ProjectionResult,
    proj_c: &ProjectionResult,
    search: Search,
) -> Result<(Direction3, InequalityReport)> {
    let (pb, pc, _) = ordered(proj_b, proj_c);
    let d = difference_vector(pb, pc);
    let d_norm = norm3(&d);
    if d_norm <= D_DEGENERATE {
        return Err(Error::DegenerateD { norm: d_norm });
    }
    let a = match search {
        Search::Analytic => Direction3::new(d)?,
        Search::Grid(n) => {
            if n < 2 {
                return Err(Error::InvalidArgument("grid search needs n >= 2".into()));
            }
            let margin = |a: &Direction3| generalized_bell_check(a, proj_b, proj_c).margin;
            let start = grid_argmax(n, &margin);
            descend(start, &margin)
        }
    };
    Ok((a, generalized_bell_check(&a, proj_b, proj_c)))
}

// Larger margin wins; equal margins go to the lexicographically smaller direction.
fn better(a: &(f64, Direction3), b: &(f64, Direction3)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => {
            let (x, y) = (a.1.as_array(), b.1.as_array());
            x.iter()
                .zip(y.iter())
                .find_map(|(p, q)| p.partial_cmp(q).filter(|o| *o != Ordering::Equal))
                == Some(Ordering::Less)
        }
    }
}

fn grid_argmax<F>(n: usize, margin: &F) -> Direction3
where
    F: Fn(&Direction3) -> f64 + Sync,
{
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let polar = (i as f64 + 0.5) * std::f64::consts::PI / n as f64;
            let mut row_best: Option<(f64, Direction3)> = None;
            for j in 0..n {
                let az = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                let dir = Direction3::spherical(polar, az);
                let cand = (margin(&dir), dir);
                if row_best.as_ref().map_or(true, |b| better(&cand, b)) {
                    row_best = Some(cand);
                }
            }
            row_best.expect("n >= 2")
        })
        .reduce_with(|x, y| if better(&y, &x) { y } else { x })
        .expect("n >= 2");
    best.1
}

fn tangent_basis(a: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if a[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let k = dot3(&helper, a);
    let t1 = [helper[0] - k * a[0], helper[1] - k * a[1], helper[2] - k * a[2]];
    let n1 = norm3(&t1);
    let t1 = [t1[0] / n1, t1[1] / n1, t1[2] / n1];
    let t2 = [
        a[1] * t1[2] - a[2] * t1[1],
        a[2] * t1[0] - a[0] * t1[2],
        a[0] * t1[1] - a[1] * t1[0],
    ];
    (t1, t2)
}

// Coordinate descent in the tangent plane of the current best direction,
// halving the angular step until it drops below 1e-9 rad.
fn descend<F>(start: Direction3, margin: &F) -> Direction3
where
    F: Fn(&Direction3) -> f64,
{
    let mut best = start;
    let mut best_m = margin(&best);
    let mut step = 0.5 * std::f64::consts::PI / 8.0;
    let mut iterations = 0;
    while step > 1e-9 && iterations < 100_000 {
        iterations += 1;
        let a = best.as_array();
        let (t1, t2) = tangent_basis(&a);
        let (s, c) = step.sin_cos();
        let mut moved = false;
        for t in [t1, t2] {
            for sign in [1.0, -1.0] {
                let cand = [
                    c * a[0] + sign * s * t[0],
                    c * a[1] + sign * s * t[1],
                    c * a[2] + sign * s * t[2],
                ];
                let Ok(cand) = Direction3::new(cand) else { continue };
                let m = margin(&cand);
                if m > best_m {
                    best = cand;
                    best_m = m;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    best
}
