// SPDX-License-Identifier: Apache-2.0

//! Local hidden-variable models and their Monte Carlo audit against the
//! weighted Bell inequality.
//!
//! Randomness comes from ChaCha8 keyed by the run seed. Every estimate is
//! split into fixed-size chunks, chunk `k` of stream `s` draws from ChaCha
//! stream `(s << 32) | k`, and chunk sums are reduced in chunk order. The
//! result is therefore bit-identical for any number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{SettingsTriple, SWAP_TOL};
use crate::error::{Error, Result};
use crate::frames::{Direction3, ProjectionResult};

/// Smallest accepted sample count.
pub const MIN_SAMPLES: usize = 100;

/// Statistical acceptance threshold in combined standard errors.
pub const SIGMA_THRESHOLD: f64 = 4.0;

const CHUNK: usize = 1 << 16;

/// A point on the unit sphere shared by both wings of the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenVariable([f64; 3]);

impl HiddenVariable {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        Direction3::new(v).map(|d| Self(d.as_array()))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

/// Outcome assignment of a local hidden-variable theory.
pub trait LhvModel: Sync {
    /// Draws lambda from the model's density.
    fn sample(&self, rng: &mut ChaCha8Rng) -> HiddenVariable;

    /// Left-wing outcome, exactly +1 or -1.
    fn respond_a(&self, a: &Direction3, lambda: &HiddenVariable) -> f64;

    /// Right-wing outcome, exactly +w^2 or -w^2 for the transported setting.
    fn respond_b(&self, proj: &ProjectionResult, lambda: &HiddenVariable) -> f64;

    /// Salt mixed into the run seed.
    fn seed(&self) -> u64 {
        0
    }
}

/// lambda uniform on the sphere, A = sign(a . lambda), B = -w^2 sign(b_RL . lambda).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignModel {
    seed: u64,
}

pub fn make_sign_model(seed: u64) -> SignModel {
    SignModel { seed }
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl LhvModel for SignModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> HiddenVariable {
        HiddenVariable(UnitSphere.sample(rng))
    }

    fn respond_a(&self, a: &Direction3, lambda: &HiddenVariable) -> f64 {
        sign(a.dot_raw(&lambda.0))
    }

    fn respond_b(&self, proj: &ProjectionResult, lambda: &HiddenVariable) -> f64 {
        if proj.degenerate {
            return 0.0;
        }
        -proj.w2() * sign(proj.direction.dot_raw(&lambda.0))
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

/// Closed-form sign-model correlation -w^2 (1 - 2 theta / pi).
pub fn sign_model_correlation(theta: f64, w: f64) -> f64 {
    -w * w * (1.0 - 2.0 * theta / std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for chunk `chunk` of sub-stream `stream`.
pub fn stream_rng(model_seed: u64, seed: u64, stream: u32, chunk: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed) ^ model_seed);
    rng.set_stream(((stream as u64) << 32) | chunk as u64);
    rng
}

#[derive(Clone, Copy)]
struct Moments<const K: usize> {
    sum: [f64; K],
    sumsq: [f64; K],
}

impl<const K: usize> Moments<K> {
    fn zero() -> Self {
        Self {
            sum: [0.0; K],
            sumsq: [0.0; K],
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        for k in 0..K {
            self.sum[k] += other.sum[k];
            self.sumsq[k] += other.sumsq[k];
        }
        self
    }

    fn estimates(&self, n: usize, seed: u64) -> [McEstimate; K] {
        let nf = n as f64;
        std::array::from_fn(|k| {
            let mean = self.sum[k] / nf;
            let var = ((self.sumsq[k] - nf * mean * mean) / (nf - 1.0)).max(0.0);
            McEstimate {
                mean,
                stderr: (var / nf).sqrt(),
                n,
                seed,
            }
        })
    }
}

// Sample means of K per-lambda observables over n draws of one sub-stream.
fn sample_moments<M, F, const K: usize>(model: &M, n: usize, seed: u64, stream: u32, f: F) -> Moments<K>
where
    M: LhvModel + ?Sized,
    F: Fn(&HiddenVariable) -> [f64; K] + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Moments<K>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(model.seed(), seed, stream, c as u32);
            let len = CHUNK.min(n - c * CHUNK);
            let mut m = Moments::zero();
            for _ in 0..len {
                let lambda = model.sample(&mut rng);
                let vals = f(&lambda);
                for (k, v) in vals.iter().enumerate() {
                    m.sum[k] += v;
                    m.sumsq[k] += v * v;
                }
            }
            m
        })
        .collect();
    partial.iter().fold(Moments::zero(), |acc, m| acc.merge(m))
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { n, min: MIN_SAMPLES });
    }
    if n.div_ceil(CHUNK) > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("sample count {n} is too large")));
    }
    Ok(())
}

/// Monte Carlo estimate of the integral of rho(lambda) A(a, lambda) B(b_RL, lambda).
pub fn correlation_mc<M: LhvModel + ?Sized>(
    model: &M,
    a: &Direction3,
    proj_b: &ProjectionResult,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_samples(n)?;
    let m = sample_moments(model, n, seed, 0, |l| {
        [model.respond_a(a, l) * model.respond_b(proj_b, l)]
    });
    Ok(m.estimates(n, seed)[0])
}

/// True iff B(a_RL, lambda) = -w_a^2 A(a_RL, lambda) for every one of `n` sampled lambdas.
pub fn verify_anticorrelation<M: LhvModel + ?Sized>(model: &M, proj_a: &ProjectionResult, n: usize, seed: u64) -> bool {
    let chunks = n.div_ceil(CHUNK);
    let w2 = if proj_a.degenerate { 0.0 } else { proj_a.w2() };
    (0..chunks).into_par_iter().all(|c| {
        let mut rng = stream_rng(model.seed(), seed, 0, c as u32);
        let len = CHUNK.min(n - c * CHUNK);
        (0..len).all(|_| {
            let l = model.sample(&mut rng);
            model.respond_b(proj_a, &l) == -w2 * model.respond_a(&proj_a.direction, &l)
        })
    })
}

/// One audited configuration: settings plus the projections of b and c at L.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditCase {
    pub settings: SettingsTriple,
    pub proj_b: ProjectionResult,
    pub proj_c: ProjectionResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditCaseResult {
    pub p_ab: McEstimate,
    pub p_ac: McEstimate,
    pub p_bc: McEstimate,
    pub w_b: f64,
    pub w_c: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// sqrt of the summed squared standard errors of the three estimates.
    pub combined_stderr: f64,
    pub swapped: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub n: usize,
    pub seed: u64,
    pub cases: Vec<AuditCaseResult>,
    pub violations: usize,
    pub passed: bool,
}

/// Estimates P(a,b), P(a,c) and P(b_RL,c) for every case from one shared
/// stream of lambdas per case and checks the inequality at 4 sigma.
pub fn lhv_inequality_audit<M: LhvModel + ?Sized>(
    model: &M,
    cases: &[AuditCase],
    n: usize,
    seed: u64,
) -> Result<AuditReport> {
    check_samples(n)?;
    if cases.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many audit cases".into()));
    }
    let results: Vec<AuditCaseResult> = cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let (pb, pc, swapped) = if case.proj_c.w - case.proj_b.w > SWAP_TOL {
                (&case.proj_c, &case.proj_b, true)
            } else {
                (&case.proj_b, &case.proj_c, false)
            };
            let a = case.settings.a;
            let m = sample_moments(model, n, seed, i as u32 + 1, |l| {
                let aa = model.respond_a(&a, l);
                [
                    aa * model.respond_b(pb, l),
                    aa * model.respond_b(pc, l),
                    model.respond_a(&pb.direction, l) * model.respond_b(pc, l),
                ]
            });
            let [p_ab, p_ac, p_bc] = m.estimates(n, seed);
            let w2_b = if pb.degenerate { 0.0 } else { pb.w2() };
            let lhs = (p_ab.mean - p_ac.mean).abs();
            let rhs = w2_b + p_bc.mean;
            let combined = (p_ab.stderr.powi(2) + p_ac.stderr.powi(2) + p_bc.stderr.powi(2)).sqrt();
            AuditCaseResult {
                p_ab,
                p_ac,
                p_bc,
                w_b: pb.w,
                w_c: pc.w,
                lhs,
                rhs,
                margin: lhs - rhs,
                combined_stderr: combined,
                swapped,
                passed: lhs <= rhs + SIGMA_THRESHOLD * combined,
            }
        })
        .collect();
    let violations = results.iter().filter(|r| !r.passed).count();
    Ok(AuditReport {
        n,
        seed,
        cases: results,
        violations,
        passed: violations == 0,
    })
}
