// SPDX-License-Identifier: Apache-2.0

//! Dormand-Prince 5(4) stepping for autonomous systems of fixed size.

use crate::error::Result;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

pub(crate) struct Step<const N: usize> {
    pub y: [f64; N],
    pub err: [f64; N],
    /// Derivative at the new point (first-same-as-last).
    pub dy: [f64; N],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// One Dormand-Prince step of size `h` from `y` with `k1 = f(y)`.
pub(crate) fn dopri_step<const N: usize, F>(f: &F, y: &[f64; N], k1: &[f64; N], h: f64) -> Result<Step<N>>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(&axpy(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(&y_new)?;
    let mut err = [0.0; N];
    for (i, e) in err.iter_mut().enumerate() {
        *e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(Step { y: y_new, err, dy: k7 })
}

/// Max-norm of the error scaled by `tol * (1 + max(|y_old|, |y_new|))`.
pub(crate) fn error_ratio<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], tol: f64) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..N {
        let sc = tol * (1.0 + y0[i].abs().max(y1[i].abs()));
        m = m.max(err[i].abs() / sc);
    }
    m
}

/// Error-per-unit-step ratio: each component may err by `h * tol * (1 + |y|)`
/// plus `noise[i]`, the roundoff floor of the error estimate itself.
pub(crate) fn error_ratio_per_unit_step<const N: usize>(
    err: &[f64; N],
    y0: &[f64; N],
    y1: &[f64; N],
    tol: f64,
    h: f64,
    noise: &[f64; N],
) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..N {
        let sc = h * tol * (1.0 + y0[i].abs().max(y1[i].abs())) + noise[i];
        m = m.max(err[i].abs() / sc);
    }
    m
}

/// Initial step heuristic after Hairer, Norsett and Wanner.
pub(crate) fn initial_step<const N: usize, F>(f: &F, y: &[f64; N], f0: &[f64; N], tol: f64) -> f64
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let rms = |v: &[f64; N]| -> f64 {
        let s: f64 = (0..N)
            .map(|i| {
                let sc = tol * (1.0 + y[i].abs());
                (v[i] / sc).powi(2)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1 = axpy(y, h0, &[(1.0, f0)]);
    let d2 = match f(&y1) {
        Ok(f1) => {
            let mut diff = [0.0; N];
            for i in 0..N {
                diff[i] = f1[i] - f0[i];
            }
            rms(&diff) / h0
        }
        Err(_) => return h0,
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
