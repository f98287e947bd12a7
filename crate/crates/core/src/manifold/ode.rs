//! Dormand–Prince 5(4) integrator with stops at prescribed times.
//!
//! The whole state vector shares one step-size controller, so a bundle of
//! neighbouring rays integrated together sees identical step sequences and
//! finite differences across the bundle stay smooth.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 200_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(t, y)` from `t0` through every time in `stops`
/// (ascending, all ≥ t0). `on_stop(i, y)` is called when `stops[i]` is
/// reached exactly; `check(y)` runs after each accepted step and may abort.
pub fn integrate<F, S, C>(
    rhs: F,
    y: &mut [f64],
    t0: f64,
    stops: &[f64],
    opts: &OdeOptions,
    mut on_stop: S,
    check: C,
) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(usize, &[f64]) -> Result<()>,
    C: Fn(&[f64]) -> Result<()>,
{
    let m = y.len();
    let mut k = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    let mut ynew = vec![0.0; m];

    let mut t = t0;
    let span = stops.last().map(|s| s - t0).unwrap_or(0.0);
    let mut h = (0.01 * span).max(1e-6);
    rhs(t, y, &mut k[0]);
    let mut steps = 0usize;

    for (idx, &stop) in stops.iter().enumerate() {
        if stop < t - 1e-15 * t.abs().max(1.0) {
            return Err(Error::InvalidArgument("ODE stops must be ascending".into()));
        }
        while t < stop {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::StepFailure { t, step: h });
            }
            let last = t + h >= stop;
            let hs = if last { stop - t } else { h };
            if hs <= 1e-15 * t.abs().max(1.0) {
                // Stop is within rounding of t.
                t = stop;
                break;
            }

            for i in 0..m {
                tmp[i] = y[i] + hs * A21 * k[0][i];
            }
            rhs(t + C2 * hs, &tmp, &mut k[1]);
            for i in 0..m {
                tmp[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
            }
            rhs(t + C3 * hs, &tmp, &mut k[2]);
            for i in 0..m {
                tmp[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            rhs(t + C4 * hs, &tmp, &mut k[3]);
            for i in 0..m {
                tmp[i] = y[i]
                    + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            rhs(t + C5 * hs, &tmp, &mut k[4]);
            for i in 0..m {
                tmp[i] = y[i]
                    + hs * (A61 * k[0][i]
                        + A62 * k[1][i]
                        + A63 * k[2][i]
                        + A64 * k[3][i]
                        + A65 * k[4][i]);
            }
            rhs(t + hs, &tmp, &mut k[5]);
            for i in 0..m {
                ynew[i] = y[i]
                    + hs * (A71 * k[0][i]
                        + A73 * k[2][i]
                        + A74 * k[3][i]
                        + A75 * k[4][i]
                        + A76 * k[5][i]);
            }
            rhs(t + hs, &ynew, &mut k[6]);

            let mut err: f64 = 0.0;
            for i in 0..m {
                let e = hs
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                h = hs * 0.2;
                if h < 1e-14 {
                    return Err(Error::StepFailure { t, step: h });
                }
                continue;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { stop } else { t + hs };
                y.copy_from_slice(&ynew);
                k.swap(0, 6);
                check(y)?;
                // Do not let a clipped final step shrink the working step.
                if !last {
                    h = hs * factor;
                } else {
                    h = h.max(hs * factor);
                }
            } else {
                h = hs * factor;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepFailure { t, step: h });
                }
            }
        }
        on_stop(idx, y)?;
    }
    Ok(())
}
