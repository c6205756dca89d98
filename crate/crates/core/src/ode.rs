//! Dormand–Prince 5(4) with step-size control and Hairer's fourth-order
//! continuous extension, for complex-valued systems.

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on the step; `None` leaves it free.
    pub max_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 5_000_000,
            max_step: None,
        }
    }
}

/// Counters from a finished integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
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

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn error_norm(err: &[C64], y0: &[C64], y1: &[C64], opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn scaled_norm(v: &[C64], y: &[C64], opts: &OdeOptions) -> f64 {
    let n = v.len().max(1) as f64;
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(x, yi)| (x.norm() / (opts.atol + opts.rtol * yi.norm())).powi(2))
        .sum();
    (sum / n).sqrt()
}

/// Integrates `dy/dt = f(t, y)` from `t0`, calling `on_output(t, y)` at
/// every time in `outputs` (ascending, all `>= t0`) with the dense-output
/// value. The callback may abort the run by returning an error.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[C64],
    outputs: &[f64],
    opts: &OdeOptions,
    mut on_output: O,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(f64, &[C64]) -> Result<()>,
{
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&t| t < t0) {
        return Err(Error::invalid("outputs", "output times must be ascending and >= t0"));
    }
    let mut stats = OdeStats::default();
    let dim = y0.len();
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        on_output(t0, y0)?;
        next_out += 1;
    }
    let t_end = match outputs.last() {
        Some(&t) if next_out < outputs.len() => t,
        _ => return Ok(stats),
    };

    let zero = C64::new(0.0, 0.0);
    let mut y = y0.to_vec();
    let mut y_new = vec![zero; dim];
    let mut stage = vec![zero; dim];
    let mut err = vec![zero; dim];
    let mut k: [Vec<C64>; 7] = std::array::from_fn(|_| vec![zero; dim]);
    let mut dense: [Vec<C64>; 5] = std::array::from_fn(|_| vec![zero; dim]);

    let mut t = t0;
    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let span = t_end - t0;
    let h_cap = opts.max_step.unwrap_or(span).min(span);

    // Starting step from the size of y, f and a finite-difference estimate of f'.
    let mut h = {
        let d0 = scaled_norm(&y, &y, opts);
        let d1 = scaled_norm(&k[0], &y, opts);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(h_cap);
        for i in 0..dim {
            stage[i] = y[i] + k[0][i] * h0;
        }
        f(t + h0, &stage, &mut k[1]);
        stats.evaluations += 1;
        let diff: Vec<C64> = (0..dim).map(|i| (k[1][i] - k[0][i]) / h0).collect();
        let d2 = scaled_norm(&diff, &y, opts);
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(h_cap)
    };

    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end - 1e-12 * span.max(1.0);
        if last {
            h = t_end - t;
        }

        macro_rules! stage {
            ($dst:expr, $c:expr, [$(($coef:expr, $idx:expr)),*]) => {{
                for i in 0..dim {
                    stage[i] = y[i] + (zero $(+ k[$idx][i] * $coef)*) * h;
                }
                f(t + $c * h, &stage, &mut k[$dst]);
            }};
        }
        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..dim {
            y_new[i] = y[i] + (k[0][i] * A71 + k[2][i] * A73 + k[3][i] * A74 + k[4][i] * A75 + k[5][i] * A76) * h;
        }
        let t_new = if last { t_end } else { t + h };
        f(t_new, &y_new, &mut k[6]);
        stats.evaluations += 6;

        for i in 0..dim {
            err[i] = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
        }
        let err_norm = error_norm(&err, &y, &y_new, opts);
        if !err_norm.is_finite() {
            return Err(Error::InvariantViolation {
                time: t,
                what: "non-finite state during integration".into(),
                magnitude: f64::NAN,
            });
        }

        if err_norm <= 1.0 {
            stats.accepted += 1;
            if next_out < outputs.len() && outputs[next_out] <= t_new {
                for i in 0..dim {
                    let dy = y_new[i] - y[i];
                    let bspl = k[0][i] * h - dy;
                    dense[0][i] = y[i];
                    dense[1][i] = dy;
                    dense[2][i] = bspl;
                    dense[3][i] = dy - k[6][i] * h - bspl;
                    dense[4][i] = (k[0][i] * D1 + k[2][i] * D3 + k[3][i] * D4 + k[4][i] * D5 + k[5][i] * D6 + k[6][i] * D7) * h;
                }
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let t_out = outputs[next_out];
                    if t_out == t_new {
                        on_output(t_out, &y_new)?;
                    } else {
                        let theta = (t_out - t) / h;
                        let theta1 = 1.0 - theta;
                        for i in 0..dim {
                            stage[i] = dense[0][i]
                                + (dense[1][i]
                                    + (dense[2][i] + (dense[3][i] + dense[4][i] * theta1) * theta) * theta1)
                                    * theta;
                        }
                        on_output(t_out, &stage)?;
                    }
                    next_out += 1;
                }
            }
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            t = t_new;
            if last || next_out >= outputs.len() {
                return Ok(stats);
            }
            let fac = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) };
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            h = (h * fac).min(h_cap);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err_norm.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
}
