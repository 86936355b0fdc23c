//! Dormand-Prince 5(4) with PI step control and 4th-order dense output.
//!
//! The fast modes of the model (cavity and polarization, rates ~1-20) are
//! damped while the optical-pumping modes are ~1e-3, so the problem is mildly
//! stiff. An explicit pair stays stable because the controller rejects steps
//! that leave the stability region; the cost is a step size bounded by the
//! fast rates.

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

pub const DIM: usize = 7;
pub type Vector = [f64; DIM];

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    /// Absolute tolerance per component.
    pub atol: Vector,
    pub max_step: f64,
    pub min_step_rel: f64,
    pub max_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Halt {
    /// Step size fell below `min_step_rel * max(1, |t|)`.
    Underflow { t: f64, h: f64 },
    TooManySteps { t: f64, h: f64 },
    /// The user callback rejected the accepted state.
    Rejected { t: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
    /// Largest normalized error estimate among accepted steps.
    pub max_error: f64,
    /// Sum of the Euclidean norms of the absolute local error estimates.
    pub error_sum: f64,
}

/// Continuous extension of one accepted step.
pub struct Dense {
    t0: f64,
    h: f64,
    r: [Vector; 5],
}

impl Dense {
    pub fn eval(&self, t: f64) -> Vector {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let mut y = [0.0; DIM];
        for i in 0..DIM {
            let r = &self.r;
            y[i] = r[0][i]
                + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        y
    }
}

fn axpy(y: &Vector, h: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = *y;
    for i in 0..DIM {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to exactly `t1`, calling `on_step`
/// after every accepted step with the dense interpolant and the new state.
/// `h` carries the step size across calls; returns the state at `t1`.
#[allow(clippy::too_many_arguments)]
pub fn dopri5<F, S>(
    f: &mut F,
    t0: f64,
    t1: f64,
    y0: Vector,
    h: &mut f64,
    ctl: &StepControl,
    stats: &mut Stats,
    on_step: &mut S,
) -> Result<Vector, Halt>
where
    F: FnMut(f64, &Vector) -> Vector,
    S: FnMut(&Dense, f64, &Vector) -> bool,
{
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    if *h <= 0.0 || !h.is_finite() {
        *h = initial_step(&y, &k1, ctl);
    }
    let mut err_old: f64 = 1e-4;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Halt::TooManySteps { t, h: *h });
        }
        let mut step = h.min(ctl.max_step);
        let last = t + step >= t1 || t + 1.01 * step >= t1;
        if last {
            step = t1 - t;
        }
        if step < ctl.min_step_rel * t.abs().max(1.0) && !last {
            return Err(Halt::Underflow { t, h: step });
        }

        let k2 = f(t + C2 * step, &axpy(&y, step, &[(A21, &k1)]));
        let k3 = f(t + C3 * step, &axpy(&y, step, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * step,
            &axpy(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * step,
            &axpy(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + step,
            &axpy(
                &y,
                step,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            step,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let t_new = if last { t1 } else { t + step };
        let k7 = f(t_new, &y_new);
        stats.evaluations += 6;

        let mut err = 0.0;
        let mut abs_err = 0.0;
        for i in 0..DIM {
            let e = step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.atol[i] + ctl.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
            abs_err += e * e;
        }
        let err = (err / DIM as f64).sqrt();

        if err.is_finite() && err <= 1.0 {
            let fac11 = err.max(1e-300).powf(expo1);
            let fac = (fac11 / err_old.powf(beta) / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
            let mut h_next = step / fac;
            if last_rejected {
                h_next = h_next.min(step);
            }
            err_old = err.max(1e-4);
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            stats.error_sum += abs_err.sqrt();

            let mut r = [[0.0; DIM]; 5];
            for i in 0..DIM {
                let dy = y_new[i] - y[i];
                let bspl = step * k1[i] - dy;
                r[0][i] = y[i];
                r[1][i] = dy;
                r[2][i] = bspl;
                r[3][i] = dy - step * k7[i] - bspl;
                r[4][i] = step
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let dense = Dense { t0: t, h: step, r };
            if !on_step(&dense, t_new, &y_new) {
                return Err(Halt::Rejected { t: t_new });
            }

            t = t_new;
            y = y_new;
            k1 = k7;
            if !last || h_next > *h {
                *h = h_next;
            }
            last_rejected = false;
        } else {
            let shrink = if err.is_finite() {
                (err.powf(expo1) / 0.9).min(1.0 / 0.2)
            } else {
                10.0
            };
            *h = step / shrink;
            stats.rejected += 1;
            last_rejected = true;
            if *h < ctl.min_step_rel * t.abs().max(1.0) {
                return Err(Halt::Underflow { t, h: *h });
            }
        }
    }
    Ok(y)
}

fn initial_step(y: &Vector, dy: &Vector, ctl: &StepControl) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..DIM {
        let sc = ctl.atol[i] + ctl.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / DIM as f64).sqrt(), (d1 / DIM as f64).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(1e-10, ctl.max_step).min(1e-2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(rtol: f64) -> StepControl {
        StepControl {
            rtol,
            atol: [rtol * 1e-2; DIM],
            max_step: f64::INFINITY,
            min_step_rel: 1e-14,
            max_steps: 1_000_000,
        }
    }

    #[test]
    fn damped_rotation_matches_closed_form() {
        // y0 + i y1 rotates with frequency 3 and decays at rate 0.5
        let mut f = |_t: f64, y: &Vector| {
            let mut d = [0.0; DIM];
            d[0] = -0.5 * y[0] - 3.0 * y[1];
            d[1] = 3.0 * y[0] - 0.5 * y[1];
            d[2] = -y[2];
            d
        };
        let mut h = 0.0;
        let mut stats = Stats::default();
        let mut y0 = [0.0; DIM];
        y0[0] = 1.0;
        y0[2] = 2.0;
        let mut probe = Vec::new();
        let y = dopri5(&mut f, 0.0, 4.0, y0, &mut h, &ctl(1e-10), &mut stats, &mut |d, t1, _| {
            if d.t0 <= 1.3 && 1.3 <= t1 {
                probe.push(d.eval(1.3));
            }
            true
        })
        .unwrap();
        let exact = |t: f64| ((-0.5 * t).exp() * (3.0 * t).cos(), (-0.5 * t).exp() * (3.0 * t).sin());
        let (re, im) = exact(4.0);
        assert!((y[0] - re).abs() < 1e-8 && (y[1] - im).abs() < 1e-8);
        assert!((y[2] - 2.0 * (-4.0f64).exp()).abs() < 1e-9);
        let (re, im) = exact(1.3);
        assert!((probe[0][0] - re).abs() < 1e-6 && (probe[0][1] - im).abs() < 1e-6);
        assert!(stats.rejected < stats.accepted);
    }

    #[test]
    fn stiff_decay_stays_stable() {
        let mut f = |_t: f64, y: &Vector| {
            let mut d = [0.0; DIM];
            d[0] = -1000.0 * (y[0] - 1.0);
            d[1] = -1e-3 * y[1];
            d
        };
        let mut h = 0.0;
        let mut stats = Stats::default();
        let mut y0 = [0.0; DIM];
        y0[1] = 1.0;
        let y = dopri5(&mut f, 0.0, 100.0, y0, &mut h, &ctl(1e-8), &mut stats, &mut |_, _, _| true).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8);
        assert!((y[1] - (-0.1f64).exp()).abs() < 1e-8);
    }
}
