use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which control a schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlTarget {
    Eta,
    Lambda,
}

impl ControlTarget {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlTarget::Eta => "eta",
            ControlTarget::Lambda => "lambda",
        }
    }
}

/// Time dependence of one control parameter. Times in `1/gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// `n_cycles` repetitions of a linear ramp `min -> max` over `t_up` and
    /// back over `t_down`; holds `min` afterwards.
    LinearRampCycle {
        min: f64,
        max: f64,
        t_up: f64,
        t_down: f64,
        n_cycles: u32,
    },
    /// Starts in the high segment; `duty` is the high fraction of a period.
    SquareWave {
        low: f64,
        high: f64,
        period: f64,
        duty: f64,
    },
    /// Linear interpolation between `(t, value)` knots, clamped outside.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            // an infinite constant is the instant-repump limit
            Schedule::Constant { value } => {
                if value.is_nan() || *value < 0.0 {
                    return bad(format!("schedule value must be >= 0, got {value}"));
                }
            }
            Schedule::LinearRampCycle {
                min,
                max,
                t_up,
                t_down,
                n_cycles,
            } => {
                if !(non_negative(*min) && non_negative(*max) && min <= max) {
                    return bad(format!("ramp bounds must satisfy 0 <= min <= max, got {min}..{max}"));
                }
                if !(*t_up > 0.0 && *t_down > 0.0 && t_up.is_finite() && t_down.is_finite()) {
                    return bad("ramp times must be positive".into());
                }
                if *n_cycles == 0 {
                    return bad("ramp needs at least one cycle".into());
                }
            }
            Schedule::SquareWave {
                low,
                high,
                period,
                duty,
            } => {
                if !(non_negative(*low) && non_negative(*high)) {
                    return bad("square wave levels must be >= 0".into());
                }
                if !(*period > 0.0 && period.is_finite()) {
                    return bad("square wave period must be positive".into());
                }
                if !(*duty > 0.0 && *duty < 1.0) {
                    return bad(format!("duty must lie in (0, 1), got {duty}"));
                }
            }
            Schedule::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return bad("piecewise schedule needs at least one knot".into());
                }
                if knots.iter().any(|&(t, v)| !t.is_finite() || !non_negative(v)) {
                    return bad("knot values must be finite and >= 0".into());
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("knot times must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Schedule::Constant { value } if value.is_infinite())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::LinearRampCycle {
                min,
                max,
                t_up,
                t_down,
                n_cycles,
            } => {
                let period = t_up + t_down;
                if t >= *n_cycles as f64 * period {
                    return *min;
                }
                let tau = t.max(0.0) % period;
                if tau <= *t_up {
                    min + (max - min) * tau / t_up
                } else {
                    max - (max - min) * (tau - t_up) / t_down
                }
            }
            Schedule::SquareWave {
                low,
                high,
                period,
                duty,
            } => {
                let phase = (t.max(0.0) % period) / period;
                if phase < *duty {
                    *high
                } else {
                    *low
                }
            }
            Schedule::PiecewiseLinear { knots } => {
                let first = knots[0];
                if t <= first.0 {
                    return first.1;
                }
                match knots.iter().position(|&(tk, _)| tk > t) {
                    None => knots[knots.len() - 1].1,
                    Some(i) => {
                        let (t0, v0) = knots[i - 1];
                        let (t1, v1) = knots[i];
                        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                    }
                }
            }
        }
    }

    /// Times in `(0, t_end)` where the schedule jumps or has a kink.
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            Schedule::Constant { .. } => {}
            Schedule::LinearRampCycle {
                t_up,
                t_down,
                n_cycles,
                ..
            } => {
                let period = t_up + t_down;
                for k in 0..*n_cycles {
                    let start = k as f64 * period;
                    out.push(start);
                    out.push(start + t_up);
                }
                out.push(*n_cycles as f64 * period);
            }
            Schedule::SquareWave { period, duty, .. } => {
                let n = (t_end / period).ceil() as u64;
                for k in 0..=n {
                    let start = k as f64 * period;
                    out.push(start);
                    out.push(start + duty * period);
                }
            }
            Schedule::PiecewiseLinear { knots } => out.extend(knots.iter().map(|k| k.0)),
        }
        out.retain(|&t| t > 0.0 && t < t_end);
        out
    }
}
