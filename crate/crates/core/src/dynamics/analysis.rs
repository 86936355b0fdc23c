use serde::{Deserialize, Serialize};

use super::{
    integrate, seeded_ground, ControlTarget, IntegratorOptions, LossOptions, Sampling, Schedule,
    Trajectory, DEFAULT_SEED_ALPHA,
};
use crate::error::{Error, Result};
use crate::model::{Controls, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionEvent {
    pub time: f64,
    pub direction: Direction,
}

/// Two-threshold event detection on the transmittance trace. An up event is
/// reported where the trace crosses `high` coming from below `low`, a down
/// event where it crosses `low` coming from above `high`.
pub fn detect_transitions(traj: &Trajectory, low: f64, high: f64) -> Vec<TransitionEvent> {
    let tr = &traj.transmittance_trace;
    let mut events = Vec::new();
    let Some(&first) = tr.first() else {
        return events;
    };
    let mut is_high = first >= high;
    for i in 1..tr.len() {
        let (a, b) = (tr[i - 1], tr[i]);
        let (threshold, direction) = if is_high {
            (low, Direction::Down)
        } else {
            (high, Direction::Up)
        };
        let crossed = if is_high { b <= low } else { b >= high };
        if crossed {
            let (t0, t1) = (traj.times[i - 1], traj.times[i]);
            let time = if a == b {
                t1
            } else {
                t0 + (t1 - t0) * ((threshold - a) / (b - a)).clamp(0.0, 1.0)
            };
            events.push(TransitionEvent { time, direction });
            is_high = !is_high;
        }
    }
    events
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HysteresisOptions {
    pub grid_points: usize,
    pub grid_scale: GridScale,
    pub integrator: IntegratorOptions,
}

impl Default for HysteresisOptions {
    fn default() -> Self {
        Self {
            grid_points: 401,
            grid_scale: GridScale::Linear,
            integrator: IntegratorOptions::default(),
        }
    }
}

/// Transmittance on the control grid for one ramp cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HysteresisSweep {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HysteresisRecord {
    pub target: ControlTarget,
    pub control_grid: Vec<f64>,
    pub cycles: Vec<HysteresisSweep>,
    /// Area between the down and up curves per cycle, oriented so that a
    /// memory of the bright state gives a positive value: `+∫(T_down - T_up)`
    /// for `eta` and `-∫(T_down - T_up)` for `lambda`. Log grids integrate
    /// over `log10` of the control.
    pub loop_areas: Vec<f64>,
}

fn control_grid(min: f64, max: f64, n: usize, scale: GridScale) -> Result<Vec<f64>> {
    let n = n.max(2);
    let frac = |i: usize| i as f64 / (n - 1) as f64;
    match scale {
        GridScale::Linear => Ok((0..n).map(|i| min + (max - min) * frac(i)).collect()),
        GridScale::Log => {
            if !(min > 0.0) {
                return Err(Error::InvalidArgument("log grid needs a positive ramp minimum".into()));
            }
            let mut v: Vec<f64> = (0..n).map(|i| min * (max / min).powf(frac(i))).collect();
            v[n - 1] = max;
            Ok(v)
        }
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Runs `ramp` on `target` from the seeded ground state with the other
/// control fixed, and resamples every up and down sweep on a common grid.
pub fn hysteresis_run(
    params: &ModelParams,
    target: ControlTarget,
    ramp: &Schedule,
    fixed_other: &Controls,
    loss: &LossOptions,
    opts: &HysteresisOptions,
) -> Result<HysteresisRecord> {
    ramp.validate()?;
    let Schedule::LinearRampCycle {
        min,
        max,
        t_up,
        t_down,
        n_cycles,
    } = *ramp
    else {
        return Err(Error::InvalidArgument("hysteresis needs a linear ramp schedule".into()));
    };
    if max <= min {
        return Err(Error::InvalidArgument("ramp needs max > min".into()));
    }
    let grid = control_grid(min, max, opts.grid_points, opts.grid_scale)?;
    let period = t_up + t_down;
    let t_end = n_cycles as f64 * period;

    // sample times at which the ramp passes each grid value
    let up_time = |k: u32, c: f64| k as f64 * period + t_up * (c - min) / (max - min);
    let down_time = |k: u32, c: f64| k as f64 * period + t_up + t_down * (max - c) / (max - min);
    let mut times: Vec<f64> = (0..n_cycles)
        .flat_map(|k| {
            grid.iter()
                .flat_map(move |&c| [up_time(k, c), down_time(k, c)])
        })
        .map(|t| t.clamp(0.0, t_end))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let (eta_schedule, lambda_schedule) = match target {
        ControlTarget::Eta => (ramp.clone(), Schedule::constant(fixed_other.lambda)),
        ControlTarget::Lambda => (Schedule::constant(fixed_other.eta), ramp.clone()),
    };
    let integrator = opts
        .integrator
        .clone()
        .with_sampling(Sampling::Times(times.clone()));
    let traj = integrate(
        &seeded_ground(params.n_atoms, DEFAULT_SEED_ALPHA),
        params,
        &eta_schedule,
        &lambda_schedule,
        loss,
        t_end,
        &integrator,
    )?;
    let at = |t: f64| {
        let t = t.clamp(0.0, t_end);
        let i = times.partition_point(|&x| x < t);
        traj.transmittance_trace[i.min(times.len() - 1)]
    };

    let x: Vec<f64> = match opts.grid_scale {
        GridScale::Linear => grid.clone(),
        GridScale::Log => grid.iter().map(|c| c.log10()).collect(),
    };
    let sign = match target {
        ControlTarget::Eta => 1.0,
        ControlTarget::Lambda => -1.0,
    };
    let mut cycles = Vec::with_capacity(n_cycles as usize);
    let mut loop_areas = Vec::with_capacity(n_cycles as usize);
    for k in 0..n_cycles {
        let up: Vec<f64> = grid.iter().map(|&c| at(up_time(k, c))).collect();
        let down: Vec<f64> = grid.iter().map(|&c| at(down_time(k, c))).collect();
        let diff: Vec<f64> = down.iter().zip(&up).map(|(d, u)| d - u).collect();
        loop_areas.push(sign * trapezoid(&x, &diff));
        cycles.push(HysteresisSweep { up, down });
    }
    Ok(HysteresisRecord {
        target,
        control_grid: grid,
        cycles,
        loop_areas,
    })
}

/// Repump rate from the initial decay of `N_f` in `window`: the
/// least-squares slope of `N_f(t)` divided by `-N_f(t0)`.
pub fn estimate_lambda(traj: &Trajectory, window: (f64, f64), params: &ModelParams) -> Result<f64> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::InvalidArgument("estimation window must have t1 > t0".into()));
    }
    let nf0 = traj
        .interpolate(t0, |s| s.n_f)
        .ok_or_else(|| Error::InvalidArgument("window starts outside the trajectory".into()))?;
    if nf0 < 1e-6 * params.n_atoms {
        return Err(Error::InsufficientPopulation);
    }
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(&t, _)| t >= t0 && t <= t1)
        .map(|(&t, s)| (t, s.n_f))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two samples in the window".into()));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm).powi(2)).sum();
    Ok(-(sxy / sxx) / nf0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MeanFieldState;

    fn trace(times: Vec<f64>, tr: Vec<f64>) -> Trajectory {
        Trajectory {
            states: vec![MeanFieldState::default(); times.len()],
            controls_trace: vec![Controls { eta: 1.0, lambda: 1.0 }; times.len()],
            times,
            transmittance_trace: tr,
            ..Default::default()
        }
    }

    #[test]
    fn monotone_rise_is_one_event() {
        let times: Vec<f64> = (0..=100).map(f64::from).collect();
        let tr = times.iter().map(|t| t / 100.0).collect();
        let ev = detect_transitions(&trace(times, tr), 0.1, 0.5);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].direction, Direction::Up);
        assert!((ev[0].time - 50.0).abs() < 1e-12);
    }

    #[test]
    fn square_trace_alternates() {
        let p = 4.0;
        let times: Vec<f64> = (0..400).map(|i| i as f64 * 0.1).collect();
        let tr = times
            .iter()
            .map(|&t| if (t % p) < p / 2.0 { 0.0 } else { 1.0 })
            .collect();
        let ev = detect_transitions(&trace(times, tr), 0.1, 0.5);
        assert!(ev.len() >= 18);
        for w in ev.windows(2) {
            assert_ne!(w[0].direction, w[1].direction);
            // crossing times are interpolated inside one sampling interval
            assert!((w[1].time - w[0].time - p / 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn noise_between_thresholds_is_ignored() {
        let times: Vec<f64> = (0..100).map(f64::from).collect();
        let tr = times
            .iter()
            .map(|&t| if (t as i64) % 2 == 0 { 0.15 } else { 0.45 })
            .collect();
        assert!(detect_transitions(&trace(times, tr), 0.1, 0.5).is_empty());
    }

    #[test]
    fn synthetic_decay_gives_lambda() {
        let lambda = 0.01;
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let mut traj = trace(times.clone(), vec![0.0; times.len()]);
        for (s, t) in traj.states.iter_mut().zip(&times) {
            s.n_f = 5000.0 * (-lambda * t).exp();
        }
        let p = ModelParams::experiment_defaults();
        let est = estimate_lambda(&traj, (0.0, 1.0), &p).unwrap();
        assert!((est - lambda).abs() <= 1e-4, "{est}");
    }

    #[test]
    fn empty_shelf_is_insufficient() {
        let times: Vec<f64> = (0..10).map(f64::from).collect();
        let traj = trace(times, vec![0.0; 10]);
        let p = ModelParams::experiment_defaults();
        assert_eq!(
            estimate_lambda(&traj, (0.0, 5.0), &p),
            Err(Error::InsufficientPopulation)
        );
    }

    #[test]
    fn trapezoid_of_line() {
        assert!((trapezoid(&[0.0, 1.0, 3.0], &[0.0, 1.0, 3.0]) - 4.5).abs() < 1e-15);
    }
}
