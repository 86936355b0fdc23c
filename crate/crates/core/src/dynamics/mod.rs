//! Time integration of the mean-field equations under scheduled controls.

mod analysis;
pub mod integrator;
mod schedule;

pub use analysis::{
    detect_transitions, estimate_lambda, hysteresis_run, Direction, GridScale, HysteresisOptions,
    HysteresisRecord, HysteresisSweep, TransitionEvent,
};
pub use schedule::{ControlTarget, Schedule};

pub use crate::model::LossOptions;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs, Controls, MeanFieldState, ModelParams};
use integrator::{dopri5, Halt, StepControl, Stats, DIM};

/// Amplitude injected into the cavity field of the ground-state initial
/// condition so that deterministic runs can leave the blockaded state.
pub const DEFAULT_SEED_ALPHA: f64 = 1e-8;

/// Populations below `-NEGATIVE_POPULATION_TOL * N` abort the integration.
pub const NEGATIVE_POPULATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// `n` equally spaced samples including both ends.
    Linear(usize),
    /// `t = 0` followed by `n - 1` log-spaced samples from `t_end * 1e-6`.
    Log(usize),
    /// Explicit, strictly increasing sample times within `[0, t_end]`.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    /// Absolute tolerance per component.
    pub atol: f64,
    pub max_step: f64,
    pub sampling: Sampling,
    pub max_steps: u64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            sampling: Sampling::Linear(2000),
            max_steps: 500_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn with_sampling(self, sampling: Sampling) -> Self {
        Self { sampling, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub controls_trace: Vec<Controls>,
    pub transmittance_trace: Vec<f64>,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    /// Largest normalized local error estimate among accepted steps.
    pub max_error_estimate: f64,
    /// Sum of the absolute local error estimates of accepted steps, a bound
    /// on the global error while the dynamics is contracting.
    pub global_error_estimate: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&MeanFieldState> {
        self.states.last()
    }

    /// Linear interpolation of a state-derived quantity at time `t`.
    pub fn interpolate<F: Fn(&MeanFieldState) -> f64>(&self, t: f64, f: F) -> Option<f64> {
        let i = self.times.partition_point(|&x| x < t);
        if i < self.times.len() && self.times[i] == t {
            return Some(f(&self.states[i]));
        }
        if i == 0 || i >= self.times.len() {
            return None;
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (v0, v1) = (f(&self.states[i - 1]), f(&self.states[i]));
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

/// Empty cavity seeded with `seed` photons' amplitude, all atoms in `|g>`.
pub fn seeded_ground(n_atoms: f64, seed: f64) -> MeanFieldState {
    let mut s = MeanFieldState::ground(n_atoms);
    s.alpha.re = seed;
    s
}

/// Transmittance with the `eta = 0` convention of reporting zero.
pub fn transmittance_or_zero(state: &MeanFieldState, params: &ModelParams, eta: f64) -> f64 {
    if eta > 0.0 {
        state.intensity() * (params.kappa.powi(2) + params.delta_c.powi(2)) / (eta * eta)
    } else {
        0.0
    }
}

fn sample_times(sampling: &Sampling, t_end: f64) -> Result<Vec<f64>> {
    let times = match sampling {
        Sampling::Linear(n) => {
            let n = (*n).max(2);
            (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
        }
        Sampling::Log(n) => {
            let n = (*n).max(2);
            let t0 = t_end * 1e-6;
            let mut v = vec![0.0];
            let m = n - 1;
            v.extend((0..m).map(|i| {
                if m == 1 {
                    t_end
                } else {
                    t0 * (t_end / t0).powf(i as f64 / (m - 1) as f64)
                }
            }));
            if let Some(last) = v.last_mut() {
                *last = t_end;
            }
            v
        }
        Sampling::Times(v) => {
            if v.windows(2).any(|w| w[1] <= w[0]) || v.iter().any(|&t| t < 0.0 || t > t_end) {
                return Err(Error::InvalidArgument(
                    "sample times must be increasing within [0, t_end]".into(),
                ));
            }
            v.clone()
        }
    };
    Ok(times)
}

/// Integrates the model; on failure returns the trajectory up to the last
/// good sample together with the error.
pub fn integrate_partial(
    initial: &MeanFieldState,
    params: &ModelParams,
    eta_schedule: &Schedule,
    lambda_schedule: &Schedule,
    loss: &LossOptions,
    t_end: f64,
    opts: &IntegratorOptions,
) -> (Trajectory, Option<Error>) {
    let mut traj = Trajectory::default();
    let checks = (|| {
        params.validate()?;
        eta_schedule.validate()?;
        lambda_schedule.validate()?;
        if !eta_schedule.is_finite() {
            return Err(Error::InvalidArgument("eta must be finite".into()));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
        }
        sample_times(&opts.sampling, t_end)
    })();
    let samples = match checks {
        Ok(s) => s,
        Err(e) => return (traj, Some(e)),
    };

    let n_ref = initial.total_population().max(params.n_atoms).max(1.0);
    let floor = -NEGATIVE_POPULATION_TOL * n_ref;
    let ctl = StepControl {
        rtol: opts.rtol,
        atol: [opts.atol; DIM],
        max_step: opts.max_step,
        min_step_rel: 1e-14,
        max_steps: opts.max_steps,
    };

    let controls_at = |t: f64| Controls {
        eta: eta_schedule.eval(t),
        lambda: lambda_schedule.eval(t),
    };
    let push = |traj: &mut Trajectory, t: f64, y: &[f64; DIM]| {
        let state = MeanFieldState::from_array(y);
        let c = controls_at(t);
        traj.times.push(t);
        traj.transmittance_trace.push(transmittance_or_zero(&state, params, c.eta));
        traj.controls_trace.push(c);
        traj.states.push(state);
    };

    let mut nodes: Vec<f64> = eta_schedule
        .breakpoints(t_end)
        .into_iter()
        .chain(lambda_schedule.breakpoints(t_end))
        .collect();
    nodes.push(t_end);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let mut y = initial.to_array();
    if !lambda_schedule.is_finite() {
        // instant repump: |f> is empty at all times
        y[5] += y[6];
        y[6] = 0.0;
    }
    let mut next = 0;
    while next < samples.len() && samples[next] <= 0.0 {
        push(&mut traj, samples[next], &y);
        next += 1;
    }

    let mut stats = Stats::default();
    let mut h = 0.0;
    let mut t = 0.0;
    let mut failure = None;
    let mut offending = None;
    for &seg_end in &nodes {
        // controls are smooth inside a segment; keep the end-point stages on
        // this side of a jump
        let (lo, hi) = (t, seg_end);
        let inset = 1e-12 * (hi - lo);
        let mut f = |tau: f64, y: &[f64; DIM]| {
            let c = controls_at(tau.clamp(lo + inset, hi - inset));
            rhs(&MeanFieldState::from_array(y), params, &c, loss).to_array()
        };
        let mut on_step = |dense: &integrator::Dense, t1: f64, y1: &[f64; DIM]| {
            if y1[4..].iter().any(|&n| n < floor || n.is_nan()) {
                offending = Some(MeanFieldState::from_array(y1));
                return false;
            }
            while next < samples.len() && samples[next] <= t1 {
                let ts = samples[next];
                let ys = if ts == t1 { *y1 } else { dense.eval(ts) };
                push(&mut traj, ts, &ys);
                next += 1;
            }
            true
        };
        match dopri5(&mut f, t, seg_end, y, &mut h, &ctl, &mut stats, &mut on_step) {
            Ok(y1) => {
                y = y1;
                t = seg_end;
            }
            Err(halt) => {
                let last = offending
                    .or_else(|| traj.states.last().copied())
                    .unwrap_or(*initial);
                failure = Some(match halt {
                    Halt::Underflow { t, h } | Halt::TooManySteps { t, h } => Error::Stiffness {
                        t,
                        h,
                        state: Box::new(last),
                    },
                    Halt::Rejected { t } => Error::NegativePopulation {
                        t,
                        state: Box::new(last),
                    },
                });
                break;
            }
        }
    }
    traj.accepted_steps = stats.accepted;
    traj.rejected_steps = stats.rejected;
    traj.max_error_estimate = stats.max_error;
    traj.global_error_estimate = stats.error_sum;
    (traj, failure)
}

pub fn integrate(
    initial: &MeanFieldState,
    params: &ModelParams,
    eta_schedule: &Schedule,
    lambda_schedule: &Schedule,
    loss: &LossOptions,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    match integrate_partial(initial, params, eta_schedule, lambda_schedule, loss, t_end, opts) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::{steady_states, Stability};
    use num_complex::Complex64;

    fn defaults() -> ModelParams {
        ModelParams::experiment_defaults()
    }

    #[test]
    fn empty_cavity_ring_up() {
        let p = ModelParams {
            delta_c: 0.4,
            ..defaults().with_atoms(0.0)
        };
        let eta = 3.0;
        let t_end = 5.0 / p.kappa;
        let traj = integrate(
            &MeanFieldState::default(),
            &p,
            &Schedule::constant(eta),
            &Schedule::constant(0.01),
            &LossOptions::disabled(),
            t_end,
            &IntegratorOptions::default().with_sampling(Sampling::Linear(11)),
        )
        .unwrap();
        let z = Complex64::new(p.kappa, -p.delta_c);
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let exact = eta / z * (1.0 - (-z * *t).exp());
            assert!((s.alpha - exact).norm() <= 1e-6 * exact.norm().max(1e-12), "t = {t}");
        }
        assert_eq!(traj.times.len(), 11);
        assert_eq!(*traj.times.last().unwrap(), t_end);
    }

    #[test]
    fn relaxes_back_to_a_stable_branch() {
        let p = defaults();
        let c = Controls::from_big_g(380.0, 0.999, &p).unwrap();
        let branches = steady_states(&p, &c).unwrap();
        let b = &branches[0];
        assert_eq!(b.stability, Stability::Stable);
        let mut x = b.state.to_array();
        for (i, v) in x.iter_mut().enumerate().take(4) {
            *v *= 1.0 + 1e-6 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let shift = 1e-6 * b.state.n_e;
        x[4] += shift;
        x[5] -= shift;
        let t_end = 50.0 / b.max_re_eig().abs();
        let traj = integrate(
            &MeanFieldState::from_array(&x),
            &p,
            &Schedule::constant(c.eta),
            &Schedule::constant(c.lambda),
            &LossOptions::disabled(),
            t_end,
            &IntegratorOptions {
                rtol: 1e-11,
                atol: 1e-14,
                ..IntegratorOptions::default().with_sampling(Sampling::Linear(2))
            },
        )
        .unwrap();
        let end = traj.last_state().unwrap().to_array();
        let dist: f64 = end
            .iter()
            .zip(b.state.to_array())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist <= 1e-8 * b.state.norm(), "distance {dist}");
    }

    #[test]
    fn runaway_without_repump() {
        let p = defaults();
        let traj = integrate(
            &seeded_ground(p.n_atoms, DEFAULT_SEED_ALPHA),
            &p,
            &Schedule::constant(236.0),
            &Schedule::constant(0.0),
            &LossOptions::disabled(),
            2e5,
            &IntegratorOptions::default(),
        )
        .unwrap();
        let t = &traj.transmittance_trace;
        assert!(t[1] < 0.05);
        assert!(*t.last().unwrap() > 0.9);
        // once past 10 %, the rise does not turn back by more than a few percent
        let start = t.iter().position(|&x| x > 0.1).unwrap();
        let mut peak: f64 = 0.0;
        for &x in &t[start..] {
            peak = peak.max(x);
            assert!(x > peak - 0.05);
        }
    }

    #[test]
    fn loss_gives_exact_exponential_decay() {
        let p = defaults();
        let loss = LossOptions {
            enabled: true,
            rate_g: 1e-3,
            rate_e: 2e-3,
            rate_f: 5e-3,
        };
        let init = MeanFieldState {
            n_e: 100.0,
            n_g: 5000.0,
            n_f: 4900.0,
            ..Default::default()
        };
        let traj = integrate(
            &init,
            &p,
            &Schedule::constant(0.0),
            &Schedule::constant(0.0),
            &loss,
            1000.0,
            &IntegratorOptions {
                rtol: 1e-11,
                atol: 1e-14,
                ..IntegratorOptions::default().with_sampling(Sampling::Linear(5))
            },
        )
        .unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            // |e> also feeds |g> and |f> through spontaneous decay
            let ne = 100.0 * (-(2.0 * p.pol_decay() + 2e-3) * t).exp();
            assert!((s.n_e - ne).abs() <= 1e-8 * 100.0);
        }
        // after |e> is empty, |g> decays at its own rate
        let traj2 = integrate(
            &MeanFieldState { n_e: 0.0, ..init },
            &p,
            &Schedule::constant(0.0),
            &Schedule::constant(0.0),
            &loss,
            1000.0,
            &IntegratorOptions {
                rtol: 1e-11,
                atol: 1e-14,
                ..IntegratorOptions::default().with_sampling(Sampling::Linear(5))
            },
        )
        .unwrap();
        for (t, s) in traj2.times.iter().zip(&traj2.states) {
            let ng = 5000.0 * (-1e-3 * t).exp();
            let nf = 4900.0 * (-5e-3 * t).exp();
            assert!((s.n_g / ng - 1.0).abs() <= 1e-8);
            assert!((s.n_f / nf - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn conserves_population_without_loss() {
        let p = defaults();
        let traj = integrate(
            &seeded_ground(p.n_atoms, DEFAULT_SEED_ALPHA),
            &p,
            &Schedule::constant(300.0),
            &Schedule::constant(2e-3),
            &LossOptions::disabled(),
            1e4,
            &IntegratorOptions::default().with_sampling(Sampling::Log(50)),
        )
        .unwrap();
        for s in &traj.states {
            assert!((s.total_population() / p.n_atoms - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = defaults();
        let r = integrate(
            &MeanFieldState::ground(1.0),
            &p,
            &Schedule::constant(1.0),
            &Schedule::constant(1.0),
            &LossOptions::disabled(),
            -1.0,
            &IntegratorOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn negative_population_aborts() {
        let p = defaults();
        let init = MeanFieldState {
            n_g: 10.0,
            n_f: -1.0,
            ..Default::default()
        };
        let r = integrate(
            &init,
            &p,
            &Schedule::constant(1.0),
            &Schedule::constant(0.0),
            &LossOptions::disabled(),
            10.0,
            &IntegratorOptions::default(),
        );
        assert!(matches!(r, Err(Error::NegativePopulation { .. })));
    }
}
