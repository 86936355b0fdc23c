use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{gamma_units_to_ms, InitialCondition, InitialKind, PulseJob, RunConfig};
use super::{heatmap_svg, Csv, ExitCode, Field, OutputDir};
use crate::dynamics::{
    detect_transitions, estimate_lambda, hysteresis_run, integrate_partial, seeded_ground,
    ControlTarget, HysteresisOptions, Sampling, Schedule, Trajectory, TransitionEvent,
};
use crate::error::Error;
use crate::model::{big_g_from_lambda, derive, Controls, MeanFieldState, ModelParams};
use crate::phase_map::{sweep_grid, PHASE_THRESHOLD};
use crate::steady::steady_states_with_tol;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::Config,
            CliError::Numerical(_) => ExitCode::Numerical,
            CliError::Io(_) => ExitCode::Io,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// What a command wrote and how it ended. A numerical failure after some
/// output was written is reported here rather than as an error, so that the
/// partial files and the manifest still exist.
#[derive(Debug)]
pub struct Outcome {
    pub exit: ExitCode,
    pub files: Vec<String>,
    pub message: Option<String>,
}

fn missing(block: &str) -> CliError {
    CliError::Config(format!("the configuration has no [{block}] table"))
}

fn derived_json(params: &ModelParams, lambdas: &[f64]) -> Value {
    let repump: Vec<Value> = lambdas
        .iter()
        .map(|&l| {
            let d = derive(params, &Controls { eta: 0.0, lambda: l });
            json!({ "lambda": num(l), "G": d.big_g, "beta": num(d.beta) })
        })
        .collect();
    json!({
        "cooperativity": params.cooperativity(),
        "delta_shift": params.delta_shift(),
        "d_lorentz": params.d_lorentz(),
        "repump": repump,
    })
}

/// JSON has no infinity; non-finite values become strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(super::format_real(v))
    }
}

fn time_json(cfg: &RunConfig, t: f64) -> Value {
    match cfg.gamma_mhz {
        Some(g) => json!({ "gamma_units": num(t), "ms": gamma_units_to_ms(t, g) }),
        None => json!({ "gamma_units": num(t) }),
    }
}

fn write_manifest(
    out: &mut OutputDir,
    cfg: &RunConfig,
    command: &str,
    derived: Value,
    extra: Value,
    started: Instant,
) -> Result<(), CliError> {
    let config_echo = serde_json::to_value(&cfg.file).unwrap_or(Value::Null);
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config_echo,
        "config_toml": super::emit(cfg),
        "params_gamma_units": {
            "Gamma": cfg.params.big_gamma,
            "kappa": cfg.params.kappa,
            "g": cfg.params.g,
            "deltaA": cfg.params.delta_a,
            "deltaC": cfg.params.delta_c,
            "N": cfg.params.n_atoms,
        },
        "gamma_MHz": cfg.gamma_mhz,
        "derived": derived,
        "run": extra,
        "files": out.files(),
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is valid JSON") + "\n";
    std::fs::write(out.path().join("manifest.json"), text)?;
    Ok(())
}

fn outcome(out: &OutputDir, exit: ExitCode, message: Option<String>) -> Outcome {
    let mut files: Vec<String> = out.files().iter().map(|f| f.name.clone()).collect();
    files.push("manifest.json".into());
    Outcome {
        exit,
        files,
        message,
    }
}

pub fn cmd_steady(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let job = cfg.steady.as_ref().ok_or_else(|| missing("steady"))?;
    let params = cfg.params;
    let points: Vec<(f64, f64)> = job
        .lambdas
        .values
        .iter()
        .flat_map(|&l| job.etas.values.iter().map(move |&e| (e, l)))
        .collect();
    let results: Vec<_> = points
        .par_iter()
        .map(|&(eta, lambda)| {
            Controls::new(eta, lambda).and_then(|c| steady_states_with_tol(&params, &c, job.marginal_tol))
        })
        .collect();

    let mut csv = Csv::new(&[
        "eta", "lambda", "big_g", "s", "intensity", "transmittance", "n_g", "n_e", "n_f",
        "stability", "max_re_eig",
    ]);
    let mut failures = Vec::new();
    for (&(eta, lambda), res) in points.iter().zip(&results) {
        let big_g = big_g_from_lambda(lambda, params.big_gamma);
        match res {
            Ok(branches) => {
                for b in branches {
                    csv.row(&[
                        eta.into(),
                        lambda.into(),
                        big_g.into(),
                        b.s.into(),
                        b.state.intensity().into(),
                        b.transmittance.into(),
                        b.state.n_g.into(),
                        b.state.n_e.into(),
                        b.state.n_f.into(),
                        b.stability.as_str().into(),
                        b.max_re_eig().into(),
                    ]);
                }
            }
            Err(e) => {
                let nan = Field::Real(f64::NAN);
                csv.row(&[eta.into(), lambda.into(), big_g.into(), nan, nan, nan, nan, nan, nan, "error".into(), nan]);
                failures.push(format!("eta={eta}, lambda={lambda}: {e}"));
            }
        }
    }
    let mut out = OutputDir::create(dir)?;
    out.write("branches.csv", &csv.finish())?;
    write_manifest(
        &mut out,
        cfg,
        "steady",
        derived_json(&params, &job.lambdas.values),
        json!({ "points": points.len(), "failures": failures }),
        started,
    )?;
    let exit = if failures.is_empty() { ExitCode::Success } else { ExitCode::PartialSweep };
    let msg = (!failures.is_empty()).then(|| format!("{} points failed", failures.len()));
    Ok(outcome(&out, exit, msg))
}

pub fn cmd_phase_diagram(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let job = cfg.phase_diagram.as_ref().ok_or_else(|| missing("phase_diagram"))?;
    let map = sweep_grid(&cfg.params, &job.grid).map_err(|e| CliError::Config(e.to_string()))?;

    let mut csv = Csv::new(&["eta", "lambda", "big_g", "n_stable", "phase", "t_min", "t_max", "errors"]);
    for c in &map.cells {
        let t_min = c.transmittances.first().copied().unwrap_or(f64::NAN);
        let t_max = c.transmittances.last().copied().unwrap_or(f64::NAN);
        csv.row(&[
            c.eta.into(),
            c.lambda.into(),
            c.big_g.into(),
            c.n_stable.into(),
            c.phase.map_or("error", |p| p.as_str()).into(),
            t_min.into(),
            t_max.into(),
            c.error.as_deref().unwrap_or("").into(),
        ]);
    }
    let cols = map.n_cols();
    let mut bcsv = Csv::new(&["index_a", "index_b", "row_a", "col_a", "row_b", "col_b", "phase_a", "phase_b"]);
    for &(a, b) in &map.boundary {
        let name = |i: usize| map.cells[i].phase.map_or("error", |p| p.as_str());
        bcsv.row(&[
            a.into(),
            b.into(),
            (a / cols).into(),
            (a % cols).into(),
            (b / cols).into(),
            (b % cols).into(),
            name(a).into(),
            name(b).into(),
        ]);
    }
    let mut out = OutputDir::create(dir)?;
    out.write("phase_map.csv", &csv.finish())?;
    out.write("boundary.csv", &bcsv.finish())?;
    if job.svg {
        out.write("heatmap.svg", &heatmap_svg(&map))?;
    }
    let lambdas: Vec<f64> = (0..map.n_rows()).map(|r| map.cell(r, 0).lambda).collect();
    let failed = map.n_failed();
    write_manifest(
        &mut out,
        cfg,
        "phase-diagram",
        derived_json(&cfg.params, &lambdas),
        json!({
            "rows": map.n_rows(),
            "cols": cols,
            "layout": "row-major, one row per repump value, one column per eta",
            "phase_threshold": PHASE_THRESHOLD,
            "failed_cells": failed,
        }),
        started,
    )?;
    let exit = if failed == 0 { ExitCode::Success } else { ExitCode::PartialSweep };
    Ok(outcome(&out, exit, (failed > 0).then(|| format!("{failed} cells failed"))))
}

fn initial_state(init: &InitialCondition, params: &ModelParams) -> MeanFieldState {
    match init.kind {
        InitialKind::Ground => seeded_ground(params.n_atoms, init.seed_alpha),
        InitialKind::Shelved => MeanFieldState {
            n_f: params.n_atoms,
            ..Default::default()
        },
    }
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut csv = Csv::new(&[
        "t", "re_alpha", "im_alpha", "re_m", "im_m", "n_e", "n_g", "n_f", "eta", "lambda",
        "transmittance",
    ]);
    for i in 0..traj.len() {
        let s = &traj.states[i];
        let c = &traj.controls_trace[i];
        csv.row(&[
            traj.times[i].into(),
            s.alpha.re.into(),
            s.alpha.im.into(),
            s.m_pol.re.into(),
            s.m_pol.im.into(),
            s.n_e.into(),
            s.n_g.into(),
            s.n_f.into(),
            c.eta.into(),
            c.lambda.into(),
            traj.transmittance_trace[i].into(),
        ]);
    }
    csv.finish()
}

fn events_csv(events: &[TransitionEvent], gamma_mhz: Option<f64>) -> String {
    let mut csv = Csv::new(&["time", "time_ms", "direction"]);
    for e in events {
        let ms = gamma_mhz.map_or(f64::NAN, |g| gamma_units_to_ms(e.time, g));
        csv.row(&[e.time.into(), ms.into(), e.direction.as_str().into()]);
    }
    csv.finish()
}

/// Qualitative shape of a transmittance trace started in the blockade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSummary {
    pub final_transmittance: f64,
    pub max_transmittance: f64,
    /// First crossing of the upper threshold.
    pub switch_time: f64,
    /// From the last lower-threshold crossing to the upper-threshold crossing.
    pub rise_time: f64,
    /// Peaks followed by a drop of at least 0.1 before the trace settles.
    pub oscillations: usize,
    pub label: &'static str,
}

pub fn summarize_regime(traj: &Trajectory, low: f64, high: f64) -> RegimeSummary {
    let tr = &traj.transmittance_trace;
    let t = &traj.times;
    let final_t = tr.last().copied().unwrap_or(0.0);
    let max_t = tr.iter().copied().fold(0.0, f64::max);
    let up = detect_transitions(traj, low, high)
        .into_iter()
        .find(|e| e.direction == crate::dynamics::Direction::Up);
    let Some(up) = up else {
        return RegimeSummary {
            final_transmittance: final_t,
            max_transmittance: max_t,
            switch_time: f64::NAN,
            rise_time: f64::NAN,
            oscillations: 0,
            label: "blockaded",
        };
    };
    let i_up = t.partition_point(|&x| x < up.time);
    let start = (0..i_up).rev().find(|&i| tr[i] < low).unwrap_or(0);
    let low_crossing = if start + 1 < t.len() && tr[start + 1] != tr[start] {
        t[start] + (t[start + 1] - t[start]) * ((low - tr[start]) / (tr[start + 1] - tr[start])).clamp(0.0, 1.0)
    } else {
        t[start]
    };
    let rise_time = up.time - low_crossing;

    let mut oscillations = 0;
    let mut peak = f64::NEG_INFINITY;
    for &v in &tr[start..] {
        if v > peak {
            peak = v;
        } else if peak - v >= 0.1 {
            oscillations += 1;
            peak = v;
        }
    }
    let label = if oscillations >= 2 {
        "oscillatory"
    } else if rise_time <= 0.2 * up.time {
        "runaway"
    } else {
        "smooth"
    };
    RegimeSummary {
        final_transmittance: final_t,
        max_transmittance: max_t,
        switch_time: up.time,
        rise_time,
        oscillations,
        label,
    }
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let job = cfg.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let params = cfg.params;
    let init = initial_state(&job.initial, &params);
    let mut out = OutputDir::create(dir)?;
    let mut failures: Vec<String> = Vec::new();
    let mut run_info = serde_json::Map::new();
    let mut lambdas_used = Vec::new();

    if let Some((eta_s, lambda_s)) = &job.schedules {
        let (traj, err) = integrate_partial(&init, &params, eta_s, lambda_s, &job.loss, job.t_end, &job.integrator);
        out.write("trajectory.csv", &trajectory_csv(&traj))?;
        let events = detect_transitions(&traj, job.events.0, job.events.1);
        out.write("events.csv", &events_csv(&events, cfg.gamma_mhz))?;
        run_info.insert("accepted_steps".into(), json!(traj.accepted_steps));
        run_info.insert("rejected_steps".into(), json!(traj.rejected_steps));
        run_info.insert("max_error_estimate".into(), json!(traj.max_error_estimate));
        run_info.insert("global_error_estimate".into(), json!(traj.global_error_estimate));
        if let Some(e) = err {
            if let Error::Stiffness { state, .. } | Error::NegativePopulation { state, .. } = &e {
                run_info.insert("last_state".into(), json!(format!("{state:?}")));
            }
            failures.push(e.to_string());
        }
        if let Schedule::Constant { value } = lambda_s {
            lambdas_used.push(*value);
        }
    }

    if let Some((etas, lambdas)) = &job.regimes {
        let grid: Vec<(usize, usize)> = (0..lambdas.len())
            .flat_map(|r| (0..etas.len()).map(move |c| (r, c)))
            .collect();
        let runs: Vec<(Trajectory, Option<Error>)> = grid
            .par_iter()
            .map(|&(r, c)| {
                integrate_partial(
                    &init,
                    &params,
                    &Schedule::constant(etas[c]),
                    &Schedule::constant(lambdas[r]),
                    &job.loss,
                    job.t_end,
                    &job.integrator,
                )
            })
            .collect();
        let mut table = Csv::new(&[
            "row", "col", "eta", "lambda", "big_g", "final_transmittance", "max_transmittance",
            "switch_time", "rise_time", "oscillations", "regime", "file",
        ]);
        for (&(r, c), (traj, err)) in grid.iter().zip(&runs) {
            let name = format!("regime_{r}_{c}.csv");
            out.write(&name, &trajectory_csv(traj))?;
            let sum = summarize_regime(traj, job.events.0, job.events.1);
            let label = if err.is_some() { "error" } else { sum.label };
            table.row(&[
                r.into(),
                c.into(),
                etas[c].into(),
                lambdas[r].into(),
                big_g_from_lambda(lambdas[r], params.big_gamma).into(),
                sum.final_transmittance.into(),
                sum.max_transmittance.into(),
                sum.switch_time.into(),
                sum.rise_time.into(),
                sum.oscillations.into(),
                label.into(),
                name.as_str().into(),
            ]);
            if let Some(e) = err {
                failures.push(format!("{name}: {e}"));
            }
        }
        out.write("regimes.csv", &table.finish())?;
        lambdas_used.extend(lambdas.iter().copied());
    }

    run_info.insert("t_end".into(), time_json(cfg, job.t_end));
    run_info.insert("seed_alpha".into(), json!(job.initial.seed_alpha));
    run_info.insert("initial".into(), json!(format!("{:?}", job.initial.kind).to_lowercase()));
    run_info.insert("loss".into(), json!(job.loss));
    run_info.insert("event_thresholds".into(), json!([job.events.0, job.events.1]));
    run_info.insert("failures".into(), json!(failures));
    write_manifest(&mut out, cfg, "simulate", derived_json(&params, &lambdas_used), Value::Object(run_info), started)?;
    let exit = if failures.is_empty() { ExitCode::Success } else { ExitCode::Numerical };
    Ok(outcome(&out, exit, failures.first().cloned()))
}

pub fn cmd_hysteresis(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let job = cfg.hysteresis.as_ref().ok_or_else(|| missing("hysteresis"))?;
    let fixed = Controls {
        eta: job.fixed_eta.unwrap_or(0.0),
        lambda: job.fixed_lambda.unwrap_or(0.0),
    };
    let opts = HysteresisOptions {
        grid_points: job.grid_points,
        grid_scale: job.grid_scale,
        integrator: job.integrator.clone(),
    };
    let rec = hysteresis_run(&cfg.params, job.target, &job.ramp, &fixed, &job.loss, &opts)
        .map_err(CliError::Numerical)?;
    let mut out = OutputDir::create(dir)?;
    let control = job.target.as_str();
    for (k, cyc) in rec.cycles.iter().enumerate() {
        for (tag, curve) in [("up", &cyc.up), ("down", &cyc.down)] {
            let mut csv = Csv::new(&[control, "transmittance"]);
            for (&c, &t) in rec.control_grid.iter().zip(curve.iter()) {
                csv.row(&[c.into(), t.into()]);
            }
            out.write(&format!("cycle_{}_{tag}.csv", k + 1), &csv.finish())?;
        }
    }
    let mut areas = Csv::new(&["cycle", "area"]);
    for (k, a) in rec.loop_areas.iter().enumerate() {
        areas.row(&[(k + 1).into(), (*a).into()]);
    }
    out.write("loop_areas.csv", &areas.finish())?;
    let Schedule::LinearRampCycle { t_up, t_down, .. } = job.ramp else {
        unreachable!("hysteresis jobs always carry a ramp")
    };
    let lambdas: Vec<f64> = match job.target {
        ControlTarget::Eta => vec![fixed.lambda],
        ControlTarget::Lambda => vec![],
    };
    write_manifest(
        &mut out,
        cfg,
        "hysteresis",
        derived_json(&cfg.params, &lambdas),
        json!({
            "target": control,
            "ramp": job.ramp,
            "t_up": time_json(cfg, t_up),
            "t_down": time_json(cfg, t_down),
            "fixed_eta": job.fixed_eta,
            "fixed_lambda": job.fixed_lambda.map(num),
            "grid_scale": format!("{:?}", job.grid_scale).to_lowercase(),
            "area_orientation": "positive when the down sweep remembers the bright state",
            "loss": job.loss,
            "seed_alpha": crate::dynamics::DEFAULT_SEED_ALPHA,
        }),
        started,
    )?;
    Ok(outcome(&out, ExitCode::Success, None))
}

/// The regular output grid plus a dense grid in every estimation window.
fn pulse_sample_times(job: &PulseJob, window: f64) -> Vec<f64> {
    const PER_WINDOW: usize = 64;
    let t_end = job.t_end();
    let n = match job.integrator.sampling {
        Sampling::Linear(n) | Sampling::Log(n) => n.max(2),
        Sampling::Times(ref v) => v.len().max(2),
    };
    let mut times: Vec<f64> = (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect();
    for k in 1..job.periods {
        let t0 = k as f64 * job.period;
        times.extend(
            (0..=PER_WINDOW)
                .map(|i| t0 + window * i as f64 / PER_WINDOW as f64)
                .filter(|&t| t <= t_end),
        );
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

pub fn cmd_pulse(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let job = cfg.pulse.as_ref().ok_or_else(|| missing("pulse"))?;
    let params = cfg.params;
    let init = initial_state(&job.initial, &params);
    let t_end = job.t_end();
    let lambda_s = job.lambda_schedule();
    let window = job.estimate_window / job.lambda_high;
    let integrator = job
        .integrator
        .clone()
        .with_sampling(Sampling::Times(pulse_sample_times(job, window)));
    let (traj, err) = integrate_partial(
        &init,
        &params,
        &Schedule::constant(job.eta),
        &lambda_s,
        &job.loss,
        t_end,
        &integrator,
    );
    let mut out = OutputDir::create(dir)?;
    out.write("trajectory.csv", &trajectory_csv(&traj))?;
    let events = detect_transitions(&traj, job.events.0, job.events.1);
    out.write("events.csv", &events_csv(&events, cfg.gamma_mhz))?;

    let mut per = Csv::new(&["period", "start", "n_up", "n_down"]);
    for k in 0..job.periods {
        let t0 = k as f64 * job.period;
        let t1 = t0 + job.period;
        let inside = |d| {
            events
                .iter()
                .filter(|e| e.direction == d && e.time >= t0 && e.time < t1)
                .count()
        };
        per.row(&[
            (k as usize).into(),
            t0.into(),
            inside(crate::dynamics::Direction::Up).into(),
            inside(crate::dynamics::Direction::Down).into(),
        ]);
    }
    out.write("periods.csv", &per.finish())?;

    // repump switch-on at the start of every period after the first
    let mut est = Csv::new(&["switch_on", "lambda", "lambda_estimate", "relative_error"]);
    for k in 1..job.periods {
        let t0 = k as f64 * job.period;
        if t0 + window > traj.times.last().copied().unwrap_or(0.0) {
            break;
        }
        let (v, rel) = match estimate_lambda(&traj, (t0, t0 + window), &params) {
            Ok(v) => (v, v / job.lambda_high - 1.0),
            Err(_) => (f64::NAN, f64::NAN),
        };
        est.row(&[t0.into(), job.lambda_high.into(), v.into(), rel.into()]);
    }
    out.write("lambda_estimates.csv", &est.finish())?;

    let mut failures = Vec::new();
    if let Some(e) = &err {
        failures.push(e.to_string());
    }
    write_manifest(
        &mut out,
        cfg,
        "pulse",
        derived_json(&params, &[job.lambda_low, job.lambda_high]),
        json!({
            "eta": job.eta,
            "lambda_schedule": lambda_s,
            "period": time_json(cfg, job.period),
            "t_end": time_json(cfg, t_end),
            "seed_alpha": job.initial.seed_alpha,
            "loss": job.loss,
            "estimate_window": time_json(cfg, window),
            "event_thresholds": [job.events.0, job.events.1],
            "accepted_steps": traj.accepted_steps,
            "failures": failures,
        }),
        started,
    )?;
    let exit = if err.is_none() { ExitCode::Success } else { ExitCode::Numerical };
    Ok(outcome(&out, exit, err.map(|e| e.to_string())))
}
