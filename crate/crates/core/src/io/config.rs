//! Run configuration: a TOML file with the model parameters at top level and
//! one optional table per command.
//!
//! Rates are given either in units of `gamma` (`kappa`, `g`, `deltaA`,
//! `deltaC`) or in MHz (`kappa_MHz`, ...) together with `gamma_MHz`; one file
//! uses one system. `Gamma_rel` and `N` are dimensionless. Any time key `t`
//! may instead be given as `t_ms`, which also needs `gamma_MHz`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    ControlTarget, GridScale, IntegratorOptions, LossOptions, Sampling, Schedule,
    DEFAULT_SEED_ALPHA,
};
use crate::model::{lambda_from_big_g, ModelParams, DEFAULT_GAMMA_MHZ};
use crate::phase_map::{Axis, AxisScale, GridSpec, RepumpParam};

/// Atom lifetime used when loss is enabled without an explicit rate.
pub const DEFAULT_LOSS_LIFETIME_MS: f64 = 350.0;
pub const DEFAULT_LOSS_F_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// `ms -> 1/gamma` for a half-width of `gamma_mhz` (angular units).
pub fn ms_to_gamma_units(t_ms: f64, gamma_mhz: f64) -> f64 {
    t_ms * 1e-3 * 2.0 * PI * gamma_mhz * 1e6
}

pub fn gamma_units_to_ms(t: f64, gamma_mhz: f64) -> f64 {
    t / (2.0 * PI * gamma_mhz * 1e6) * 1e3
}

// ---------------------------------------------------------------- raw file

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrScan {
    Scalar(f64),
    Scan(AxisConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Ramp,
    Square,
    Piecewise,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScheduleKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_up_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_down: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_down_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    /// `[t, value]` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 2]>>,
    /// Knot times are in ms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots_ms: Option<bool>,
}

/// A plain number is a constant schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Value(f64),
    Table(ScheduleTable),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_f: Option<f64>,
}

/// Integrator settings shared by the time-domain commands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// All atoms in `|g>`, cavity seeded with a tiny field.
    Ground,
    /// All atoms in `|f>`, empty cavity.
    Shelved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    pub eta: ScalarOrScan,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub big_g: Option<ScalarOrScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<ScalarOrScan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub eta: AxisConfig,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub big_g: Option<AxisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<AxisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeGridConfig {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<ScheduleConfig>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub big_g: Option<ScheduleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regimes: Option<RegimeGridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisConfig {
    /// `eta`, `lambda`, or `G` (ramp bounds given as `G`, ramp linear in
    /// `lambda`).
    pub target: String,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_up_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_down: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_down_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub big_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_high: Option<f64>,
    /// Length of the repump-rate estimation window after each switch-on, as
    /// a multiple of `1/lambda_high`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Reserved; mean-field runs are deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// The file as written, before unit conversion and defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "gamma_MHz", default, skip_serializing_if = "Option::is_none")]
    pub gamma_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(rename = "deltaA", default, skip_serializing_if = "Option::is_none")]
    pub delta_a: Option<f64>,
    #[serde(rename = "deltaC", default, skip_serializing_if = "Option::is_none")]
    pub delta_c: Option<f64>,
    #[serde(rename = "kappa_MHz", default, skip_serializing_if = "Option::is_none")]
    pub kappa_mhz: Option<f64>,
    #[serde(rename = "g_MHz", default, skip_serializing_if = "Option::is_none")]
    pub g_mhz: Option<f64>,
    #[serde(rename = "deltaA_MHz", default, skip_serializing_if = "Option::is_none")]
    pub delta_a_mhz: Option<f64>,
    #[serde(rename = "deltaC_MHz", default, skip_serializing_if = "Option::is_none")]
    pub delta_c_mhz: Option<f64>,
    #[serde(rename = "Gamma_rel", default, skip_serializing_if = "Option::is_none")]
    pub gamma_rel: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady: Option<SteadyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_diagram: Option<PhaseDiagramConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hysteresis: Option<HysteresisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

// ------------------------------------------------------------ resolved jobs

/// A value or a scan of the drive or repump control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlValues {
    pub values: Vec<f64>,
    pub is_scan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyJob {
    pub etas: ControlValues,
    /// Repump rates, `inf` for `G = 1`.
    pub lambdas: ControlValues,
    pub marginal_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagramJob {
    pub grid: GridSpec,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialCondition {
    pub kind: InitialKind,
    pub seed_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateJob {
    pub initial: InitialCondition,
    pub t_end: f64,
    /// `None` when only the regime grid is requested.
    pub schedules: Option<(Schedule, Schedule)>,
    pub loss: LossOptions,
    pub integrator: IntegratorOptions,
    pub events: (f64, f64),
    pub regimes: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HysteresisJob {
    pub target: ControlTarget,
    pub ramp: Schedule,
    /// The control that is not ramped.
    pub fixed_eta: Option<f64>,
    pub fixed_lambda: Option<f64>,
    pub grid_points: usize,
    pub grid_scale: GridScale,
    pub loss: LossOptions,
    pub integrator: IntegratorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseJob {
    pub eta: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub period: f64,
    pub duty: f64,
    pub periods: u32,
    pub initial: InitialCondition,
    pub loss: LossOptions,
    pub integrator: IntegratorOptions,
    pub events: (f64, f64),
    pub estimate_window: f64,
}

impl PulseJob {
    pub fn t_end(&self) -> f64 {
        self.period * self.periods as f64
    }

    pub fn lambda_schedule(&self) -> Schedule {
        Schedule::SquareWave {
            low: self.lambda_low,
            high: self.lambda_high,
            period: self.period,
            duty: self.duty,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub params: ModelParams,
    pub gamma_mhz: Option<f64>,
    pub steady: Option<SteadyJob>,
    pub phase_diagram: Option<PhaseDiagramJob>,
    pub simulate: Option<SimulateJob>,
    pub hysteresis: Option<HysteresisJob>,
    pub pulse: Option<PulseJob>,
    pub output_dir: Option<String>,
}

// ------------------------------------------------------------------ parsing

/// Line of `key` inside `[table]` (top level for `""`), 1-based.
fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = header(l) {
            current = name;
            if !table.is_empty() && key.is_empty() && current == table {
                return Some(i + 1);
            }
            continue;
        }
        if current == table && assignment_key(l).as_deref() == Some(key) {
            return Some(i + 1);
        }
    }
    if !table.is_empty() {
        return locate(text, table, "");
    }
    None
}

fn header(line: &str) -> Option<String> {
    let l = line.split('#').next()?.trim();
    if l.starts_with("[[") {
        return Some(l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    }
    if l.starts_with('[') && l.ends_with(']') {
        return Some(l[1..l.len() - 1].trim().to_string());
    }
    None
}

fn assignment_key(line: &str) -> Option<String> {
    if line.starts_with('#') || line.starts_with('[') {
        return None;
    }
    let (k, _) = line.split_once('=')?;
    let k = k.trim().trim_matches('"').trim_matches('\'');
    if k.is_empty() || k.contains(char::is_whitespace) {
        return None;
    }
    Some(k.to_string())
}

/// Duplicate keys and tables, reported with both line numbers.
fn check_duplicates(text: &str) -> Result<(), ConfigError> {
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut tables: HashMap<String, usize> = HashMap::new();
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(name) = header(l) {
            if !l.starts_with("[[") {
                if let Some(first) = tables.insert(name.clone(), i + 1) {
                    return Err(ConfigError {
                        line: Some(i + 1),
                        message: format!("duplicate table [{name}] (first defined on line {first})"),
                    });
                }
            }
            current = name;
            continue;
        }
        if let Some(k) = assignment_key(l) {
            if let Some(first) = seen.insert((current.clone(), k.clone()), i + 1) {
                return Err(ConfigError {
                    line: Some(i + 1),
                    message: format!(
                        "duplicate key `{k}` on lines {first} and {}",
                        i + 1
                    ),
                });
            }
        }
    }
    Ok(())
}

fn toml_error(e: toml::de::Error, text: &str) -> ConfigError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    ConfigError {
        line,
        message: e.message().to_string(),
    }
}

struct Ctx<'a> {
    text: &'a str,
    gamma_mhz: Option<f64>,
}

impl Ctx<'_> {
    fn err(&self, table: &str, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(self.text, table, key),
            message: format!("{}{}", if table.is_empty() { String::new() } else { format!("[{table}] ") }, msg.into()),
        }
    }

    /// A time given as `key` in `1/gamma` or `key_ms`.
    fn time(
        &self,
        table: &str,
        key: &str,
        plain: Option<f64>,
        ms: Option<f64>,
    ) -> Result<Option<f64>, ConfigError> {
        let t = match (plain, ms) {
            (Some(_), Some(_)) => {
                return Err(self.err(table, key, format!("give either `{key}` or `{key}_ms`, not both")))
            }
            (Some(t), None) => Some(t),
            (None, Some(t)) => {
                let Some(gm) = self.gamma_mhz else {
                    return Err(self.err(
                        table,
                        &format!("{key}_ms"),
                        format!("`{key}_ms` needs `gamma_MHz` for the unit conversion"),
                    ));
                };
                Some(ms_to_gamma_units(t, gm))
            }
            (None, None) => None,
        };
        if let Some(t) = t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(self.err(table, key, format!("`{key}` must be positive, got {t}")));
            }
        }
        Ok(t)
    }

    fn lambda_of_g(&self, table: &str, key: &str, g: f64, params: &ModelParams) -> Result<f64, ConfigError> {
        if !(g > 0.0 && g <= 1.0) {
            return Err(self.err(table, key, format!("G must lie in (0, 1], got {g}")));
        }
        lambda_from_big_g(g, params.big_gamma).map_err(|e| self.err(table, key, e.to_string()))
    }

    fn non_negative(&self, table: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v.is_nan() || v < 0.0 {
            return Err(self.err(table, key, format!("`{key}` must be >= 0, got {v}")));
        }
        Ok(v)
    }
}

fn scale(s: Option<Scale>) -> AxisScale {
    match s {
        Some(Scale::Log) => AxisScale::Log,
        _ => AxisScale::Linear,
    }
}

fn resolve_params(f: &ConfigFile, ctx: &Ctx) -> Result<ModelParams, ConfigError> {
    let gamma_units = [f.kappa, f.g, f.delta_a, f.delta_c].iter().any(Option::is_some);
    let physical = [f.kappa_mhz, f.g_mhz, f.delta_a_mhz, f.delta_c_mhz]
        .iter()
        .any(Option::is_some);
    if gamma_units && physical {
        let key = if f.kappa_mhz.is_some() { "kappa_MHz" } else if f.g_mhz.is_some() { "g_MHz" } else if f.delta_a_mhz.is_some() { "deltaA_MHz" } else { "deltaC_MHz" };
        return Err(ctx.err(
            "",
            key,
            "rates mix units of gamma and MHz; use one system per file",
        ));
    }
    let (kappa, g, delta_a, delta_c, names) = if physical {
        let Some(gm) = f.gamma_mhz else {
            return Err(ctx.err("", "kappa_MHz", "rates in MHz need `gamma_MHz`"));
        };
        if !(gm > 0.0 && gm.is_finite()) {
            return Err(ctx.err("", "gamma_MHz", format!("`gamma_MHz` must be positive, got {gm}")));
        }
        (
            f.kappa_mhz.map(|v| v / gm),
            f.g_mhz.map(|v| v / gm),
            f.delta_a_mhz.map(|v| v / gm),
            f.delta_c_mhz.map(|v| v / gm),
            ["kappa_MHz", "g_MHz", "deltaA_MHz"],
        )
    } else {
        (f.kappa, f.g, f.delta_a, f.delta_c, ["kappa", "g", "deltaA"])
    };
    let mut missing = Vec::new();
    for (v, name) in [(kappa, names[0]), (g, names[1]), (delta_a, names[2])] {
        if v.is_none() {
            missing.push(if physical { name.to_string() } else { format!("{name} (or {name}_MHz)") });
        }
    }
    if f.gamma_rel.is_none() {
        missing.push("Gamma_rel".into());
    }
    if f.n_atoms.is_none() {
        missing.push("N".into());
    }
    if !missing.is_empty() {
        return Err(ConfigError {
            line: None,
            message: format!("missing required keys: {}", missing.join(", ")),
        });
    }
    let params = ModelParams {
        big_gamma: f.gamma_rel.unwrap_or_default(),
        kappa: kappa.unwrap_or_default(),
        g: g.unwrap_or_default(),
        delta_a: delta_a.unwrap_or_default(),
        delta_c: delta_c.unwrap_or(0.0),
        n_atoms: f.n_atoms.unwrap_or_default(),
    };
    params.validate().map_err(|e| {
        let msg = e.to_string();
        let key = if msg.contains("Gamma") {
            "Gamma_rel"
        } else if msg.contains("kappa") {
            names[0]
        } else if msg.contains(" g ") || msg.starts_with("invalid argument: g ") {
            names[1]
        } else if msg.contains("N ") || msg.contains("atom") {
            "N"
        } else {
            names[2]
        };
        ctx.err("", key, msg)
    })?;
    Ok(params)
}

fn resolve_loss(f: &ConfigFile, ctx: &Ctx, enabled_override: Option<bool>) -> Result<LossOptions, ConfigError> {
    let cfg = f.loss.clone().unwrap_or_default();
    let enabled = enabled_override.or(cfg.enabled).unwrap_or(false);
    if !enabled {
        return Ok(LossOptions::disabled());
    }
    let lifetime = match ctx.time("loss", "lifetime", cfg.lifetime, cfg.lifetime_ms)? {
        Some(t) => t,
        None => ms_to_gamma_units(
            DEFAULT_LOSS_LIFETIME_MS,
            ctx.gamma_mhz.unwrap_or(DEFAULT_GAMMA_MHZ),
        ),
    };
    let f_factor = cfg.f_factor.unwrap_or(DEFAULT_LOSS_F_FACTOR);
    ctx.non_negative("loss", "f_factor", f_factor)?;
    let mut loss = LossOptions::from_lifetime(lifetime, f_factor);
    if let Some(r) = cfg.rate_g {
        loss.rate_g = ctx.non_negative("loss", "rate_g", r)?;
    }
    if let Some(r) = cfg.rate_e {
        loss.rate_e = ctx.non_negative("loss", "rate_e", r)?;
    }
    if let Some(r) = cfg.rate_f {
        loss.rate_f = ctx.non_negative("loss", "rate_f", r)?;
    }
    Ok(loss)
}

fn resolve_solver(s: &Option<SolverConfig>, ctx: &Ctx, table: &str) -> Result<IntegratorOptions, ConfigError> {
    let mut o = IntegratorOptions::default();
    let Some(s) = s else { return Ok(o) };
    let t = format!("{table}.solver");
    if let Some(v) = s.rtol {
        if !(v > 0.0 && v < 1.0) {
            return Err(ctx.err(&t, "rtol", format!("`rtol` must lie in (0, 1), got {v}")));
        }
        o.rtol = v;
    }
    if let Some(v) = s.atol {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ctx.err(&t, "atol", format!("`atol` must be positive, got {v}")));
        }
        o.atol = v;
    }
    if let Some(v) = s.max_step {
        if !(v > 0.0) {
            return Err(ctx.err(&t, "max_step", format!("`max_step` must be positive, got {v}")));
        }
        o.max_step = v;
    }
    if let Some(v) = s.max_steps {
        o.max_steps = v;
    }
    Ok(o)
}

fn axis(a: &AxisConfig, ctx: &Ctx, table: &str, key: &str) -> Result<Axis, ConfigError> {
    let ax = Axis::new(a.min, a.max, a.points, scale(a.scale));
    ax.validate(key).map_err(|e| ctx.err(table, key, e.to_string()))?;
    Ok(ax)
}

fn control_values(v: &ScalarOrScan, ctx: &Ctx, table: &str, key: &str) -> Result<ControlValues, ConfigError> {
    Ok(match v {
        ScalarOrScan::Scalar(x) => ControlValues {
            values: vec![*x],
            is_scan: false,
        },
        ScalarOrScan::Scan(a) => ControlValues {
            values: axis(a, ctx, table, key)?.values(),
            is_scan: true,
        },
    })
}

fn repump_key<'a, T>(
    ctx: &Ctx,
    table: &str,
    lambda: &'a Option<T>,
    big_g: &'a Option<T>,
) -> Result<(&'a T, bool), ConfigError> {
    match (lambda, big_g) {
        (Some(l), None) => Ok((l, false)),
        (None, Some(g)) => Ok((g, true)),
        (Some(_), Some(_)) => Err(ctx.err(table, "G", "give either `lambda` or `G`, not both")),
        (None, None) => Err(ctx.err(table, "", "missing repump rate: give `lambda` or `G`")),
    }
}

fn resolve_steady(c: &SteadyConfig, ctx: &Ctx, params: &ModelParams) -> Result<SteadyJob, ConfigError> {
    let t = "steady";
    let etas = control_values(&c.eta, ctx, t, "eta")?;
    for &e in &etas.values {
        ctx.non_negative(t, "eta", e)?;
    }
    let (rep, is_g) = repump_key(ctx, t, &c.lambda, &c.big_g)?;
    let key = if is_g { "G" } else { "lambda" };
    let mut lambdas = control_values(rep, ctx, t, key)?;
    for v in lambdas.values.iter_mut() {
        *v = if is_g {
            ctx.lambda_of_g(t, key, *v, params)?
        } else {
            ctx.non_negative(t, key, *v)?
        };
        if *v == 0.0 {
            return Err(ctx.err(t, key, "the steady state needs a positive repump rate"));
        }
    }
    let marginal_tol = c.marginal_tol.unwrap_or(crate::steady::DEFAULT_MARGINAL_TOL);
    if !(marginal_tol > 0.0) {
        return Err(ctx.err(t, "marginal_tol", "`marginal_tol` must be positive"));
    }
    Ok(SteadyJob {
        etas,
        lambdas,
        marginal_tol,
    })
}

fn resolve_phase_diagram(c: &PhaseDiagramConfig, ctx: &Ctx) -> Result<PhaseDiagramJob, ConfigError> {
    let t = "phase_diagram";
    let eta_axis = axis(&c.eta, ctx, t, "eta")?;
    let (rep, is_g) = repump_key(ctx, t, &c.lambda, &c.big_g)?;
    let key = if is_g { "G" } else { "lambda" };
    let grid = GridSpec {
        eta_axis,
        repump_axis: axis(rep, ctx, t, key)?,
        repump_param: if is_g { RepumpParam::BigG } else { RepumpParam::Lambda },
    };
    grid.validate().map_err(|e| ctx.err(t, key, e.to_string()))?;
    Ok(PhaseDiagramJob {
        grid,
        svg: c.svg.unwrap_or(true),
    })
}

fn resolve_schedule(
    c: &ScheduleConfig,
    ctx: &Ctx,
    table: &str,
    key: &str,
    as_g: Option<&ModelParams>,
) -> Result<Schedule, ConfigError> {
    let conv = |v: f64| -> Result<f64, ConfigError> {
        match as_g {
            Some(p) => ctx.lambda_of_g(table, key, v, p),
            None => ctx.non_negative(table, key, v),
        }
    };
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| ctx.err(table, key, format!("schedule `{key}` needs `{name}`")))
    };
    let s = match c {
        ScheduleConfig::Value(v) => Schedule::constant(conv(*v)?),
        ScheduleConfig::Table(tb) => match tb.kind.unwrap_or(ScheduleKind::Constant) {
            ScheduleKind::Constant => Schedule::constant(conv(need(tb.value, "value")?)?),
            ScheduleKind::Ramp => Schedule::LinearRampCycle {
                min: conv(need(tb.min, "min")?)?,
                max: conv(need(tb.max, "max")?)?,
                t_up: need(ctx.time(table, key, tb.t_up, tb.t_up_ms)?, "t_up")?,
                t_down: need(ctx.time(table, key, tb.t_down, tb.t_down_ms)?, "t_down")?,
                n_cycles: tb.cycles.unwrap_or(1),
            },
            ScheduleKind::Square => Schedule::SquareWave {
                low: conv(need(tb.low, "low")?)?,
                high: conv(need(tb.high, "high")?)?,
                period: need(ctx.time(table, key, tb.period, tb.period_ms)?, "period")?,
                duty: tb.duty.unwrap_or(0.5),
            },
            ScheduleKind::Piecewise => {
                let knots = tb
                    .knots
                    .as_ref()
                    .ok_or_else(|| ctx.err(table, key, format!("schedule `{key}` needs `knots`")))?;
                let in_ms = tb.knots_ms.unwrap_or(false);
                let mut out = Vec::with_capacity(knots.len());
                for &[t, v] in knots {
                    let t = if in_ms {
                        ms_to_gamma_units(
                            t,
                            ctx.gamma_mhz.ok_or_else(|| {
                                ctx.err(table, key, "`knots_ms` needs `gamma_MHz`")
                            })?,
                        )
                    } else {
                        t
                    };
                    out.push((t, conv(v)?));
                }
                Schedule::PiecewiseLinear { knots: out }
            }
        },
    };
    s.validate().map_err(|e| ctx.err(table, key, e.to_string()))?;
    if !s.is_finite() && as_g.is_none() && key == "eta" {
        return Err(ctx.err(table, key, "eta must be finite"));
    }
    Ok(s)
}

fn initial(kind: Option<InitialKind>, seed: Option<f64>, ctx: &Ctx, table: &str) -> Result<InitialCondition, ConfigError> {
    let seed_alpha = seed.unwrap_or(DEFAULT_SEED_ALPHA);
    if !seed_alpha.is_finite() {
        return Err(ctx.err(table, "seed_alpha", "`seed_alpha` must be finite"));
    }
    Ok(InitialCondition {
        kind: kind.unwrap_or(InitialKind::Ground),
        seed_alpha,
    })
}

fn thresholds(low: Option<f64>, high: Option<f64>, ctx: &Ctx, table: &str) -> Result<(f64, f64), ConfigError> {
    let (lo, hi) = (low.unwrap_or(0.1), high.unwrap_or(0.5));
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(ctx.err(table, "events_low", format!("need 0 <= events_low < events_high <= 1, got {lo}, {hi}")));
    }
    Ok((lo, hi))
}

fn sampling(kind: Option<Scale>, n: Option<usize>, ctx: &Ctx, table: &str) -> Result<Sampling, ConfigError> {
    let n = n.unwrap_or(2000);
    if n < 2 {
        return Err(ctx.err(table, "samples", "`samples` must be at least 2"));
    }
    Ok(match kind {
        Some(Scale::Log) => Sampling::Log(n),
        _ => Sampling::Linear(n),
    })
}

fn resolve_simulate(c: &SimulateConfig, f: &ConfigFile, ctx: &Ctx, params: &ModelParams) -> Result<SimulateJob, ConfigError> {
    let t = "simulate";
    let t_end = ctx
        .time(t, "t_end", c.t_end, c.t_end_ms)?
        .ok_or_else(|| ctx.err(t, "", "missing `t_end` (or `t_end_ms`)"))?;
    let schedules = match &c.eta {
        Some(eta) => {
            let eta = resolve_schedule(eta, ctx, t, "eta", None)?;
            let (rep, is_g) = repump_key(ctx, t, &c.lambda, &c.big_g)?;
            let key = if is_g { "G" } else { "lambda" };
            let lambda = resolve_schedule(rep, ctx, t, key, is_g.then_some(params))?;
            Some((eta, lambda))
        }
        None => {
            if c.regimes.is_none() {
                return Err(ctx.err(t, "", "give an `eta` schedule or a `regimes` grid"));
            }
            None
        }
    };
    let regimes = match &c.regimes {
        Some(r) => {
            let tt = "simulate.regimes";
            if r.eta.is_empty() || r.lambda.is_empty() {
                return Err(ctx.err(tt, "eta", "regime grid axes must be non-empty"));
            }
            for &e in &r.eta {
                ctx.non_negative(tt, "eta", e)?;
            }
            for &l in &r.lambda {
                ctx.non_negative(tt, "lambda", l)?;
            }
            Some((r.eta.clone(), r.lambda.clone()))
        }
        None => None,
    };
    Ok(SimulateJob {
        initial: initial(c.initial, c.seed_alpha, ctx, t)?,
        t_end,
        schedules,
        loss: resolve_loss(f, ctx, c.loss)?,
        integrator: resolve_solver(&c.solver, ctx, t)?.with_sampling(sampling(c.sampling, c.samples, ctx, t)?),
        events: thresholds(c.events_low, c.events_high, ctx, t)?,
        regimes,
    })
}

fn resolve_hysteresis(c: &HysteresisConfig, f: &ConfigFile, ctx: &Ctx, params: &ModelParams) -> Result<HysteresisJob, ConfigError> {
    let t = "hysteresis";
    let (target, ramp_in_g) = match c.target.as_str() {
        "eta" => (ControlTarget::Eta, false),
        "lambda" => (ControlTarget::Lambda, false),
        "G" => (ControlTarget::Lambda, true),
        other => return Err(ctx.err(t, "target", format!("`target` must be eta, lambda or G, got `{other}`"))),
    };
    let (min, max) = if ramp_in_g {
        (ctx.lambda_of_g(t, "min", c.min, params)?, ctx.lambda_of_g(t, "max", c.max, params)?)
    } else {
        (ctx.non_negative(t, "min", c.min)?, ctx.non_negative(t, "max", c.max)?)
    };
    if !(min < max && max.is_finite()) {
        return Err(ctx.err(t, "max", "ramp needs finite bounds with min < max"));
    }
    let t_up = ctx
        .time(t, "t_up", c.t_up, c.t_up_ms)?
        .ok_or_else(|| ctx.err(t, "", "missing `t_up` (or `t_up_ms`)"))?;
    let t_down = ctx
        .time(t, "t_down", c.t_down, c.t_down_ms)?
        .ok_or_else(|| ctx.err(t, "", "missing `t_down` (or `t_down_ms`)"))?;
    let n_cycles = c.cycles.unwrap_or(5);
    if n_cycles == 0 {
        return Err(ctx.err(t, "cycles", "`cycles` must be at least 1"));
    }
    let (fixed_eta, fixed_lambda) = match target {
        ControlTarget::Eta => {
            let (v, is_g) = repump_key(ctx, t, &c.lambda, &c.big_g)?;
            let l = if is_g { ctx.lambda_of_g(t, "G", *v, params)? } else { ctx.non_negative(t, "lambda", *v)? };
            (None, Some(l))
        }
        ControlTarget::Lambda => {
            let e = c.eta.ok_or_else(|| ctx.err(t, "", "a repump ramp needs a fixed `eta`"))?;
            (Some(ctx.non_negative(t, "eta", e)?), None)
        }
    };
    let grid_points = c.grid_points.unwrap_or(401);
    if grid_points < 2 {
        return Err(ctx.err(t, "grid_points", "`grid_points` must be at least 2"));
    }
    let grid_scale = match c.grid_scale {
        Some(Scale::Log) => {
            if min <= 0.0 {
                return Err(ctx.err(t, "grid_scale", "a log grid needs min > 0"));
            }
            GridScale::Log
        }
        _ => GridScale::Linear,
    };
    Ok(HysteresisJob {
        target,
        ramp: Schedule::LinearRampCycle {
            min,
            max,
            t_up,
            t_down,
            n_cycles,
        },
        fixed_eta,
        fixed_lambda,
        grid_points,
        grid_scale,
        loss: resolve_loss(f, ctx, c.loss)?,
        integrator: resolve_solver(&c.solver, ctx, t)?,
    })
}

fn resolve_pulse(c: &PulseConfig, f: &ConfigFile, ctx: &Ctx, params: &ModelParams) -> Result<PulseJob, ConfigError> {
    let t = "pulse";
    let pick = |plain: Option<f64>, g: Option<f64>, name: &str, default: Option<f64>| -> Result<f64, ConfigError> {
        match (plain, g) {
            (Some(_), Some(_)) => Err(ctx.err(t, name, format!("give either `{name}` or `{name}_g`, not both"))),
            (Some(v), None) => ctx.non_negative(t, name, v),
            (None, Some(gv)) => {
                if gv == 0.0 {
                    Ok(0.0)
                } else {
                    ctx.lambda_of_g(t, &format!("{name}_g"), gv, params)
                }
            }
            (None, None) => default.ok_or_else(|| ctx.err(t, "", format!("missing `{name}` (or `{name}_g`)"))),
        }
    };
    let lambda_low = pick(c.low, c.low_g, "low", Some(0.0))?;
    let lambda_high = pick(c.high, c.high_g, "high", None)?;
    if !lambda_high.is_finite() || lambda_high <= lambda_low {
        return Err(ctx.err(t, "high", "the repump pulse needs a finite `high` above `low`"));
    }
    let period = ctx
        .time(t, "period", c.period, c.period_ms)?
        .ok_or_else(|| ctx.err(t, "", "missing `period` (or `period_ms`)"))?;
    let duty = c.duty.unwrap_or(0.5);
    if !(duty > 0.0 && duty < 1.0) {
        return Err(ctx.err(t, "duty", format!("`duty` must lie in (0, 1), got {duty}")));
    }
    let periods = c.periods.unwrap_or(12);
    if periods == 0 {
        return Err(ctx.err(t, "periods", "`periods` must be at least 1"));
    }
    let estimate_window = c.estimate_window.unwrap_or(0.02);
    if !(estimate_window > 0.0) {
        return Err(ctx.err(t, "estimate_window", "`estimate_window` must be positive"));
    }
    let samples = c.samples.unwrap_or(200 * periods as usize + 1);
    Ok(PulseJob {
        eta: ctx.non_negative(t, "eta", c.eta)?,
        lambda_low,
        lambda_high,
        period,
        duty,
        periods,
        initial: initial(c.initial, c.seed_alpha, ctx, t)?,
        loss: resolve_loss(f, ctx, c.loss)?,
        integrator: resolve_solver(&c.solver, ctx, t)?.with_sampling(sampling(None, Some(samples), ctx, t)?),
        events: thresholds(c.events_low, c.events_high, ctx, t)?,
        estimate_window,
    })
}

/// Parses and validates a configuration; diagnostics carry the offending
/// line where it can be located.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    check_duplicates(text)?;
    let file: ConfigFile = toml::from_str(text).map_err(|e| toml_error(e, text))?;
    resolve(file, text)
}

fn resolve(file: ConfigFile, text: &str) -> Result<RunConfig, ConfigError> {
    let ctx = Ctx {
        text,
        gamma_mhz: file.gamma_mhz,
    };
    if let Some(gm) = file.gamma_mhz {
        if !(gm > 0.0 && gm.is_finite()) {
            return Err(ctx.err("", "gamma_MHz", format!("`gamma_MHz` must be positive, got {gm}")));
        }
    }
    let params = resolve_params(&file, &ctx)?;
    let steady = file.steady.as_ref().map(|c| resolve_steady(c, &ctx, &params)).transpose()?;
    let phase_diagram = file.phase_diagram.as_ref().map(|c| resolve_phase_diagram(c, &ctx)).transpose()?;
    let simulate = file.simulate.as_ref().map(|c| resolve_simulate(c, &file, &ctx, &params)).transpose()?;
    let hysteresis = file.hysteresis.as_ref().map(|c| resolve_hysteresis(c, &file, &ctx, &params)).transpose()?;
    let pulse = file.pulse.as_ref().map(|c| resolve_pulse(c, &file, &ctx, &params)).transpose()?;
    Ok(RunConfig {
        output_dir: file.output.as_ref().and_then(|o| o.dir.clone()),
        gamma_mhz: file.gamma_mhz,
        params,
        steady,
        phase_diagram,
        simulate,
        hysteresis,
        pulse,
        file,
    })
}

/// Serializes the file part of a configuration back to TOML.
pub fn emit(config: &RunConfig) -> String {
    emit_file(&config.file)
}

pub fn emit_file(file: &ConfigFile) -> String {
    toml::to_string(file).expect("configuration values are always representable in TOML")
}
