//! Two-parameter sweeps of the steady state and the bistable-domain edge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{big_g_from_lambda, lambda_from_big_g, Controls, ModelParams};
use crate::steady::{steady_states, SteadyBranch};

/// Transmittance separating blockaded from bright monostable cells.
pub const PHASE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepumpParam {
    #[serde(rename = "G")]
    BigG,
    #[serde(rename = "lambda")]
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    pub scale: AxisScale,
}

impl Axis {
    pub fn new(min: f64, max: f64, n_points: usize, scale: AxisScale) -> Self {
        Self {
            min,
            max,
            n_points,
            scale,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("{name} axis: {m}")));
        if self.n_points < 1 {
            return bad("needs at least one point".into());
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return bad("bounds must be finite".into());
        }
        if self.n_points == 1 {
            return Ok(());
        }
        if self.min >= self.max {
            return bad(format!("min {} must be below max {}", self.min, self.max));
        }
        if self.scale == AxisScale::Log && self.min <= 0.0 {
            return bad("log scale needs min > 0".into());
        }
        Ok(())
    }

    /// Grid values; a single point sits at `min`.
    pub fn values(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.min];
        }
        let n = self.n_points;
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                match self.scale {
                    AxisScale::Linear => self.min + (self.max - self.min) * f,
                    AxisScale::Log => self.min * (self.max / self.min).powf(f),
                }
            })
            .collect();
        v[n - 1] = self.max;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub eta_axis: Axis,
    pub repump_axis: Axis,
    pub repump_param: RepumpParam,
}

impl GridSpec {
    /// Single-point axes are allowed so that one-dimensional slices can be
    /// swept. `G = 1` maps to the two-level limit `lambda = inf`.
    pub fn validate(&self) -> Result<()> {
        self.eta_axis.validate("eta")?;
        self.repump_axis.validate("repump")?;
        if self.eta_axis.min < 0.0 {
            return Err(Error::InvalidArgument("eta must be >= 0".into()));
        }
        let (lo, hi) = (self.repump_axis.min, self.repump_axis.max);
        match self.repump_param {
            RepumpParam::BigG if !(lo > 0.0 && hi <= 1.0) => Err(Error::InvalidArgument(
                format!("G axis must lie in (0, 1], got {lo}..{hi}"),
            )),
            RepumpParam::Lambda if lo <= 0.0 => Err(Error::InvalidArgument(
                "lambda axis must be positive".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.eta_axis.n_points * self.repump_axis.n_points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Blockaded,
    Bright,
    Bistable,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Blockaded => "blockaded",
            Phase::Bright => "bright",
            Phase::Bistable => "bistable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCell {
    pub eta: f64,
    pub lambda: f64,
    pub big_g: f64,
    pub n_stable: usize,
    /// Stable-branch transmittances, ascending.
    pub transmittances: Vec<f64>,
    /// `None` when the solver failed for this cell.
    pub phase: Option<Phase>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseMap {
    pub spec: GridSpec,
    pub params: ModelParams,
    /// Row-major: one row per repump value, one column per drive value.
    pub cells: Vec<PhaseCell>,
    pub boundary: Vec<(usize, usize)>,
}

impl PhaseMap {
    pub fn n_rows(&self) -> usize {
        self.spec.repump_axis.n_points
    }

    pub fn n_cols(&self) -> usize {
        self.spec.eta_axis.n_points
    }

    pub fn cell(&self, row: usize, col: usize) -> &PhaseCell {
        &self.cells[row * self.n_cols() + col]
    }

    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Phase of a solved point; marginal branches count as stable.
pub fn classify_cell(branches: &[SteadyBranch]) -> Phase {
    let stable: Vec<&SteadyBranch> = branches
        .iter()
        .filter(|b| b.stability.is_attracting())
        .collect();
    match stable.as_slice() {
        [b] => {
            if b.transmittance < PHASE_THRESHOLD {
                Phase::Blockaded
            } else {
                Phase::Bright
            }
        }
        [] => Phase::Blockaded,
        _ => Phase::Bistable,
    }
}

fn solve_cell(params: &ModelParams, eta: f64, lambda: f64) -> PhaseCell {
    let big_g = big_g_from_lambda(lambda, params.big_gamma);
    let mut cell = PhaseCell {
        eta,
        lambda,
        big_g,
        n_stable: 0,
        transmittances: Vec::new(),
        phase: None,
        error: None,
    };
    match Controls::new(eta, lambda).and_then(|c| steady_states(params, &c)) {
        Ok(branches) => {
            let mut t: Vec<f64> = branches
                .iter()
                .filter(|b| b.stability.is_attracting())
                .map(|b| b.transmittance)
                .collect();
            t.sort_by(f64::total_cmp);
            cell.n_stable = t.len();
            cell.transmittances = t;
            cell.phase = Some(classify_cell(&branches));
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Solves every grid point in parallel; results are placed by index, so the
/// output does not depend on scheduling.
pub fn sweep_grid(params: &ModelParams, spec: &GridSpec) -> Result<PhaseMap> {
    params.validate()?;
    spec.validate()?;
    let etas = spec.eta_axis.values();
    let lambdas: Vec<f64> = match spec.repump_param {
        RepumpParam::Lambda => spec.repump_axis.values(),
        RepumpParam::BigG => spec
            .repump_axis
            .values()
            .into_iter()
            .map(|g| lambda_from_big_g(g, params.big_gamma))
            .collect::<Result<_>>()?,
    };
    let n_cols = etas.len();
    let cells: Vec<PhaseCell> = (0..spec.n_cells())
        .into_par_iter()
        .map(|i| solve_cell(params, etas[i % n_cols], lambdas[i / n_cols]))
        .collect();
    let mut map = PhaseMap {
        spec: *spec,
        params: *params,
        cells,
        boundary: Vec::new(),
    };
    map.boundary = extract_boundary(&map);
    Ok(map)
}

/// Index pairs `(a, b)` with `a < b` of 4-neighbours with different phase,
/// in row-major order of `a` (right neighbour before lower neighbour).
pub fn extract_boundary(map: &PhaseMap) -> Vec<(usize, usize)> {
    let (rows, cols) = (map.n_rows(), map.n_cols());
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let here = map.cells[i].phase;
            if c + 1 < cols && map.cells[i + 1].phase != here {
                out.push((i, i + 1));
            }
            if r + 1 < rows && map.cells[i + cols].phase != here {
                out.push((i, i + cols));
            }
        }
    }
    out
}
