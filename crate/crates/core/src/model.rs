//! Model parameters, state, and the mean-field vector field.
//!
//! Every rate and detuning is measured in units of the atomic half-width
//! `gamma`, which is therefore exactly one; times are in units of `1/gamma`.
//!
//! The dynamical variables are the cavity amplitude `alpha`, the collective
//! polarization `M` of the `|g> <-> |e>` transition, and the populations of
//! the three atomic levels:
//!
//! ```text
//! d alpha/dt = (i dC - kappa) alpha + g M + eta
//! d M/dt     = (i dA - gamma - Gamma) M + g (Ne - Ng) alpha
//! d Ne/dt    = -g (alpha* M + M* alpha) - 2 (gamma + Gamma) Ne
//! d Ng/dt    =  g (alpha* M + M* alpha) + 2 gamma Ne + lambda Nf
//! d Nf/dt    =  2 Gamma Ne - lambda Nf
//! ```

use nalgebra::{Matrix5, Matrix6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The unit of all rates.
pub const GAMMA: f64 = 1.0;

/// Atomic half-width used to express the experimental rates in units of
/// `gamma`. Not a measured value of the experiment; configuration files that
/// use physical units must state their own.
pub const DEFAULT_GAMMA_MHZ: f64 = 3.03;

/// Fixed physical parameters, in units of `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Decay rate `|e> -> |f>`.
    pub big_gamma: f64,
    /// Cavity half-width.
    pub kappa: f64,
    /// Single-photon Rabi frequency.
    pub g: f64,
    /// Drive minus atomic transition frequency.
    pub delta_a: f64,
    /// Drive minus cavity mode frequency.
    pub delta_c: f64,
    /// Total atom number; real-valued so it can decay under the loss extension.
    pub n_atoms: f64,
}

impl ModelParams {
    /// Rubidium-87 cavity setup: `kappa = 3.92 MHz`, `g = 0.33 MHz`,
    /// `Delta_A = -29 MHz`, resonant cavity drive, `Gamma = 0.93e-3 gamma`
    /// and `N = 1e4` coupled atoms, with `gamma = 3.03 MHz`.
    pub fn experiment_defaults() -> Self {
        Self {
            big_gamma: 0.93e-3,
            kappa: 3.92 / DEFAULT_GAMMA_MHZ,
            g: 0.33 / DEFAULT_GAMMA_MHZ,
            delta_a: -29.0 / DEFAULT_GAMMA_MHZ,
            delta_c: 0.0,
            n_atoms: 1e4,
        }
    }

    pub fn gamma(&self) -> f64 {
        GAMMA
    }

    pub fn with_atoms(self, n_atoms: f64) -> Self {
        Self { n_atoms, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("Gamma", self.big_gamma),
            ("kappa", self.kappa),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.n_atoms.is_finite() && self.n_atoms >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "N must be non-negative, got {}",
                self.n_atoms
            )));
        }
        if !self.delta_a.is_finite() || !self.delta_c.is_finite() {
            return Err(Error::InvalidArgument("detunings must be finite".into()));
        }
        Ok(())
    }

    /// Total polarization decay rate `gamma + Gamma`.
    pub fn pol_decay(&self) -> f64 {
        GAMMA + self.big_gamma
    }

    /// `D = (gamma + Gamma)^2 + Delta_A^2`.
    pub fn d_lorentz(&self) -> f64 {
        self.pol_decay().powi(2) + self.delta_a.powi(2)
    }

    /// Single-atom dispersive shift `g^2 Delta_A / (Delta_A^2 + gamma^2)`.
    pub fn delta_shift(&self) -> f64 {
        self.g * self.g * self.delta_a / (self.delta_a * self.delta_a + GAMMA * GAMMA)
    }

    pub fn cooperativity(&self) -> f64 {
        self.n_atoms * self.g * self.g / (self.delta_a.abs() * self.kappa)
    }

    /// Converts a saturation parameter to the intracavity photon number.
    pub fn intensity_from_saturation(&self, s: f64) -> f64 {
        s * self.d_lorentz() / (self.g * self.g)
    }

    pub fn saturation_from_intensity(&self, intensity: f64) -> f64 {
        intensity * self.g * self.g / self.d_lorentz()
    }
}

/// The two drive strengths. `lambda = +inf` is accepted by the steady-state
/// solver as the two-level limit `G = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub eta: f64,
    pub lambda: f64,
}

impl Controls {
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { eta, lambda })
    }

    /// Controls with the repump rate given through `G` in `(0, 1]`.
    pub fn from_big_g(eta: f64, big_g: f64, params: &ModelParams) -> Result<Self> {
        Self::new(eta, lambda_from_big_g(big_g, params.big_gamma)?)
    }
}

/// `G = (1 + 2 Gamma / lambda)^-1`; `0` for `lambda = 0`, `1` for `lambda = inf`.
pub fn big_g_from_lambda(lambda: f64, big_gamma: f64) -> f64 {
    if lambda <= 0.0 {
        0.0
    } else if lambda.is_infinite() {
        1.0
    } else {
        lambda / (lambda + 2.0 * big_gamma)
    }
}

/// Inverse of [`big_g_from_lambda`]: `lambda = 2 Gamma G / (1 - G)`.
pub fn lambda_from_big_g(big_g: f64, big_gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&big_g) {
        return Err(Error::InvalidArgument(format!("G must lie in [0, 1], got {big_g}")));
    }
    if big_g == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * big_gamma * big_g / (1.0 - big_g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub delta_shift: f64,
    pub big_g: f64,
    /// `2 + 2 Gamma / lambda = 1 + 1/G`; infinite for `lambda = 0`.
    pub beta: f64,
    pub d_lorentz: f64,
    pub cooperativity: f64,
    pub empty_intensity: f64,
}

pub fn derive(params: &ModelParams, controls: &Controls) -> DerivedParams {
    let big_g = big_g_from_lambda(controls.lambda, params.big_gamma);
    let beta = if controls.lambda <= 0.0 {
        f64::INFINITY
    } else if controls.lambda.is_infinite() {
        2.0
    } else {
        2.0 + 2.0 * params.big_gamma / controls.lambda
    };
    DerivedParams {
        delta_shift: params.delta_shift(),
        big_g,
        beta,
        d_lorentz: params.d_lorentz(),
        cooperativity: params.cooperativity(),
        empty_intensity: controls.eta.powi(2) / (params.kappa.powi(2) + params.delta_c.powi(2)),
    }
}

/// Phenomenological per-level atom loss. Not part of the closed model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossOptions {
    pub enabled: bool,
    pub rate_g: f64,
    pub rate_e: f64,
    pub rate_f: f64,
}

impl LossOptions {
    pub fn disabled() -> Self {
        Self::default()
    }

    /// Loss with a common `1/e` lifetime for `|g>` and `|e>` (in `1/gamma`)
    /// and `f_factor` times faster loss of `|f>`.
    pub fn from_lifetime(lifetime: f64, f_factor: f64) -> Self {
        let rate = 1.0 / lifetime;
        Self {
            enabled: true,
            rate_g: rate,
            rate_e: rate,
            rate_f: f_factor * rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub alpha: Complex64,
    pub m_pol: Complex64,
    pub n_e: f64,
    pub n_g: f64,
    pub n_f: f64,
}

/// Time derivative of a [`MeanFieldState`], component by component.
pub type StateDerivative = MeanFieldState;

impl MeanFieldState {
    /// Empty cavity, all atoms in `|g>`.
    pub fn ground(n_atoms: f64) -> Self {
        Self {
            n_g: n_atoms,
            ..Self::default()
        }
    }

    pub fn total_population(&self) -> f64 {
        self.n_e + self.n_g + self.n_f
    }

    pub fn intensity(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.alpha.re,
            self.alpha.im,
            self.m_pol.re,
            self.m_pol.im,
            self.n_e,
            self.n_g,
            self.n_f,
        ]
    }

    pub fn from_array(x: &[f64; 7]) -> Self {
        Self {
            alpha: Complex64::new(x[0], x[1]),
            m_pol: Complex64::new(x[2], x[3]),
            n_e: x[4],
            n_g: x[5],
            n_f: x[6],
        }
    }

    /// Euclidean norm over all seven real components.
    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The mean-field vector field. With `lambda = inf` the `|f>` level is
/// slaved (`Nf` stays zero and everything decaying into it returns to `|g>`).
pub fn rhs(
    state: &MeanFieldState,
    params: &ModelParams,
    controls: &Controls,
    loss: &LossOptions,
) -> StateDerivative {
    let MeanFieldState {
        alpha,
        m_pol,
        n_e,
        n_g,
        n_f,
    } = *state;
    let g = params.g;
    let gp = params.pol_decay();

    let d_alpha =
        Complex64::new(-params.kappa, params.delta_c) * alpha + g * m_pol + controls.eta;
    let d_m = Complex64::new(-gp, params.delta_a) * m_pol + g * (n_e - n_g) * alpha;

    // alpha* M + M* alpha
    let exchange = g * 2.0 * (alpha.conj() * m_pol).re;
    let to_f = 2.0 * params.big_gamma * n_e;
    let repump = if controls.lambda.is_infinite() {
        to_f
    } else {
        controls.lambda * n_f
    };

    let mut d = StateDerivative {
        alpha: d_alpha,
        m_pol: d_m,
        n_e: -exchange - 2.0 * gp * n_e,
        n_g: exchange + 2.0 * GAMMA * n_e + repump,
        n_f: to_f - repump,
    };
    if loss.enabled {
        d.n_g -= loss.rate_g * n_g;
        d.n_e -= loss.rate_e * n_e;
        d.n_f -= loss.rate_f * n_f;
    }
    d
}

/// Jacobian of the closed model in the reduced coordinates
/// `(Re alpha, Im alpha, Re M, Im M, Ne, Ng)`, with `Nf` eliminated through
/// the conserved total of `state`. Requires a finite `lambda`.
pub fn jacobian_reduced(
    state: &MeanFieldState,
    params: &ModelParams,
    controls: &Controls,
) -> Matrix6<f64> {
    let (ar, ai) = (state.alpha.re, state.alpha.im);
    let (mr, mi) = (state.m_pol.re, state.m_pol.im);
    let g = params.g;
    let gp = params.pol_decay();
    let (k, dc, da) = (params.kappa, params.delta_c, params.delta_a);
    let inv = state.n_e - state.n_g;
    let lam = controls.lambda;

    #[rustfmt::skip]
    let j = Matrix6::new(
        -k,          -dc,          g,             0.0,           0.0,                0.0,
        dc,          -k,           0.0,           g,             0.0,                0.0,
        g * inv,     0.0,          -gp,           -da,           g * ar,             -g * ar,
        0.0,         g * inv,      da,            -gp,           g * ai,             -g * ai,
        -2.0 * g * mr, -2.0 * g * mi, -2.0 * g * ar, -2.0 * g * ai, -2.0 * gp,       0.0,
        2.0 * g * mr,  2.0 * g * mi,  2.0 * g * ar,  2.0 * g * ai,  2.0 * GAMMA - lam, -lam,
    );
    j
}

/// Jacobian of the two-level limit `lambda -> inf` in the coordinates
/// `(Re alpha, Im alpha, Re M, Im M, Ne)`, with `Ng = N - Ne`.
pub fn jacobian_two_level(state: &MeanFieldState, params: &ModelParams) -> Matrix5<f64> {
    let (ar, ai) = (state.alpha.re, state.alpha.im);
    let (mr, mi) = (state.m_pol.re, state.m_pol.im);
    let g = params.g;
    let gp = params.pol_decay();
    let (k, dc, da) = (params.kappa, params.delta_c, params.delta_a);
    let inv = state.n_e - state.n_g;

    #[rustfmt::skip]
    let j = Matrix5::new(
        -k,            -dc,           g,             0.0,           0.0,
        dc,            -k,            0.0,           g,             0.0,
        g * inv,       0.0,           -gp,           -da,           2.0 * g * ar,
        0.0,           g * inv,       da,            -gp,           2.0 * g * ai,
        -2.0 * g * mr, -2.0 * g * mi, -2.0 * g * ar, -2.0 * g * ai, -2.0 * gp,
    );
    j
}

/// Intracavity intensity normalized to the empty resonator under the same drive.
pub fn transmittance(intensity: f64, params: &ModelParams, controls: &Controls) -> Result<f64> {
    if controls.eta <= 0.0 {
        return Err(Error::EmptyDrive);
    }
    Ok(intensity * (params.kappa.powi(2) + params.delta_c.powi(2)) / controls.eta.powi(2))
}
