//! Exact steady states.
//!
//! Setting all time derivatives to zero, the polarization follows the field,
//! `Ne = s Ng / (1 + s)` with the saturation parameter `s = g^2 |alpha|^2 / D`,
//! and `Nf = (2 Gamma / lambda) Ne`. Population conservation then gives
//! `Ng / (1 + s) = N / (1 + beta s)` with `beta = 2 + 2 Gamma / lambda`, and
//! the modulus squared of the cavity equation closes into
//!
//! ```text
//! (s D / g^2) [ (kappa u + a)^2 + (dC u - b)^2 ] = eta^2 u^2,   u = 1 + beta s
//! ```
//!
//! with `a = N g^2 (gamma + Gamma) / D` and `b = N g^2 dA / D`: a cubic in `s`.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    derive, jacobian_reduced, jacobian_two_level, rhs, transmittance, Controls, LossOptions,
    MeanFieldState, ModelParams,
};

pub const DEFAULT_MARGINAL_TOL: f64 = 1e-7;

/// Relative distance in `s` below which two roots are the same (fold) root.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationRoot {
    pub s: f64,
    pub intensity: f64,
    /// `|h(s)|` of the un-expanded scalar equation.
    pub residual: f64,
    /// 2 for a fold point (two merged roots).
    pub multiplicity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }

    /// Stable or marginal: counts towards the number of coexisting phases.
    pub fn is_attracting(&self) -> bool {
        !matches!(self, Stability::Unstable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyBranch {
    pub s: f64,
    pub state: MeanFieldState,
    pub transmittance: f64,
    pub stability: Stability,
    /// Eigenvalues of the reduced Jacobian; in the two-level limit the slaved
    /// `Ng` direction is reported as `-inf`.
    pub eigenvalues: Vec<Complex64>,
}

impl SteadyBranch {
    pub fn max_re_eig(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Quantities shared by the cubic and the un-expanded scalar equation.
#[derive(Debug, Clone, Copy)]
struct Reduction {
    beta: f64,
    a: f64,
    b: f64,
    /// `D / g^2`: photon number per unit saturation.
    scale: f64,
    kappa: f64,
    delta_c: f64,
    eta2: f64,
}

impl Reduction {
    fn new(params: &ModelParams, controls: &Controls) -> Result<Self> {
        params.validate()?;
        if !(controls.lambda > 0.0) {
            return Err(Error::LambdaZero);
        }
        let d = params.d_lorentz();
        let ng2 = params.n_atoms * params.g * params.g;
        Ok(Self {
            beta: derive(params, controls).beta,
            a: ng2 * params.pol_decay() / d,
            b: ng2 * params.delta_a / d,
            scale: d / (params.g * params.g),
            kappa: params.kappa,
            delta_c: params.delta_c,
            eta2: controls.eta * controls.eta,
        })
    }

    /// `h(s) = (s D/g^2) |kappa - i dC + (a + i b)/u|^2 - eta^2`, and `h'(s)`.
    fn scalar(&self, s: f64) -> (f64, f64) {
        let u = 1.0 + self.beta * s;
        let re = self.kappa + self.a / u;
        let im = self.b / u - self.delta_c;
        let q = re * re + im * im;
        let dq = self.beta * (-2.0 * re * self.a + 2.0 * im * self.b) / (u * u);
        (self.scale * s * q - self.eta2, self.scale * (q + s * dq))
    }

    fn coefficients(&self) -> [f64; 4] {
        let Self {
            beta,
            a,
            b,
            scale: c,
            kappa: k,
            delta_c: dc,
            eta2,
        } = *self;
        [
            c * beta * beta * (k * k + dc * dc),
            2.0 * c * beta * (k * (k + a) + dc * (dc - b)) - eta2 * beta * beta,
            c * ((k + a).powi(2) + (dc - b).powi(2)) - 2.0 * eta2 * beta,
            -eta2,
        ]
    }

    /// Every root lies below the empty-cavity saturation `eta^2 / (scale kappa^2)`,
    /// because `a >= 0` keeps the bracket above `kappa^2`.
    fn upper_bound(&self) -> f64 {
        self.eta2 / (self.scale * self.kappa * self.kappa) * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

/// Coefficients `(c3, c2, c1, c0)` of the steady-state cubic `P(s)`.
pub fn cubic_coefficients(params: &ModelParams, controls: &Controls) -> Result<[f64; 4]> {
    Ok(Reduction::new(params, controls)?.coefficients())
}

/// The un-expanded scalar steady-state equation `h(s)`; its zeros are the
/// zeros of the cubic, `P(s) = (1 + beta s)^2 h(s)`.
pub fn scalar_residual(s: f64, params: &ModelParams, controls: &Controls) -> Result<f64> {
    Ok(Reduction::new(params, controls)?.scalar(s).0)
}

fn companion_roots(coef: &[f64; 4]) -> Vec<Complex64> {
    let [c3, c2, c1, c0] = *coef;
    #[rustfmt::skip]
    let m = Matrix3::new(
        -c2 / c3, -c1 / c3, -c0 / c3,
        1.0,      0.0,      0.0,
        0.0,      1.0,      0.0,
    );
    m.complex_eigenvalues().iter().copied().collect()
}

/// Safeguarded Newton on `h` inside a sign-changing bracket.
fn polish(red: &Reduction, mut lo: f64, mut hi: f64, seed: f64) -> f64 {
    let (h_lo, _) = red.scalar(lo);
    let rising = h_lo < 0.0;
    let mut s = if seed > lo && seed < hi { seed } else { 0.5 * (lo + hi) };
    let mut best = (f64::INFINITY, s);
    for _ in 0..200 {
        let (h, dh) = red.scalar(s);
        if h.abs() < best.0 {
            best = (h.abs(), s);
        }
        if h == 0.0 {
            return s;
        }
        if (h < 0.0) == rising {
            lo = s;
        } else {
            hi = s;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            break;
        }
        let newton = s - h / dh;
        let next = if dh != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == s {
            break;
        }
        s = next;
    }
    best.1
}

/// All non-negative roots of the steady-state cubic, ascending in `s`.
pub fn solve_intensities(params: &ModelParams, controls: &Controls) -> Result<Vec<SaturationRoot>> {
    let red = Reduction::new(params, controls)?;
    if red.eta2 == 0.0 {
        return Ok(vec![SaturationRoot {
            s: 0.0,
            intensity: 0.0,
            residual: 0.0,
            multiplicity: 1,
        }]);
    }
    let coef = red.coefficients();
    let tol = 1e-9 * red.eta2.max(1.0);
    let s_up = red.upper_bound();

    let seeds: Vec<f64> = companion_roots(&coef)
        .into_iter()
        .filter(|z| z.im.abs() <= 1e-6 * z.norm() && z.re > 0.0)
        .map(|z| z.re)
        .collect();

    // Critical points of P split (0, s_up) into monotone pieces.
    let [c3, c2, c1, _] = coef;
    let (qa, qb, qc) = (3.0 * c3, 2.0 * c2, c1);
    let disc = qb * qb - 4.0 * qa * qc;
    let mut nodes = vec![0.0];
    if disc > 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (qb + qb.signum() * sq);
        let mut crit = [q / qa, qc / q];
        crit.sort_by(f64::total_cmp);
        nodes.extend(crit.iter().copied().filter(|&c| c > 0.0 && c < s_up));
    }
    nodes.push(s_up);

    let mut roots: Vec<(f64, u8)> = Vec::new();
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (h_lo, _) = red.scalar(lo);
        let (h_hi, _) = red.scalar(hi);
        if h_lo == 0.0 && lo > 0.0 {
            roots.push((lo, 1));
        }
        if (h_lo < 0.0) != (h_hi < 0.0) && h_hi != 0.0 {
            let seed = seeds
                .iter()
                .copied()
                .find(|&z| z > lo && z < hi)
                .unwrap_or(0.5 * (lo + hi));
            roots.push((polish(&red, lo, hi, seed), 1));
        } else if h_hi == 0.0 && hi < s_up {
            roots.push((hi, 1));
        }
    }
    // A critical point touching zero without a sign change is a fold.
    for &c in &nodes[1..nodes.len() - 1] {
        if red.scalar(c).0.abs() <= tol && !roots.iter().any(|&(r, _)| (r - c).abs() <= MERGE_TOL * c) {
            roots.push((c, 2));
        }
    }
    roots.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut merged: Vec<(f64, u8)> = Vec::with_capacity(roots.len());
    for (s, m) in roots {
        match merged.last_mut() {
            Some(last) if (s - last.0).abs() <= MERGE_TOL * s.max(last.0) => {
                last.1 = 2;
            }
            _ => merged.push((s, m)),
        }
    }
    if merged.is_empty() {
        return Err(Error::NoRoot(format!("no sign change of h on [0, {s_up:e}]")));
    }

    merged
        .into_iter()
        .map(|(s, multiplicity)| {
            let residual = red.scalar(s).0.abs();
            if residual > tol {
                return Err(Error::NoRoot(format!(
                    "polished root s = {s:e} keeps residual {residual:e}"
                )));
            }
            Ok(SaturationRoot {
                s,
                intensity: params.intensity_from_saturation(s),
                residual,
                multiplicity,
            })
        })
        .collect()
}

/// Rebuilds the full fixed point belonging to a saturation root.
pub fn reconstruct_state(
    root: &SaturationRoot,
    params: &ModelParams,
    controls: &Controls,
) -> Result<MeanFieldState> {
    let d = derive(params, controls);
    if !d.beta.is_finite() {
        return Err(Error::LambdaZero);
    }
    let s = root.s;
    let n = params.n_atoms;
    let u = 1.0 + d.beta * s;
    let pol = Complex64::new(params.pol_decay(), -params.delta_a);
    // Ng / (1 + s) = N / u
    let load = params.g * params.g * (n / u) / pol;
    let alpha = controls.eta / (Complex64::new(params.kappa, -params.delta_c) + load);
    let n_e = n * s / u;
    let n_g = n * (1.0 + s) / u;
    let n_f = if controls.lambda.is_infinite() {
        0.0
    } else {
        2.0 * params.big_gamma / controls.lambda * n_e
    };
    let state = MeanFieldState {
        alpha,
        m_pol: params.g * (-n / u) * alpha / pol,
        n_e,
        n_g,
        n_f,
    };

    let mismatch = (state.intensity() - root.intensity).abs();
    if mismatch > 1e-8 * root.intensity.max(f64::MIN_POSITIVE) && mismatch > 1e-300 {
        return Err(Error::Reconstruction {
            s,
            residual: mismatch / root.intensity.max(f64::MIN_POSITIVE),
        });
    }
    Ok(state)
}

/// Scale used for fixed-point residuals: `max(1, eta)`.
pub fn residual_scale(controls: &Controls) -> f64 {
    controls.eta.max(1.0)
}

/// Norm of the vector field at `state`, for fixed-point verification.
pub fn fixed_point_residual(state: &MeanFieldState, params: &ModelParams, controls: &Controls) -> f64 {
    rhs(state, params, controls, &LossOptions::disabled()).norm()
}

fn eigenvalues_of(m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::Schur::try_new(m, f64::EPSILON, 10_000).ok_or(Error::Eigen)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Eigenvalues of the linearization at a fixed point and the resulting label.
pub fn classify_stability(
    state: &MeanFieldState,
    params: &ModelParams,
    controls: &Controls,
    marginal_tol: f64,
) -> Result<(Stability, Vec<Complex64>)> {
    let mut eig = if controls.lambda.is_infinite() {
        let j = jacobian_two_level(state, params);
        let mut e = eigenvalues_of(DMatrix::from_iterator(5, 5, j.iter().copied()))?;
        e.push(Complex64::new(f64::NEG_INFINITY, 0.0));
        e
    } else {
        let j = jacobian_reduced(state, params, controls);
        eigenvalues_of(DMatrix::from_iterator(6, 6, j.iter().copied()))?
    };
    eig.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let label = if max_re < -marginal_tol {
        Stability::Stable
    } else if max_re > marginal_tol {
        Stability::Unstable
    } else {
        Stability::Marginal
    };
    Ok((label, eig))
}

/// All steady states, ascending in intensity, with their stability.
pub fn steady_states(params: &ModelParams, controls: &Controls) -> Result<Vec<SteadyBranch>> {
    steady_states_with_tol(params, controls, DEFAULT_MARGINAL_TOL)
}

pub fn steady_states_with_tol(
    params: &ModelParams,
    controls: &Controls,
    marginal_tol: f64,
) -> Result<Vec<SteadyBranch>> {
    let roots = solve_intensities(params, controls)?;
    roots
        .iter()
        .map(|root| {
            let state = reconstruct_state(root, params, controls)?;
            let (mut stability, eigenvalues) =
                classify_stability(&state, params, controls, marginal_tol)?;
            if root.multiplicity > 1 {
                stability = Stability::Marginal;
            }
            let transmittance = if controls.eta > 0.0 {
                transmittance(state.intensity(), params, controls)?
            } else {
                0.0
            };
            Ok(SteadyBranch {
                s: root.s,
                state,
                transmittance,
                stability,
                eigenvalues,
            })
        })
        .collect()
}

/// Fraction of atoms shelved in `|f>` on a fully saturated bright branch:
/// the `s -> inf` limit of `Nf / N`, equal to `(1 - G) / (1 + G)`.
pub fn saturated_shelved_fraction(big_g: f64) -> f64 {
    (1.0 - big_g) / (1.0 + big_g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{big_g_from_lambda, lambda_from_big_g};
    use proptest::prelude::*;

    fn defaults() -> ModelParams {
        ModelParams::experiment_defaults()
    }

    fn at_g(eta: f64, big_g: f64) -> Controls {
        Controls::from_big_g(eta, big_g, &defaults()).unwrap()
    }

    /// Independent two-level absorptive bistability: Ne + Ng = N, no |f>.
    /// Fixed points satisfy |alpha|^2 |kappa - i dC + g^2 (Ng - Ne)/(gp - i dA)|^2 = eta^2
    /// with Ng - Ne = N / (1 + 2 s).
    fn two_level_roots(p: &ModelParams, eta: f64) -> Vec<f64> {
        let gp = 1.0 + p.big_gamma;
        let f = |intensity: f64| {
            let s = p.g * p.g * intensity / (gp * gp + p.delta_a * p.delta_a);
            let inv = p.n_atoms / (1.0 + 2.0 * s);
            let z = Complex64::new(p.kappa, -p.delta_c)
                + p.g * p.g * inv / Complex64::new(gp, -p.delta_a);
            intensity * z.norm_sqr() - eta * eta
        };
        let top = eta * eta / (p.kappa * p.kappa) * 1.001;
        let n = 200_000;
        let grid: Vec<f64> = (0..=n).map(|i| top * (i as f64 / n as f64).powi(3)).collect();
        let mut out = Vec::new();
        for w in grid.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (flo, fhi) = (f(lo), f(hi));
            if (flo < 0.0) != (fhi < 0.0) {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid) < 0.0) == (flo < 0.0) {
                        lo = mid
                    } else {
                        hi = mid
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        out
    }

    #[test]
    fn empty_cavity_has_single_linear_root() {
        let p = defaults().with_atoms(0.0);
        let c = at_g(40.0, 0.5);
        let roots = solve_intensities(&p, &c).unwrap();
        assert_eq!(roots.len(), 1);
        let expected = p.g * p.g * 1600.0 / ((p.kappa.powi(2) + p.delta_c.powi(2)) * p.d_lorentz());
        assert!((roots[0].s / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn undriven_cavity_is_dark() {
        let roots = solve_intensities(&defaults(), &at_g(0.0, 0.5)).unwrap();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].s, 0.0);
        let b = steady_states(&defaults(), &at_g(0.0, 0.5)).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].transmittance, 0.0);
    }

    #[test]
    fn lambda_zero_is_rejected() {
        let c = Controls { eta: 10.0, lambda: 0.0 };
        assert_eq!(solve_intensities(&defaults(), &c), Err(Error::LambdaZero));
        assert_eq!(cubic_coefficients(&defaults(), &c), Err(Error::LambdaZero));
    }

    #[test]
    fn cubic_and_scalar_equation_agree() {
        let p = defaults();
        let c = at_g(300.0, 0.4);
        let coef = cubic_coefficients(&p, &c).unwrap();
        let beta = derive(&p, &c).beta;
        for s in [0.0, 1e-3, 0.1, 1.0, 7.5, 40.0] {
            let poly = ((coef[0] * s + coef[1]) * s + coef[2]) * s + coef[3];
            let h = scalar_residual(s, &p, &c).unwrap();
            let u = 1.0 + beta * s;
            assert!((poly - u * u * h).abs() <= 1e-9 * poly.abs().max(1.0));
        }
    }

    #[test]
    fn three_roots_inside_the_fold() {
        // The default setup folds between eta ~ 349 and ~ 402 at G = 1.
        let c = Controls { eta: 380.0, lambda: f64::INFINITY };
        let roots = solve_intensities(&defaults(), &c).unwrap();
        assert_eq!(roots.len(), 3);
        let b = steady_states(&defaults(), &c).unwrap();
        let labels: Vec<_> = b.iter().map(|x| x.stability).collect();
        assert_eq!(labels, [Stability::Stable, Stability::Unstable, Stability::Stable]);
    }

    #[test]
    fn strong_drive_is_single_and_bright() {
        let b = steady_states(&defaults(), &at_g(4000.0, 0.76)).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].transmittance >= 0.9);
        assert_eq!(b[0].stability, Stability::Stable);
    }

    #[test]
    fn blockaded_fixed_point_at_zero_saturation() {
        let p = defaults();
        let c = Controls { eta: 5.0, lambda: 0.01 };
        let root = SaturationRoot { s: 0.0, intensity: 0.0, residual: 0.0, multiplicity: 1 };
        // s = 0 is only a root for eta = 0; reconstruction itself is algebraic.
        let err = reconstruct_state(&root, &p, &c);
        assert!(err.is_err());
        let c0 = Controls { eta: 0.0, lambda: 0.01 };
        let st = reconstruct_state(&root, &p, &c0).unwrap();
        assert_eq!((st.n_g, st.n_e, st.n_f), (p.n_atoms, 0.0, 0.0));
        assert_eq!(st.alpha, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn blockaded_amplitude_formula() {
        // Tiny drive: s -> 0 and alpha -> eta / (kappa + g^2 N / (gp - i dA)).
        let p = defaults();
        let c = Controls { eta: 1e-6, lambda: 0.01 };
        let b = steady_states(&p, &c).unwrap();
        let expected = c.eta / (p.kappa + p.g * p.g * p.n_atoms / Complex64::new(p.pol_decay(), -p.delta_a));
        assert!((b[0].state.alpha - expected).norm() <= 1e-9 * expected.norm());
        assert!((b[0].state.n_g / p.n_atoms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cavity_eigenvalues() {
        let p = defaults().with_atoms(0.0);
        let has = |eig: &[Complex64], z: Complex64| eig.iter().any(|e| (e - z).norm() < 1e-9);
        // The cavity block is never fed back when N = 0.
        let b = steady_states(&p, &at_g(10.0, 0.5)).unwrap();
        assert!(has(&b[0].eigenvalues, Complex64::new(-p.kappa, p.delta_c)));
        assert!(has(&b[0].eigenvalues, Complex64::new(-p.kappa, -p.delta_c)));
        // With a dark cavity the polarization decouples from the populations too.
        let b = steady_states(&p, &at_g(0.0, 0.5)).unwrap();
        assert!(has(&b[0].eigenvalues, Complex64::new(-p.pol_decay(), p.delta_a)));
        assert!(has(&b[0].eigenvalues, Complex64::new(-p.pol_decay(), -p.delta_a)));
    }

    #[test]
    fn bright_branch_shelves_atoms_at_low_repump() {
        let p = defaults();
        let b = steady_states(&p, &at_g(20_000.0, 0.1)).unwrap();
        let top = b.last().unwrap();
        let frac = top.state.n_f / p.n_atoms;
        assert!(top.state.n_f > 5.0 * top.state.n_g && top.state.n_f > 5.0 * top.state.n_e);
        // bounded by the fully saturated limit 9/11
        assert!(frac < saturated_shelved_fraction(0.1));
        assert!(frac > 0.99 * saturated_shelved_fraction(0.1));
    }

    #[test]
    fn two_level_limit_matches_independent_oracle() {
        let p = defaults();
        for eta in [100.0, 300.0, 360.0, 380.0, 395.0, 450.0, 800.0] {
            let c = Controls { eta, lambda: 1e6 };
            let ours: Vec<f64> = solve_intensities(&p, &c).unwrap().iter().map(|r| r.intensity).collect();
            let oracle = two_level_roots(&p, eta);
            assert_eq!(ours.len(), oracle.len(), "eta = {eta}");
            for (a, b) in ours.iter().zip(&oracle) {
                assert!((a / b - 1.0).abs() <= 1e-6, "eta = {eta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn infinite_repump_eigenvalues_are_the_large_lambda_limit() {
        let p = defaults();
        let inf = steady_states(&p, &Controls { eta: 380.0, lambda: f64::INFINITY }).unwrap();
        let big = steady_states(&p, &Controls { eta: 380.0, lambda: 1e7 }).unwrap();
        assert_eq!(inf.len(), big.len());
        for (a, b) in inf.iter().zip(&big) {
            assert_eq!(a.stability, b.stability);
            // drop the slaved direction on both sides
            for z in &a.eigenvalues[..5] {
                assert!(b.eigenvalues.iter().any(|w| (w - z).norm() < 1e-4 * (1.0 + z.norm())));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn populations_sum_and_fixed_point_hold(
            eta in 1.0..2000.0f64,
            big_g in 0.02..0.999f64,
            n_atoms in 0.0..5e4f64,
        ) {
            let p = defaults().with_atoms(n_atoms);
            let c = Controls::from_big_g(eta, big_g, &p).unwrap();
            for b in steady_states(&p, &c).unwrap() {
                let total = b.state.total_population();
                prop_assert!((total - n_atoms).abs() <= 1e-12 * n_atoms.max(1.0));
                let r = fixed_point_residual(&b.state, &p, &c);
                prop_assert!(r <= 1e-8 * residual_scale(&c), "residual {} at s = {}", r, b.s);
            }
        }

        #[test]
        fn stability_alternates_in_three_root_cases(
            eta in 50.0..600.0f64,
            big_g in 0.05..1.0f64,
        ) {
            let p = defaults();
            let c = Controls { eta, lambda: lambda_from_big_g(big_g, p.big_gamma).unwrap() };
            let b = steady_states(&p, &c).unwrap();
            prop_assert!((1..=3).contains(&b.len()));
            if b.len() == 3 {
                prop_assert_eq!(b[0].stability, Stability::Stable);
                prop_assert_eq!(b[1].stability, Stability::Unstable);
                prop_assert_eq!(b[2].stability, Stability::Stable);
            }
            prop_assert!((big_g_from_lambda(c.lambda, p.big_gamma) - big_g).abs() < 1e-12);
        }
    }
}
