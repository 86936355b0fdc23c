use proptest::prelude::*;

use tbb_sim::dynamics::{
    hysteresis_run, integrate, seeded_ground, ControlTarget, GridScale, HysteresisOptions,
    IntegratorOptions, Sampling, Schedule, DEFAULT_SEED_ALPHA,
};
use tbb_sim::model::{Controls, LossOptions, MeanFieldState, ModelParams};
use tbb_sim::phase_map::{sweep_grid, Axis, AxisScale, GridSpec, Phase, RepumpParam};
use tbb_sim::steady::{solve_intensities, steady_states};

fn defaults() -> ModelParams {
    ModelParams::experiment_defaults()
}

fn distance(a: &MeanFieldState, b: &MeanFieldState) -> f64 {
    let (x, y) = (a.to_array(), b.to_array());
    x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn final_state(eta: f64, lambda: f64, t_end: f64, rtol: f64, atol: f64) -> (MeanFieldState, f64) {
    let p = defaults();
    let opts = IntegratorOptions {
        rtol,
        atol,
        ..IntegratorOptions::default().with_sampling(Sampling::Linear(2))
    };
    let traj = integrate(
        &seeded_ground(p.n_atoms, DEFAULT_SEED_ALPHA),
        &p,
        &Schedule::constant(eta),
        &Schedule::constant(lambda),
        &LossOptions::disabled(),
        t_end,
        &opts,
    )
    .unwrap();
    (*traj.last_state().unwrap(), traj.global_error_estimate)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn halving_tolerances_stays_within_the_error_estimate(
        eta in 20.0..500.0f64,
        big_g in 0.1..0.95f64,
    ) {
        let lambda = tbb_sim::model::lambda_from_big_g(big_g, defaults().big_gamma).unwrap();
        let (coarse, estimate) = final_state(eta, lambda, 2000.0, 1e-8, 1e-10);
        let (fine, _) = final_state(eta, lambda, 2000.0, 0.5e-8, 0.5e-10);
        let change = distance(&coarse, &fine);
        prop_assert!(change < estimate, "change {change:e}, estimate {estimate:e}");
    }

    #[test]
    fn root_count_is_one_two_or_three(
        eta in 0.1..2000.0f64,
        lambda in 1e-6..10.0f64,
        n in 0.0..1e5f64,
    ) {
        let p = defaults().with_atoms(n);
        let roots = solve_intensities(&p, &Controls::new(eta, lambda).unwrap()).unwrap();
        prop_assert!((1..=3).contains(&roots.len()));
    }
}

#[test]
fn slower_ramp_in_a_single_valued_region_has_smaller_area() {
    let p = defaults();
    let area = |t_ramp: f64| {
        let ramp = Schedule::LinearRampCycle {
            min: 50.0,
            max: 150.0,
            t_up: t_ramp,
            t_down: t_ramp,
            n_cycles: 1,
        };
        let opts = HysteresisOptions {
            grid_points: 101,
            grid_scale: GridScale::Linear,
            integrator: IntegratorOptions::default(),
        };
        let fixed = Controls::new(0.0, f64::INFINITY).unwrap();
        let rec = hysteresis_run(&p, ControlTarget::Eta, &ramp, &fixed, &LossOptions::disabled(), &opts)
            .unwrap();
        rec.loop_areas[0].abs()
    };
    let (fast, slow) = (area(50.0), area(500.0));
    assert!(slow < fast, "slow {slow:e}, fast {fast:e}");
}

#[test]
fn blockaded_branch_keeps_atoms_in_the_ground_state() {
    let p = defaults();
    for big_g in [0.05, 0.13, 0.31, 0.44, 0.76, 1.0] {
        let mut checked = 0;
        for i in 0..400 {
            let eta = 1.0 + i as f64;
            let c = Controls::from_big_g(eta, big_g, &p).unwrap();
            let b = steady_states(&p, &c).unwrap();
            // past the upper fold only the bright branch is left
            if b.len() == 1 && b[0].transmittance > 0.5 {
                break;
            }
            let low = &b[0].state;
            assert!(low.n_g >= low.n_e && low.n_g >= low.n_f, "G {big_g}, eta {eta}: {low:?}");
            checked += 1;
        }
        assert!(checked > 50);
    }
}

#[test]
fn bistable_cells_have_ordered_transmittances() {
    let spec = GridSpec {
        eta_axis: Axis::new(1.0, 500.0, 200, AxisScale::Log),
        repump_axis: Axis::new(0.05, 1.0, 100, AxisScale::Linear),
        repump_param: RepumpParam::BigG,
    };
    let map = sweep_grid(&defaults(), &spec).unwrap();
    let mut n = 0;
    for cell in map.cells.iter().filter(|c| c.phase == Some(Phase::Bistable)) {
        assert_eq!(cell.transmittances.len(), 2);
        assert!(cell.transmittances[1] - cell.transmittances[0] > 0.0, "{cell:?}");
        n += 1;
    }
    assert!(n > 0);
}
