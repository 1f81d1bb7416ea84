mod common;

use proptest::prelude::*;

use tbhiv::analysis::{self, Stability};
use tbhiv::integrator::{integrate_forward, TimeGrid};
use tbhiv::model::{self, Params, State, NUM_COMPARTMENTS};
use tbhiv::ocp::{simulate_controlled, ControlPath};

use common::{perturbed_params, rng};

fn params_strategy() -> impl Strategy<Value = Params> {
    any::<u64>().prop_map(|seed| perturbed_params(&mut rng(seed), &Params::reference(0.6, 0.1), 0.5))
}

fn state_strategy() -> impl Strategy<Value = State> {
    prop::array::uniform11(0.0..1.0e4f64)
        .prop_filter("positive population", |x| x.iter().sum::<f64>() > 1.0)
        .prop_map(State)
}

fn control_strategy() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| (a, b * (1.0 - a)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn population_balance(x in state_strategy(), p in params_strategy(), (u1, u2) in control_strategy()) {
        let f = model::rhs_controlled(&x, u1, u2, &p).unwrap();
        let n = x.total();
        let expected = p.lambda - p.mu * n - model::disease_death_rate(&x.0, &p);
        let scale = p.lambda + p.mu * n + f.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!((f.total() - expected).abs() <= 1e-12 * scale);
    }

    #[test]
    fn quasi_positive(x in state_strategy(), p in params_strategy(), (u1, u2) in control_strategy(), k in 0usize..NUM_COMPARTMENTS) {
        let mut x = x;
        x[k] = 0.0;
        prop_assume!(x.total() > 1.0);
        let f = model::rhs_controlled(&x, u1, u2, &p).unwrap();
        prop_assert!(f[k] >= 0.0, "component {} has rate {}", k, f[k]);
    }

    #[test]
    fn hiv_submodel_embeds(x in prop::array::uniform4(0.0..1.0e4f64), p in params_strategy()) {
        prop_assume!(x.iter().sum::<f64>() > 1.0);
        let full = model::rhs_uncontrolled(&model::embed_hiv(&x), &p).unwrap();
        let sub = model::embed_hiv(&model::rhs_hiv_only(&x, &p).unwrap());
        for i in 0..NUM_COMPARTMENTS {
            prop_assert!((full[i] - sub[i]).abs() <= 1e-12 * (1.0 + sub[i].abs()), "component {}", i);
        }
    }

    #[test]
    fn tb_submodel_embeds(x in prop::array::uniform4(0.0..1.0e4f64), p in params_strategy()) {
        prop_assume!(x.iter().sum::<f64>() > 1.0);
        let full = model::rhs_uncontrolled(&model::embed_tb(&x), &p).unwrap();
        let sub = model::embed_tb(&model::rhs_tb_only(&x, &p).unwrap());
        for i in 0..NUM_COMPARTMENTS {
            prop_assert!((full[i] - sub[i]).abs() <= 1e-12 * (1.0 + sub[i].abs()), "component {}", i);
        }
    }

    #[test]
    fn reproduction_numbers_monotone(p in params_strategy(), n in 1.0e3..1.0e5f64, factor in 1.01..3.0f64) {
        let base = analysis::r0(&p, n).unwrap();
        let mut hi = p.clone();
        hi.beta1 *= factor;
        hi.beta2 *= factor;
        let up = analysis::r0(&hi, n).unwrap();
        prop_assert!(up.r1 > base.r1 && up.r2 > base.r2);
        let crowded = analysis::r0(&p, n * factor).unwrap();
        prop_assert!(crowded.r1 < base.r1 && crowded.r2 < base.r2);
        prop_assert_eq!(base.r0, base.r1.max(base.r2));
    }

    #[test]
    fn hiv_threshold_matches_linear_stability(p in params_strategy(), scale in 0.2..5.0f64) {
        let mut p = p;
        p.beta2 = scale * analysis::beta_star(&p).unwrap();
        let r1 = analysis::r1(&p, p.dfe_population()).unwrap();
        prop_assume!((r1 - 1.0).abs() > 0.02);
        let verdict = analysis::classify_hiv_dfe(&p, 1e-7).unwrap().classification;
        let expected = if r1 < 1.0 { Stability::LocallyAsymptoticallyStable } else { Stability::Unstable };
        prop_assert_eq!(verdict, expected);
        prop_assert_eq!(analysis::endemic_equilibrium_hiv(&p).is_ok(), r1 > 1.0);
    }

    #[test]
    fn endemic_state_is_a_positive_rest_point(p in params_strategy(), scale in 1.1..6.0f64) {
        let mut p = p;
        p.beta2 = scale * analysis::beta_star(&p).unwrap();
        let eq = analysis::endemic_equilibrium_hiv(&p).unwrap();
        prop_assert!(eq.point.iter().all(|v| *v > 0.0));
        let f = model::rhs_hiv_only(&eq.point, &p).unwrap();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm < 1e-8 * p.lambda, "residual {}", norm);
        prop_assert!((eq.force - p.mu * (eq.r1 - 1.0)).abs() <= 1e-10 * eq.force.max(1.0));
    }

    #[test]
    fn beta_star_scales_with_time_units(p in params_strategy(), c in 0.1..10.0f64) {
        // Measuring time in units 1/c multiplies every rate by c; β* is itself a rate.
        let mut q = p.clone();
        for v in [&mut q.lambda, &mut q.mu, &mut q.alpha1, &mut q.d_a, &mut q.omega1, &mut q.rho1, &mut q.phi] {
            *v *= c;
        }
        let a = analysis::beta_star(&p).unwrap();
        let b = analysis::beta_star(&q).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-12 * b);
        // Λ does not enter β*.
        let mut r = p.clone();
        r.lambda *= c;
        prop_assert!((analysis::beta_star(&r).unwrap() - a).abs() <= 1e-14 * a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_stay_nonnegative_and_bounded(p in params_strategy(), x0 in state_strategy(), (u1, u2) in control_strategy()) {
        let cap = p.dfe_population();
        let scale = 0.99 * cap / x0.total();
        let x0 = State(x0.0.map(|v| v * scale));
        let grid = TimeGrid::with_step(20.0, 1.0 / 50.0).unwrap();
        let traj = simulate_controlled(&x0, &p, &ControlPath::constant(&grid, u1, u2), &grid).unwrap();
        for x in &traj.values {
            let n: f64 = x.iter().sum();
            prop_assert!(n <= cap * (1.0 + 1e-6));
            prop_assert!(x.iter().all(|v| *v >= -1e-9 * n));
        }
    }

    #[test]
    fn simulation_is_deterministic(p in params_strategy(), (u1, u2) in control_strategy()) {
        let grid = TimeGrid::with_step(5.0, 1.0 / 120.0).unwrap();
        let controls = ControlPath::constant(&grid, u1, u2);
        let x0 = State::reference(30_000.0);
        let a = simulate_controlled(&x0, &p, &controls, &grid).unwrap();
        let b = simulate_controlled(&x0, &p, &controls, &grid).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn hiv_persists_above_threshold() {
    let p = Params::reference(0.6, 0.1);
    let eq = analysis::endemic_equilibrium_hiv(&p).unwrap();
    let x0 = [p.dfe_population() - 10.0, 10.0, 0.0, 0.0];
    let grid = TimeGrid::with_step(800.0, 0.05).unwrap();
    let traj = integrate_forward(|_, _, x| model::rhs_hiv_only(x, &p), x0, &grid).unwrap();
    let late = traj.last();
    for (i, (got, want)) in late.iter().zip(eq.point).enumerate() {
        assert!((got - want).abs() < 1e-3 * want, "component {i}");
    }
    let min_ih = traj.values[grid.n_nodes() / 2..]
        .iter()
        .map(|x| x[1])
        .fold(f64::INFINITY, f64::min);
    assert!(min_ih > 0.5 * eq.point[1]);
}

#[test]
fn hiv_dies_out_below_threshold() {
    let mut p = Params::reference(0.6, 0.1);
    p.beta2 = 0.5 * analysis::beta_star(&p).unwrap();
    let x0 = [p.dfe_population() - 500.0, 500.0, 0.0, 0.0];
    // The slowest mode decays at about 0.009 per year.
    let grid = TimeGrid::with_step(1000.0, 0.05).unwrap();
    let traj = integrate_forward(|_, _, x| model::rhs_hiv_only(x, &p), x0, &grid).unwrap();
    assert!(traj.last()[1] < 1e-3 * x0[1]);
}
