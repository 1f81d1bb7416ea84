#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tbhiv::model::{Params, State, A_T, C_H, I_TH, NUM_COMPARTMENTS, R_H};
use tbhiv::ocp::{self, CostSpec, CostVariant, U_MAX};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Interior state with every compartment in `[1, 10⁴]`.
pub fn interior_state(rng: &mut StdRng) -> State {
    State(std::array::from_fn(|_| rng.gen_range(1.0..1.0e4)))
}

pub fn costate(rng: &mut StdRng, scale: f64) -> [f64; NUM_COMPARTMENTS] {
    std::array::from_fn(|_| rng.gen_range(-scale..scale))
}

/// A point of the control triangle `u1, u2 ≥ 0, u1 + u2 ≤ cap`.
pub fn controls(rng: &mut StdRng, cap: f64) -> (f64, f64) {
    loop {
        let u1 = rng.gen_range(0.0..cap);
        let u2 = rng.gen_range(0.0..cap);
        if u1 + u2 <= cap {
            return (u1, u2);
        }
    }
}

/// Reference parameters with every parameter scaled by an independent factor in `[1 − spread, 1 + spread]`,
/// then pulled back into the admissible ranges.
pub fn perturbed_params(rng: &mut StdRng, base: &Params, spread: f64) -> Params {
    let mut f = || rng.gen_range(1.0 - spread..1.0 + spread);
    let mut p = base.clone();
    for v in [
        &mut p.lambda, &mut p.mu, &mut p.beta1, &mut p.beta2, &mut p.eta_c, &mut p.eta_a,
        &mut p.k1, &mut p.k2, &mut p.tau1, &mut p.tau2, &mut p.tau3, &mut p.beta1_prime,
        &mut p.beta2_prime, &mut p.d_t, &mut p.d_a, &mut p.d_ta, &mut p.delta, &mut p.psi,
        &mut p.phi, &mut p.rho1, &mut p.rho2, &mut p.alpha1, &mut p.alpha2, &mut p.omega1,
        &mut p.omega2, &mut p.p, &mut p.q, &mut p.r,
    ] {
        *v *= f();
    }
    p.eta_c = p.eta_c.min(1.0);
    p.beta1_prime = p.beta1_prime.min(1.0);
    p.eta_a = p.eta_a.max(1.0);
    p.delta = p.delta.max(1.0);
    p.psi = p.psi.max(1.0);
    p.beta2_prime = p.beta2_prime.max(1.0);
    p.r = p.r.min(1.0);
    p.validate().expect("perturbed parameters stay admissible");
    p
}

/// Fourth-order central difference of `H` in each state coordinate.
pub fn hamiltonian_gradient_fd(
    x: &[f64; NUM_COMPARTMENTS],
    lam: &[f64; NUM_COMPARTMENTS],
    u1: f64,
    u2: f64,
    cost: &CostSpec,
    p: &Params,
) -> [f64; NUM_COMPARTMENTS] {
    let h_at = |y: &[f64; NUM_COMPARTMENTS]| ocp::hamiltonian_raw(y, lam, u1, u2, cost, p);
    std::array::from_fn(|j| {
        let h = 1e-3 * x[j].abs().max(1.0);
        let shifted = |k: f64| {
            let mut y = *x;
            y[j] += k * h;
            h_at(&y)
        };
        (-shifted(2.0) + 8.0 * shifted(1.0) - 8.0 * shifted(-1.0) + shifted(-2.0)) / (12.0 * h)
    })
}

/// `H(u) − H(0)`: the control enters the running cost quadratically and the
/// dynamics only through the I_TH outflows to C_H, R_H and A_T.
pub fn control_part(x: &State, lam: &[f64; 11], u1: f64, u2: f64, cost: &CostSpec, p: &Params) -> f64 {
    let flow = p.rho2 * x[I_TH];
    let mut h = flow * (u1 * (lam[C_H] - lam[A_T]) + u2 * (lam[R_H] - lam[A_T]));
    if cost.variant != CostVariant::J3 {
        h += 0.5 * cost.w1 * u1 * u1;
    }
    if cost.variant != CostVariant::J2 {
        h += 0.5 * cost.w2 * u2 * u2;
    }
    h
}

pub const GRID: f64 = 1e-3;

/// Brute-force minimum of [`control_part`] over the admissible controls on a
/// lattice of spacing [`GRID`]; returns `(H, u1, u2)`.
pub fn grid_minimum(
    x: &State,
    lam: &[f64; NUM_COMPARTMENTS],
    cost: &CostSpec,
    p: &Params,
) -> (f64, f64, f64) {
    let steps = (U_MAX / GRID).round() as usize;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut consider = |a: f64, b: f64| {
        let v = control_part(x, lam, a, b, cost, p);
        if v < best.0 {
            best = (v, a, b);
        }
    };
    let f = cost.frozen_control;
    let top = ((U_MAX - f) / GRID).round() as usize;
    match cost.variant {
        CostVariant::J | CostVariant::J1 => {
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    consider(i as f64 * GRID, j as f64 * GRID);
                }
            }
        }
        CostVariant::J2 => (0..=top).for_each(|i| consider(i as f64 * GRID, f)),
        CostVariant::J3 => (0..=top).for_each(|j| consider(f, j as f64 * GRID)),
    }
    best
}
