//! Optimal treatment allocation through Pontryagin's conditions.
//!
//! The Hamiltonian is `H = g(x, u) + ⟨λ, f(x, u)⟩` with `g` the running cost of the
//! chosen functional. Costates obey `λ' = −∂H/∂x` with `λ(T) = 0`, and controls
//! minimize `H` pointwise over the triangle `u1, u2 ≥ 0, u1 + u2 ≤ 0.95`. The
//! forward-backward sweep iterates those three conditions with damping.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::integrator::{integrate_backward, integrate_forward, TimeGrid, Trajectory};
use crate::model::{
    self, check_controls, controlled_rates, sanitize, Params, State, A, A_T, C_H, I_H, I_T, I_TH,
    L_T, L_TH, NUM_COMPARTMENTS, R, R_H, S,
};

pub type Costate = [f64; NUM_COMPARTMENTS];

/// Upper bound on each control and on their sum.
pub const U_MAX: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CostVariant {
    /// `∫ A_T + W1/2 u1² + W2/2 u2²`
    J,
    /// `∫ A + A_T + W1/2 u1² + W2/2 u2²`
    J1,
    /// `∫ A + A_T + W1/2 u1²`, u2 frozen
    J2,
    /// `∫ A + A_T + W2/2 u2²`, u1 frozen
    J3,
}

impl CostVariant {
    pub const ALL: [CostVariant; 4] = [CostVariant::J, CostVariant::J1, CostVariant::J2, CostVariant::J3];

    pub fn label(self) -> &'static str {
        match self {
            CostVariant::J => "J",
            CostVariant::J1 => "J1",
            CostVariant::J2 => "J2",
            CostVariant::J3 => "J3",
        }
    }

    fn counts_aids(self) -> bool {
        self != CostVariant::J
    }

    fn u1_active(self) -> bool {
        self != CostVariant::J3
    }

    fn u2_active(self) -> bool {
        self != CostVariant::J2
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CostVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "J" => Ok(CostVariant::J),
            "J1" => Ok(CostVariant::J1),
            "J2" => Ok(CostVariant::J2),
            "J3" => Ok(CostVariant::J3),
            other => Err(Error::Scenario(format!(
                "unknown cost variant `{other}` (expected J, J1, J2 or J3)"
            ))),
        }
    }
}

/// Cost functional and its weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSpec {
    pub variant: CostVariant,
    pub w1: f64,
    pub w2: f64,
    /// Value held by the control a single-control functional (J2, J3) leaves out.
    pub frozen_control: f64,
}

impl CostSpec {
    pub fn new(variant: CostVariant, w1: f64, w2: f64) -> Self {
        CostSpec {
            variant,
            w1,
            w2,
            frozen_control: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w, active) in [
            ("W1", self.w1, self.variant.u1_active()),
            ("W2", self.w2, self.variant.u2_active()),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Scenario(format!("{name} must be finite and >= 0, got {w}")));
            }
            if active && w == 0.0 {
                return Err(Error::DegenerateWeights(format!(
                    "{name} = 0 makes the pointwise minimizer non-unique"
                )));
            }
        }
        if !(0.0..=U_MAX).contains(&self.frozen_control) {
            return Err(Error::Scenario(format!(
                "frozen control must lie in [0, {U_MAX}], got {}",
                self.frozen_control
            )));
        }
        Ok(())
    }

    /// Running cost `g(x, u1, u2)`.
    pub fn integrand(&self, x: &[f64; NUM_COMPARTMENTS], u1: f64, u2: f64) -> f64 {
        let mut g = x[A_T];
        if self.variant.counts_aids() {
            g += x[A];
        }
        if self.variant.u1_active() {
            g += 0.5 * self.w1 * u1 * u1;
        }
        if self.variant.u2_active() {
            g += 0.5 * self.w2 * u2 * u2;
        }
        g
    }
}

/// The admissible control triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleSet {
    pub u_max: f64,
}

impl Default for AdmissibleSet {
    fn default() -> Self {
        AdmissibleSet { u_max: U_MAX }
    }
}

impl AdmissibleSet {
    pub fn contains(&self, u1: f64, u2: f64) -> bool {
        u1 >= 0.0 && u2 >= 0.0 && u1 + u2 <= self.u_max
    }

    /// Clamps to the orthant and nudges `u2` down by ulps until the rounded sum
    /// respects the cap. Only meant for points that are feasible up to round-off.
    fn enforce(&self, u1: f64, u2: f64) -> (f64, f64) {
        let u1 = u1.clamp(0.0, self.u_max);
        let mut u2 = u2.max(0.0);
        while u1 + u2 > self.u_max {
            u2 = if u2 > 0.0 { u2.next_down().max(0.0) } else { 0.0 };
            if u2 == 0.0 {
                break;
            }
        }
        (u1, u2)
    }
}

/// Control values at every node of a grid, held constant over each interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl ControlPath {
    pub fn constant(grid: &TimeGrid, u1: f64, u2: f64) -> Self {
        ControlPath {
            u1: vec![u1; grid.n_nodes()],
            u2: vec![u2; grid.n_nodes()],
        }
    }

    pub fn len(&self) -> usize {
        self.u1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u1.is_empty()
    }

    pub fn at(&self, i: usize) -> (f64, f64) {
        (self.u1[i], self.u2[i])
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.u1.len() != grid.n_nodes() || self.u2.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "control path has {} / {} nodes, grid has {}",
                self.u1.len(),
                self.u2.len(),
                grid.n_nodes()
            )));
        }
        Ok(())
    }
}

/// `H(x, λ, u) = g(x, u) + ⟨λ, f(x, u)⟩`.
pub fn hamiltonian(
    x: &State,
    lam: &Costate,
    u1: f64,
    u2: f64,
    cost: &CostSpec,
    params: &Params,
) -> Result<f64> {
    check_controls(u1, u2)?;
    let x = sanitize(&x.0)?;
    Ok(hamiltonian_raw(&x, lam, u1, u2, cost, params))
}

pub fn hamiltonian_raw(
    x: &[f64; NUM_COMPARTMENTS],
    lam: &Costate,
    u1: f64,
    u2: f64,
    cost: &CostSpec,
    params: &Params,
) -> f64 {
    let f = controlled_rates(x, u1, u2, params);
    cost.integrand(x, u1, u2) + lam.iter().zip(f.iter()).map(|(l, d)| l * d).sum::<f64>()
}

/// Costate dynamics `λ' = −∂H/∂x`.
pub fn adjoint_rhs(
    x: &State,
    lam: &Costate,
    u1: f64,
    u2: f64,
    cost: &CostSpec,
    params: &Params,
) -> Result<Costate> {
    check_controls(u1, u2)?;
    let x = sanitize(&x.0)?;
    Ok(adjoint_rates(&x, lam, u1, u2, cost, params))
}

/// Unchecked `−∂H/∂x`.
///
/// Σᵢ λᵢ fᵢ splits into a part linear in `x` plus `λ_T · P_T + λ_H · P_H`, where
/// `P_T`, `P_H` collect the compartments multiplied by each force of infection.
/// Both forces are ratios over `N`, so `∂λ_T/∂x_j = (β₁ e_j − λ_T)/N` with `e_j`
/// the indicator of a TB-infectious class, and likewise for `λ_H` with the HIV
/// infectiousness weights.
pub fn adjoint_rates(
    x: &[f64; NUM_COMPARTMENTS],
    l: &Costate,
    u1: f64,
    u2: f64,
    cost: &CostSpec,
    p: &Params,
) -> Costate {
    let n: f64 = x.iter().sum();
    let lt = model::tb_force_raw(x, p);
    let lh = model::hiv_force_raw(x, p);
    let mu = p.mu;

    let pt = x[S] * (l[L_T] - l[S])
        + p.beta1_prime * x[R] * (l[L_T] - l[R])
        + p.psi * x[I_H] * (l[I_TH] - l[I_H])
        + p.beta2_prime * x[R_H] * (l[L_TH] - l[R_H]);
    let ph = x[S] * (l[I_H] - l[S]) + p.delta * x[I_T] * (l[I_TH] - l[I_T]) + x[R] * (l[I_H] - l[R]);

    let mut tb_weight = [0.0; NUM_COMPARTMENTS];
    for j in [I_T, I_TH, A_T] {
        tb_weight[j] = 1.0;
    }
    let mut hiv_weight = [0.0; NUM_COMPARTMENTS];
    for j in [I_H, I_TH, L_TH, R_H] {
        hiv_weight[j] = 1.0;
    }
    hiv_weight[C_H] = p.eta_c;
    hiv_weight[A] = p.eta_a;
    hiv_weight[A_T] = p.eta_a;

    let mut grad = [
        -mu * l[S] + lt * (l[L_T] - l[S]) + lh * (l[I_H] - l[S]),
        -(p.k1 + p.tau1 + mu) * l[L_T] + p.k1 * l[I_T] + p.tau1 * l[R],
        -(p.tau2 + p.d_t + mu) * l[I_T] + p.tau2 * l[R] + lh * p.delta * (l[I_TH] - l[I_T]),
        -mu * l[R] + lt * p.beta1_prime * (l[L_T] - l[R]) + lh * (l[I_H] - l[R]),
        -(p.rho1 + p.phi + mu) * l[I_H] + p.rho1 * l[A] + p.phi * l[C_H]
            + lt * p.psi * (l[I_TH] - l[I_H]),
        p.alpha1 * l[I_H] - (p.alpha1 + mu + p.d_a) * l[A],
        p.omega1 * l[I_H] - (p.omega1 + mu) * l[C_H],
        p.r * p.tau3 * l[C_H] - (p.k2 + p.tau3 + mu) * l[L_TH] + p.k2 * l[I_TH]
            + (1.0 - p.r) * p.tau3 * l[R_H],
        u1 * p.rho2 * l[C_H] - (p.rho2 + mu + p.d_t) * l[I_TH]
            + u2 * p.rho2 * l[R_H]
            + (1.0 - u1 - u2) * p.rho2 * l[A_T],
        p.omega2 * l[A] - (p.omega2 + mu) * l[R_H] + lt * p.beta2_prime * (l[L_TH] - l[R_H]),
        p.alpha2 * l[I_TH] - (p.alpha2 + mu + p.d_ta) * l[A_T],
    ];
    for (j, g) in grad.iter_mut().enumerate() {
        *g += (p.beta1 * tb_weight[j] - lt) / n * pt + (p.beta2 * hiv_weight[j] - lh) / n * ph;
    }
    grad[A_T] += 1.0;
    if cost.variant.counts_aids() {
        grad[A] += 1.0;
    }
    grad.map(|g| -g)
}

/// Exact minimizer of `H(x, λ, ·)` over the admissible triangle.
///
/// `H` is separable and quadratic in the controls with
/// `∂H/∂u1 = W1 u1 + (λ_{C_H} − λ_{A_T}) ρ₂ I_TH` and
/// `∂H/∂u2 = W2 u2 + (λ_{R_H} − λ_{A_T}) ρ₂ I_TH`. The orthant-clamped stationary
/// point is optimal when it respects the sum cap; otherwise the cap is active
/// and the minimum lies on the segment `u1 + u2 = u_max`.
pub fn pointwise_minimizer(
    x: &State,
    lam: &Costate,
    cost: &CostSpec,
    params: &Params,
) -> Result<(f64, f64)> {
    cost.validate()?;
    let x = sanitize(&x.0)?;
    Ok(minimize_controls(&x, lam, cost, params, &AdmissibleSet::default()))
}

fn minimize_controls(
    x: &[f64; NUM_COMPARTMENTS],
    lam: &Costate,
    cost: &CostSpec,
    params: &Params,
    set: &AdmissibleSet,
) -> (f64, f64) {
    let flow = params.rho2 * x[I_TH];
    let a = (lam[C_H] - lam[A_T]) * flow;
    let b = (lam[R_H] - lam[A_T]) * flow;
    let u_max = set.u_max;
    match cost.variant {
        CostVariant::J | CostVariant::J1 => {
            let u1 = (-a / cost.w1).max(0.0);
            let u2 = (-b / cost.w2).max(0.0);
            if u1 + u2 <= u_max {
                return (u1, u2);
            }
            let u1 = ((cost.w2 * u_max + b - a) / (cost.w1 + cost.w2)).clamp(0.0, u_max);
            set.enforce(u1, u_max - u1)
        }
        CostVariant::J2 => {
            let frozen = cost.frozen_control;
            let u1 = (-a / cost.w1).clamp(0.0, u_max - frozen);
            set.enforce(u1, frozen)
        }
        CostVariant::J3 => {
            let frozen = cost.frozen_control;
            let u2 = (-b / cost.w2).clamp(0.0, u_max - frozen);
            set.enforce(frozen, u2)
        }
    }
}

/// Composite trapezoid rule for the running cost over the grid.
pub fn evaluate_cost(
    state: &Trajectory<NUM_COMPARTMENTS>,
    controls: &ControlPath,
    cost: &CostSpec,
) -> Result<f64> {
    controls.check_grid(&state.grid)?;
    let g: Vec<f64> = state
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| cost.integrand(x, controls.u1[i], controls.u2[i]))
        .collect();
    Ok(trapezoid(&g, state.grid.step()))
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Integrates the controlled system under a piecewise-constant control path.
pub fn simulate_controlled(
    x0: &State,
    params: &Params,
    controls: &ControlPath,
    grid: &TimeGrid,
) -> Result<Trajectory<NUM_COMPARTMENTS>> {
    controls.check_grid(grid)?;
    for i in 0..controls.len() {
        check_controls(controls.u1[i], controls.u2[i])?;
    }
    let x0 = sanitize(&x0.0)?;
    integrate_forward(
        |i, _, x| {
            let x = sanitize(x)?;
            Ok(controlled_rates(&x, controls.u1[i], controls.u2[i], params))
        },
        x0,
        grid,
    )
}

/// Integrates the costates backward from `λ(T) = 0` along a state trajectory.
pub fn solve_adjoint(
    state: &Trajectory<NUM_COMPARTMENTS>,
    controls: &ControlPath,
    cost: &CostSpec,
    params: &Params,
) -> Result<Trajectory<NUM_COMPARTMENTS>> {
    controls.check_grid(&state.grid)?;
    integrate_backward(
        |i, _, lam, x| {
            let x = sanitize(x)?;
            Ok(adjoint_rates(&x, lam, controls.u1[i], controls.u2[i], cost, params))
        },
        [0.0; NUM_COMPARTMENTS],
        state,
        &state.grid,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    /// Weight ω of the candidate in `u ← (1 − ω) u + ω u_candidate`.
    pub damping: f64,
    /// Stop once the max-norm relative control change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// When false the initial controls are evaluated once and returned unchanged.
    pub update_controls: bool,
    /// Starting controls; defaults to `(p, q)`, with the frozen value substituted
    /// for the inactive control of single-control functionals.
    pub initial: Option<ControlPath>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            damping: 0.5,
            tol: 1e-4,
            max_iter: 500,
            update_controls: true,
            initial: None,
        }
    }
}

/// Outcome of a forward-backward sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub controls: ControlPath,
    pub state: Trajectory<NUM_COMPARTMENTS>,
    pub adjoint: Trajectory<NUM_COMPARTMENTS>,
    pub cost: f64,
    /// Cost of the initial controls.
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_change: f64,
}

/// Denominator floor for the relative control change, so that a control that
/// sits at zero converges on absolute change.
const CHANGE_FLOOR: f64 = 1e-2;

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let diff = old
        .iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = new.iter().map(|v| v.abs()).fold(0.0, f64::max).max(CHANGE_FLOOR);
    diff / scale
}

struct Iterate {
    controls: ControlPath,
    state: Trajectory<NUM_COMPARTMENTS>,
    adjoint: Trajectory<NUM_COMPARTMENTS>,
    cost: f64,
}

fn evaluate(
    x0: &State,
    params: &Params,
    cost: &CostSpec,
    grid: &TimeGrid,
    controls: ControlPath,
) -> Result<Iterate> {
    let state = simulate_controlled(x0, params, &controls, grid)?;
    let adjoint = solve_adjoint(&state, &controls, cost, params)?;
    let value = evaluate_cost(&state, &controls, cost)?;
    Ok(Iterate {
        controls,
        state,
        adjoint,
        cost: value,
    })
}

/// Forward-backward sweep for the optimal treatment problem.
///
/// Each pass integrates the state under the current controls, integrates the
/// costates backward from zero, computes the pointwise minimizer at every node
/// and blends it into the controls. The lowest-cost iterate seen is returned.
/// Running out of iterations is reported through `converged = false`.
pub fn fbsm_solve(
    x0: &State,
    params: &Params,
    cost: &CostSpec,
    grid: &TimeGrid,
    options: &SweepOptions,
) -> Result<SweepResult> {
    cost.validate()?;
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::Scenario(format!(
            "sweep damping must lie in (0, 1], got {}",
            options.damping
        )));
    }
    let set = AdmissibleSet::default();
    let initial = match &options.initial {
        Some(path) => {
            path.check_grid(grid)?;
            path.clone()
        }
        None => {
            let (u1, u2) = match cost.variant {
                CostVariant::J | CostVariant::J1 => (params.p, params.q),
                CostVariant::J2 => (params.p, cost.frozen_control),
                CostVariant::J3 => (cost.frozen_control, params.q),
            };
            ControlPath::constant(grid, u1, u2)
        }
    };

    let mut current = evaluate(x0, params, cost, grid, initial)?;
    let initial_cost = current.cost;
    if !options.update_controls {
        return Ok(SweepResult {
            controls: current.controls,
            state: current.state,
            adjoint: current.adjoint,
            cost: current.cost,
            initial_cost,
            iterations: 0,
            converged: true,
            final_change: 0.0,
        });
    }

    let mut best: Option<Iterate> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut final_change = f64::INFINITY;
    let omega = options.damping;
    while iterations < options.max_iter {
        iterations += 1;
        let n = grid.n_nodes();
        let mut u1 = Vec::with_capacity(n);
        let mut u2 = Vec::with_capacity(n);
        for i in 0..n {
            let x = sanitize(&current.state.values[i])?;
            let (c1, c2) = minimize_controls(&x, &current.adjoint.values[i], cost, params, &set);
            let (o1, o2) = current.controls.at(i);
            let (v1, v2) = set.enforce((1.0 - omega) * o1 + omega * c1, (1.0 - omega) * o2 + omega * c2);
            u1.push(v1);
            u2.push(v2);
        }
        final_change = relative_change(&current.controls.u1, &u1)
            .max(relative_change(&current.controls.u2, &u2));
        let next = evaluate(x0, params, cost, grid, ControlPath { u1, u2 })?;
        let previous = std::mem::replace(&mut current, next);
        if best.as_ref().is_none_or(|b| previous.cost < b.cost) {
            best = Some(previous);
        }
        if final_change < options.tol {
            converged = true;
            break;
        }
    }
    let best = match best {
        Some(b) if b.cost < current.cost => b,
        _ => current,
    };
    Ok(SweepResult {
        controls: best.controls,
        state: best.state,
        adjoint: best.adjoint,
        cost: best.cost,
        initial_cost,
        iterations,
        converged,
        final_change,
    })
}
