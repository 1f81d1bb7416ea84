//! State and parameter types of the TB-HIV/AIDS coinfection model, the forces of
//! infection and the right-hand sides of the full system and its two sub-models.
//!
//! The checked entry points (`rhs_*`, `force_of_infection_*`) validate the state
//! before evaluating. The `*_rates` functions evaluate the raw formulas with no
//! checks at all; they exist for finite-difference Jacobians, whose stencils step
//! slightly outside the nonnegative orthant.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

pub const NUM_COMPARTMENTS: usize = 11;

pub const S: usize = 0;
pub const L_T: usize = 1;
pub const I_T: usize = 2;
pub const R: usize = 3;
pub const I_H: usize = 4;
pub const A: usize = 5;
pub const C_H: usize = 6;
pub const L_TH: usize = 7;
pub const I_TH: usize = 8;
pub const R_H: usize = 9;
pub const A_T: usize = 10;

pub const COMPARTMENT_NAMES: [&str; NUM_COMPARTMENTS] = [
    "S", "L_T", "I_T", "R", "I_H", "A", "C_H", "L_TH", "I_TH", "R_H", "A_T",
];

/// Reference initial condition, in 120ths of the initial population.
pub const REFERENCE_FRACTIONS: [f64; NUM_COMPARTMENTS] =
    [66.0, 37.0, 5.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0];

pub const REFERENCE_POPULATION: f64 = 30_000.0;

/// Negative components smaller than this fraction of N are treated as round-off.
pub const NEGATIVE_ROUNDOFF: f64 = 1e-9;

/// The eleven compartment populations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State(pub [f64; NUM_COMPARTMENTS]);

impl State {
    pub fn zeros() -> Self {
        State([0.0; NUM_COMPARTMENTS])
    }

    /// Reference initial condition scaled to a total population `n0`.
    pub fn reference(n0: f64) -> Self {
        State(REFERENCE_FRACTIONS.map(|f| f * n0 / 120.0))
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_array(&self) -> &[f64; NUM_COMPARTMENTS] {
        &self.0
    }

    /// Validates the state for use as an RHS input.
    ///
    /// Requires a positive, finite total. Negative entries whose magnitude is
    /// below `NEGATIVE_ROUNDOFF * N` are clamped to zero; larger ones are rejected.
    pub fn sanitized(&self) -> Result<State> {
        sanitize(&self.0).map(State)
    }
}

impl Index<usize> for State {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<[f64; NUM_COMPARTMENTS]> for State {
    fn from(values: [f64; NUM_COMPARTMENTS]) -> Self {
        State(values)
    }
}

pub(crate) fn sanitize<const K: usize>(x: &[f64; K]) -> Result<[f64; K]> {
    let n: f64 = x.iter().sum();
    if !n.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite state {x:?}")));
    }
    if n <= 0.0 {
        return Err(Error::Domain(format!(
            "total population must be positive, got N = {n}"
        )));
    }
    let mut out = *x;
    for (i, v) in out.iter_mut().enumerate() {
        if *v < 0.0 {
            if -*v < NEGATIVE_ROUNDOFF * n {
                *v = 0.0;
            } else {
                return Err(Error::Domain(format!(
                    "component {i} is negative ({v}) beyond round-off at N = {n}"
                )));
            }
        }
    }
    Ok(out)
}

/// Model parameters. Rates are per year; `lambda` is individuals per year.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub lambda: f64,
    pub mu: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta_c: f64,
    pub eta_a: f64,
    pub k1: f64,
    pub k2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub beta1_prime: f64,
    pub beta2_prime: f64,
    pub d_t: f64,
    pub d_a: f64,
    pub d_ta: f64,
    pub delta: f64,
    pub psi: f64,
    pub phi: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params::reference(0.6, 0.1)
    }
}

impl Params {
    /// Reference parameter values with the given transmission rates.
    pub fn reference(beta1: f64, beta2: f64) -> Self {
        let k1 = 0.5;
        Params {
            lambda: 430.0,
            mu: 1.0 / 70.0,
            beta1,
            beta2,
            eta_c: 0.9,
            eta_a: 1.05,
            k1,
            k2: 1.3 * k1,
            tau1: 2.0,
            tau2: 1.0,
            tau3: 2.0,
            beta1_prime: 0.9,
            beta2_prime: 1.1,
            d_t: 0.1,
            d_a: 0.3,
            d_ta: 0.33,
            delta: 1.03,
            psi: 1.07,
            phi: 1.0,
            rho1: 0.1,
            rho2: 1.0,
            alpha1: 0.33,
            alpha2: 0.33,
            omega1: 0.09,
            omega2: 0.15,
            p: 0.1,
            q: 0.3,
            r: 0.3,
        }
    }

    /// Same parameters with every disease-induced death rate set to zero.
    pub fn without_disease_deaths(mut self) -> Self {
        self.d_t = 0.0;
        self.d_a = 0.0;
        self.d_ta = 0.0;
        self
    }

    /// Population of the disease-free equilibrium, Λ/μ.
    pub fn dfe_population(&self) -> f64 {
        self.lambda / self.mu
    }

    pub fn fields(&self) -> [(&'static str, f64); 28] {
        [
            ("Lambda", self.lambda),
            ("mu", self.mu),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("eta_C", self.eta_c),
            ("eta_A", self.eta_a),
            ("k1", self.k1),
            ("k2", self.k2),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("tau3", self.tau3),
            ("beta1_prime", self.beta1_prime),
            ("beta2_prime", self.beta2_prime),
            ("d_T", self.d_t),
            ("d_A", self.d_a),
            ("d_TA", self.d_ta),
            ("delta", self.delta),
            ("psi", self.psi),
            ("phi", self.phi),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("p", self.p),
            ("q", self.q),
            ("r", self.r),
        ]
    }

    /// Checks sign constraints, modification-parameter ranges and treatment fractions.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
            if value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be nonnegative",
                });
            }
        }
        let at_least_one = [
            ("eta_A", self.eta_a),
            ("delta", self.delta),
            ("psi", self.psi),
            ("beta2_prime", self.beta2_prime),
        ];
        for (name, value) in at_least_one {
            if value < 1.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "modification parameter must be >= 1",
                });
            }
        }
        for (name, value) in [("eta_C", self.eta_c), ("beta1_prime", self.beta1_prime)] {
            if value > 1.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "modification parameter must be <= 1",
                });
            }
        }
        if self.p + self.q > 1.0 {
            return Err(Error::InvalidParameter {
                name: "q",
                value: self.q,
                reason: "p + q must not exceed 1",
            });
        }
        if self.r > 1.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                value: self.r,
                reason: "must lie in [0, 1]",
            });
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "natural death rate must be positive",
            });
        }
        Ok(())
    }
}

/// λ_T for the full state, no checks.
#[inline]
pub fn tb_force_raw(x: &[f64; NUM_COMPARTMENTS], params: &Params) -> f64 {
    let n: f64 = x.iter().sum();
    params.beta1 * (x[I_T] + x[I_TH] + x[A_T]) / n
}

/// λ_H for the full state, no checks.
#[inline]
pub fn hiv_force_raw(x: &[f64; NUM_COMPARTMENTS], params: &Params) -> f64 {
    let n: f64 = x.iter().sum();
    params.beta2 * hiv_weighted_infectious(x, params) / n
}

#[inline]
pub(crate) fn hiv_weighted_infectious(x: &[f64; NUM_COMPARTMENTS], params: &Params) -> f64 {
    x[I_H] + x[I_TH] + x[L_TH] + x[R_H] + params.eta_c * x[C_H] + params.eta_a * (x[A] + x[A_T])
}

/// TB force of infection λ_T = β₁ (I_T + I_TH + A_T) / N.
pub fn force_of_infection_tb(x: &State, params: &Params) -> Result<f64> {
    let x = x.sanitized()?;
    Ok(tb_force_raw(&x.0, params))
}

/// HIV force of infection λ_H = β₂ [I_H + I_TH + L_TH + R_H + η_C C_H + η_A (A + A_T)] / N.
pub fn force_of_infection_hiv(x: &State, params: &Params) -> Result<f64> {
    let x = x.sanitized()?;
    Ok(hiv_force_raw(&x.0, params))
}

/// Right-hand side of the controlled system, evaluated without any validation.
pub fn controlled_rates(
    x: &[f64; NUM_COMPARTMENTS],
    u1: f64,
    u2: f64,
    p: &Params,
) -> [f64; NUM_COMPARTMENTS] {
    let lt = tb_force_raw(x, p);
    let lh = hiv_force_raw(x, p);
    let mu = p.mu;
    [
        p.lambda - lt * x[S] - lh * x[S] - mu * x[S],
        lt * x[S] + p.beta1_prime * lt * x[R] - (p.k1 + p.tau1 + mu) * x[L_T],
        p.k1 * x[L_T] - (p.tau2 + p.d_t + mu + p.delta * lh) * x[I_T],
        p.tau1 * x[L_T] + p.tau2 * x[I_T] - (p.beta1_prime * lt + lh + mu) * x[R],
        lh * x[S] - (p.rho1 + p.phi + p.psi * lt + mu) * x[I_H]
            + p.alpha1 * x[A]
            + lh * x[R]
            + p.omega1 * x[C_H],
        p.rho1 * x[I_H] + p.omega2 * x[R_H] - p.alpha1 * x[A] - (mu + p.d_a) * x[A],
        p.phi * x[I_H] + u1 * p.rho2 * x[I_TH] + p.r * p.tau3 * x[L_TH]
            - (p.omega1 + mu) * x[C_H],
        p.beta2_prime * lt * x[R_H] - (p.k2 + p.tau3 + mu) * x[L_TH],
        p.delta * lh * x[I_T] + p.psi * lt * x[I_H] + p.alpha2 * x[A_T] + p.k2 * x[L_TH]
            - (p.rho2 + mu + p.d_t) * x[I_TH],
        u2 * p.rho2 * x[I_TH] + (1.0 - p.r) * p.tau3 * x[L_TH]
            - (p.beta2_prime * lt + p.omega2 + mu) * x[R_H],
        (1.0 - (u1 + u2)) * p.rho2 * x[I_TH] - (p.alpha2 + mu + p.d_ta) * x[A_T],
    ]
}

pub(crate) fn check_controls(u1: f64, u2: f64) -> Result<()> {
    if !(u1 >= 0.0 && u2 >= 0.0 && u1 + u2 <= 1.0) {
        return Err(Error::Domain(format!(
            "controls must satisfy u1, u2 >= 0 and u1 + u2 <= 1, got ({u1}, {u2})"
        )));
    }
    Ok(())
}

/// Controlled system with instantaneous treatment fractions `u1` (TB and HIV
/// treatment) and `u2` (TB treatment only) applied to the I_TH class.
pub fn rhs_controlled(x: &State, u1: f64, u2: f64, params: &Params) -> Result<State> {
    check_controls(u1, u2)?;
    let x = x.sanitized()?;
    Ok(State(controlled_rates(&x.0, u1, u2, params)))
}

/// The uncontrolled model: the controlled system with `u1 = p`, `u2 = q`.
pub fn rhs_uncontrolled(x: &State, params: &Params) -> Result<State> {
    rhs_controlled(x, params.p, params.q, params)
}

/// Rate of disease-induced deaths d_T I_T + d_A A + d_T I_TH + d_TA A_T.
pub fn disease_death_rate(x: &[f64; NUM_COMPARTMENTS], p: &Params) -> f64 {
    p.d_t * x[I_T] + p.d_a * x[A] + p.d_t * x[I_TH] + p.d_ta * x[A_T]
}

/// HIV-only sub-model state `(S, I_H, A, C_H)`.
pub type HivState = [f64; 4];

/// TB-only sub-model state `(S, L_T, I_T, R)`.
pub type TbState = [f64; 4];

pub fn hiv_only_rates(x: &HivState, p: &Params) -> HivState {
    let [s, ih, a, ch] = *x;
    let n = s + ih + a + ch;
    let lh = p.beta2 * (ih + p.eta_c * ch + p.eta_a * a) / n;
    [
        p.lambda - lh * s - p.mu * s,
        lh * s - (p.rho1 + p.phi + p.mu) * ih + p.alpha1 * a + p.omega1 * ch,
        p.rho1 * ih - (p.alpha1 + p.mu + p.d_a) * a,
        p.phi * ih - (p.omega1 + p.mu) * ch,
    ]
}

pub fn rhs_hiv_only(x: &HivState, params: &Params) -> Result<HivState> {
    let x = sanitize(x)?;
    Ok(hiv_only_rates(&x, params))
}

pub fn tb_only_rates(x: &TbState, p: &Params) -> TbState {
    let [s, lt_, it, rr] = *x;
    let n = s + lt_ + it + rr;
    let lt = p.beta1 * it / n;
    [
        p.lambda - lt * s - p.mu * s,
        lt * s + p.beta1_prime * lt * rr - (p.k1 + p.tau1 + p.mu) * lt_,
        p.k1 * lt_ - (p.tau2 + p.d_t + p.mu) * it,
        p.tau1 * lt_ + p.tau2 * it - (p.beta1_prime * lt + p.mu) * rr,
    ]
}

pub fn rhs_tb_only(x: &TbState, params: &Params) -> Result<TbState> {
    let x = sanitize(x)?;
    Ok(tb_only_rates(&x, params))
}

/// Embeds an HIV-only state into the full state vector.
pub fn embed_hiv(x: &HivState) -> State {
    let mut full = State::zeros();
    full[S] = x[0];
    full[I_H] = x[1];
    full[A] = x[2];
    full[C_H] = x[3];
    full
}

/// Embeds a TB-only state into the full state vector.
pub fn embed_tb(x: &TbState) -> State {
    let mut full = State::zeros();
    full[S] = x[0];
    full[L_T] = x[1];
    full[I_T] = x[2];
    full[R] = x[3];
    full
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn reference_state_sums_to_initial_population() {
        let x = State::reference(REFERENCE_POPULATION);
        assert!((x.total() - 30_000.0).abs() < 1e-9);
        assert_eq!(REFERENCE_FRACTIONS.iter().sum::<f64>(), 120.0);
    }

    #[test]
    fn reference_params_are_valid() {
        Params::default().validate().unwrap();
        assert!((Params::default().k2 - 0.65).abs() < 1e-15);
    }

    #[test]
    fn tb_force_examples() {
        let p = Params::reference(0.6, 0.1);
        let mut x = State::zeros();
        x[S] = 1000.0;
        assert_eq!(force_of_infection_tb(&x, &p).unwrap(), 0.0);

        let mut x = State::zeros();
        x[I_T] = 5.0;
        x[I_TH] = 2.0;
        x[A_T] = 1.0;
        x[S] = 112.0;
        assert!(rel_close(force_of_infection_tb(&x, &p).unwrap(), 0.04, 1e-14));

        let p0 = Params { beta1: 0.0, ..p };
        assert_eq!(force_of_infection_tb(&State::reference(120.0), &p0).unwrap(), 0.0);
    }

    #[test]
    fn hiv_force_examples() {
        let p = Params::reference(0.6, 0.1);
        let mut x = State::zeros();
        x[S] = 1000.0;
        x[L_T] = 10.0;
        assert_eq!(force_of_infection_hiv(&x, &p).unwrap(), 0.0);

        let mut x = State::zeros();
        x[I_H] = 2.0;
        x[I_TH] = 2.0;
        x[L_TH] = 2.0;
        x[R_H] = 1.0;
        x[C_H] = 1.0;
        x[A] = 1.0;
        x[A_T] = 1.0;
        x[S] = 120.0 - 10.0;
        let expected = 0.1 * (7.0 + 0.9 + 2.1) / 120.0;
        assert!(rel_close(force_of_infection_hiv(&x, &p).unwrap(), expected, 1e-14));

        let unit = Params { eta_a: 1.0, eta_c: 1.0, ..p.clone() };
        let y = State::reference(120.0);
        let infected = y[I_H] + y[I_TH] + y[L_TH] + y[R_H] + y[C_H] + y[A] + y[A_T];
        assert!(rel_close(
            force_of_infection_hiv(&y, &unit).unwrap(),
            0.1 * infected / 120.0,
            1e-14
        ));
    }

    #[test]
    fn zero_population_is_a_domain_error() {
        let p = Params::default();
        assert!(matches!(
            force_of_infection_tb(&State::zeros(), &p),
            Err(Error::Domain(_))
        ));
        assert!(rhs_uncontrolled(&State::zeros(), &p).is_err());
        assert!(rhs_hiv_only(&[0.0; 4], &p).is_err());
        assert!(rhs_tb_only(&[0.0; 4], &p).is_err());
    }

    #[test]
    fn roundoff_negatives_are_clamped_but_real_negatives_rejected() {
        let p = Params::default();
        let mut x = State::reference(30_000.0);
        x[A_T] = -1e-6;
        let clamped = x.sanitized().unwrap();
        assert_eq!(clamped[A_T], 0.0);
        assert!(rhs_uncontrolled(&x, &p).is_ok());
        x[A_T] = -1.0;
        assert!(matches!(rhs_uncontrolled(&x, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn controls_outside_simplex_rejected() {
        let p = Params::default();
        let x = State::reference(30_000.0);
        assert!(rhs_controlled(&x, -0.1, 0.2, &p).is_err());
        assert!(rhs_controlled(&x, 0.6, 0.5, &p).is_err());
        assert!(rhs_controlled(&x, 0.5, 0.5, &p).is_ok());
    }

    #[test]
    fn dfe_is_a_rest_point() {
        let p = Params::default();
        let mut x = State::zeros();
        x[S] = p.dfe_population();
        for (u1, u2) in [(0.0, 0.0), (0.1, 0.3), (0.5, 0.45)] {
            let dx = rhs_controlled(&x, u1, u2, &p).unwrap();
            assert!(dx.0.iter().all(|v| v.abs() < 1e-12), "{dx:?}");
        }
        assert!(rhs_hiv_only(&[p.dfe_population(), 0.0, 0.0, 0.0], &p)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
        assert!(rhs_tb_only(&[p.dfe_population(), 0.0, 0.0, 0.0], &p)
            .unwrap()
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uncontrolled_equals_controlled_at_p_q() {
        let p = Params::default();
        let x = State::reference(30_000.0);
        assert_eq!(
            rhs_uncontrolled(&x, &p).unwrap(),
            rhs_controlled(&x, p.p, p.q, &p).unwrap()
        );
    }

    #[test]
    fn demography_only_conservation() {
        let p = Params::default().without_disease_deaths();
        let x = State::reference(30_000.0);
        let dx = rhs_controlled(&x, 0.2, 0.7, &p).unwrap();
        let expected = p.lambda - p.mu * x.total();
        assert!((dx.total() - expected).abs() < 1e-9);
    }

    #[test]
    fn tb_only_pure_latent_decay() {
        let p = Params { beta1: 0.0, ..Params::default() };
        let dx = rhs_tb_only(&[1000.0, 10.0, 0.0, 0.0], &p).unwrap();
        assert!(rel_close(dx[1], -(p.k1 + p.tau1 + p.mu) * 10.0, 1e-14));
    }

    #[test]
    fn parameter_validation() {
        let bad = Params { p: 0.8, q: 0.3, ..Params::default() };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidParameter { name: "q", .. })
        ));
        let bad = Params { eta_a: 0.9, ..Params::default() };
        assert!(bad.validate().is_err());
        let bad = Params { eta_c: 1.2, ..Params::default() };
        assert!(bad.validate().is_err());
        let bad = Params { d_t: -0.1, ..Params::default() };
        assert!(bad.validate().is_err());
        let bad = Params { r: 1.5, ..Params::default() };
        assert!(bad.validate().is_err());
    }
}
