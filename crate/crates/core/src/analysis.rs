//! Reproduction numbers, equilibria and local stability.
//!
//! `R1` and `R2` contain the population `N` in their leading factor `Λ/(μN)`.
//! Callers choose it; the scenario layer uses the initial population by default.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::model::{self, HivState, Params, State, NUM_COMPARTMENTS};

pub const DEFAULT_STABILITY_TOL: f64 = 1e-7;

/// Relative step of the central-difference Jacobian.
pub const JACOBIAN_REL_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReproductionNumbers {
    pub r1: f64,
    pub r2: f64,
    pub r0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    LocallyAsymptoticallyStable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::LocallyAsymptoticallyStable => "locally-asymptotically-stable",
            Stability::Unstable => "unstable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub point: Vec<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub classification: Stability,
}

impl StabilityReport {
    /// Largest real part among the eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Aggregates of the HIV-only rates that appear in `R1`, `β*` and the endemic state.
#[derive(Clone, Copy, Debug)]
struct HivConstants {
    c2: f64,
    c3: f64,
    /// C₃(C₂ + η_A ρ₁) + η_C φ C₂
    infectivity: f64,
    /// μ(C₃(ρ₁ + C₂) + C₂ φ + ρ₁ d_A) + ρ₁ ω₁ d_A
    removal: f64,
}

impl HivConstants {
    fn new(p: &Params) -> Self {
        let c2 = p.alpha1 + p.mu + p.d_a;
        let c3 = p.omega1 + p.mu;
        HivConstants {
            c2,
            c3,
            infectivity: c3 * (c2 + p.eta_a * p.rho1) + p.eta_c * p.phi * c2,
            removal: p.mu * (c3 * (p.rho1 + c2) + c2 * p.phi + p.rho1 * p.d_a)
                + p.rho1 * p.omega1 * p.d_a,
        }
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {value}")))
    }
}

/// HIV reproduction number
/// `R1 = β₂ Λ (C₃(C₂ + η_A ρ₁) + η_C φ C₂) / (N μ [μ(C₃(ρ₁ + C₂) + C₂φ + ρ₁ d_A) + ρ₁ ω₁ d_A])`.
pub fn r1(params: &Params, n: f64) -> Result<f64> {
    positive("mu", params.mu)?;
    positive("N", n)?;
    let k = HivConstants::new(params);
    positive("HIV removal denominator", k.removal)?;
    Ok(params.beta2 * params.lambda * k.infectivity / (n * params.mu * k.removal))
}

/// TB reproduction number `R2 = Λ/(μN) · β₁/(μ + d_T + τ₂) · k₁/(μ + k₁ + τ₁)`.
pub fn r2(params: &Params, n: f64) -> Result<f64> {
    positive("mu", params.mu)?;
    positive("N", n)?;
    let active = positive("mu + d_T + tau2", params.mu + params.d_t + params.tau2)?;
    let latent = positive("mu + k1 + tau1", params.mu + params.k1 + params.tau1)?;
    Ok(params.lambda / (params.mu * n) * (params.beta1 / active) * (params.k1 / latent))
}

pub fn r0(params: &Params, n: f64) -> Result<ReproductionNumbers> {
    let r1 = r1(params, n)?;
    let r2 = r2(params, n)?;
    Ok(ReproductionNumbers {
        r1,
        r2,
        r0: r1.max(r2),
    })
}

/// Disease-free equilibrium `(Λ/μ, 0, ..., 0)` of the full model.
pub fn dfe_full(params: &Params) -> Result<State> {
    positive("mu", params.mu)?;
    let mut x = State::zeros();
    x[model::S] = params.lambda / params.mu;
    Ok(x)
}

/// Endemic equilibrium of the HIV-only sub-model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndemicEquilibrium {
    /// `(S*, I_H*, A*, C_H*)`
    pub point: HivState,
    /// Steady-state force of infection λ_H*.
    pub force: f64,
    /// Equilibrium population N*.
    pub population: f64,
    /// `R1` evaluated at `N = N*`; satisfies `λ_H* = μ(R1 - 1)`.
    pub r1: f64,
}

/// Endemic equilibrium of the HIV-only model.
///
/// The steady state satisfies `λ_H* = μ(R1(N*) − 1)` with `R1` taken at the
/// equilibrium population `N*`. Solving that self-consistently gives
/// `λ_H* = (β₂ K − D₀) / (C₂C₃ + ρ₁C₃ + φC₂)`, where `K` and `D₀` are the numerator
/// and bracketed denominator of `R1`; the components then follow from
/// `S* = Λ/(λ_H* + μ)`, `I_H* = −λ_H* Λ C₂ C₃ / D` and so on.
///
/// Exists iff `R1 > 1` at the disease-free population `N = Λ/μ`.
pub fn endemic_equilibrium_hiv(params: &Params) -> Result<EndemicEquilibrium> {
    let n_dfe = dfe_full(params)?[model::S];
    let r1_dfe = if n_dfe > 0.0 { r1(params, n_dfe)? } else { 0.0 };
    let k = HivConstants::new(params);
    let excess = params.beta2 * k.infectivity - k.removal;
    if !(r1_dfe > 1.0 && excess > 0.0) {
        return Err(Error::NoEndemicEquilibrium { r1: r1_dfe });
    }
    let mu = params.mu;
    let lambda = params.lambda;
    let force = excess / (k.c2 * k.c3 + params.rho1 * k.c3 + params.phi * k.c2);
    let d = -(force + mu) * k.removal;
    let s = lambda / (force + mu);
    let ih = -force * lambda * k.c2 * k.c3 / d;
    let a = -params.rho1 * force * lambda * k.c3 / d;
    let ch = -params.phi * force * lambda * k.c2 / d;
    let population = s + ih + a + ch;
    Ok(EndemicEquilibrium {
        point: [s, ih, a, ch],
        force,
        population,
        r1: r1(params, population)?,
    })
}

/// Bifurcation value of β₂ at which `R1 = 1`:
/// `β* = [μ(C₃(ρ₁ + C₂) + C₂φ + ρ₁ d_A) + ρ₁ ω₁ d_A] / [C₃(C₂ + η_A ρ₁) + η_C φ C₂]`.
///
/// The closed form corresponds to `R1` evaluated at the disease-free population
/// `N = Λ/μ`, where the leading factor `Λ/(μN)` is one.
pub fn beta_star(params: &Params) -> Result<f64> {
    let k = HivConstants::new(params);
    positive("HIV infectivity denominator", k.infectivity)?;
    Ok(k.removal / k.infectivity)
}

/// Closed-form Jacobian of the HIV-only model at its DFE.
///
/// Rows three and four carry `C₂` and `C₃` on the diagonal with a positive sign.
/// The true derivative of the sub-model has `−C₂` and `−C₃` there; see
/// [`hiv_dfe_jacobian_numeric`] for the numerically differentiated matrix.
pub fn jacobian_hiv_dfe(params: &Params, n: f64) -> Result<[[f64; 4]; 4]> {
    positive("mu", params.mu)?;
    positive("N", n)?;
    let p = params;
    let c1 = p.rho1 + p.phi + p.mu;
    let k = HivConstants::new(p);
    let b = p.beta2 * p.lambda / (p.mu * n);
    Ok([
        [-p.mu, -b, -b * p.eta_a, -b * p.eta_c],
        [0.0, b - c1, b * p.eta_a + p.alpha1, b * p.eta_c + p.omega1],
        [0.0, p.rho1, k.c2, 0.0],
        [0.0, p.phi, 0.0, k.c3],
    ])
}

/// Central-difference Jacobian of the HIV-only RHS at its DFE.
pub fn hiv_dfe_jacobian_numeric(params: &Params) -> Result<DMatrix<f64>> {
    let x0: HivState = [dfe_full(params)?[model::S], 0.0, 0.0, 0.0];
    numerical_jacobian(|x| model::hiv_only_rates(x, params), &x0)
}

/// Central-difference Jacobian with per-coordinate step `1e-6 · max(1, |xᵢ|)`.
pub fn numerical_jacobian<const K: usize, F>(f: F, x: &[f64; K]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64; K]) -> [f64; K],
{
    let mut jac = DMatrix::zeros(K, K);
    for j in 0..K {
        let h = JACOBIAN_REL_STEP * x[j].abs().max(1.0);
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += h;
        minus[j] -= h;
        let fp = f(&plus);
        let fm = f(&minus);
        for i in 0..K {
            let d = (fp[i] - fm[i]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite Jacobian entry ({i}, {j})"
                )));
            }
            jac[(i, j)] = d;
        }
    }
    Ok(jac)
}

pub fn eigenvalues(matrix: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let schur = Schur::try_new(matrix, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn classify_eigenvalues(eigenvalues: &[Complex<f64>], tol: f64) -> Stability {
    if eigenvalues.iter().any(|z| z.re.abs() <= tol) {
        Stability::Marginal
    } else if eigenvalues.iter().all(|z| z.re < -tol) {
        Stability::LocallyAsymptoticallyStable
    } else {
        Stability::Unstable
    }
}

/// Classifies a rest point of `x' = rhs(x)` from the eigenvalues of its
/// central-difference Jacobian.
pub fn classify_stability<const K: usize, F>(
    rhs: F,
    point: &[f64; K],
    tol: f64,
) -> Result<StabilityReport>
where
    F: Fn(&[f64; K]) -> [f64; K],
{
    let jac = numerical_jacobian(rhs, point)?;
    let eigenvalues = eigenvalues(jac)?;
    Ok(StabilityReport {
        point: point.to_vec(),
        classification: classify_eigenvalues(&eigenvalues, tol),
        eigenvalues,
    })
}

/// Stability of the full-model DFE under the uncontrolled dynamics.
pub fn classify_full_dfe(params: &Params, tol: f64) -> Result<StabilityReport> {
    let dfe = dfe_full(params)?;
    classify_stability::<NUM_COMPARTMENTS, _>(
        |x| model::controlled_rates(x, params.p, params.q, params),
        &dfe.0,
        tol,
    )
}

pub fn classify_hiv_endemic(params: &Params, tol: f64) -> Result<StabilityReport> {
    let eq = endemic_equilibrium_hiv(params)?;
    classify_stability(|x| model::hiv_only_rates(x, params), &eq.point, tol)
}

pub fn classify_hiv_dfe(params: &Params, tol: f64) -> Result<StabilityReport> {
    let x0: HivState = [dfe_full(params)?[model::S], 0.0, 0.0, 0.0];
    classify_stability(|x| model::hiv_only_rates(x, params), &x0, tol)
}
