//! Scenario files: flat `key = value` lines with `#` comments.
//!
//! Every key is optional. Missing values fall back to the reference initial
//! condition (N(0) = 30000), the reference parameters with β₁ = 0.6, β₂ = 0.1,
//! T = 50 years, h = 1/120 year and the cost functional J with W1 = W2 = 50.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::DEFAULT_STABILITY_TOL;
use crate::error::{Error, Result};
use crate::model::{Params, State, COMPARTMENT_NAMES, REFERENCE_POPULATION};
use crate::ocp::{CostSpec, CostVariant, SweepOptions};

pub const DEFAULT_HORIZON: f64 = 50.0;
pub const DEFAULT_STEP: f64 = 1.0 / 120.0;
pub const DEFAULT_WEIGHT: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Analyze,
    Optimize,
    Compare,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Analyze => "analyze",
            Mode::Optimize => "optimize",
            Mode::Compare => "compare",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "analyze" => Ok(Mode::Analyze),
            "optimize" => Ok(Mode::Optimize),
            "compare" => Ok(Mode::Compare),
            other => Err(Error::Scenario(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    pub params: Params,
    pub initial: State,
    pub horizon: f64,
    pub step: f64,
    pub cost: CostSpec,
    pub sweep: SweepOptions,
    /// Population used in the `Λ/(μN)` factor of R1 and R2; defaults to N(0).
    pub reproduction_population: Option<f64>,
    pub stability_tol: f64,
    /// Additional cost functionals solved in compare mode.
    pub extra_variants: Vec<CostVariant>,
    pub out: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "baseline".into(),
            mode: Mode::Simulate,
            params: Params::default(),
            initial: State::reference(REFERENCE_POPULATION),
            horizon: DEFAULT_HORIZON,
            step: DEFAULT_STEP,
            cost: CostSpec::new(CostVariant::J, DEFAULT_WEIGHT, DEFAULT_WEIGHT),
            sweep: SweepOptions::default(),
            reproduction_population: None,
            stability_tol: DEFAULT_STABILITY_TOL,
            extra_variants: Vec::new(),
            out: None,
        }
    }
}

impl Scenario {
    pub fn reproduction_population(&self) -> f64 {
        self.reproduction_population
            .unwrap_or_else(|| self.initial.total())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cost.validate()?;
        if self.initial.0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Scenario(
                "initial compartments must be finite and nonnegative".into(),
            ));
        }
        if self.initial.total() <= 0.0 {
            return Err(Error::Scenario("initial population must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Scenario(format!("T must be positive, got {}", self.horizon)));
        }
        if !(self.step.is_finite() && self.step > 0.0 && self.step <= self.horizon) {
            return Err(Error::Scenario(format!(
                "dt must lie in (0, T], got {}",
                self.step
            )));
        }
        if self.sweep.tol.is_nan() || self.sweep.tol <= 0.0 || self.sweep.max_iter == 0 {
            return Err(Error::Scenario("sweep tol and max_iter must be positive".into()));
        }
        if !(self.sweep.damping > 0.0 && self.sweep.damping <= 1.0) {
            return Err(Error::Scenario(format!(
                "damping must lie in (0, 1], got {}",
                self.sweep.damping
            )));
        }
        if let Some(n) = self.reproduction_population {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Scenario(format!("N_R must be positive, got {n}")));
            }
        }
        for variant in &self.extra_variants {
            CostSpec { variant: *variant, ..self.cost }.validate()?;
        }
        Ok(())
    }
}

/// Command-line values that take precedence over the scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
    pub cost: Option<CostVariant>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<()> {
        if let Some(m) = self.mode {
            scenario.mode = m;
        }
        if let Some(v) = self.horizon {
            scenario.horizon = v;
        }
        if let Some(v) = self.step {
            scenario.step = v;
        }
        if let Some(v) = self.beta1 {
            scenario.params.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            scenario.params.beta2 = v;
        }
        if let Some(v) = self.w1 {
            scenario.cost.w1 = v;
        }
        if let Some(v) = self.w2 {
            scenario.cost.w2 = v;
        }
        if let Some(v) = self.cost {
            scenario.cost.variant = v;
        }
        if let Some(out) = &self.out {
            scenario.out = Some(out.clone());
        }
        scenario.validate()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scenario = parse_scenario(&text, &path.display().to_string())?;
    if scenario.name == Scenario::default().name {
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            scenario.name = stem.to_owned();
        }
    }
    Ok(scenario)
}

fn param_slot<'a>(params: &'a mut Params, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "Lambda" => &mut params.lambda,
        "mu" => &mut params.mu,
        "beta1" => &mut params.beta1,
        "beta2" => &mut params.beta2,
        "eta_C" => &mut params.eta_c,
        "eta_A" => &mut params.eta_a,
        "k1" => &mut params.k1,
        "k2" => &mut params.k2,
        "tau1" => &mut params.tau1,
        "tau2" => &mut params.tau2,
        "tau3" => &mut params.tau3,
        "beta1_prime" => &mut params.beta1_prime,
        "beta2_prime" => &mut params.beta2_prime,
        "d_T" => &mut params.d_t,
        "d_A" => &mut params.d_a,
        "d_TA" => &mut params.d_ta,
        "delta" => &mut params.delta,
        "psi" => &mut params.psi,
        "phi" => &mut params.phi,
        "rho1" => &mut params.rho1,
        "rho2" => &mut params.rho2,
        "alpha1" => &mut params.alpha1,
        "alpha2" => &mut params.alpha2,
        "omega1" => &mut params.omega1,
        "omega2" => &mut params.omega2,
        "p" => &mut params.p,
        "q" => &mut params.q,
        "r" => &mut params.r,
        _ => return None,
    })
}

/// Parses scenario text; `origin` names the source in error messages.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let mut sc = Scenario::default();
    let mut n0 = REFERENCE_POPULATION;
    let mut initial_overrides: Vec<(usize, f64)> = Vec::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::Config {
            path: origin.to_owned(),
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_owned()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("key `{key}`: `{value}` is not a number")))
        };

        if let Some(slot) = param_slot(&mut sc.params, key) {
            *slot = number()?;
            continue;
        }
        if let Some(name) = key.strip_prefix("init_") {
            let i = COMPARTMENT_NAMES
                .iter()
                .position(|c| *c == name)
                .ok_or_else(|| err(format!("unknown key `{key}`")))?;
            initial_overrides.push((i, number()?));
            continue;
        }
        match key {
            "name" => sc.name = value.to_owned(),
            "mode" => sc.mode = value.parse().map_err(|e: Error| err(e.to_string()))?,
            "T" => sc.horizon = number()?,
            "dt" => sc.step = number()?,
            "cost" => sc.cost.variant = value.parse().map_err(|e: Error| err(e.to_string()))?,
            "W1" => sc.cost.w1 = number()?,
            "W2" => sc.cost.w2 = number()?,
            "frozen_control" => sc.cost.frozen_control = number()?,
            "damping" => sc.sweep.damping = number()?,
            "tol" => sc.sweep.tol = number()?,
            "max_iter" => {
                sc.sweep.max_iter = value
                    .parse()
                    .map_err(|_| err(format!("key `max_iter`: `{value}` is not a count")))?
            }
            "N0" => n0 = number()?,
            "N_R" => sc.reproduction_population = Some(number()?),
            "stability_tol" => sc.stability_tol = number()?,
            "variants" => {
                sc.extra_variants = value
                    .split(',')
                    .map(|v| v.trim())
                    .filter(|v| !v.is_empty())
                    .map(|v| v.parse().map_err(|e: Error| err(e.to_string())))
                    .collect::<Result<_>>()?
            }
            "out" => sc.out = Some(PathBuf::from(value)),
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }

    // The reference parameters tie k2 to k1.
    if seen.contains("k1") && !seen.contains("k2") {
        sc.params.k2 = 1.3 * sc.params.k1;
    }
    sc.initial = State::reference(n0);
    for (i, v) in initial_overrides {
        sc.initial[i] = v;
    }
    sc.validate()?;
    Ok(sc)
}
