//! Executes a scenario and writes its CSV outputs and `summary.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{self, ReproductionNumbers};
use crate::csv;
use crate::error::{Error, Result};
use crate::integrator::{TimeGrid, Trajectory};
use crate::model::{self, NUM_COMPARTMENTS};
use crate::ocp::{self, ControlPath, CostSpec, SweepResult};
use crate::scenario::{Mode, Scenario};

pub const SUMMARY_FILE: &str = "summary.txt";

/// Outcome of [`run`]. The typed fields are also rendered, in a fixed order,
/// as the `key: value` lines of `summary.txt`.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub scenario: String,
    pub reproduction: Option<ReproductionNumbers>,
    pub baseline_cost: Option<f64>,
    pub optimal_cost: Option<f64>,
    pub baseline_deaths: Option<f64>,
    pub optimal_deaths: Option<f64>,
    pub final_a_t_baseline: Option<f64>,
    pub final_a_t_optimal: Option<f64>,
    /// False when any sweep hit its iteration cap.
    pub converged: bool,
    pub lines: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// Relative reduction of cumulative disease deaths in the optimal arm, in percent.
    pub fn deaths_reduction_percent(&self) -> Option<f64> {
        match (self.baseline_deaths, self.optimal_deaths) {
            (Some(b), Some(o)) if b > 0.0 => Some(100.0 * (b - o) / b),
            _ => None,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.lines.push((key.into(), value.to_string()));
    }

    fn push_num(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, csv::format_number(value));
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
    created_dir: bool,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir,
            written: Vec::new(),
            created_dir,
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn discard(self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_dir {
            let _ = fs::remove_dir(self.dir);
        }
    }
}

/// Runs `scenario`, writing every output into `out_dir`.
///
/// On failure any files already written are removed and the error is wrapped
/// with the scenario name.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport> {
    let context = |source: Error| Error::InScenario {
        scenario: scenario.name.clone(),
        source: Box::new(source),
    };
    scenario.validate().map_err(context)?;
    let mut outputs = Outputs::new(out_dir).map_err(context)?;
    match execute(scenario, &mut outputs) {
        Ok(mut report) => {
            report.files = outputs.written;
            Ok(report)
        }
        Err(e) => {
            outputs.discard();
            Err(context(e))
        }
    }
}

fn execute(sc: &Scenario, out: &mut Outputs<'_>) -> Result<RunReport> {
    let grid = TimeGrid::with_step(sc.horizon, sc.step)?;
    let mut report = RunReport {
        scenario: sc.name.clone(),
        converged: true,
        ..RunReport::default()
    };
    report.push("scenario", &sc.name);
    report.push("mode", sc.mode);
    report.push_num("T", sc.horizon);
    report.push_num("dt", grid.step());
    report.push("steps", grid.n_steps());
    report.push_num("N0", sc.initial.total());

    let n_r = sc.reproduction_population();
    let rn = analysis::r0(&sc.params, n_r)?;
    report.reproduction = Some(rn);
    report.push_num("N_R", n_r);
    report.push_num("R1", rn.r1);
    report.push_num("R2", rn.r2);
    report.push_num("R0", rn.r0);

    match sc.mode {
        Mode::Simulate => {
            let (traj, controls) = baseline(sc, &grid)?;
            out.write("trajectory.csv", &csv::write_trajectory(&traj, &controls))?;
            report_arm(&mut report, "baseline", sc, &traj, &controls)?;
        }
        Mode::Analyze => analyze(sc, &mut report)?,
        Mode::Optimize => {
            let res = ocp::fbsm_solve(&sc.initial, &sc.params, &sc.cost, &grid, &sc.sweep)?;
            report_cost_spec(&mut report, &sc.cost);
            report_sweep(&mut report, "", &res);
            report.baseline_cost = Some(res.initial_cost);
            report.push_num("baseline_cost", res.initial_cost);
            report_arm(&mut report, "optimal", sc, &res.state, &res.controls)?;
            out.write("optimal.csv", &csv::write_trajectory(&res.state, &res.controls))?;
            out.write("adjoint.csv", &csv::write_adjoint(&res.adjoint))?;
        }
        Mode::Compare => compare(sc, &grid, &mut report, out)?,
    }

    let manifest: Vec<String> = out
        .written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .chain([SUMMARY_FILE.to_owned()])
        .collect();
    report.push("files", manifest.join(","));
    out.write(SUMMARY_FILE, &report.render())?;
    Ok(report)
}

/// The constant-control arm `u1 = p`, `u2 = q`.
fn baseline(sc: &Scenario, grid: &TimeGrid) -> Result<(Trajectory<NUM_COMPARTMENTS>, ControlPath)> {
    let controls = ControlPath::constant(grid, sc.params.p, sc.params.q);
    let traj = ocp::simulate_controlled(&sc.initial, &sc.params, &controls, grid)?;
    Ok((traj, controls))
}

fn report_cost_spec(report: &mut RunReport, cost: &CostSpec) {
    report.push("cost", cost.variant);
    report.push_num("W1", cost.w1);
    report.push_num("W2", cost.w2);
}

fn report_sweep(report: &mut RunReport, prefix: &str, res: &SweepResult) {
    report.converged &= res.converged;
    report.push(format!("{prefix}converged"), res.converged);
    report.push(format!("{prefix}iterations"), res.iterations);
    report.push_num(format!("{prefix}final_change"), res.final_change);
}

fn report_arm(
    report: &mut RunReport,
    arm: &str,
    sc: &Scenario,
    traj: &Trajectory<NUM_COMPARTMENTS>,
    controls: &ControlPath,
) -> Result<()> {
    let cost = ocp::evaluate_cost(traj, controls, &sc.cost)?;
    let deaths = *cumulative_deaths(traj, &sc.params).last().unwrap_or(&0.0);
    let a_t = traj.last()[model::A_T];
    if arm == "baseline" {
        report.baseline_cost = Some(cost);
        report.baseline_deaths = Some(deaths);
        report.final_a_t_baseline = Some(a_t);
    } else {
        report.optimal_cost = Some(cost);
        report.optimal_deaths = Some(deaths);
        report.final_a_t_optimal = Some(a_t);
    }
    report.push_num(format!("{arm}_cost"), cost);
    report.push_num(format!("{arm}_deaths"), deaths);
    report.push_num(format!("{arm}_A_T_final"), a_t);
    report.push_num(format!("{arm}_N_final"), traj.last().iter().sum());
    Ok(())
}

fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(values.len());
    out
}

/// Running integral of the disease-induced death rate, one value per node.
pub fn cumulative_deaths(traj: &Trajectory<NUM_COMPARTMENTS>, params: &model::Params) -> Vec<f64> {
    let rate: Vec<f64> = traj
        .values
        .iter()
        .map(|x| model::disease_death_rate(x, params))
        .collect();
    cumulative(&rate, traj.grid.step())
}

fn cumulative_cost(
    traj: &Trajectory<NUM_COMPARTMENTS>,
    controls: &ControlPath,
    cost: &CostSpec,
) -> Vec<f64> {
    let g: Vec<f64> = traj
        .values
        .iter()
        .enumerate()
        .map(|(i, x)| cost.integrand(x, controls.u1[i], controls.u2[i]))
        .collect();
    cumulative(&g, traj.grid.step())
}

fn compare(sc: &Scenario, grid: &TimeGrid, report: &mut RunReport, out: &mut Outputs<'_>) -> Result<()> {
    report_cost_spec(report, &sc.cost);
    let (base, base_u) = baseline(sc, grid)?;
    out.write("baseline.csv", &csv::write_trajectory(&base, &base_u))?;

    let res = ocp::fbsm_solve(&sc.initial, &sc.params, &sc.cost, grid, &sc.sweep)?;
    report_sweep(report, "", &res);
    out.write("optimal.csv", &csv::write_trajectory(&res.state, &res.controls))?;
    out.write("adjoint.csv", &csv::write_adjoint(&res.adjoint))?;
    report_arm(report, "baseline", sc, &base, &base_u)?;
    report_arm(report, "optimal", sc, &res.state, &res.controls)?;
    if let Some(pct) = report.deaths_reduction_percent() {
        report.push_num("deaths_reduction_percent", pct);
    }

    let mut header = vec![
        "t".to_owned(),
        "cost_baseline".to_owned(),
        format!("cost_{}", sc.cost.variant),
        "deaths_baseline".to_owned(),
        format!("deaths_{}", sc.cost.variant),
    ];
    let mut columns = vec![
        grid.times().collect::<Vec<_>>(),
        cumulative_cost(&base, &base_u, &sc.cost),
        cumulative_cost(&res.state, &res.controls, &sc.cost),
        cumulative_deaths(&base, &sc.params),
        cumulative_deaths(&res.state, &sc.params),
    ];

    for &variant in &sc.extra_variants {
        if variant == sc.cost.variant {
            continue;
        }
        let spec = CostSpec { variant, ..sc.cost };
        let extra = ocp::fbsm_solve(&sc.initial, &sc.params, &spec, grid, &sc.sweep)?;
        let label = variant.label();
        report_sweep(report, &format!("{label}_"), &extra);
        report.push_num(format!("{label}_cost"), extra.cost);
        report.push_num(
            format!("{label}_baseline_cost"),
            ocp::evaluate_cost(&base, &base_u, &spec)?,
        );
        let deaths = cumulative_deaths(&extra.state, &sc.params);
        report.push_num(format!("{label}_deaths"), *deaths.last().unwrap_or(&0.0));
        out.write(
            &format!("optimal_{label}.csv"),
            &csv::write_trajectory(&extra.state, &extra.controls),
        )?;
        header.push(format!("cost_baseline_{label}"));
        header.push(format!("cost_{label}"));
        header.push(format!("deaths_{label}"));
        columns.push(cumulative_cost(&base, &base_u, &spec));
        columns.push(cumulative_cost(&extra.state, &extra.controls, &spec));
        columns.push(deaths);
    }

    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..grid.n_nodes()).map(|i| columns.iter().map(|c| c[i]).collect());
    out.write("cost_curves.csv", &csv::write_table(&header, rows))?;
    Ok(())
}

fn analyze(sc: &Scenario, report: &mut RunReport) -> Result<()> {
    let p = &sc.params;
    let tol = sc.stability_tol;
    let dfe = analysis::dfe_full(p)?;
    report.push_num("dfe_S", dfe[model::S]);
    let full = analysis::classify_full_dfe(p, tol)?;
    report.push("dfe_stability", full.classification.label());
    report.push_num("dfe_spectral_abscissa", full.spectral_abscissa());
    let hiv_dfe = analysis::classify_hiv_dfe(p, tol)?;
    report.push("hiv_dfe_stability", hiv_dfe.classification.label());
    report.push_num("beta_star", analysis::beta_star(p)?);

    match analysis::endemic_equilibrium_hiv(p) {
        Ok(eq) => {
            report.push("hiv_endemic", "exists");
            for (name, v) in ["S", "I_H", "A", "C_H"].iter().zip(eq.point) {
                report.push_num(format!("hiv_endemic_{name}"), v);
            }
            report.push_num("hiv_endemic_force", eq.force);
            report.push_num("hiv_endemic_N", eq.population);
            let st = analysis::classify_hiv_endemic(p, tol)?;
            report.push("hiv_endemic_stability", st.classification.label());
            report.push_num("hiv_endemic_spectral_abscissa", st.spectral_abscissa());
        }
        Err(Error::NoEndemicEquilibrium { .. }) => report.push("hiv_endemic", "none"),
        Err(e) => return Err(e),
    }

    // The closed form differs from the derivative on the C₂, C₃ diagonal.
    let closed = analysis::jacobian_hiv_dfe(p, p.lambda / p.mu)?;
    let numeric = analysis::hiv_dfe_jacobian_numeric(p)?;
    let mut worst = 0.0f64;
    let mut entries = Vec::new();
    for (i, row) in closed.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let d = (v - numeric[(i, j)]).abs();
            worst = worst.max(d);
            if d > 1e-6 * v.abs().max(1.0) {
                entries.push(format!("({},{})", i + 1, j + 1));
            }
        }
    }
    report.push_num("jacobian_max_discrepancy", worst);
    report.push(
        "jacobian_discrepant_entries",
        if entries.is_empty() { "none".to_owned() } else { entries.join(" ") },
    );
    Ok(())
}

/// Result of one scenario in a batch, with the directory it wrote to.
pub struct BatchItem {
    pub dir: PathBuf,
    pub result: Result<RunReport>,
}

/// Runs independent scenarios in parallel, each under `root/<name>`.
pub fn run_batch(scenarios: &[Scenario], root: &Path) -> Result<Vec<BatchItem>> {
    use rayon::prelude::*;
    let mut names = std::collections::HashSet::new();
    for sc in scenarios {
        if !names.insert(sc.name.as_str()) {
            return Err(Error::Scenario(format!(
                "duplicate scenario name `{}` in batch",
                sc.name
            )));
        }
    }
    Ok(scenarios
        .par_iter()
        .map(|sc| {
            let dir = root.join(&sc.name);
            BatchItem {
                result: run(sc, &dir),
                dir,
            }
        })
        .collect())
}
