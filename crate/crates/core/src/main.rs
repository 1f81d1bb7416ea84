use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tbhiv::ocp::CostVariant;
use tbhiv::runner::{self, RunReport};
use tbhiv::scenario::{load_scenario, Mode, Overrides, Scenario};
use tbhiv::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "tbhiv", version, about = "TB-HIV/AIDS coinfection model: simulation, analysis and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the model under constant controls (p, q).
    Simulate(RunArgs),
    /// Reproduction numbers, equilibria and their stability.
    Analyze(RunArgs),
    /// Solve the optimal treatment problem.
    Optimize(RunArgs),
    /// Optimal controls against the constant-control arm.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; repeat to run a batch, each into <out>/<name>.
    #[arg(long)]
    scenario: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Horizon in years.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Step size in years.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long = "W1")]
    w1: Option<f64>,
    #[arg(long = "W2")]
    w2: Option<f64>,
    #[arg(long)]
    cost: Option<CostVariant>,
    /// Worker threads for batches; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_FAILURE
    }
}

fn prepare(mode: Mode, args: &RunArgs) -> Result<Vec<Scenario>, Error> {
    let overrides = Overrides {
        mode: Some(mode),
        horizon: args.horizon,
        step: args.dt,
        beta1: args.beta1,
        beta2: args.beta2,
        w1: args.w1,
        w2: args.w2,
        cost: args.cost,
        out: None,
    };
    let mut scenarios = if args.scenario.is_empty() {
        vec![Scenario::default()]
    } else {
        args.scenario
            .iter()
            .map(|p| load_scenario(p))
            .collect::<Result<Vec<_>, _>>()?
    };
    for sc in &mut scenarios {
        overrides.apply(sc)?;
    }
    Ok(scenarios)
}

fn finish(report: &RunReport) -> u8 {
    print!("{}", report.render());
    if report.converged {
        0
    } else {
        eprintln!("warning: scenario `{}` did not converge", report.scenario);
        EXIT_NOT_CONVERGED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Analyze(a) => (Mode::Analyze, a),
        Command::Optimize(a) => (Mode::Optimize, a),
        Command::Compare(a) => (Mode::Compare, a),
    };
    let scenarios = match prepare(mode, args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };

    if let [sc] = scenarios.as_slice() {
        let dir = sc.out.clone().unwrap_or_else(|| args.out.clone());
        return match runner::run(sc, &dir) {
            Ok(report) => ExitCode::from(finish(&report)),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }

    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let items = match runner::run_batch(&scenarios, &args.out) {
        Ok(items) => items,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let mut code = 0;
    for item in items {
        let c = match &item.result {
            Ok(report) => {
                println!("# {}", item.dir.display());
                finish(report)
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(e)
            }
        };
        // Hard failures outrank validation errors, which outrank non-convergence.
        code = match (code, c) {
            (EXIT_FAILURE, _) | (_, EXIT_FAILURE) => EXIT_FAILURE,
            (EXIT_VALIDATION, _) | (_, EXIT_VALIDATION) => EXIT_VALIDATION,
            (a, b) => a.max(b),
        };
    }
    ExitCode::from(code)
}
