use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use atmpc_core::sim::{
    compare_modes, export_comparison, export_run, load_scenario, run_closed_loop, snapshot_json,
    Scenario, CONSTRAINT_TOL, DEFAULT_SNAPSHOTS,
};
use atmpc_core::Mode;

/// Closed-loop simulator for adaptive tube MPC scenarios.
///
/// Set `ATMPC_LOG` (for example `ATMPC_LOG=debug`) to change the log level.
#[derive(Debug, Parser)]
#[command(name = "atmpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one mode and write trace.csv, report.json and set snapshots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the mode given in the scenario file.
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate all three modes and check the cost ordering.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every mode with all monitors; exit status 1 on any failure.
    Verify {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the parameter-set snapshots at the given steps as JSON.
    Sets {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SNAPSHOTS)]
        at: Vec<usize>,
        #[arg(long)]
        mode: Option<Mode>,
    },
}

fn load(path: &PathBuf) -> Result<Scenario> {
    load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn run(scenario: PathBuf, mode: Option<Mode>, out: PathBuf) -> Result<ExitCode> {
    let s = load(&scenario)?;
    let mode = mode.unwrap_or(s.config.simulation.mode);
    let outcome = run_closed_loop(&s, mode)?;
    export_run(&out, &outcome, s.model.n_theta(), &DEFAULT_SNAPSHOTS)?;
    let r = &outcome.report;
    println!(
        "{mode}: J_p = {}, steps = {}, final |x| = {}, M0 = {}, gamma0 = {}",
        r.jp, r.steps, r.final_state_norm, r.initial_horizon_ext, r.initial_gamma
    );
    Ok(ExitCode::SUCCESS)
}

fn compare(scenario: PathBuf, out: PathBuf) -> Result<ExitCode> {
    let s = load(&scenario)?;
    let cmp = compare_modes(&s)?;
    export_comparison(&out, &cmp, s.model.n_theta(), &DEFAULT_SNAPSHOTS)?;
    print!("{}", cmp.summary());
    cmp.check_ordering()?;
    Ok(ExitCode::SUCCESS)
}

fn verify(scenario: PathBuf) -> Result<ExitCode> {
    let s = load(&scenario)?;
    let mut ok = true;
    match compare_modes(&s) {
        Ok(cmp) => {
            for run in &cmp.runs {
                let r = &run.report;
                let constraints = r.max_constraint_violation <= CONSTRAINT_TOL;
                let monitors = r.monitors.passed();
                println!(
                    "{:<10} feasible {}  constraints {}  monitors {}  J_p {}",
                    r.mode.name(),
                    r.feasible,
                    constraints,
                    monitors,
                    r.jp
                );
                if !monitors {
                    println!(
                        "  {}",
                        serde_json::to_string(&r.monitors).unwrap_or_default()
                    );
                }
                ok &= r.feasible && constraints && monitors;
            }
            match cmp.check_ordering() {
                Ok(()) => println!("ordering   holds"),
                Err(e) => {
                    println!("ordering   {e}");
                    ok = false;
                }
            }
        }
        Err(e) => {
            println!("run failed: {:#}", anyhow::Error::from(e));
            ok = false;
        }
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn sets(scenario: PathBuf, at: Vec<usize>, mode: Option<Mode>) -> Result<ExitCode> {
    let s = load(&scenario)?;
    let mode = mode.unwrap_or(s.config.simulation.mode);
    let outcome = run_closed_loop(&s, mode)?;
    for k in at {
        let Some(snap) = outcome.snapshots.iter().find(|x| x.k == k) else {
            bail!("no snapshot at k = {k}; the run has {} steps", s.steps());
        };
        print!("{}", snapshot_json(snap));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATMPC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            mode,
            out,
        } => run(scenario, mode, out),
        Command::Compare { scenario, out } => compare(scenario, out),
        Command::Verify { scenario } => verify(scenario),
        Command::Sets { scenario, at, mode } => sets(scenario, at, mode),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
