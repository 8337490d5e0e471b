use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftkin::scenario::{parse_scenario, run_scenario, write_outputs, RunKind};

#[derive(Parser)]
#[command(name = "driftkin", version, about = "Drift-kinetic verification suites and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite of every module
    Verify(RunArgs),
    /// Integrate the fast parallel motion from the scenario's initial state
    Trajectories(RunArgs),
    /// Solve the u∥ field-line problem and measure its convergence order
    Upar(RunArgs),
    /// Tabulate guiding-center drifts at sample points
    Drifts(RunArgs),
    /// Guiding-center error of full orbits against the fast motion over a list of ε
    Convergence(RunArgs),
    /// Step the reduced transport equation on a periodic grid
    ReducedTransport(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to `output.dir` in the scenario
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, env = "DRIFTKIN_THREADS")]
    threads: Option<usize>,
    /// Overrides the scenario seed
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(run: RunKind, args: RunArgs) -> Result<bool, driftkin::Error> {
    let mut scenario = parse_scenario(&args.scenario)?.with_run(run)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let out = match (&args.out, &scenario.output.dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => {
            return Err(driftkin::Error::Validation { key: "output.dir".into(), message: "no output directory; pass --out".into() })
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| driftkin::Error::InvalidInput(format!("thread pool: {e}")))?;
    let output = pool.install(|| run_scenario(&scenario))?;
    write_outputs(&output, &scenario, &out)?;
    for c in &output.report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("{status} {:<34} {:.3e} (threshold {:.1e})", c.name, c.value, c.tolerance);
    }
    println!("wrote {}", out.display());
    Ok(output.report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, args) = match cli.command {
        Command::Verify(a) => (RunKind::Verify, a),
        Command::Trajectories(a) => (RunKind::Trajectories, a),
        Command::Upar(a) => (RunKind::Upar, a),
        Command::Drifts(a) => (RunKind::Drifts, a),
        Command::Convergence(a) => (RunKind::Convergence, a),
        Command::ReducedTransport(a) => (RunKind::ReducedTransport, a),
    };
    match execute(run, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
