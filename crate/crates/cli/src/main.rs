use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nullwave_core::scenario::{run_scenario, Scenario, Task};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Scenario runner for plane-wave stability experiments.
#[derive(Parser)]
#[command(name = "nullwave", version)]
struct Cli {
    #[command(subcommand)]
    task: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condition 1 and 2 verdicts and the growth-rate estimate.
    Classify(RunArgs),
    /// A transverse mode on the characteristic grid.
    Mode(RunArgs),
    /// A 3D finite-difference run with its diagnostics ledger.
    Fdtd(RunArgs),
    /// Geometric-optics transport along a ray bundle.
    Geoptics(RunArgs),
    /// Interaction-region volumes, cap measures and weight growth.
    Geometry(RunArgs),
    /// Blow-up times of the exponentiated scalar mode.
    Blowup(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides the config and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (Task, &RunArgs) {
        match self {
            Command::Classify(a) => (Task::Classify, a),
            Command::Mode(a) => (Task::Mode, a),
            Command::Fdtd(a) => (Task::Fdtd, a),
            Command::Geoptics(a) => (Task::Geoptics, a),
            Command::Geometry(a) => (Task::Geometry, a),
            Command::Blowup(a) => (Task::Blowup, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = cli.task.split();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    }
    let scenario = match Scenario::load(&args.config, Some(task)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run_scenario(&scenario, args.out.as_deref()) {
        Ok(manifest) => {
            println!("{}", manifest.run_dir.display());
            for f in &manifest.outputs {
                println!("  {}", f.name);
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            if let Some(d) = &failure.diagnostics {
                eprintln!("diagnostics: {}", d.display());
            }
            ExitCode::from(if failure.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL })
        }
    }
}
