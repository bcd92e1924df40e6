//! `selfadapt` — run the simulator, the feedback loop, design-time
//! verification, goal evolution, and the accuracy/confidence tradeoff study
//! from the command line.
//!
//! Exit codes: 0 success, 1 property or validation failure, 2 usage error.

mod commands;
mod outputs;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "selfadapt", version, about = "Self-adaptive network management harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file; diagnostics go to stderr.
    CheckModel {
        /// Path to a `.anm` model.
        file: String,
    },
    /// Run the managed network without adaptation and write per-cycle stats.
    Sim {
        #[arg(long)]
        topology: String,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 90)]
        cycles: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "stats.csv")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Start from minimum-power settings instead of the failsafe.
        #[arg(long)]
        min_power: bool,
    },
    /// Explore a loop model against its stub scenario and properties.
    Verify {
        /// Loop model (`.anm`); composed from the scenario when one is given.
        #[arg(long)]
        model: Option<String>,
        /// Stub scenario (TOML) to compose with the built-in loop template.
        #[arg(long)]
        scenario: Option<String>,
        /// Properties file (TOML); defaults to the standard three.
        #[arg(long)]
        props: Option<String>,
        /// Goals file used for composition (defaults to the built-in pair).
        #[arg(long)]
        goals: Option<String>,
        /// Counterexample traces are written here (stderr otherwise).
        #[arg(long)]
        out: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the adaptation pipeline over the health-assistance workflow.
    Health {
        #[arg(long)]
        catalog: String,
        #[arg(long, default_value_t = 10)]
        cycles: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "health.csv")]
        out: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Failure-rate threshold (percent) for the satisfaction goal.
        #[arg(long, default_value_t = 9.45)]
        threshold: f64,
        /// Also estimate and log response time per combination.
        #[arg(long)]
        response_time: bool,
    },
    /// Stage, validate, and (unless --validate-only) activate an update
    /// package against a running loop.
    Evolve {
        #[arg(long)]
        package: String,
        #[arg(long)]
        validate_only: bool,
        #[arg(long)]
        topology: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 20)]
        cycles: u64,
        /// Cycle at whose quiescent point the update activates.
        #[arg(long, default_value_t = 8)]
        activate_at: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "decisions.csv")]
        out: String,
    },
    /// Run the loop across a grid of estimator settings and summarize the
    /// accuracy/effort tradeoff.
    Tradeoff {
        /// Grid file (TOML with `[[setting]]` entries) or `default`.
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long)]
        topology: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 90)]
        cycles: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory for the artifact bundle.
        #[arg(long, default_value = "tradeoff-out")]
        out: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::CheckModel { file } => commands::check_model(&file),
        Command::Sim { topology, scenario, cycles, seed, out, format, min_power } => {
            commands::sim(&topology, scenario.as_deref(), cycles, seed, &out, format, min_power)
        }
        Command::Verify { model, scenario, props, goals, out, seed } => commands::verify(
            model.as_deref(),
            scenario.as_deref(),
            props.as_deref(),
            goals.as_deref(),
            out.as_deref(),
            seed,
        ),
        Command::Health { catalog, cycles, seed, out, format, threshold, response_time } => {
            commands::health(&catalog, cycles, seed, &out, format, threshold, response_time)
        }
        Command::Evolve {
            package,
            validate_only,
            topology,
            scenario,
            cycles,
            activate_at,
            seed,
            out,
        } => commands::evolve(
            &package,
            validate_only,
            topology.as_deref(),
            scenario.as_deref(),
            cycles,
            activate_at,
            seed,
            &out,
        ),
        Command::Tradeoff { grid, topology, scenario, cycles, seed, out } => {
            commands::tradeoff(&grid, topology.as_deref(), scenario.as_deref(), cycles, seed, &out)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
