use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eivgmm_cli::simulate::{write_simulation, SimulationSpec};
use eivgmm_cli::{
    execute_run, execute_run_into, factor_stats, stats_csv, stats_table, validate, Overrides,
    RunConfig, RunError, CONFIG_ENV, EXIT_FAILURE,
};

#[derive(Parser)]
#[command(
    name = "eivgmm",
    version,
    about = "Six-factor OLS and errors-in-variables robust IVGMM over portfolio sets"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and load every input without estimating.
    Validate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate every portfolio set and write the reports.
    Run {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw a synthetic portfolio set from a scenario file and run it.
    Simulate {
        /// Scenario file of `key = value` lines.
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Descriptive statistics of the factor columns.
    Stats {
        /// Also write the statistics to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_config(path: Option<PathBuf>, overrides: &Overrides) -> Result<RunConfig, RunError> {
    let path = path.ok_or_else(|| {
        RunError::Config(format!(
            "no configuration given (use --config or set {CONFIG_ENV})"
        ))
    })?;
    let mut cfg = RunConfig::load(&path)?;
    cfg.apply(overrides);
    Ok(cfg)
}

fn report_run(outcome: &eivgmm_cli::RunOutcome) -> i32 {
    for set in &outcome.results {
        eprintln!(
            "set {}: {} portfolios, {} failed, {}..{}",
            set.name,
            set.portfolios.len(),
            set.error_count(),
            set.range.0,
            set.range.1
        );
    }
    for p in &outcome.written {
        println!("{}", p.display());
    }
    outcome.exit_code()
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Validate { overrides } => {
            let cfg = load_config(cli.config, &overrides)?;
            let inputs = validate(&cfg)?;
            println!(
                "ok: {} factor columns, {} months; {} set(s)",
                inputs.factors.names().len(),
                inputs.factors.len(),
                inputs.sets.len()
            );
            for (name, panel) in &inputs.sets {
                println!(
                    "  {name}: {} portfolios, {} months",
                    panel.names().len(),
                    panel.len()
                );
            }
            Ok(0)
        }
        Command::Run { overrides } => {
            let cfg = load_config(cli.config, &overrides)?;
            Ok(report_run(&execute_run(&cfg)?))
        }
        Command::Simulate {
            scenario,
            overrides,
        } => {
            let text = std::fs::read_to_string(&scenario).map_err(|source| RunError::Io {
                path: scenario.clone(),
                source,
            })?;
            let spec = SimulationSpec::from_text(&text)?;
            let out = PathBuf::from(
                overrides
                    .output_dir
                    .clone()
                    .unwrap_or_else(|| "eivgmm-sim".into()),
            );
            let mut cfg = write_simulation(&spec, &out.join("data"))?;
            cfg.apply(&overrides);
            Ok(report_run(&execute_run_into(&cfg, &out)?))
        }
        Command::Stats { csv, overrides } => {
            let cfg = load_config(cli.config, &overrides)?;
            let stats = factor_stats(&cfg)?;
            print!("{}", stats_table(&stats));
            if let Some(path) = csv {
                std::fs::write(&path, stats_csv(&stats))
                    .map_err(|source| RunError::Io { path, source })?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
