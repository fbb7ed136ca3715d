use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nashflow::experiment::{self, parse_gain_list, ExperimentConfig, ExperimentError, GainChoice};
use nashflow::formats::format_float;

/// Distributed Nash equilibrium seeking experiments.
#[derive(Parser)]
#[command(name = "nashflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write its trajectory and report.
    Run(Common),
    /// Run one configuration per gain and write a summary.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Gains to sweep, comma separated; defaults to `alphas` in `[sweep]`.
        #[arg(long)]
        alphas: Option<String>,
    },
    /// Print graph and game diagnostics without integrating.
    Inspect(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Gain: a positive real or `auto:<margin>`.
    #[arg(long)]
    alpha: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(alpha) = &self.alpha {
            config.alpha = alpha.parse::<GainChoice>().map_err(ExperimentError::Validation)?;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, ExperimentError> {
    match command {
        Command::Run(common) => {
            let config = common.load()?;
            let outcome = experiment::run(&config)?;
            if let Some(reason) = outcome.failure() {
                eprintln!("error[numerical]: {reason}");
            }
            if !common.quiet {
                let last = outcome.trajectory.last();
                println!("alpha = {}", format_float(outcome.alpha));
                println!("stop_reason = {}", outcome.trajectory.stop.as_str());
                println!("final_time = {}", format_float(outcome.trajectory.final_time()));
                println!("final_consensus_error = {}", format_float(nashflow::integrator::consensus_error(&last.z)));
                if let Some(report) = &outcome.report {
                    println!("final_ne_error = {}", format_float(report.final_ne_error));
                    let verdict = match (report.certificate_applicable, report.certificate_passed()) {
                        (false, _) => "n/a",
                        (true, true) => "pass",
                        (true, false) => "fail",
                    };
                    println!("certificate = {verdict}");
                }
                println!("output = {}", config.output_dir.display());
            }
            Ok(outcome.exit_code)
        }
        Command::Sweep { common, alphas } => {
            let config = common.load()?;
            let alphas = match alphas {
                Some(text) => parse_gain_list(&text).map_err(ExperimentError::Validation)?,
                None => config.sweep_alphas.clone(),
            };
            let outcome = experiment::sweep(&config, &alphas)?;
            for row in &outcome.rows {
                if let Err(e) = &row.result {
                    eprintln!("row {} (alpha {}): error[{}]: {e}", row.index, row.requested, e.category());
                }
            }
            if !common.quiet {
                println!("rows = {}", outcome.rows.len());
                println!("summary = {}", outcome.summary_path.display());
            }
            Ok(outcome.exit_code())
        }
        Command::Inspect(common) => {
            let config = common.load()?;
            let text = experiment::inspect(&config)?;
            if !common.quiet {
                print!("{text}");
            }
            Ok(0)
        }
    }
}
