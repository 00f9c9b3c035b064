use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qpush_harness::report::emit_report;
use qpush_harness::{run, Config, Experiment, HarnessError};

#[derive(Parser)]
#[command(name = "qpush", about = "Verification harness for q-pushTASEP and its companions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; omitted fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for report.json and the CSV tables
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment
    Verify { experiment: Which },
    /// Run the whole suite
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Identities,
    Meixner,
    Moments,
    Laplace,
    Concentration,
    MainTheorem,
}

impl From<Which> for Experiment {
    fn from(w: Which) -> Self {
        match w {
            Which::Identities => Experiment::Identities,
            Which::Meixner => Experiment::Meixner,
            Which::Moments => Experiment::Moments,
            Which::Laplace => Experiment::Laplace,
            Which::Concentration => Experiment::Concentration,
            Which::MainTheorem => Experiment::MainTheorem,
        }
    }
}

fn load(cli: &Cli) -> Result<Config, HarnessError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            Config::from_json(&text)?
        }
        None => Config::default(),
    };
    config.experiment = match cli.command {
        Command::Verify { experiment } => experiment.into(),
        Command::Report => Experiment::All,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(bits) = cli.precision_bits {
        config.precision_bits = bits;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qpush: {e}");
            return ExitCode::from(2);
        }
    };
    let result = run(&config, cli.threads).and_then(|r| {
        emit_report(&r.report, &r.tables, &cli.out)?;
        let runtimes: serde_json::Map<String, serde_json::Value> =
            r.runtimes.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
        std::fs::write(cli.out.join("runtimes.json"), serde_json::to_string_pretty(&runtimes).unwrap_or_default())?;
        Ok(r)
    });
    match result {
        Ok(r) => {
            for v in &r.report.verdicts {
                println!("{:<13} {:<14} {:<44} {}", format!("{:?}", v.status).to_uppercase(), v.experiment, v.check, v.detail);
            }
            println!("wrote {}", cli.out.join("report.json").display());
            if r.report.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("qpush: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("qpush: {e}");
            ExitCode::from(1)
        }
    }
}
