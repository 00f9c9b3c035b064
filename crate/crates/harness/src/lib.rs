//! Verification experiments for qpush-core: seeded Monte Carlo, exact
//! oracles and report emission.

pub mod config;
pub mod experiments;
pub mod parallel;
pub mod report;

use std::time::Instant;

pub use config::{Config, Experiment};
pub use report::{ExperimentReport, Outcome, Status};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qpush_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A finished run: the deterministic report, its CSV tables and wall-clock
/// runtimes per experiment (kept out of the report so it stays
/// reproducible).
#[derive(Debug, Clone)]
pub struct Run {
    pub report: ExperimentReport,
    pub tables: Vec<(String, String)>,
    pub runtimes: Vec<(String, f64)>,
}

pub fn run_experiment(config: &Config, which: Experiment) -> Result<Outcome, HarnessError> {
    match which {
        Experiment::Identities => experiments::identities::run(config),
        Experiment::Meixner => experiments::meixner::run(config),
        Experiment::Moments => experiments::moments::run(config),
        Experiment::Laplace => experiments::laplace::run(config),
        Experiment::Concentration => experiments::concentration::run(config),
        Experiment::MainTheorem => experiments::main_theorem::run(config),
        Experiment::All => run_all(config, &Experiment::SUITE).map(|(o, _)| o),
    }
}

fn run_all(config: &Config, suite: &[Experiment]) -> Result<(Outcome, Vec<(String, f64)>), HarnessError> {
    let mut out = Outcome::default();
    let mut runtimes = Vec::new();
    for &e in suite {
        let start = Instant::now();
        out.merge(run_experiment(config, e)?);
        runtimes.push((e.name().to_string(), start.elapsed().as_secs_f64()));
    }
    Ok((out, runtimes))
}

/// Runs `config.experiment` on a pool of `threads` workers.
pub fn run(config: &Config, threads: usize) -> Result<Run, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let suite: Vec<Experiment> = match config.experiment {
        Experiment::All => Experiment::SUITE.to_vec(),
        e => vec![e],
    };
    let (outcome, runtimes) = pool.install(|| run_all(config, &suite))?;
    Ok(Run {
        report: ExperimentReport::new(config, &outcome),
        tables: outcome.tables,
        runtimes,
    })
}
