//! Command-line surface of the proposal cascade: training, proposing,
//! evaluation, regularizer sweeps and synthetic data.

pub mod args;
pub mod commands;
pub mod config;

pub use args::{Cli, Command};
pub use commands::{
    run_eval, run_propose, run_select_bins, run_synth, run_train, EvalReport, ProposeReport,
    SelectBinsReport, TrainReport,
};
pub use config::{EffectiveConfig, FixedParameters, RunConfig, Variant};

/// Runs `cli.command` with the merged configuration inside a worker pool of
/// the configured size.
pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = cli.run_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()?;
    pool.install(|| match &cli.command {
        Command::Train(_) => run_train(&cfg).map(drop),
        Command::Propose(_) => run_propose(&cfg).map(drop),
        Command::Eval(_) => run_eval(&cfg).map(drop),
        Command::SelectBins(_) => run_select_bins(&cfg).map(drop),
        Command::Synth(_) => run_synth(&cfg).map(drop),
    })
}
