//! Command-line front end: configuration, checkpoints, the training loop
//! and the experiment commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod experiments;
pub mod trainer;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{Criterion, LmType, RunConfig};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "seqfuse",
    version,
    about = "Train and decode attention models fused with external language models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic task.
    Gen,
    /// Train a language model or an acoustic model.
    Train,
    /// Decode a data split with a trained model.
    Decode,
    /// Score a hypothesis file against references.
    Eval,
    /// Train and evaluate over a grid of scales.
    Sweep,
    /// Time training steps for each criterion.
    Bench,
}

/// Loads the config (defaults when no file is given) and applies overrides.
pub fn resolve_config(path: Option<&std::path::Path>, sets: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(sets)?;
    Ok(cfg)
}

/// Runs one command and returns its printable summary.
pub fn run(command: Command, cfg: &RunConfig) -> Result<String> {
    Ok(match command {
        Command::Gen => {
            commands::cmd_gen(cfg)?;
            format!("dataset written to {}", cfg.data_dir.display())
        }
        Command::Train => {
            let r = commands::cmd_train(cfg)?;
            match r.epochs.last() {
                Some(e) => format!(
                    "{} epochs, final dev loss {:.4}, dev WER {:.2}%",
                    e.epoch, e.dev_loss, e.dev_wer
                ),
                None => format!("language model written to {}", cfg.lm_path.display()),
            }
        }
        Command::Decode => {
            let hyps = commands::cmd_decode(cfg)?;
            format!(
                "{} hypotheses written to {}",
                hyps.len(),
                cfg.hyp_path().display()
            )
        }
        Command::Eval => commands::format_report(&commands::cmd_eval(cfg)?),
        Command::Sweep => {
            let rows = commands::cmd_sweep(cfg)?;
            let mut s = String::from("criterion,gamma_abs,gamma_rel,gamma_den,dev_wer,seed");
            for r in rows {
                s.push_str(&format!(
                    "\n{},{},{},{},{:.2},{}",
                    r.criterion, r.gamma_abs, r.gamma_rel, r.gamma_den, r.dev_wer, r.seed
                ));
            }
            s
        }
        Command::Bench => commands::format_bench(&commands::cmd_bench(cfg)?)
            .trim_end()
            .to_string(),
    })
}
