//! The full command sequence on a small task in a temporary directory:
//! generate, train the LM, train CE and local fusion, fine-tune with MMI,
//! decode and score.

use seqfuse::cli::commands::format_report;
use seqfuse::cli::{run, Command, Criterion, RunConfig};

fn main() -> seqfuse::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut base = RunConfig::default();
    base.apply_overrides(
        &[
            "vocab_size=10",
            "n_train=1000",
            "n_dev=40",
            "n_text_only=10000",
            "epochs=15",
        ]
        .map(String::from),
    )?;
    base.data_dir = dir.path().join("data");
    base.lm_path = dir.path().join("lm.counts");

    println!("{}", run(Command::Gen, &base)?);
    let mut lm = base.clone();
    lm.criterion = Criterion::Lm;
    println!("{}", run(Command::Train, &lm)?);

    let mut ce = base.clone();
    ce.out_dir = dir.path().join("ce");
    let mut local = base.clone();
    local.criterion = Criterion::Local;
    local.out_dir = dir.path().join("local");
    let mut mmi = base.clone();
    mmi.criterion = Criterion::Mmi;
    mmi.epochs = 1;
    mmi.init_checkpoint = Some(ce.checkpoint_path());
    mmi.out_dir = dir.path().join("mmi");

    for cfg in [&ce, &local, &mmi] {
        println!("{}: {}", cfg.criterion.name(), run(Command::Train, cfg)?);
        run(Command::Decode, cfg)?;
        let report = seqfuse::cli::commands::cmd_eval(cfg)?;
        println!(
            "{} ({} decoding): {}",
            cfg.criterion.name(),
            cfg.decode_config().mode,
            format_report(&report)
        );
    }
    Ok(())
}
