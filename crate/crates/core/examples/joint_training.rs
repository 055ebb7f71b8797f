//! Local-fusion training with a recurrent LM that is updated together with
//! the acoustic model, compared with keeping the LM fixed.

use seqfuse::cli::commands::{cmd_decode, cmd_eval, cmd_gen, cmd_train};
use seqfuse::cli::{Criterion, LmType, RunConfig};

fn main() -> seqfuse::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut base = RunConfig::default();
    base.apply_overrides(
        &[
            "vocab_size=10",
            "n_train=1000",
            "n_dev=40",
            "n_text_only=2000",
            "lm_type=rnn",
            "lm_hidden=16",
        ]
        .map(String::from),
    )?;
    base.data_dir = dir.path().join("data");
    base.lm_path = dir.path().join("lm.ckpt");
    cmd_gen(&base)?;

    let mut lm = base.clone();
    lm.criterion = Criterion::Lm;
    lm.epochs = 2;
    cmd_train(&lm)?;
    assert_eq!(lm.lm_type, LmType::Rnn);

    for joint in [false, true] {
        let mut cfg = base.clone();
        cfg.criterion = Criterion::Local;
        cfg.epochs = 15;
        cfg.joint_lm = joint;
        cfg.out_dir = dir.path().join(if joint { "joint" } else { "fixed" });
        let r = cmd_train(&cfg)?;
        cmd_decode(&cfg)?;
        let wer = cmd_eval(&cfg)?.wer;
        let last = r.epochs.last().expect("trained at least one epoch");
        println!(
            "joint_lm={joint}: train loss {:.4}, dev loss {:.4}, dev WER {wer:.2}%",
            last.train_loss, last.dev_loss
        );
    }
    Ok(())
}
