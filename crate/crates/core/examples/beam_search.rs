//! Trains a small CE model in memory, then decodes one dev utterance with
//! each decoding mode and prints the n-best lists.

use seqfuse::cli::commands::{loss_setup, optimizer};
use seqfuse::cli::{trainer, RunConfig};
use seqfuse::decoding::{beam_search, DecodeConfig, DecodeMode};
use seqfuse::models::{AcousticModel, LanguageModel, NGramLm};
use seqfuse::task::generate_dataset;

fn main() -> seqfuse::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(
        &[
            "vocab_size=8",
            "n_train=1000",
            "n_dev=20",
            "n_text_only=10000",
            "epochs=20",
        ]
        .map(String::from),
    )?;
    let ds = generate_dataset(&cfg.task())?;
    let lm = LanguageModel::NGram(NGramLm::train(
        &ds.text_only,
        2,
        cfg.lm_kappa,
        cfg.vocab_size,
    )?);
    let mut am = AcousticModel::new(cfg.am_dims(), cfg.seed)?;
    let dc = cfg.decode_config();
    trainer::train(
        &mut am,
        &mut lm.clone(),
        &ds.train,
        &[],
        &loss_setup(&cfg),
        &optimizer(&cfg),
        &dc,
        cfg.epochs,
        cfg.seed,
    )?;

    let utt = &ds.dev[0];
    println!("reference {:?}", utt.tokens);
    for (mode, alpha, beta) in [
        (DecodeMode::AmOnly, 1.0, 0.0),
        (DecodeMode::Shallow, 1.0, 0.35),
        (DecodeMode::Local, 2.0, 0.7),
    ] {
        for length_norm in [false, true] {
            let cfg = DecodeConfig {
                mode,
                alpha,
                beta,
                beam_size: 4,
                max_len: 20,
                length_norm,
            };
            let list = beam_search(&am, &lm, &utt.feats, &cfg)?;
            println!("{mode} (alpha {alpha}, beta {beta}, length norm {length_norm}):");
            for h in &list.hyps {
                println!(
                    "  {:9.4} {:?}{}",
                    h.score,
                    h.tokens,
                    if h.truncated { " (truncated)" } else { "" }
                );
            }
        }
    }
    Ok(())
}
