//! Builds a shallow-fusion n-best list with the reference forced in and
//! evaluates the MMI loss at several denominator scales.

use seqfuse::cli::commands::{loss_setup, optimizer};
use seqfuse::cli::{trainer, RunConfig};
use seqfuse::criteria::{mmi_loss, Scales};
use seqfuse::decoding::nbest_with_forced_reference;
use seqfuse::models::{AcousticModel, LanguageModel, NGramLm};
use seqfuse::numerics::Graph;
use seqfuse::task::generate_dataset;

fn main() -> seqfuse::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(
        &[
            "vocab_size=8",
            "n_train=1000",
            "n_dev=10",
            "n_text_only=10000",
            "epochs=15",
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
    trainer::train(
        &mut am,
        &mut lm.clone(),
        &ds.train,
        &[],
        &loss_setup(&cfg),
        &optimizer(&cfg),
        &cfg.decode_config(),
        cfg.epochs,
        cfg.seed,
    )?;

    let utt = &ds.dev[1];
    let (alpha, beta) = (0.1, 0.035);
    let nbest = nbest_with_forced_reference(&am, &lm, &utt.feats, &utt.tokens, 8, alpha, beta, 30)?;
    println!("reference {:?}", utt.tokens);
    for (i, h) in nbest.hyps.iter().enumerate() {
        let mark = if h.tokens == utt.tokens {
            "  <- reference"
        } else {
            ""
        };
        println!("{i}: {:9.4} {:?}{mark}", h.score, h.tokens);
    }
    for gamma_den in [0.0, 0.5, 1.0] {
        let mut g = Graph::new();
        let b = am.bind(&mut g, true);
        let l = lm.bind(&mut g, false);
        let enc = b.encode(&mut g, &utt.feats)?;
        let out = mmi_loss(
            &mut g,
            &b,
            &enc,
            &l,
            &utt.tokens,
            &nbest,
            &Scales::new(alpha, beta, gamma_den)?,
        )?;
        g.backward(out.loss)?;
        let norm: f64 = b
            .leaves()
            .iter()
            .map(|&v| g.grad(v).data().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        println!(
            "gamma_den {gamma_den}: loss {:.5}, gradient norm {norm:.5}",
            out.value
        );
    }
    Ok(())
}
