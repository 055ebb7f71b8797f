//! Enumerates every output sequence of a tiny model, prints the posterior
//! table and checks that MMI over the full set gives the same value.

use seqfuse::criteria::{exact_sequence_posterior, mmi_loss, Scales};
use seqfuse::decoding::{NBestList, ScoredHypothesis};
use seqfuse::models::{AcousticModel, AmDims, LanguageModel, NGramLm, EOS};
use seqfuse::numerics::{Graph, Tensor};

fn main() -> seqfuse::Result<()> {
    let dims = AmDims {
        vocab: 3,
        feat_dim: 2,
        embed_dim: 3,
        hidden_dim: 4,
        attention_dim: 3,
        encoder_layers: 1,
    };
    let am = AcousticModel::new(dims, 3)?;
    let corpus = vec![vec![1, 2, EOS], vec![2, EOS], vec![1, 1, EOS]];
    let lm = LanguageModel::NGram(NGramLm::train(&corpus, 2, 0.5, 3)?);
    let feats = Tensor::matrix(3, 2, vec![0.4, -0.2, 1.0, 0.3, -0.5, 0.8])?;
    let reference = vec![1, 2, EOS];
    let scales = Scales::new(1.0, 0.5, 1.0)?;
    let exact = exact_sequence_posterior(&am, &lm, &feats, &reference, &scales, 4)?;

    println!("{} sequences with at most 4 tokens", exact.table.len());
    for (tokens, score) in &exact.table {
        println!(
            "  {:>10.5}  p = {:.5}  {tokens:?}",
            score,
            (score - exact.log_enumerated_mass).exp()
        );
    }
    println!("posterior of {reference:?}: {:.6}", exact.posterior);

    let nbest = NBestList {
        hyps: exact
            .table
            .iter()
            .map(|(t, s)| ScoredHypothesis {
                tokens: t.clone(),
                score: *s,
                truncated: false,
            })
            .collect(),
        contains_reference: true,
    };
    let mut g = Graph::new();
    let b = am.bind(&mut g, false);
    let l = lm.bind(&mut g, false);
    let enc = b.encode(&mut g, &feats)?;
    let loss = mmi_loss(&mut g, &b, &enc, &l, &reference, &nbest, &scales)?.value;
    println!(
        "mmi over all sequences {loss:.12}, -log posterior {:.12}",
        -exact.log_posterior
    );
    Ok(())
}
