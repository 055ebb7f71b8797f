//! Trains add-k bigram LMs on the text-only corpus and on the training
//! transcripts and compares their dev perplexities.

use seqfuse::cli::RunConfig;
use seqfuse::models::NGramLm;
use seqfuse::task::generate_dataset;

fn perplexity(lm: &NGramLm, sentences: &[Vec<usize>]) -> seqfuse::Result<f64> {
    let mut log_prob = 0.0;
    let mut tokens = 0;
    for s in sentences {
        log_prob += lm.sequence_log_prob(s)?;
        tokens += s.len();
    }
    Ok((-log_prob / tokens as f64).exp())
}

fn main() -> seqfuse::Result<()> {
    let cfg = RunConfig::default();
    let ds = generate_dataset(&cfg.task())?;
    let v = cfg.vocab_size;
    let dev: Vec<Vec<usize>> = ds.dev.iter().map(|u| u.tokens.clone()).collect();
    let train: Vec<Vec<usize>> = ds.train.iter().map(|u| u.tokens.clone()).collect();
    println!(
        "uniform            ppl {:.3}",
        perplexity(&NGramLm::uniform(v), &dev)?
    );
    for kappa in [0.01, 0.1, 1.0] {
        let text = NGramLm::train(&ds.text_only, 2, kappa, v)?;
        let small = NGramLm::train(&train, 2, kappa, v)?;
        println!(
            "kappa {kappa:<5} text-only ppl {:.3}, transcripts-only ppl {:.3}",
            perplexity(&text, &dev)?,
            perplexity(&small, &dev)?
        );
    }
    let unigram = NGramLm::train(&ds.text_only, 1, 0.1, v)?;
    println!("unigram            ppl {:.3}", perplexity(&unigram, &dev)?);
    Ok(())
}
