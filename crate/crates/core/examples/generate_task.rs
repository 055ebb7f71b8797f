//! Generates the synthetic task and prints a few utterances and corpus
//! statistics.
//!
//! ```text
//! cargo run --release --example generate_task -- noise_std=2.0 out=data
//! ```

use seqfuse::cli::RunConfig;
use seqfuse::task::{generate_dataset, write_dataset, MarkovSource};

fn main() -> seqfuse::Result<()> {
    let mut out = None;
    let mut sets = Vec::new();
    for arg in std::env::args().skip(1) {
        match arg.strip_prefix("out=") {
            Some(dir) => out = Some(std::path::PathBuf::from(dir)),
            None => sets.push(arg),
        }
    }
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&sets)?;
    let task = cfg.task();
    let ds = generate_dataset(&task)?;

    let mean_len =
        |s: &[Vec<usize>]| s.iter().map(|t| t.len() - 1).sum::<usize>() as f64 / s.len() as f64;
    let train_text: Vec<Vec<usize>> = ds.train.iter().map(|u| u.tokens.clone()).collect();
    println!(
        "{} train / {} dev / {} test utterances, {} text-only sentences",
        ds.train.len(),
        ds.dev.len(),
        ds.test.len(),
        ds.text_only.len()
    );
    println!(
        "mean content tokens: train {:.2}, text-only {:.2}",
        mean_len(&train_text),
        mean_len(&ds.text_only)
    );
    if task.markov_order == 1 {
        let matrix = MarkovSource::new(&task)?.transition_matrix()?;
        let entropy = matrix[1..]
            .iter()
            .map(|row| {
                -row.iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (task.vocab_size - 1) as f64;
        println!(
            "mean transition entropy {entropy:.3} nats (uniform: {:.3})",
            ((task.vocab_size - 1) as f64).ln()
        );
    }
    for u in ds.train.iter().take(3) {
        let words: Vec<&str> = u.tokens.iter().map(|&t| ds.vocab[t].as_str()).collect();
        println!("{}: {} ({} frames)", u.id, words.join(" "), u.feats.rows());
    }
    if let Some(dir) = out {
        write_dataset(&dir, &ds)?;
        println!("written to {}", dir.display());
    }
    Ok(())
}
