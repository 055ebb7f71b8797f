//! Edit-distance alignment counts and pooled corpus WER.

use seqfuse::metrics::{corpus_report, levenshtein};

fn main() -> seqfuse::Result<()> {
    let pairs: [(&[usize], &[usize]); 3] = [
        (&[1, 2, 3, 4], &[2, 3, 4, 5]),
        (&[1, 2, 3, 4], &[1, 7, 3, 4]),
        (&[5, 6, 7, 8, 9, 10], &[5, 6, 7, 8, 9, 10]),
    ];
    for (r, h) in pairs {
        let e = levenshtein(r, h);
        println!(
            "{r:?} vs {h:?}: distance {} ({} sub, {} ins, {} del)",
            e.distance, e.substitutions, e.insertions, e.deletions
        );
    }
    let report = corpus_report(&pairs)?;
    let per_utt: f64 = pairs
        .iter()
        .map(|(r, h)| 100.0 * levenshtein(r, h).distance as f64 / r.len() as f64)
        .sum::<f64>()
        / pairs.len() as f64;
    println!(
        "pooled WER {:.2}% (mean of per-utterance rates would be {per_utt:.2}%)",
        report.wer
    );
    Ok(())
}
