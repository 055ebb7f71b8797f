//! Edit distance and pooled word error rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::EOS;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.distance += o.distance;
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

/// Unit-cost Levenshtein distance with an S/I/D split from one optimal
/// alignment. Insertions are hypothesis tokens with no reference partner.
pub fn levenshtein<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut counts = EditCounts {
        distance: d[n * w + m],
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hyp[j - 1]);
            if d[(i - 1) * w + j - 1] + diff == here {
                counts.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Drops a trailing EOS, if any.
pub fn strip_eos(tokens: &[usize]) -> &[usize] {
    match tokens.split_last() {
        Some((&EOS, body)) => body,
        _ => tokens,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub wer: f64,
    pub edits: EditCounts,
    pub ref_tokens: usize,
    pub utterances: usize,
}

/// Pooled WER: `100 · Σ distance / Σ |ref|`.
pub fn corpus_report<R, H>(pairs: &[(R, H)]) -> Result<WerReport>
where
    R: AsRef<[usize]>,
    H: AsRef<[usize]>,
{
    if pairs.is_empty() {
        return Err(Error::arg("corpus WER needs at least one pair"));
    }
    let mut report = WerReport {
        utterances: pairs.len(),
        ..Default::default()
    };
    for (r, h) in pairs {
        let (r, h) = (strip_eos(r.as_ref()), strip_eos(h.as_ref()));
        report.edits += levenshtein(r, h);
        report.ref_tokens += r.len();
    }
    if report.ref_tokens == 0 {
        return Err(Error::arg("total reference length is zero"));
    }
    report.wer = 100.0 * report.edits.distance as f64 / report.ref_tokens as f64;
    Ok(report)
}

pub fn corpus_wer<R, H>(pairs: &[(R, H)]) -> Result<f64>
where
    R: AsRef<[usize]>,
    H: AsRef<[usize]>,
{
    corpus_report(pairs).map(|r| r.wer)
}
