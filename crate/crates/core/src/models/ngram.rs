//! Count-based n-gram language model with add-κ smoothing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{Input, EOS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct NGramLm {
    order: usize,
    vocab: usize,
    kappa: f64,
    counts: BTreeMap<Vec<Input>, BTreeMap<usize, u64>>,
    /// Log-probability rows for every context that has counts.
    rows: HashMap<Vec<Input>, Vec<f64>>,
    uniform: Vec<f64>,
}

impl NGramLm {
    /// `p(w | ctx) = (c(ctx, w) + κ) / (c(ctx) + κV)`, with contexts
    /// shorter than `order − 1` padded by BOS on the left.
    pub fn train(corpus: &[Vec<usize>], order: usize, kappa: f64, vocab: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::arg("n-gram training corpus is empty"));
        }
        let mut lm = NGramLm::empty(order, kappa, vocab)?;
        for (i, seq) in corpus.iter().enumerate() {
            check_sequence(seq, vocab).map_err(|e| Error::arg(format!("sentence {i}: {e}")))?;
            let mut ctx = vec![Input::Bos; order - 1];
            for &w in seq {
                *lm.counts
                    .entry(ctx.clone())
                    .or_default()
                    .entry(w)
                    .or_insert(0) += 1;
                if order > 1 {
                    ctx.remove(0);
                    ctx.push(Input::Token(w));
                }
            }
        }
        lm.rebuild_rows();
        Ok(lm)
    }

    /// A model without counts: every distribution is uniform.
    pub fn uniform(vocab: usize) -> Self {
        NGramLm::empty(1, 1.0, vocab).expect("valid uniform model")
    }

    fn empty(order: usize, kappa: f64, vocab: usize) -> Result<Self> {
        if order == 0 || !(kappa > 0.0) || vocab == 0 {
            return Err(Error::arg(format!(
                "invalid n-gram settings: order {order}, kappa {kappa}, vocab {vocab}"
            )));
        }
        Ok(NGramLm {
            order,
            vocab,
            kappa,
            counts: BTreeMap::new(),
            rows: HashMap::new(),
            uniform: vec![-(vocab as f64).ln(); vocab],
        })
    }

    fn rebuild_rows(&mut self) {
        let v = self.vocab as f64;
        self.rows = self
            .counts
            .iter()
            .map(|(ctx, next)| {
                let total: u64 = next.values().sum();
                let denom = (total as f64 + self.kappa * v).ln();
                let row = (0..self.vocab)
                    .map(|w| {
                        let c = next.get(&w).copied().unwrap_or(0) as f64;
                        (c + self.kappa).ln() - denom
                    })
                    .collect();
                (ctx.clone(), row)
            })
            .collect();
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn count(&self, ctx: &[Input], w: usize) -> u64 {
        self.counts
            .get(ctx)
            .and_then(|m| m.get(&w))
            .copied()
            .unwrap_or(0)
    }

    /// Initial context window: `order − 1` BOS symbols.
    pub fn start(&self) -> Vec<Input> {
        vec![Input::Bos; self.order - 1]
    }

    /// Shifts `prev` into the context window.
    pub fn advance(&self, ctx: &[Input], prev: Input) -> Result<Vec<Input>> {
        if let Input::Token(t) = prev {
            if t >= self.vocab {
                return Err(Error::arg(format!(
                    "token id {t} outside vocabulary of size {}",
                    self.vocab
                )));
            }
        }
        if self.order == 1 {
            return Ok(Vec::new());
        }
        let mut next = ctx[1..].to_vec();
        next.push(prev);
        Ok(next)
    }

    /// Log-probability row for the context window `ctx`.
    pub fn row(&self, ctx: &[Input]) -> &[f64] {
        self.rows
            .get(ctx)
            .map(Vec::as_slice)
            .unwrap_or(&self.uniform)
    }

    pub fn log_prob(&self, ctx: &[Input], w: usize) -> f64 {
        self.row(ctx)[w]
    }

    /// `Σ_n log p(w_n | history)` including the EOS factor.
    pub fn sequence_log_prob(&self, tokens: &[usize]) -> Result<f64> {
        check_sequence(tokens, self.vocab)?;
        let mut ctx = self.start();
        let mut total = 0.0;
        for &w in tokens {
            total += self.log_prob(&ctx, w);
            ctx = self.advance(&ctx, Input::Token(w))?;
        }
        Ok(total)
    }

    /// Writes the counts file: a header then one
    /// `ctx… next count` line per observed n-gram, BOS written as `<s>`.
    pub fn write_counts(&self, mut out: impl Write) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# seqfuse ngram counts").unwrap();
        writeln!(s, "order {}", self.order).unwrap();
        writeln!(s, "kappa {}", self.kappa).unwrap();
        writeln!(s, "vocab {}", self.vocab).unwrap();
        for (ctx, next) in &self.counts {
            for (w, c) in next {
                for sym in ctx {
                    match sym {
                        Input::Bos => s.push_str("<s> "),
                        Input::Token(t) => write!(s, "{t} ").unwrap(),
                    }
                }
                writeln!(s, "{w} {c}").unwrap();
            }
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_counts(input: impl BufRead) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Data(format!("counts line {line}: {msg}"));
        let mut header: HashMap<String, String> = HashMap::new();
        let mut body = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if header.len() < 3 {
                if fields.len() != 2 {
                    return Err(bad(i + 1, "expected header `key value`"));
                }
                header.insert(fields[0].to_string(), fields[1].to_string());
            } else {
                body.push((
                    i + 1,
                    fields.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
                ));
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| Error::Data(format!("counts file missing `{k}`")))
        };
        let parse_err = |k: &str| Error::Data(format!("counts file: bad `{k}`"));
        let order: usize = get("order")?.parse().map_err(|_| parse_err("order"))?;
        let kappa: f64 = get("kappa")?.parse().map_err(|_| parse_err("kappa"))?;
        let vocab: usize = get("vocab")?.parse().map_err(|_| parse_err("vocab"))?;
        let mut lm = NGramLm::empty(order, kappa, vocab).map_err(|e| Error::Data(e.to_string()))?;
        for (line, fields) in body {
            if fields.len() != order + 1 {
                return Err(bad(line, "wrong number of fields"));
            }
            let mut ctx = Vec::with_capacity(order - 1);
            for f in &fields[..order - 1] {
                ctx.push(if f == "<s>" {
                    Input::Bos
                } else {
                    Input::Token(f.parse().map_err(|_| bad(line, "bad token"))?)
                });
            }
            let w: usize = fields[order - 1]
                .parse()
                .map_err(|_| bad(line, "bad token"))?;
            let c: u64 = fields[order].parse().map_err(|_| bad(line, "bad count"))?;
            if w >= vocab {
                return Err(bad(line, "token outside vocabulary"));
            }
            *lm.counts.entry(ctx).or_default().entry(w).or_insert(0) += c;
        }
        lm.rebuild_rows();
        Ok(lm)
    }
}

/// EOS-terminated, no EOS before the end, ids inside the vocabulary.
pub fn check_sequence(tokens: &[usize], vocab: usize) -> Result<()> {
    match tokens.split_last() {
        None => Err(Error::arg("empty token sequence")),
        Some((&last, body)) => {
            if last != EOS {
                return Err(Error::arg("sequence is not EOS-terminated"));
            }
            if body.contains(&EOS) {
                return Err(Error::arg("sequence continues past EOS"));
            }
            if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
                return Err(Error::arg(format!(
                    "token id {t} outside vocabulary of size {vocab}"
                )));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::logsumexp_slice;

    // Vocabulary for the hand examples: EOS = 0, a = 1, b = 2.
    const A: usize = 1;
    const B: usize = 2;

    #[test]
    fn unigram_add_one() {
        let lm = NGramLm::train(&[vec![A, B, EOS]], 1, 1.0, 3).unwrap();
        assert!((lm.log_prob(&[], A).exp() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bigram_add_one() {
        let corpus = vec![vec![A, B, EOS], vec![A, B, EOS]];
        let lm = NGramLm::train(&corpus, 2, 1.0, 3).unwrap();
        let ctx = lm.advance(&lm.start(), Input::Token(A)).unwrap();
        assert!((lm.log_prob(&ctx, B) - 0.6f64.ln()).abs() < 1e-15);

        let expected = lm.log_prob(&[Input::Bos], A)
            + lm.log_prob(&[Input::Token(A)], B)
            + lm.log_prob(&[Input::Token(B)], EOS);
        assert!((lm.sequence_log_prob(&[A, B, EOS]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rows_are_normalized_for_seen_and_unseen_contexts() {
        let corpus = vec![vec![A, B, EOS], vec![B, EOS], vec![A, A, A, EOS]];
        let lm = NGramLm::train(&corpus, 3, 0.3, 3).unwrap();
        let contexts = [
            vec![Input::Bos, Input::Bos],
            vec![Input::Token(A), Input::Token(A)],
            vec![Input::Token(B), Input::Token(B)],
        ];
        for ctx in &contexts {
            assert!(logsumexp_slice(lm.row(ctx)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(NGramLm::train(&[], 2, 1.0, 3).is_err());
        assert!(NGramLm::train(&[vec![A, B]], 2, 1.0, 3).is_err());
        let lm = NGramLm::uniform(3);
        assert!(lm.sequence_log_prob(&[A, EOS, B, EOS]).is_err());
        assert!(lm.advance(&[], Input::Token(3)).is_err());
    }

    #[test]
    fn uniform_sequence_score() {
        let lm = NGramLm::uniform(4);
        let s = lm.sequence_log_prob(&[1, 2, 3, EOS]).unwrap();
        assert!((s + 4.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn counts_file_round_trip() {
        let corpus = vec![vec![A, B, EOS], vec![B, A, EOS]];
        let lm = NGramLm::train(&corpus, 2, 0.5, 3).unwrap();
        let mut buf = Vec::new();
        lm.write_counts(&mut buf).unwrap();
        let back = NGramLm::read_counts(buf.as_slice()).unwrap();
        assert_eq!(lm, back);
    }
}
