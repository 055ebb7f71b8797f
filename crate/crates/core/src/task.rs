//! Synthetic noisy-channel recognition task.
//!
//! Sentences come from a random Markov chain over the content symbols that
//! stops with EOS. Each content token is rendered as its fixed random
//! feature vector repeated `frames_per_token` times plus Gaussian noise; EOS
//! emits no frames. The text-only corpus is drawn from the same chain.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::criteria::Utterance;
use crate::error::{Error, Result};
use crate::models::{check_sequence, stream_rng, EOS};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub vocab_size: usize,
    pub markov_order: usize,
    /// Divides the standard-normal transition logits; smaller is peakier.
    pub temperature: f64,
    /// Probability of EOS after any content token.
    pub eos_prob: f64,
    /// Sentences reaching this many content tokens are closed with EOS.
    pub max_sentence_len: usize,
    pub frames_per_token: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_text_only: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            vocab_size: 20,
            markov_order: 1,
            temperature: 0.5,
            eos_prob: 0.2,
            max_sentence_len: 30,
            frames_per_token: 2,
            feature_dim: 8,
            noise_std: 1.5,
            n_train: 2000,
            n_dev: 200,
            n_test: 200,
            n_text_only: 20000,
            seed: 42,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::arg(format!("invalid task config: {m}")));
        if self.vocab_size < 2 {
            return fail("vocab_size must be at least 2");
        }
        if self.markov_order < 1 {
            return fail("markov_order must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be positive");
        }
        if !(self.eos_prob > 0.0 && self.eos_prob < 1.0) {
            return fail("eos_prob must lie in (0, 1)");
        }
        if self.max_sentence_len < 1 {
            return fail("max_sentence_len must be at least 1");
        }
        if self.frames_per_token < 1 || self.feature_dim < 1 {
            return fail("frames_per_token and feature_dim must be at least 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be non-negative");
        }
        if self.n_text_only < self.n_train {
            return fail("n_text_only must be at least n_train");
        }
        Ok(())
    }
}

/// The text source: a Markov chain of order `markov_order` over content
/// symbols `1..V`, with EOS reachable after at least one content token.
#[derive(Clone, Debug)]
pub struct MarkovSource {
    cfg: TaskConfig,
    cache: HashMap<Vec<usize>, Vec<f64>>,
}

impl MarkovSource {
    pub fn new(cfg: &TaskConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MarkovSource {
            cfg: cfg.clone(),
            cache: HashMap::new(),
        })
    }

    /// Next-token distribution over the full vocabulary. `ctx` holds the
    /// last `markov_order` content tokens, 0-padded on the left (0 stands
    /// for the sentence start here).
    pub fn distribution(&mut self, ctx: &[usize]) -> &[f64] {
        if !self.cache.contains_key(ctx) {
            let v = self.cfg.vocab_size;
            let name = format!(
                "task.chain.{}",
                ctx.iter()
                    .map(|t| t.to_string())
                    .collect::<Vec<_>>()
                    .join(".")
            );
            let mut rng = stream_rng(self.cfg.seed, &name);
            let logits: Vec<f64> = (1..v)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / self.cfg.temperature)
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            let at_start = ctx.last() == Some(&0);
            let p_eos = if at_start { 0.0 } else { self.cfg.eos_prob };
            let mut row = vec![p_eos; v];
            for (w, l) in logits.iter().enumerate() {
                row[w + 1] = (1.0 - p_eos) * (l - m).exp() / z;
            }
            self.cache.insert(ctx.to_vec(), row);
        }
        &self.cache[ctx]
    }

    /// `V × V` first-order transition matrix; row 0 is the start state.
    pub fn transition_matrix(&mut self) -> Result<Vec<Vec<f64>>> {
        if self.cfg.markov_order != 1 {
            return Err(Error::arg("transition matrix needs markov_order = 1"));
        }
        Ok((0..self.cfg.vocab_size)
            .map(|c| self.distribution(&[c]).to_vec())
            .collect())
    }

    pub fn sample(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut ctx = vec![0; self.cfg.markov_order];
        let mut out = Vec::new();
        loop {
            if out.len() == self.cfg.max_sentence_len {
                out.push(EOS);
                return out;
            }
            let row = self.distribution(&ctx);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (w, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = w;
                    break;
                }
            }
            out.push(pick);
            if pick == EOS {
                return out;
            }
            ctx.remove(0);
            ctx.push(pick);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub text_only: Vec<Vec<usize>>,
    /// Symbol per id; id 0 is EOS.
    pub vocab: Vec<String>,
}

pub fn vocab_symbols(v: usize) -> Vec<String> {
    std::iter::once("</s>".to_string())
        .chain((1..v).map(|i| format!("w{i}")))
        .collect()
}

/// Fixed per-token feature vectors, `V × d_f`; row 0 (EOS) is unused.
pub fn token_embeddings(cfg: &TaskConfig) -> Tensor {
    let mut rng = stream_rng(cfg.seed, "task.embed");
    let n = cfg.vocab_size * cfg.feature_dim;
    let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(cfg.vocab_size, cfg.feature_dim, data).expect("valid shape")
}

/// Renders `tokens` as `r·(N−1) × d_f` noisy frames.
pub fn render(
    tokens: &[usize],
    embed: &Tensor,
    cfg: &TaskConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    check_sequence(tokens, cfg.vocab_size)?;
    let body = &tokens[..tokens.len() - 1];
    if body.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::arg(e.to_string()))?;
    let r = cfg.frames_per_token;
    let mut data = Vec::with_capacity(body.len() * r * cfg.feature_dim);
    for &t in body {
        for _ in 0..r {
            for &e in embed.row_slice(t) {
                data.push(e + noise.sample(rng));
            }
        }
    }
    Tensor::matrix(body.len() * r, cfg.feature_dim, data)
}

pub fn generate_dataset(cfg: &TaskConfig) -> Result<Dataset> {
    let mut source = MarkovSource::new(cfg)?;
    let embed = token_embeddings(cfg);
    let mut split = |name: &str, count: usize| -> Result<Vec<Utterance>> {
        let mut text_rng = stream_rng(cfg.seed, &format!("task.{name}.text"));
        let mut noise_rng = stream_rng(cfg.seed, &format!("task.{name}.noise"));
        (0..count)
            .map(|i| {
                let tokens = source.sample(&mut text_rng);
                let feats = render(&tokens, &embed, cfg, &mut noise_rng)?;
                Utterance::new(format!("{name}-{i:05}"), tokens, feats, cfg.vocab_size)
            })
            .collect()
    };
    let train = split("train", cfg.n_train)?;
    let dev = split("dev", cfg.n_dev)?;
    let test = split("test", cfg.n_test)?;
    let mut text_rng = stream_rng(cfg.seed, "task.text_only");
    let text_only = (0..cfg.n_text_only)
        .map(|_| source.sample(&mut text_rng))
        .collect();
    Ok(Dataset {
        train,
        dev,
        test,
        text_only,
        vocab: vocab_symbols(cfg.vocab_size),
    })
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    tokens: Vec<usize>,
    feats: Vec<Vec<f64>>,
}

pub fn write_utterances(path: &Path, utts: &[Utterance]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for u in utts {
        let rec = Record {
            id: u.id.clone(),
            tokens: u.tokens.clone(),
            feats: (0..u.feats.rows())
                .map(|t| u.feats.row_slice(t).to_vec())
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSON-lines utterance file, checking every record against `vocab`.
pub fn read_utterances(path: &Path, vocab: usize) -> Result<Vec<Utterance>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |m: String| Error::Data(format!("{}:{}: {m}", path.display(), i + 1));
        let rec: Record = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if rec.feats.is_empty() {
            return Err(at(format!("utterance {} has no frames", rec.id)));
        }
        let feats = Tensor::from_rows(&rec.feats).map_err(|e| at(e.to_string()))?;
        let utt =
            Utterance::new(rec.id, rec.tokens, feats, vocab).map_err(|e| at(e.to_string()))?;
        out.push(utt);
    }
    Ok(out)
}

pub fn write_text(path: &Path, sentences: &[Vec<usize>]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for s in sentences {
        let line: Vec<String> = s.iter().map(|t| t.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_text(path: &Path, vocab: usize) -> Result<Vec<Vec<usize>>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |m: String| Error::Data(format!("{}:{}: {m}", path.display(), i + 1));
        let seq = line
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| at(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        check_sequence(&seq, vocab).map_err(|e| at(e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

pub fn write_vocab(path: &Path, vocab: &[String]) -> Result<()> {
    let mut s = vocab.join("\n");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let s = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let v: Vec<String> = s.lines().map(str::to_string).collect();
    if v.len() < 2 {
        return Err(Error::Data(format!(
            "{}: vocabulary needs EOS and a content symbol",
            path.display()
        )));
    }
    Ok(v)
}

/// Writes `train.jsonl`, `dev.jsonl`, `test.jsonl`, `text_only.txt` and
/// `vocab.txt` into `dir`.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_utterances(&dir.join("train.jsonl"), &ds.train)?;
    write_utterances(&dir.join("dev.jsonl"), &ds.dev)?;
    write_utterances(&dir.join("test.jsonl"), &ds.test)?;
    write_text(&dir.join("text_only.txt"), &ds.text_only)?;
    write_vocab(&dir.join("vocab.txt"), &ds.vocab)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let vocab = read_vocab(&dir.join("vocab.txt"))?;
    let v = vocab.len();
    Ok(Dataset {
        train: read_utterances(&dir.join("train.jsonl"), v)?,
        dev: read_utterances(&dir.join("dev.jsonl"), v)?,
        test: read_utterances(&dir.join("test.jsonl"), v)?,
        text_only: read_text(&dir.join("text_only.txt"), v)?,
        vocab,
    })
}
