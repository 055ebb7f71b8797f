//! Beam search over the acoustic model, optionally fused with a language
//! model, and n-best extraction for sequence training.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    check_sequence, AcousticModel, BoundLm, DecoderState, EncoderStates, Input, LanguageModel,
    LmState, EOS,
};
use crate::numerics::{logsumexp_slice, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    AmOnly,
    Shallow,
    Local,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "am_only" => Ok(DecodeMode::AmOnly),
            "shallow" => Ok(DecodeMode::Shallow),
            "local" => Ok(DecodeMode::Local),
            _ => Err(Error::Config(format!(
                "unknown decode mode `{s}` (expected am_only, shallow or local)"
            ))),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::AmOnly => "am_only",
            DecodeMode::Shallow => "shallow",
            DecodeMode::Local => "local",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub alpha: f64,
    pub beta: f64,
    pub beam_size: usize,
    /// Longest output in tokens, EOS included.
    pub max_len: usize,
    pub length_norm: bool,
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size < 1 || self.max_len < 1 {
            return Err(Error::arg(format!(
                "beam_size and max_len must be at least 1 (got {} and {})",
                self.beam_size, self.max_len
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::arg("decode scales must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredHypothesis {
    /// EOS-terminated.
    pub tokens: Vec<usize>,
    /// Accumulated score, not length-normalized.
    pub score: f64,
    /// EOS was appended because the length limit was reached.
    pub truncated: bool,
}

impl ScoredHypothesis {
    fn rank_key(&self, length_norm: bool) -> f64 {
        if length_norm {
            self.score / self.tokens.len() as f64
        } else {
            self.score
        }
    }
}

/// Hypotheses best first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub hyps: Vec<ScoredHypothesis>,
    pub contains_reference: bool,
}

impl NBestList {
    pub fn best(&self) -> Option<&ScoredHypothesis> {
        self.hyps.first()
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    pub fn position(&self, tokens: &[usize]) -> Option<usize> {
        self.hyps.iter().position(|h| h.tokens == tokens)
    }
}

/// Per-token scores for one expansion step.
///
/// * `AmOnly`: the AM row.
/// * `Shallow`: `α·am + β·lm`, left unnormalized.
/// * `Local`: `α·am + β·lm` renormalized over the vocabulary.
pub fn step_scores(mode: DecodeMode, am: &[f64], lm: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    match mode {
        DecodeMode::AmOnly => am.to_vec(),
        DecodeMode::Shallow => am
            .iter()
            .zip(lm)
            .map(|(a, l)| alpha * a + beta * l)
            .collect(),
        DecodeMode::Local => {
            let mut s = step_scores(DecodeMode::Shallow, am, lm, alpha, beta);
            let z = logsumexp_slice(&s);
            s.iter_mut().for_each(|x| *x -= z);
            s
        }
    }
}

/// Descending by key, then ascending token ids.
fn rank_order(a: f64, ta: &[usize], b: f64, tb: &[usize]) -> Ordering {
    b.total_cmp(&a).then_with(|| ta.cmp(tb))
}

fn sort_ranked(hyps: &mut [ScoredHypothesis], length_norm: bool) {
    hyps.sort_by(|a, b| {
        rank_order(
            a.rank_key(length_norm),
            &a.tokens,
            b.rank_key(length_norm),
            &b.tokens,
        )
    });
}

struct Active {
    tokens: Vec<usize>,
    score: f64,
    am: DecoderState,
    lm: Option<LmState>,
}

/// Beam search on already bound models.
///
/// Every step expands each active hypothesis over the vocabulary and keeps
/// the `beam_size` best candidates overall. Candidates ending in EOS retire
/// to a result pool (pruned to `beam_size`); the rest form the next beam. At
/// the length limit the remaining hypotheses are closed with EOS and
/// flagged as truncated. Without length normalization the search also stops
/// once no active hypothesis can overtake the pool's `beam_size`-th entry,
/// since step scores are never positive.
pub fn beam_search_bound(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    lm: &BoundLm<'_>,
    enc: &EncoderStates,
    cfg: &DecodeConfig,
) -> Result<NBestList> {
    cfg.validate()?;
    let use_lm = cfg.mode != DecodeMode::AmOnly;
    if use_lm && lm.vocab() != am.dims.vocab {
        return Err(Error::arg(format!(
            "LM vocabulary {} differs from AM vocabulary {}",
            lm.vocab(),
            am.dims.vocab
        )));
    }
    let vocab = am.dims.vocab;
    let mut active = vec![Active {
        tokens: Vec::new(),
        score: 0.0,
        am: am.initial_state(g, enc),
        lm: use_lm.then(|| lm.initial_state(g)),
    }];
    let mut pool: Vec<ScoredHypothesis> = Vec::new();

    for step in 0..cfg.max_len {
        let last = step + 1 == cfg.max_len;
        let mut expanded = Vec::with_capacity(active.len());
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, h) in active.iter().enumerate() {
            let prev = h.tokens.last().map_or(Input::Bos, |&t| Input::Token(t));
            let (am_row, am_next) = am.step(g, &h.am, prev, enc)?;
            let (lm_row, lm_next) = match &h.lm {
                Some(s) => {
                    let (row, next) = lm.step(g, s, prev)?;
                    (Some(row), Some(next))
                }
                None => (None, None),
            };
            let am_vals = g.value(am_row).data();
            let scores = match lm_row {
                Some(r) => step_scores(cfg.mode, am_vals, g.value(r).data(), cfg.alpha, cfg.beta),
                None => am_vals.to_vec(),
            };
            if last {
                candidates.push((h.score + scores[EOS], hi, EOS));
            } else {
                candidates.extend((0..vocab).map(|w| (h.score + scores[w], hi, w)));
            }
            expanded.push((am_next, lm_next));
        }
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| active[a.1].tokens.cmp(&active[b.1].tokens))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(cfg.beam_size);

        let mut next = Vec::with_capacity(candidates.len());
        for (score, hi, w) in candidates {
            let mut tokens = active[hi].tokens.clone();
            tokens.push(w);
            if w == EOS {
                pool.push(ScoredHypothesis {
                    tokens,
                    score,
                    truncated: last,
                });
            } else {
                let (am_state, lm_state) = &expanded[hi];
                next.push(Active {
                    tokens,
                    score,
                    am: *am_state,
                    lm: lm_state.clone(),
                });
            }
        }
        sort_ranked(&mut pool, cfg.length_norm);
        pool.truncate(cfg.beam_size);
        active = next;
        if active.is_empty() {
            break;
        }
        if !cfg.length_norm && pool.len() >= cfg.beam_size {
            let best_active = active
                .iter()
                .map(|h| h.score)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_active < pool[cfg.beam_size - 1].score {
                break;
            }
        }
    }
    Ok(NBestList {
        hyps: pool,
        contains_reference: false,
    })
}

/// Encodes `feats` and runs [`beam_search_bound`] on a fresh graph.
pub fn beam_search(
    am: &AcousticModel,
    lm: &LanguageModel,
    feats: &Tensor,
    cfg: &DecodeConfig,
) -> Result<NBestList> {
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let enc = bam.encode(&mut g, feats)?;
    beam_search_bound(&mut g, &bam, &blm, &enc, cfg)
}

/// Teacher-forced score of `tokens` under `mode`, accumulated exactly as
/// the beam search does.
pub fn sequence_score_bound(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    lm: &BoundLm<'_>,
    enc: &EncoderStates,
    tokens: &[usize],
    mode: DecodeMode,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    check_sequence(tokens, am.dims.vocab)?;
    let am_m = am.sequence_logprobs(g, enc, tokens)?;
    let am_m = g.value(am_m).clone();
    let lm_m = if mode == DecodeMode::AmOnly {
        None
    } else {
        let m = lm.sequence_logprobs(g, tokens)?;
        Some(g.value(m).clone())
    };
    let mut total = 0.0;
    for (n, &w) in tokens.iter().enumerate() {
        let am_row = am_m.row_slice(n);
        total += match &lm_m {
            Some(l) => step_scores(mode, am_row, l.row_slice(n), alpha, beta)[w],
            None => am_row[w],
        };
    }
    Ok(total)
}

pub fn sequence_score(
    am: &AcousticModel,
    lm: &LanguageModel,
    feats: &Tensor,
    tokens: &[usize],
    mode: DecodeMode,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let enc = bam.encode(&mut g, feats)?;
    sequence_score_bound(&mut g, &bam, &blm, &enc, tokens, mode, alpha, beta)
}

/// Shallow-fusion n-best list of size `n` without length normalization,
/// with the reference guaranteed to be present. When the search misses the
/// reference, the lowest-ranked hypothesis (if the list is full) is
/// replaced by it and the reference is placed by its own score.
#[allow(clippy::too_many_arguments)]
pub fn nbest_with_forced_reference_bound(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    lm: &BoundLm<'_>,
    enc: &EncoderStates,
    reference: &[usize],
    n: usize,
    alpha: f64,
    beta: f64,
    max_len: usize,
) -> Result<NBestList> {
    check_sequence(reference, am.dims.vocab)?;
    let cfg = DecodeConfig {
        mode: DecodeMode::Shallow,
        alpha,
        beta,
        beam_size: n,
        max_len,
        length_norm: false,
    };
    let mut list = beam_search_bound(g, am, lm, enc, &cfg)?;
    if list.position(reference).is_none() {
        if list.hyps.len() >= n {
            list.hyps.pop();
        }
        let score =
            sequence_score_bound(g, am, lm, enc, reference, DecodeMode::Shallow, alpha, beta)?;
        list.hyps.push(ScoredHypothesis {
            tokens: reference.to_vec(),
            score,
            truncated: false,
        });
        sort_ranked(&mut list.hyps, false);
    }
    list.contains_reference = true;
    Ok(list)
}

#[allow(clippy::too_many_arguments)]
pub fn nbest_with_forced_reference(
    am: &AcousticModel,
    lm: &LanguageModel,
    feats: &Tensor,
    reference: &[usize],
    n: usize,
    alpha: f64,
    beta: f64,
    max_len: usize,
) -> Result<NBestList> {
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let enc = bam.encode(&mut g, feats)?;
    nbest_with_forced_reference_bound(&mut g, &bam, &blm, &enc, reference, n, alpha, beta, max_len)
}

/// All EOS-terminated sequences of at most `max_len` tokens, scored under
/// `mode` and ranked as the beam search would rank them. Exponential in
/// `max_len`; meant for tiny vocabularies.
pub fn exhaustive_search(
    am: &AcousticModel,
    lm: &LanguageModel,
    feats: &Tensor,
    cfg: &DecodeConfig,
) -> Result<NBestList> {
    cfg.validate()?;
    let vocab = am.dims.vocab;
    if (vocab as f64).powi(cfg.max_len as i32) > crate::criteria::ENUMERATION_LIMIT {
        return Err(Error::Resource(format!(
            "exhaustive search over {vocab}^{} sequences is too large",
            cfg.max_len
        )));
    }
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let enc = bam.encode(&mut g, feats)?;
    let mut hyps = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let mut done = prefix.clone();
        done.push(EOS);
        let score = sequence_score_bound(
            &mut g, &bam, &blm, &enc, &done, cfg.mode, cfg.alpha, cfg.beta,
        )?;
        hyps.push(ScoredHypothesis {
            truncated: done.len() == cfg.max_len,
            tokens: done,
            score,
        });
        if prefix.len() + 1 < cfg.max_len {
            for w in 1..vocab {
                let mut p = prefix.clone();
                p.push(w);
                stack.push(p);
            }
        }
    }
    sort_ranked(&mut hyps, cfg.length_norm);
    Ok(NBestList {
        hyps,
        contains_reference: false,
    })
}
