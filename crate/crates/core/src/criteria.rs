//! Training objectives over a sentence posterior.
//!
//! All three criteria maximize `log p(w̃ | x)` for the reference `w̃` and
//! differ only in how the posterior is modelled:
//!
//! * cross entropy: the acoustic model's own per-token softmax;
//! * local fusion: the log-linear AM + LM combination renormalized over the
//!   vocabulary at every position, conditioned on the reference history;
//! * MMI: the same combination renormalized once over whole sequences, with
//!   the sum over sequences replaced by an n-best list.
//!
//! Losses are the negated criteria.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::decoding::NBestList;
use crate::error::{Error, Result};
use crate::models::{
    check_sequence, AcousticModel, BoundLm, EncoderStates, Input, LanguageModel, EOS,
};
use crate::numerics::{logsumexp_slice, Graph, Tensor, Var};

/// AM scale `alpha`, LM scale `beta`, and the MMI denominator scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_den: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Scales {
            alpha: 1.0,
            beta: 0.0,
            gamma_den: 1.0,
        }
    }
}

impl Scales {
    pub fn new(alpha: f64, beta: f64, gamma_den: f64) -> Result<Self> {
        let s = Scales {
            alpha,
            beta,
            gamma_den,
        };
        s.validate()?;
        Ok(s)
    }

    /// `alpha = γ_abs`, `beta = γ_abs · γ_rel`.
    pub fn from_gammas(gamma_abs: f64, gamma_rel: f64, gamma_den: f64) -> Result<Self> {
        Scales::new(gamma_abs, gamma_abs * gamma_rel, gamma_den)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && (0.0..=1.0).contains(&self.gamma_den);
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!(
                "scales need alpha, beta >= 0 and gamma_den in [0, 1], got {self:?}"
            )))
        }
    }

    pub fn gamma_abs(&self) -> f64 {
        self.alpha
    }

    /// `beta / alpha`; undefined for `alpha = 0`.
    pub fn gamma_rel(&self) -> Option<f64> {
        (self.alpha > 0.0).then(|| self.beta / self.alpha)
    }
}

/// One training example: EOS-terminated tokens and a `T × d_f` feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<usize>,
    pub feats: Tensor,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<usize>,
        feats: Tensor,
        vocab: usize,
    ) -> Result<Self> {
        check_sequence(&tokens, vocab)?;
        if feats.rank() != 2 {
            return Err(Error::EmptyUtterance);
        }
        Ok(Utterance {
            id: id.into(),
            tokens,
            feats,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    /// Scalar node to differentiate.
    pub loss: Var,
    pub value: f64,
    /// Numerator term of every reference position.
    pub per_position: Vec<f64>,
    /// Log-domain denominator (summed over positions for local fusion).
    pub denominator: f64,
}

fn check_rows(g: &Graph, m: Var, tokens: &[usize], op: &'static str) -> Result<()> {
    let shape = g.value(m).shape();
    if shape.len() != 2 || shape[0] != tokens.len() {
        return Err(Error::Dimension {
            op,
            lhs: shape.to_vec(),
            rhs: vec![tokens.len()],
        });
    }
    Ok(())
}

/// `−Σ_n log q_AM(w̃_n | w̃_1^{n−1}, x)`.
pub fn ce_loss(g: &mut Graph, am_logprobs: Var, tokens: &[usize]) -> Result<LossOutput> {
    check_rows(g, am_logprobs, tokens, "ce_loss")?;
    let picked = g.gather(am_logprobs, tokens)?;
    let total = g.sum(picked);
    let loss = g.scale(total, -1.0);
    Ok(LossOutput {
        loss,
        value: g.scalar(loss),
        per_position: g.value(picked).data().to_vec(),
        denominator: 0.0,
    })
}

/// Per-token renormalized log-linear fusion:
///
/// `−Σ_n [ s_n(w̃_n) − log Σ_w exp s_n(w) ]`, `s_n = α·am[n] + β·lm[n]`.
///
/// Both matrices must be teacher-forced on the reference. The LM receives
/// gradient exactly when `lm_logprobs` depends on trainable leaves.
pub fn local_fusion_loss(
    g: &mut Graph,
    am_logprobs: Var,
    lm_logprobs: Var,
    tokens: &[usize],
    scales: &Scales,
) -> Result<LossOutput> {
    check_rows(g, am_logprobs, tokens, "local_fusion_loss")?;
    if g.value(am_logprobs).shape() != g.value(lm_logprobs).shape() {
        return Err(Error::Dimension {
            op: "local_fusion_loss",
            lhs: g.value(am_logprobs).shape().to_vec(),
            rhs: g.value(lm_logprobs).shape().to_vec(),
        });
    }
    let am = g.scale(am_logprobs, scales.alpha);
    let lm = g.scale(lm_logprobs, scales.beta);
    let combined = g.add(am, lm)?;
    let numer = g.gather(combined, tokens)?;
    let denom = g.logsumexp(combined, 1)?;
    let diff = g.sub(denom, numer)?;
    let loss = g.sum(diff);
    Ok(LossOutput {
        loss,
        value: g.scalar(loss),
        per_position: g.value(numer).data().to_vec(),
        denominator: g.value(denom).data().iter().sum(),
    })
}

/// Teacher-forced AM score `Σ_n log q_AM(w_n | …)` of `tokens` as a node.
pub fn am_sequence_score(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    enc: &EncoderStates,
    tokens: &[usize],
) -> Result<Var> {
    let m = am.sequence_logprobs(g, enc, tokens)?;
    let picked = g.gather(m, tokens)?;
    Ok(g.sum(picked))
}

/// Sequence-level MMI over an n-best denominator:
///
/// `−[ α·log P_AM(w̃) + β·log P_LM(w̃) − γ_den · log Σ_{h ∈ nbest} exp(α·log P_AM(h) + β·log P_LM(h)) ]`
///
/// Every hypothesis is re-scored by a fresh teacher-forced pass. LM scores
/// enter as constants, so the LM never receives gradient here.
pub fn mmi_loss(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    enc: &EncoderStates,
    lm: &BoundLm<'_>,
    reference: &[usize],
    nbest: &NBestList,
    scales: &Scales,
) -> Result<LossOutput> {
    let vocab = am.dims.vocab;
    check_sequence(reference, vocab)?;
    let mut seen = HashSet::new();
    let mut ref_index = None;
    for (i, h) in nbest.hyps.iter().enumerate() {
        check_sequence(&h.tokens, vocab)
            .map_err(|e| Error::Contract(format!("n-best entry {i}: {e}")))?;
        if !seen.insert(h.tokens.as_slice()) {
            return Err(Error::Contract(format!(
                "duplicate hypothesis {:?} in n-best list",
                h.tokens
            )));
        }
        if h.tokens == reference {
            ref_index = Some(i);
        }
    }
    let ref_index =
        ref_index.ok_or_else(|| Error::Contract("reference missing from n-best list".into()))?;

    let mut scores = Vec::with_capacity(nbest.hyps.len());
    let mut per_position = Vec::new();
    for (i, h) in nbest.hyps.iter().enumerate() {
        let am_lp = am.sequence_logprobs(g, enc, &h.tokens)?;
        let am_picked = g.gather(am_lp, &h.tokens)?;
        let am_score = g.sum(am_picked);
        let lm_lp = lm.sequence_logprobs(g, &h.tokens)?;
        let lm_picked = g.gather(lm_lp, &h.tokens)?;
        let lm_values = g.value(lm_picked).data().to_vec();
        let lm_score: f64 = lm_values.iter().sum();
        if i == ref_index {
            per_position = g
                .value(am_picked)
                .data()
                .iter()
                .zip(&lm_values)
                .map(|(a, l)| scales.alpha * a + scales.beta * l)
                .collect();
        }
        scores.push(g.affine(am_score, scales.alpha, scales.beta * lm_score));
    }
    let numerator = scores[ref_index];
    let stacked = g.stack_rows(&scores)?;
    let denom = g.logsumexp(stacked, 0)?;
    let scaled_denom = g.scale(denom, scales.gamma_den);
    let loss = g.sub(scaled_denom, numerator)?;
    Ok(LossOutput {
        loss,
        value: g.scalar(loss),
        per_position,
        denominator: g.scalar(denom),
    })
}

/// Result of scoring every EOS-terminated sequence up to a length bound.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    /// Reference posterior normalized over the enumerated set.
    pub posterior: f64,
    pub log_posterior: f64,
    /// `log Σ exp(score)` over the enumerated set; with `alpha = 1, beta = 0`
    /// this is the log of the AM probability mass that the set covers.
    pub log_enumerated_mass: f64,
    /// Every enumerated sequence with `α·log P_AM + β·log P_LM`, in
    /// depth-first lexicographic order.
    pub table: Vec<(Vec<usize>, f64)>,
}

/// Upper bound on `V^max_len` for exhaustive enumeration.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Exhaustively scores all EOS-terminated sequences of at most `max_len`
/// tokens (EOS included) and returns the reference posterior among them.
pub fn exact_sequence_posterior(
    am: &AcousticModel,
    lm: &LanguageModel,
    feats: &Tensor,
    reference: &[usize],
    scales: &Scales,
    max_len: usize,
) -> Result<ExactPosterior> {
    let vocab = am.dims.vocab;
    if max_len == 0 {
        return Err(Error::arg("max_len must be at least 1"));
    }
    if (vocab as f64).powi(max_len as i32) > ENUMERATION_LIMIT {
        return Err(Error::Resource(format!(
            "enumerating {vocab}^{max_len} sequences exceeds the limit of {ENUMERATION_LIMIT}"
        )));
    }
    check_sequence(reference, vocab)?;
    if reference.len() > max_len {
        return Err(Error::arg(format!(
            "reference of length {} exceeds max_len {max_len}",
            reference.len()
        )));
    }
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let enc = bam.encode(&mut g, feats)?;
    let mut table = Vec::new();
    let mut prefix = Vec::new();
    let am_state = bam.initial_state(&mut g, &enc);
    let lm_state = blm.initial_state(&mut g);
    let mut walker = Walker {
        g: &mut g,
        am: &bam,
        lm: &blm,
        enc: &enc,
        scales,
        max_len,
        table: &mut table,
    };
    walker.visit(&mut prefix, am_state, lm_state, Input::Bos, 0.0)?;

    let scores: Vec<f64> = table.iter().map(|(_, s)| *s).collect();
    let log_mass = logsumexp_slice(&scores);
    let ref_score = table
        .iter()
        .find(|(t, _)| t == reference)
        .map(|(_, s)| *s)
        .expect("reference is within the enumeration bound");
    let log_posterior = ref_score - log_mass;
    Ok(ExactPosterior {
        posterior: log_posterior.exp(),
        log_posterior,
        log_enumerated_mass: log_mass,
        table,
    })
}

struct Walker<'g, 'm> {
    g: &'g mut Graph,
    am: &'m AcousticModel<Var>,
    lm: &'m BoundLm<'m>,
    enc: &'m EncoderStates,
    scales: &'m Scales,
    max_len: usize,
    table: &'m mut Vec<(Vec<usize>, f64)>,
}

impl Walker<'_, '_> {
    fn visit(
        &mut self,
        prefix: &mut Vec<usize>,
        am_state: crate::models::DecoderState,
        lm_state: crate::models::LmState,
        prev: Input,
        score: f64,
    ) -> Result<()> {
        let (am_row, am_next) = self.am.step(self.g, &am_state, prev, self.enc)?;
        let (lm_row, lm_next) = self.lm.step(self.g, &lm_state, prev)?;
        let am_row = self.g.value(am_row).data().to_vec();
        let lm_row = self.g.value(lm_row).data().to_vec();
        let step = |w: usize| self.scales.alpha * am_row[w] + self.scales.beta * lm_row[w];
        let mut finished = prefix.clone();
        finished.push(EOS);
        self.table.push((finished, score + step(EOS)));
        if prefix.len() + 1 < self.max_len {
            for w in 1..am_row.len() {
                prefix.push(w);
                self.visit(
                    prefix,
                    am_next,
                    lm_next.clone(),
                    Input::Token(w),
                    score + step(w),
                )?;
                prefix.pop();
            }
        }
        Ok(())
    }
}
