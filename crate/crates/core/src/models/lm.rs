//! Uniform stepwise interface over the two language-model families.

use super::ngram::{check_sequence, NGramLm};
use super::rnnlm::RecurrentLm;
use super::Input;
use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub enum LanguageModel {
    NGram(NGramLm),
    Recurrent(RecurrentLm),
}

/// A language model prepared for one graph.
#[derive(Clone, Debug)]
pub enum BoundLm<'a> {
    NGram(&'a NGramLm),
    Recurrent(RecurrentLm<Var>),
}

/// Per-hypothesis language-model state.
#[derive(Clone, Debug, PartialEq)]
pub enum LmState {
    /// Last `order − 1` inputs.
    Window(Vec<Input>),
    Hidden(Var),
}

impl LanguageModel {
    pub fn vocab(&self) -> usize {
        match self {
            LanguageModel::NGram(lm) => lm.vocab(),
            LanguageModel::Recurrent(lm) => lm.vocab,
        }
    }

    /// `trainable` only matters for the recurrent model.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundLm<'_> {
        match self {
            LanguageModel::NGram(lm) => BoundLm::NGram(lm),
            LanguageModel::Recurrent(lm) => BoundLm::Recurrent(lm.bind(g, trainable)),
        }
    }

    /// `Σ_n log q_LM(w_n | w_1^{n−1})` including the EOS factor.
    pub fn sequence_log_prob(&self, tokens: &[usize]) -> Result<f64> {
        match self {
            LanguageModel::NGram(lm) => lm.sequence_log_prob(tokens),
            LanguageModel::Recurrent(_) => {
                check_sequence(tokens, self.vocab())?;
                let mut g = Graph::new();
                let b = self.bind(&mut g, false);
                let m = b.sequence_logprobs(&mut g, tokens)?;
                let picked = g.gather(m, tokens)?;
                Ok(g.value(picked).data().iter().sum())
            }
        }
    }
}

impl BoundLm<'_> {
    pub fn vocab(&self) -> usize {
        match self {
            BoundLm::NGram(lm) => lm.vocab(),
            BoundLm::Recurrent(lm) => lm.vocab,
        }
    }

    pub fn is_trainable(&self, g: &Graph) -> bool {
        match self {
            BoundLm::NGram(_) => false,
            BoundLm::Recurrent(lm) => g.requires_grad(lm.embed),
        }
    }

    pub fn initial_state(&self, g: &mut Graph) -> LmState {
        match self {
            BoundLm::NGram(lm) => LmState::Window(lm.start()),
            BoundLm::Recurrent(lm) => LmState::Hidden(lm.initial_hidden(g)),
        }
    }

    /// Consumes `prev`; returns `1 × V` log-probabilities of the next token.
    pub fn step(&self, g: &mut Graph, state: &LmState, prev: Input) -> Result<(Var, LmState)> {
        match (self, state) {
            (BoundLm::NGram(lm), LmState::Window(ctx)) => {
                let next = lm.advance(ctx, prev)?;
                let row = g.constant(Tensor::row(lm.row(&next).to_vec()));
                Ok((row, LmState::Window(next)))
            }
            (BoundLm::Recurrent(lm), LmState::Hidden(h)) => {
                let (lp, h) = lm.step(g, *h, prev)?;
                Ok((lp, LmState::Hidden(h)))
            }
            _ => Err(crate::Error::arg(
                "language-model state does not match model",
            )),
        }
    }

    /// Teacher-forced `N × V` log-probabilities.
    pub fn sequence_logprobs(&self, g: &mut Graph, tokens: &[usize]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(crate::Error::arg("cannot score an empty token sequence"));
        }
        let mut state = self.initial_state(g);
        let mut prev = Input::Bos;
        let mut rows = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let (lp, next) = self.step(g, &state, prev)?;
            rows.push(lp);
            state = next;
            prev = Input::Token(t);
        }
        g.stack_rows(&rows)
    }

    pub fn leaves(&self) -> Vec<Var> {
        match self {
            BoundLm::NGram(_) => Vec::new(),
            BoundLm::Recurrent(lm) => lm.leaves(),
        }
    }
}
