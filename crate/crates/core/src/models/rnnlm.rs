use super::gru::Gru;
use super::params::{init_uniform, Parameterized};
use super::Input;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Single-layer recurrent language model.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentLm<P = Tensor> {
    pub vocab: usize,
    pub hidden: usize,
    /// `(V + 1) × d`; the last row embeds BOS.
    pub embed: P,
    pub cell: Gru<P>,
    pub out_w: P,
    pub out_b: P,
}

impl RecurrentLm<Tensor> {
    pub fn new(vocab: usize, hidden: usize, seed: u64) -> Self {
        RecurrentLm {
            vocab,
            hidden,
            embed: init_uniform(seed, "lm.embed", &[vocab + 1, hidden], hidden),
            cell: Gru::new(seed, "lm.cell", hidden, hidden),
            out_w: init_uniform(seed, "lm.out_w", &[hidden, vocab], hidden),
            out_b: init_uniform(seed, "lm.out_b", &[1, vocab], hidden),
        }
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> RecurrentLm<Var> {
        self.map(&mut |_, t| g.leaf(t.clone(), trainable))
    }
}

impl<P> RecurrentLm<P> {
    pub fn map<'a, Q>(&'a self, f: &mut dyn FnMut(String, &'a P) -> Q) -> RecurrentLm<Q> {
        RecurrentLm {
            vocab: self.vocab,
            hidden: self.hidden,
            embed: f("lm.embed".into(), &self.embed),
            cell: self.cell.map("lm.cell", f),
            out_w: f("lm.out_w".into(), &self.out_w),
            out_b: f("lm.out_b".into(), &self.out_b),
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut P)) {
        f("lm.embed".into(), &mut self.embed);
        self.cell.visit_mut("lm.cell", f);
        f("lm.out_w".into(), &mut self.out_w);
        f("lm.out_b".into(), &mut self.out_b);
    }
}

impl Parameterized for RecurrentLm<Tensor> {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.map(&mut |n, t| out.push((n, t)));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.visit_mut(&mut |n, t| out.push((n, t)));
        out
    }
}

impl RecurrentLm<Var> {
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.map(&mut |_, v| out.push(*v));
        out
    }

    pub fn initial_hidden(&self, g: &mut Graph) -> Var {
        g.constant(Tensor::zeros(&[1, self.hidden]))
    }

    pub fn step(&self, g: &mut Graph, hidden: Var, prev: Input) -> Result<(Var, Var)> {
        let row = match prev {
            Input::Bos => self.vocab,
            Input::Token(t) if t < self.vocab => t,
            Input::Token(t) => {
                return Err(Error::arg(format!(
                    "token id {t} outside vocabulary of size {}",
                    self.vocab
                )))
            }
        };
        let x = g.row(self.embed, row)?;
        let h = self.cell.step(g, x, hidden)?;
        let logits = g.linear(h, self.out_w, self.out_b)?;
        Ok((g.log_softmax(logits), h))
    }
}
