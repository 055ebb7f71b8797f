use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var};

use super::params::init_uniform;

/// Gated recurrent cell with update and reset gates:
///
/// ```text
/// z  = σ([x, h] W_z + b_z)
/// r  = σ([x, h] W_r + b_r)
/// h̃  = tanh([x, r ⊙ h] W_h + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
///
/// `P` is [`Tensor`] for stored weights and [`Var`] once bound to a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru<P> {
    pub w_update: P,
    pub w_reset: P,
    pub w_cand: P,
    pub b_update: P,
    pub b_reset: P,
    pub b_cand: P,
}

impl Gru<Tensor> {
    pub fn new(seed: u64, prefix: &str, input: usize, hidden: usize) -> Self {
        let fan_in = input + hidden;
        let w = |n: &str| init_uniform(seed, &format!("{prefix}.{n}"), &[fan_in, hidden], fan_in);
        let b = |n: &str| init_uniform(seed, &format!("{prefix}.{n}"), &[1, hidden], fan_in);
        Gru {
            w_update: w("w_update"),
            w_reset: w("w_reset"),
            w_cand: w("w_cand"),
            b_update: b("b_update"),
            b_reset: b("b_reset"),
            b_cand: b("b_cand"),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_update.cols()
    }
}

impl<P> Gru<P> {
    pub fn map<'a, Q>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a P) -> Q) -> Gru<Q> {
        Gru {
            w_update: f(format!("{prefix}.w_update"), &self.w_update),
            w_reset: f(format!("{prefix}.w_reset"), &self.w_reset),
            w_cand: f(format!("{prefix}.w_cand"), &self.w_cand),
            b_update: f(format!("{prefix}.b_update"), &self.b_update),
            b_reset: f(format!("{prefix}.b_reset"), &self.b_reset),
            b_cand: f(format!("{prefix}.b_cand"), &self.b_cand),
        }
    }

    pub fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut P)) {
        f(format!("{prefix}.w_update"), &mut self.w_update);
        f(format!("{prefix}.w_reset"), &mut self.w_reset);
        f(format!("{prefix}.w_cand"), &mut self.w_cand);
        f(format!("{prefix}.b_update"), &mut self.b_update);
        f(format!("{prefix}.b_reset"), &mut self.b_reset);
        f(format!("{prefix}.b_cand"), &mut self.b_cand);
    }
}

impl Gru<Var> {
    /// One recurrence step; `x` is `1 × input`, `h` is `1 × hidden`.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        let xh = g.concat(&[x, h])?;
        let z = g.linear(xh, self.w_update, self.b_update)?;
        let z = g.sigmoid(z);
        let r = g.linear(xh, self.w_reset, self.b_reset)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, h)?;
        let xrh = g.concat(&[x, rh])?;
        let cand = g.linear(xrh, self.w_cand, self.b_cand)?;
        let cand = g.tanh(cand);
        let keep = g.one_minus(z);
        let kept = g.mul(keep, h)?;
        let fresh = g.mul(z, cand)?;
        g.add(kept, fresh)
    }
}
