//! Attention encoder-decoder acoustic model.
//!
//! The encoder is a stack of bidirectional gated recurrent layers over
//! feature frames. The decoder is a single recurrent layer whose query
//! attends over encoder states with an additive (MLP) energy that also sees
//! the running sum of past attention weights:
//!
//! ```text
//! e_t = v · tanh(W_s s + W_h h_t + w_f f_t + b)
//! ```

use serde::{Deserialize, Serialize};

use super::gru::Gru;
use super::params::{init_uniform, Parameterized};
use super::Input;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmDims {
    pub vocab: usize,
    pub feat_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub encoder_layers: usize,
}

impl Default for AmDims {
    fn default() -> Self {
        AmDims {
            vocab: 20,
            feat_dim: 8,
            embed_dim: 16,
            hidden_dim: 32,
            attention_dim: 32,
            encoder_layers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGru<P> {
    pub fwd: Gru<P>,
    pub bwd: Gru<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticModel<P = Tensor> {
    pub dims: AmDims,
    /// `(V + 1) × d_e`; the last row embeds BOS.
    pub embed: P,
    pub encoder: Vec<BiGru<P>>,
    pub att_query: P,
    pub att_key: P,
    pub att_feedback: P,
    pub att_bias: P,
    pub att_v: P,
    pub decoder: Gru<P>,
    pub out_w: P,
    pub out_b: P,
}

/// Encoder output for one utterance together with its attention keys.
#[derive(Clone, Copy, Debug)]
pub struct EncoderStates {
    /// `T × 2d_h`
    pub states: Var,
    /// `T × d_a`, the `W_h h_t` part of the attention energy.
    pub keys: Var,
    pub frames: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderState {
    pub hidden: Var,
    /// Running sum of attention weights, `1 × T`.
    pub feedback: Var,
    /// Last attention context, `1 × 2d_h`.
    pub context: Var,
}

impl AcousticModel<Tensor> {
    pub fn new(dims: AmDims, seed: u64) -> Result<Self> {
        if dims.vocab < 1 || dims.encoder_layers == 0 || dims.encoder_layers > 2 {
            return Err(Error::arg(format!(
                "unsupported acoustic model dims {dims:?}"
            )));
        }
        let AmDims {
            vocab,
            feat_dim,
            embed_dim,
            hidden_dim: h,
            attention_dim: a,
            ..
        } = dims;
        let mut encoder = Vec::new();
        for l in 0..dims.encoder_layers {
            let input = if l == 0 { feat_dim } else { 2 * h };
            encoder.push(BiGru {
                fwd: Gru::new(seed, &format!("am.enc{l}.fwd"), input, h),
                bwd: Gru::new(seed, &format!("am.enc{l}.bwd"), input, h),
            });
        }
        Ok(AcousticModel {
            dims,
            embed: init_uniform(seed, "am.embed", &[vocab + 1, embed_dim], embed_dim),
            encoder,
            att_query: init_uniform(seed, "am.att_query", &[h, a], h),
            att_key: init_uniform(seed, "am.att_key", &[2 * h, a], 2 * h),
            att_feedback: init_uniform(seed, "am.att_feedback", &[1, a], 1),
            att_bias: init_uniform(seed, "am.att_bias", &[1, a], a),
            att_v: init_uniform(seed, "am.att_v", &[a, 1], a),
            decoder: Gru::new(seed, "am.dec", embed_dim + 2 * h, h),
            out_w: init_uniform(seed, "am.out_w", &[3 * h, vocab], 3 * h),
            out_b: init_uniform(seed, "am.out_b", &[1, vocab], 3 * h),
        })
    }

    /// Copies the weights into `g` as leaves.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> AcousticModel<Var> {
        self.map(&mut |_, t| g.leaf(t.clone(), trainable))
    }
}

impl<P> AcousticModel<P> {
    pub fn map<'a, Q>(&'a self, f: &mut dyn FnMut(String, &'a P) -> Q) -> AcousticModel<Q> {
        let embed = f("am.embed".into(), &self.embed);
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(l, bi)| BiGru {
                fwd: bi.fwd.map(&format!("am.enc{l}.fwd"), f),
                bwd: bi.bwd.map(&format!("am.enc{l}.bwd"), f),
            })
            .collect();
        AcousticModel {
            dims: self.dims,
            embed,
            encoder,
            att_query: f("am.att_query".into(), &self.att_query),
            att_key: f("am.att_key".into(), &self.att_key),
            att_feedback: f("am.att_feedback".into(), &self.att_feedback),
            att_bias: f("am.att_bias".into(), &self.att_bias),
            att_v: f("am.att_v".into(), &self.att_v),
            decoder: self.decoder.map("am.dec", f),
            out_w: f("am.out_w".into(), &self.out_w),
            out_b: f("am.out_b".into(), &self.out_b),
        }
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(String, &'a mut P)) {
        f("am.embed".into(), &mut self.embed);
        for (l, bi) in self.encoder.iter_mut().enumerate() {
            bi.fwd.visit_mut(&format!("am.enc{l}.fwd"), f);
            bi.bwd.visit_mut(&format!("am.enc{l}.bwd"), f);
        }
        f("am.att_query".into(), &mut self.att_query);
        f("am.att_key".into(), &mut self.att_key);
        f("am.att_feedback".into(), &mut self.att_feedback);
        f("am.att_bias".into(), &mut self.att_bias);
        f("am.att_v".into(), &mut self.att_v);
        self.decoder.visit_mut("am.dec", f);
        f("am.out_w".into(), &mut self.out_w);
        f("am.out_b".into(), &mut self.out_b);
    }
}

impl Parameterized for AcousticModel<Tensor> {
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

impl AcousticModel<Var> {
    /// Leaves in parameter order, for reading gradients back.
    pub fn leaves(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.map(&mut |_, v| out.push(*v));
        out
    }

    pub fn encode(&self, g: &mut Graph, feats: &Tensor) -> Result<EncoderStates> {
        if feats.rank() != 2 || feats.rows() == 0 {
            return Err(Error::EmptyUtterance);
        }
        if feats.cols() != self.dims.feat_dim {
            return Err(Error::Dimension {
                op: "encode",
                lhs: feats.shape().to_vec(),
                rhs: vec![self.dims.feat_dim],
            });
        }
        let frames = feats.rows();
        let h0 = g.constant(Tensor::zeros(&[1, self.dims.hidden_dim]));
        let mut layer_in = g.constant(feats.clone());
        for bi in &self.encoder {
            let xs = (0..frames)
                .map(|t| g.row(layer_in, t))
                .collect::<Result<Vec<_>>>()?;
            let mut fwd = Vec::with_capacity(frames);
            let mut h = h0;
            for &x in &xs {
                h = bi.fwd.step(g, x, h)?;
                fwd.push(h);
            }
            let mut bwd = vec![h0; frames];
            let mut h = h0;
            for t in (0..frames).rev() {
                h = bi.bwd.step(g, xs[t], h)?;
                bwd[t] = h;
            }
            let f = g.stack_rows(&fwd)?;
            let b = g.stack_rows(&bwd)?;
            layer_in = g.concat(&[f, b])?;
        }
        let keys = g.matmul(layer_in, self.att_key)?;
        Ok(EncoderStates {
            states: layer_in,
            keys,
            frames,
        })
    }

    pub fn initial_state(&self, g: &mut Graph, enc: &EncoderStates) -> DecoderState {
        DecoderState {
            hidden: g.constant(Tensor::zeros(&[1, self.dims.hidden_dim])),
            feedback: g.constant(Tensor::zeros(&[1, enc.frames])),
            context: g.constant(Tensor::zeros(&[1, 2 * self.dims.hidden_dim])),
        }
    }

    /// Attention weights (`1 × T`) and context for `query` given the
    /// accumulated weights `feedback`.
    pub fn attend(
        &self,
        g: &mut Graph,
        query: Var,
        feedback: Var,
        enc: &EncoderStates,
    ) -> Result<(Var, Var)> {
        let q = g.matmul(query, self.att_query)?;
        let fcol = g.reshape(feedback, &[enc.frames, 1])?;
        let fb = g.matmul(fcol, self.att_feedback)?;
        let pre = g.add(enc.keys, fb)?;
        let pre = g.add(pre, q)?;
        let pre = g.add(pre, self.att_bias)?;
        let act = g.tanh(pre);
        let energies = g.matmul(act, self.att_v)?;
        let energies = g.reshape(energies, &[1, enc.frames])?;
        let log_w = g.log_softmax(energies);
        let weights = g.exp(log_w);
        let context = g.matmul(weights, enc.states)?;
        Ok((context, weights))
    }

    fn check_input(&self, prev: Input) -> Result<usize> {
        match prev {
            Input::Bos => Ok(self.dims.vocab),
            Input::Token(t) if t < self.dims.vocab => Ok(t),
            Input::Token(t) => Err(Error::arg(format!(
                "token id {t} outside vocabulary of size {}",
                self.dims.vocab
            ))),
        }
    }

    /// One decoder step: consumes `prev`, returns `1 × V` log-probabilities
    /// for the next token and the advanced state.
    pub fn step(
        &self,
        g: &mut Graph,
        state: &DecoderState,
        prev: Input,
        enc: &EncoderStates,
    ) -> Result<(Var, DecoderState)> {
        let row = self.check_input(prev)?;
        let emb = g.row(self.embed, row)?;
        let x = g.concat(&[emb, state.context])?;
        let hidden = self.decoder.step(g, x, state.hidden)?;
        let (context, weights) = self.attend(g, hidden, state.feedback, enc)?;
        let feedback = g.add(state.feedback, weights)?;
        let out_in = g.concat(&[hidden, context])?;
        let logits = g.linear(out_in, self.out_w, self.out_b)?;
        let logprobs = g.log_softmax(logits);
        Ok((
            logprobs,
            DecoderState {
                hidden,
                feedback,
                context,
            },
        ))
    }

    /// Teacher-forced `N × V` log-probabilities; row `n` is conditioned on
    /// `tokens[..n]`.
    pub fn sequence_logprobs(
        &self,
        g: &mut Graph,
        enc: &EncoderStates,
        tokens: &[usize],
    ) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::arg("cannot score an empty token sequence"));
        }
        let mut state = self.initial_state(g, enc);
        let mut rows = Vec::with_capacity(tokens.len());
        let mut prev = Input::Bos;
        for &t in tokens {
            let (lp, next) = self.step(g, &state, prev, enc)?;
            rows.push(lp);
            state = next;
            prev = Input::Token(t);
        }
        g.stack_rows(&rows)
    }
}
