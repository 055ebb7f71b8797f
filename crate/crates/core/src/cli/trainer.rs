//! Mini-batch gradient descent over the training criteria.

use std::time::Instant;

use log::{debug, info};
use serde::Serialize;

use super::config::Criterion;
use crate::criteria::{ce_loss, local_fusion_loss, mmi_loss, Scales, Utterance};
use crate::decoding::{beam_search_bound, nbest_with_forced_reference_bound, DecodeConfig};
use crate::error::{Error, Result};
use crate::metrics::{corpus_report, WerReport};
use crate::models::{stream_rng, AcousticModel, Input, LanguageModel, Parameterized, RecurrentLm};
use crate::numerics::{Graph, Var};

use rand::seq::SliceRandom;

/// What a single utterance contributes to a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSetup {
    pub criterion: Criterion,
    pub scales: Scales,
    /// n-best size for MMI.
    pub nbest: usize,
    /// Length limit for MMI n-best generation.
    pub max_len: usize,
    /// Local fusion: let gradients reach a recurrent LM.
    pub joint_lm: bool,
}

#[derive(Clone, Debug)]
pub struct UtteranceGrad {
    pub loss: f64,
    pub am: Vec<f64>,
    /// Present only under joint training.
    pub lm: Option<Vec<f64>>,
}

fn grads(g: &Graph, leaves: &[Var]) -> Vec<f64> {
    let mut out = Vec::new();
    for &v in leaves {
        out.extend_from_slice(g.grad(v).data());
    }
    out
}

/// Builds the loss node for one utterance on `g`.
fn loss_node(
    g: &mut Graph,
    am: &AcousticModel<Var>,
    lm: &crate::models::BoundLm<'_>,
    utt: &Utterance,
    setup: &LossSetup,
) -> Result<Var> {
    let enc = am.encode(g, &utt.feats)?;
    let out = match setup.criterion {
        Criterion::Ce => {
            let m = am.sequence_logprobs(g, &enc, &utt.tokens)?;
            ce_loss(g, m, &utt.tokens)?
        }
        Criterion::Local => {
            let m = am.sequence_logprobs(g, &enc, &utt.tokens)?;
            if setup.scales.alpha == 1.0 && setup.scales.beta == 0.0 {
                // The fused posterior is the AM posterior itself.
                ce_loss(g, m, &utt.tokens)?
            } else {
                let l = lm.sequence_logprobs(g, &utt.tokens)?;
                local_fusion_loss(g, m, l, &utt.tokens, &setup.scales)?
            }
        }
        Criterion::Mmi => {
            let nbest = nbest_with_forced_reference_bound(
                g,
                am,
                lm,
                &enc,
                &utt.tokens,
                setup.nbest,
                setup.scales.alpha,
                setup.scales.beta,
                setup.max_len,
            )?;
            mmi_loss(g, am, &enc, lm, &utt.tokens, &nbest, &setup.scales)?
        }
        Criterion::Lm => return Err(Error::arg("language-model training has its own loop")),
    };
    Ok(out.loss)
}

/// Loss value without gradients.
pub fn utterance_loss(
    am: &AcousticModel,
    lm: &LanguageModel,
    utt: &Utterance,
    setup: &LossSetup,
) -> Result<f64> {
    let mut g = Graph::new();
    let bam = am.bind(&mut g, false);
    let blm = lm.bind(&mut g, false);
    let loss = loss_node(&mut g, &bam, &blm, utt, setup)?;
    Ok(g.scalar(loss))
}

pub fn utterance_gradient(
    am: &AcousticModel,
    lm: &LanguageModel,
    utt: &Utterance,
    setup: &LossSetup,
) -> Result<UtteranceGrad> {
    let joint = setup.joint_lm && setup.criterion == Criterion::Local;
    let mut g = Graph::new();
    let bam = am.bind(&mut g, true);
    let blm = lm.bind(&mut g, joint);
    let loss = loss_node(&mut g, &bam, &blm, utt, setup)?;
    g.backward(loss)?;
    Ok(UtteranceGrad {
        loss: g.scalar(loss),
        am: grads(&g, &bam.leaves()),
        lm: joint.then(|| grads(&g, &blm.leaves())),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimizer {
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

fn sgd(model: &mut impl Parameterized, grad: &[f64], lr: f64) {
    let mut flat = model.flat_params();
    for (p, g) in flat.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    model.set_flat_params(&flat);
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// One mini-batch update; returns the mean utterance loss.
pub fn train_step(
    am: &mut AcousticModel,
    lm: &mut LanguageModel,
    batch: &[&Utterance],
    setup: &LossSetup,
    opt: &Optimizer,
) -> Result<(f64, f64)> {
    let mut am_grad = vec![0.0; am.num_params()];
    let mut lm_grad: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for utt in batch {
        let ug = utterance_gradient(am, lm, utt, setup).map_err(|e| match e {
            Error::Contract(_) | Error::Argument(_) => Error::Data(format!("{}: {e}", utt.id)),
            other => other,
        })?;
        total += ug.loss;
        am_grad.iter_mut().zip(&ug.am).for_each(|(a, b)| *a += b);
        if let Some(l) = ug.lm {
            match &mut lm_grad {
                Some(acc) => acc.iter_mut().zip(&l).for_each(|(a, b)| *a += b),
                None => lm_grad = Some(l),
            }
        }
    }
    let k = 1.0 / batch.len() as f64;
    am_grad.iter_mut().for_each(|v| *v *= k);
    if let Some(l) = &mut lm_grad {
        l.iter_mut().for_each(|v| *v *= k);
    }
    let norm = {
        let mut parts: Vec<&mut Vec<f64>> = vec![&mut am_grad];
        if let Some(l) = &mut lm_grad {
            parts.push(l);
        }
        clip_global_norm(&mut parts, opt.clip_norm)
    };
    sgd(am, &am_grad, opt.lr);
    if let (Some(l), LanguageModel::Recurrent(rnn)) = (&lm_grad, lm) {
        sgd(rnn, l, opt.lr);
    }
    if !(total.is_finite() && norm.is_finite()) {
        return Err(Error::Data(
            "training diverged: non-finite loss or gradient".into(),
        ));
    }
    Ok((total * k, norm))
}

/// Shuffled mini-batches for `epoch`, reproducible from `seed`.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, &format!("train.shuffle.{epoch}")));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_wer: f64,
}

/// Mean per-utterance loss over `utts`.
pub fn mean_loss(
    am: &AcousticModel,
    lm: &LanguageModel,
    utts: &[Utterance],
    setup: &LossSetup,
) -> Result<f64> {
    let mut total = 0.0;
    for u in utts {
        total += utterance_loss(am, lm, u, setup)?;
    }
    Ok(total / utts.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodedUtterance {
    pub id: String,
    pub hyp: Vec<usize>,
    pub score: f64,
}

pub fn decode_all(
    am: &AcousticModel,
    lm: &LanguageModel,
    utts: &[Utterance],
    cfg: &DecodeConfig,
) -> Result<Vec<DecodedUtterance>> {
    utts.iter()
        .map(|u| {
            let mut g = Graph::new();
            let bam = am.bind(&mut g, false);
            let blm = lm.bind(&mut g, false);
            let enc = bam.encode(&mut g, &u.feats)?;
            let list = beam_search_bound(&mut g, &bam, &blm, &enc, cfg)?;
            let best = list
                .best()
                .expect("beam search returns at least one hypothesis");
            Ok(DecodedUtterance {
                id: u.id.clone(),
                hyp: best.tokens.clone(),
                score: best.score,
            })
        })
        .collect()
}

pub fn decode_wer(
    am: &AcousticModel,
    lm: &LanguageModel,
    utts: &[Utterance],
    cfg: &DecodeConfig,
) -> Result<WerReport> {
    let hyps = decode_all(am, lm, utts, cfg)?;
    let pairs: Vec<(&[usize], &[usize])> = utts
        .iter()
        .zip(&hyps)
        .map(|(u, h)| (u.tokens.as_slice(), h.hyp.as_slice()))
        .collect();
    corpus_report(&pairs)
}

pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
    /// Wall-clock seconds per optimizer step, in order.
    pub step_seconds: Vec<f64>,
}

/// Full training run with per-epoch dev evaluation.
#[allow(clippy::too_many_arguments)]
pub fn train(
    am: &mut AcousticModel,
    lm: &mut LanguageModel,
    train_set: &[Utterance],
    dev_set: &[Utterance],
    setup: &LossSetup,
    opt: &Optimizer,
    decode: &DecodeConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut out = TrainOutcome {
        epochs: Vec::new(),
        steps: 0,
        step_seconds: Vec::new(),
    };
    for epoch in 1..=epochs {
        let mut total = 0.0;
        let batches = epoch_batches(train_set.len(), opt.batch_size, seed, epoch);
        for idx in &batches {
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &train_set[i]).collect();
            let t0 = Instant::now();
            let (loss, norm) = train_step(am, lm, &batch, setup, opt)?;
            out.step_seconds.push(t0.elapsed().as_secs_f64());
            out.steps += 1;
            total += loss * batch.len() as f64;
            debug!("step {} loss {loss:.4} grad_norm {norm:.3}", out.steps);
        }
        let train_loss = total / train_set.len() as f64;
        let (dev_loss, dev_wer) = if dev_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                mean_loss(am, lm, dev_set, setup)?,
                decode_wer(am, lm, dev_set, decode)?.wer,
            )
        };
        info!(
            "epoch {epoch}: train loss {train_loss:.4}, dev loss {dev_loss:.4}, dev WER {dev_wer:.2}"
        );
        out.epochs.push(EpochRecord {
            epoch,
            steps: out.steps,
            train_loss,
            dev_loss,
            dev_wer,
        });
    }
    Ok(out)
}

/// Cross-entropy training of a recurrent LM on text; returns the mean
/// per-sentence loss of each epoch.
pub fn train_recurrent_lm(
    lm: &mut RecurrentLm,
    text: &[Vec<usize>],
    opt: &Optimizer,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut history = Vec::new();
    for epoch in 1..=epochs {
        let mut total = 0.0;
        for idx in epoch_batches(text.len(), opt.batch_size, seed, epoch) {
            let mut grad = vec![0.0; lm.num_params()];
            for &i in &idx {
                let mut g = Graph::new();
                let b = lm.bind(&mut g, true);
                let mut h = b.initial_hidden(&mut g);
                let mut prev = Input::Bos;
                let mut rows = Vec::new();
                for &w in &text[i] {
                    let (lp, h2) = b.step(&mut g, h, prev)?;
                    rows.push(lp);
                    h = h2;
                    prev = Input::Token(w);
                }
                let m = g.stack_rows(&rows)?;
                let out = ce_loss(&mut g, m, &text[i])?;
                g.backward(out.loss)?;
                total += out.value;
                grad.iter_mut()
                    .zip(grads(&g, &b.leaves()))
                    .for_each(|(a, b)| *a += b);
            }
            grad.iter_mut().for_each(|v| *v /= idx.len() as f64);
            clip_global_norm(&mut [&mut grad], opt.clip_norm);
            sgd(lm, &grad, opt.lr);
        }
        let mean = total / text.len() as f64;
        info!("lm epoch {epoch}: loss {mean:.4}");
        history.push(mean);
    }
    Ok(history)
}
