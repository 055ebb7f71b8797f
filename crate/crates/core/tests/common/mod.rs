//! Toy models and loss wrappers shared by the gradient checks and the
//! acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqfuse::criteria::{ce_loss, local_fusion_loss, mmi_loss, Scales};
use seqfuse::decoding::nbest_with_forced_reference;
use seqfuse::models::{
    AcousticModel, AmDims, LanguageModel, NGramLm, Parameterized, RecurrentLm, EOS,
};
use seqfuse::numerics::{finite_diff_check, GradCheckReport, Graph, Tensor};
use seqfuse::Result;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

pub fn toy_dims(vocab: usize, layers: usize) -> AmDims {
    AmDims {
        vocab,
        feat_dim: 2,
        embed_dim: 3,
        hidden_dim: 4,
        attention_dim: 3,
        encoder_layers: layers,
    }
}

/// Overwrites every parameter with a uniform draw from `[-scale, scale]`.
pub fn randomize<M: Parameterized>(m: &mut M, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = (0..m.num_params())
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    m.set_flat_params(&p);
}

/// A toy model whose parameters are drawn uniformly at scale 1.5. Under the
/// default small init many gradient coordinates sit near 1e-8, where the
/// rounding error of central differences swamps the relative error.
pub fn toy_am(seed: u64, layers: usize) -> AcousticModel {
    let mut am = AcousticModel::new(toy_dims(4, layers), seed).unwrap();
    randomize(&mut am, seed, 1.5);
    am
}

pub fn toy_feats() -> Tensor {
    Tensor::matrix(4, 2, vec![0.5, -0.3, 1.1, 0.2, -0.7, 0.9, 0.05, -1.0]).unwrap()
}

pub const TOKENS: [usize; 4] = [2, 1, 3, EOS];

pub fn toy_ngram() -> LanguageModel {
    let corpus = vec![vec![1, 2, EOS], vec![3, EOS], vec![2, 2, 1, EOS]];
    LanguageModel::NGram(NGramLm::train(&corpus, 2, 0.5, 4).unwrap())
}

pub fn check<M: Parameterized + Clone>(
    model: &M,
    f: impl Fn(&M) -> Result<f64>,
    grad: &[f64],
    tol: f64,
) -> GradCheckReport {
    let mut probe = model.clone();
    finite_diff_check(
        |p: &[f64]| {
            probe.set_flat_params(p);
            f(&probe)
        },
        &model.flat_params(),
        grad,
        STEP,
        tol,
    )
    .unwrap()
}

pub fn ce_value(am: &AcousticModel, trainable: bool) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let b = am.bind(&mut g, trainable);
    let enc = b.encode(&mut g, &toy_feats())?;
    let m = b.sequence_logprobs(&mut g, &enc, &TOKENS)?;
    let out = ce_loss(&mut g, m, &TOKENS)?;
    g.backward(out.loss)?;
    let grad = b
        .leaves()
        .iter()
        .flat_map(|&v| g.grad(v).into_data())
        .collect();
    Ok((out.value, grad))
}

pub fn local_value(
    am: &AcousticModel,
    lm: &LanguageModel,
    scales: &Scales,
    trainable: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let b = am.bind(&mut g, trainable);
    let l = lm.bind(&mut g, trainable);
    let enc = b.encode(&mut g, &toy_feats())?;
    let am_m = b.sequence_logprobs(&mut g, &enc, &TOKENS)?;
    let lm_m = l.sequence_logprobs(&mut g, &TOKENS)?;
    let out = local_fusion_loss(&mut g, am_m, lm_m, &TOKENS, scales)?;
    g.backward(out.loss)?;
    let ga = b
        .leaves()
        .iter()
        .flat_map(|&v| g.grad(v).into_data())
        .collect();
    let gl = l
        .leaves()
        .iter()
        .flat_map(|&v| g.grad(v).into_data())
        .collect();
    Ok((out.value, ga, gl))
}

pub fn ce_check(am: &AcousticModel, tol: f64) -> GradCheckReport {
    let (_, grad) = ce_value(am, true).unwrap();
    check(am, |m| Ok(ce_value(m, false)?.0), &grad, tol)
}

pub fn local_check(am: &AcousticModel) -> GradCheckReport {
    let lm = toy_ngram();
    let s = Scales::new(2.0, 0.7, 1.0).unwrap();
    let (_, grad, _) = local_value(am, &lm, &s, true).unwrap();
    check(am, |m| Ok(local_value(m, &lm, &s, false)?.0), &grad, TOL)
}

/// Joint AM+LM local fusion with a recurrent LM; reports for the AM and
/// the LM parameters.
pub fn joint_check(am: &AcousticModel, rnn: &RecurrentLm) -> (GradCheckReport, GradCheckReport) {
    let s = Scales::new(1.5, 0.5, 1.0).unwrap();
    let lm = LanguageModel::Recurrent(rnn.clone());
    let (_, ga, gl) = local_value(am, &lm, &s, true).unwrap();
    assert!(gl.iter().any(|v| *v != 0.0), "LM receives no gradient");
    let am_report = check(am, |m| Ok(local_value(m, &lm, &s, false)?.0), &ga, TOL);
    let lm_report = check(
        rnn,
        |r| Ok(local_value(am, &LanguageModel::Recurrent(r.clone()), &s, false)?.0),
        &gl,
        TOL,
    );
    (am_report, lm_report)
}

/// MMI over a fixed n = 4 shallow-fusion n-best list with the reference forced in.
pub fn mmi_check(am: &AcousticModel) -> GradCheckReport {
    let lm = toy_ngram();
    let s = Scales::new(0.8, 0.3, 0.9).unwrap();
    let nbest =
        nbest_with_forced_reference(am, &lm, &toy_feats(), &TOKENS, 4, s.alpha, s.beta, 6).unwrap();
    assert_eq!(nbest.len(), 4);
    let value = |m: &AcousticModel, trainable: bool| -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let b = m.bind(&mut g, trainable);
        let l = lm.bind(&mut g, false);
        let enc = b.encode(&mut g, &toy_feats())?;
        let out = mmi_loss(&mut g, &b, &enc, &l, &TOKENS, &nbest, &s)?;
        g.backward(out.loss)?;
        let grad = b
            .leaves()
            .iter()
            .flat_map(|&v| g.grad(v).into_data())
            .collect();
        Ok((out.value, grad))
    };
    let (_, grad) = value(am, true).unwrap();
    check(am, |m| Ok(value(m, false)?.0), &grad, TOL)
}

pub fn toy_rnn(seed: u64) -> RecurrentLm {
    RecurrentLm::new(4, 3, seed)
}
