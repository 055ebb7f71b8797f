//! Beam search and n-best properties on random models, including the
//! regime where the beam is not exact.

mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqfuse::decoding::{
    beam_search, nbest_with_forced_reference, sequence_score, DecodeConfig, DecodeMode,
};
use seqfuse::models::{AcousticModel, LanguageModel, NGramLm, EOS};
use seqfuse::numerics::Tensor;

fn random_instance(seed: u64, vocab: usize) -> (AcousticModel, LanguageModel, Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut am = AcousticModel::new(common::toy_dims(vocab, 1), seed).unwrap();
    common::randomize(&mut am, seed, 1.0);
    let seq = |rng: &mut ChaCha8Rng, max: usize| {
        let mut s: Vec<usize> = (0..rng.gen_range(0..max))
            .map(|_| rng.gen_range(1..vocab))
            .collect();
        s.push(EOS);
        s
    };
    let corpus: Vec<Vec<usize>> = (0..40).map(|_| seq(&mut rng, 6)).collect();
    let lm = LanguageModel::NGram(NGramLm::train(&corpus, 2, 0.3, vocab).unwrap());
    let t = rng.gen_range(1..5);
    let feats =
        Tensor::matrix(t, 2, (0..2 * t).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    let reference = seq(&mut rng, 5);
    (am, lm, feats, reference)
}

fn shallow(alpha: f64, beta: f64, beam_size: usize, max_len: usize) -> DecodeConfig {
    DecodeConfig {
        mode: DecodeMode::Shallow,
        alpha,
        beta,
        beam_size,
        max_len,
        length_norm: false,
    }
}

#[test]
fn forced_list_keeps_the_beam_top_n_minus_one_when_the_reference_is_missing() {
    let n = 4;
    let mut forced_cases = 0;
    for seed in 0..200 {
        let (am, lm, feats, reference) = random_instance(seed, 3);
        let cfg = shallow(0.9, 0.4, n, 6);
        let beam = beam_search(&am, &lm, &feats, &cfg).unwrap();
        let forced =
            nbest_with_forced_reference(&am, &lm, &feats, &reference, n, 0.9, 0.4, 6).unwrap();
        let tokens: Vec<&Vec<usize>> = forced.hyps.iter().map(|h| &h.tokens).collect();
        assert_eq!(tokens.iter().collect::<HashSet<_>>().len(), tokens.len());
        assert!(forced.contains_reference && forced.position(&reference).is_some());
        match beam.position(&reference) {
            Some(_) => assert_eq!(forced.hyps, beam.hyps, "seed {seed}"),
            None => {
                forced_cases += 1;
                let mut expected: HashSet<&Vec<usize>> =
                    beam.hyps.iter().take(n - 1).map(|h| &h.tokens).collect();
                expected.insert(&reference);
                assert_eq!(
                    tokens.into_iter().collect::<HashSet<_>>(),
                    expected,
                    "seed {seed}"
                );
                let score =
                    sequence_score(&am, &lm, &feats, &reference, DecodeMode::Shallow, 0.9, 0.4)
                        .unwrap();
                let placed = &forced.hyps[forced.position(&reference).unwrap()];
                assert_eq!(placed.score, score);
            }
        }
        assert!(forced.hyps.windows(2).all(|w| w[0].score >= w[1].score));
    }
    assert!(
        forced_cases > 20,
        "only {forced_cases} instances needed forcing"
    );
}

#[test]
fn every_hypothesis_score_is_its_teacher_forced_score() {
    for seed in 0..30 {
        let (am, lm, feats, _) = random_instance(seed, 4);
        for mode in [DecodeMode::AmOnly, DecodeMode::Shallow, DecodeMode::Local] {
            let cfg = DecodeConfig {
                mode,
                ..shallow(1.3, 0.6, 3, 5)
            };
            for h in beam_search(&am, &lm, &feats, &cfg).unwrap().hyps {
                let s = sequence_score(&am, &lm, &feats, &h.tokens, mode, 1.3, 0.6).unwrap();
                assert!((s - h.score).abs() < 1e-9, "{mode}: {} vs {}", h.score, s);
            }
        }
    }
}

#[test]
fn length_normalization_only_reorders_finished_hypotheses() {
    for seed in 0..30 {
        let (am, lm, feats, _) = random_instance(seed, 3);
        let plain = beam_search(&am, &lm, &feats, &shallow(1.0, 0.5, 4, 6)).unwrap();
        let normed = beam_search(
            &am,
            &lm,
            &feats,
            &DecodeConfig {
                length_norm: true,
                ..shallow(1.0, 0.5, 4, 6)
            },
        )
        .unwrap();
        for h in &normed.hyps {
            let s =
                sequence_score(&am, &lm, &feats, &h.tokens, DecodeMode::Shallow, 1.0, 0.5).unwrap();
            assert!(
                (s - h.score).abs() < 1e-9,
                "stored scores stay unnormalized"
            );
        }
        let keys: Vec<f64> = normed
            .hyps
            .iter()
            .map(|h| h.score / h.tokens.len() as f64)
            .collect();
        assert!(keys.windows(2).all(|w| w[0] >= w[1]));
        assert!(!plain.is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn outputs_are_eos_terminated_and_bounded(seed in 0u64..1000, beam in 1usize..5, max_len in 1usize..7) {
        let (am, lm, feats, _) = random_instance(seed, 4);
        for mode in [DecodeMode::AmOnly, DecodeMode::Shallow, DecodeMode::Local] {
            let cfg = DecodeConfig { mode, ..shallow(1.0, 0.5, beam, max_len) };
            let list = beam_search(&am, &lm, &feats, &cfg).unwrap();
            prop_assert!(!list.is_empty() && list.len() <= beam);
            for h in &list.hyps {
                prop_assert_eq!(h.tokens.last(), Some(&EOS));
                prop_assert!(h.tokens.len() <= max_len);
                prop_assert!(h.tokens[..h.tokens.len() - 1].iter().all(|&w| w != EOS));
                prop_assert!(h.score.is_finite());
            }
        }
    }
}
