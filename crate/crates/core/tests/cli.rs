//! End-to-end behaviour of the commands on a small generated task.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqfuse::cli::commands::{
    cmd_bench, cmd_decode, cmd_eval, cmd_gen, cmd_sweep, cmd_train, evaluate, format_bench,
    load_am, load_split, read_hyps, write_hyps,
};
use seqfuse::cli::trainer::DecodedUtterance;
use seqfuse::cli::{Criterion, RunConfig};
use seqfuse::criteria::Utterance;
use seqfuse::decoding::DecodeMode;
use seqfuse::metrics::corpus_wer;
use seqfuse::models::{AcousticModel, Input, Parameterized, EOS};
use seqfuse::numerics::{Graph, Tensor};
use seqfuse::task::write_utterances;
use seqfuse::Error;
use tempfile::TempDir;

fn small_config(dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(
        &[
            "vocab_size=6",
            "n_train=48",
            "n_dev=12",
            "n_test=12",
            "n_text_only=300",
            "max_sentence_len=6",
            "feature_dim=4",
            "embed_dim=4",
            "hidden_dim=6",
            "attention_dim=5",
            "epochs=2",
            "batch_size=8",
            "decode_max_len=10",
        ]
        .map(String::from),
    )
    .unwrap();
    cfg.data_dir = dir.join("data");
    cfg.out_dir = dir.join("run");
    cfg.lm_path = dir.join("lm.counts");
    cfg
}

/// Generates the task and trains the bigram LM.
fn prepared() -> (TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_gen(&cfg).unwrap();
    let mut lm = cfg.clone();
    lm.criterion = Criterion::Lm;
    cmd_train(&lm).unwrap();
    (dir, cfg)
}

fn trained() -> (TempDir, RunConfig) {
    let (dir, cfg) = prepared();
    cmd_train(&cfg).unwrap();
    (dir, cfg)
}

#[test]
fn decoding_twice_writes_identical_files() {
    let (_dir, cfg) = trained();
    cmd_decode(&cfg).unwrap();
    let first = fs::read(cfg.hyp_path()).unwrap();
    cmd_decode(&cfg).unwrap();
    assert_eq!(first, fs::read(cfg.hyp_path()).unwrap());
}

#[test]
fn am_only_and_shallow_without_lm_weight_agree() {
    let (dir, cfg) = trained();
    let mut am_only = cfg.clone();
    am_only.decode_mode = Some(DecodeMode::AmOnly);
    am_only.hyp_path = Some(dir.path().join("am_only.jsonl"));
    let mut shallow = cfg.clone();
    shallow.decode_mode = Some(DecodeMode::Shallow);
    shallow.decode_beta = Some(0.0);
    shallow.hyp_path = Some(dir.path().join("shallow.jsonl"));
    cmd_decode(&am_only).unwrap();
    cmd_decode(&shallow).unwrap();
    assert_eq!(
        fs::read(am_only.hyp_path()).unwrap(),
        fs::read(shallow.hyp_path()).unwrap()
    );
}

fn greedy(am: &AcousticModel, feats: &Tensor, max_len: usize) -> Vec<usize> {
    let mut g = Graph::new();
    let b = am.bind(&mut g, false);
    let enc = b.encode(&mut g, feats).unwrap();
    let mut state = b.initial_state(&mut g, &enc);
    let mut prev = Input::Bos;
    let mut out = Vec::new();
    while out.len() + 1 < max_len {
        let (lp, next) = b.step(&mut g, &state, prev, &enc).unwrap();
        let row = g.value(lp).data();
        let w = (0..row.len()).fold(0, |best, w| if row[w] > row[best] { w } else { best });
        out.push(w);
        if w == EOS {
            return out;
        }
        state = next;
        prev = Input::Token(w);
    }
    out.push(EOS);
    out
}

#[test]
fn beam_one_decode_equals_greedy() {
    let (_dir, mut cfg) = trained();
    cfg.beam_size = 1;
    cfg.decode_mode = Some(DecodeMode::AmOnly);
    let hyps = cmd_decode(&cfg).unwrap();
    let am = load_am(&cfg, &cfg.checkpoint_path()).unwrap();
    let dev = load_split(&cfg, "dev").unwrap();
    for (h, u) in hyps.iter().zip(&dev) {
        assert_eq!(h.hyp, greedy(&am, &u.feats, cfg.decode_max_len), "{}", u.id);
    }
}

fn write_refs(cfg: &RunConfig, utts: &[Utterance]) {
    fs::create_dir_all(&cfg.data_dir).unwrap();
    write_utterances(&cfg.data_dir.join(format!("{}.jsonl", cfg.split)), utts).unwrap();
}

fn hyp_file(cfg: &RunConfig) -> PathBuf {
    let p = cfg.hyp_path();
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    p
}

fn utterance(id: &str, tokens: Vec<usize>) -> Utterance {
    let frames = tokens.len().max(2) - 1;
    Utterance::new(id, tokens, Tensor::zeros(&[frames, 2]), 10).unwrap()
}

fn hyp(id: &str, tokens: Vec<usize>) -> DecodedUtterance {
    DecodedUtterance {
        id: id.into(),
        hyp: tokens,
        score: 0.0,
    }
}

#[test]
fn eval_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    write_refs(
        &cfg,
        &[
            utterance("a", vec![1, 2, 3, 4, EOS]),
            utterance("b", vec![5, EOS]),
        ],
    );

    write_hyps(
        &hyp_file(&cfg),
        &[hyp("b", vec![5, EOS]), hyp("a", vec![1, 2, 3, 4, EOS])],
    )
    .unwrap();
    assert_eq!(cmd_eval(&cfg).unwrap().wer, 0.0);

    write_refs(&cfg, &[utterance("a", vec![1, 2, 3, 4, EOS])]);
    write_hyps(&hyp_file(&cfg), &[hyp("a", vec![1, 7, 3, 4, EOS])]).unwrap();
    let r = cmd_eval(&cfg).unwrap();
    assert_eq!(r.wer, 25.0);
    assert_eq!(r.edits.substitutions, 1);
}

#[test]
fn eval_matches_corpus_wer_on_a_random_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seq = |rng: &mut ChaCha8Rng| {
        let mut s: Vec<usize> = (0..rng.gen_range(1..8))
            .map(|_| rng.gen_range(1..6))
            .collect();
        s.push(EOS);
        s
    };
    let refs: Vec<Utterance> = (0..100)
        .map(|i| utterance(&format!("u{i:03}"), seq(&mut rng)))
        .collect();
    let hyps: Vec<DecodedUtterance> = (0..100)
        .rev()
        .map(|i| hyp(&format!("u{i:03}"), seq(&mut rng)))
        .collect();
    write_refs(&cfg, &refs);
    write_hyps(&hyp_file(&cfg), &hyps).unwrap();

    let by_id: std::collections::HashMap<&str, &[usize]> = hyps
        .iter()
        .map(|h| (h.id.as_str(), h.hyp.as_slice()))
        .collect();
    let pairs: Vec<(&[usize], &[usize])> = refs
        .iter()
        .map(|u| (u.tokens.as_slice(), by_id[u.id.as_str()]))
        .collect();
    assert_eq!(cmd_eval(&cfg).unwrap().wer, corpus_wer(&pairs).unwrap());
}

#[test]
fn eval_names_missing_and_extra_ids() {
    let refs = vec![utterance("a", vec![1, EOS]), utterance("b", vec![2, EOS])];
    let hyps = vec![
        ("a".to_string(), vec![1, EOS]),
        ("zz".to_string(), vec![EOS]),
    ];
    match evaluate(&refs, &hyps) {
        Err(Error::Data(msg)) => assert!(msg.contains("\"b\"") && msg.contains("\"zz\""), "{msg}"),
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn hypothesis_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.jsonl");
    write_hyps(&path, &[hyp("x", vec![3, EOS]), hyp("y", vec![EOS])]).unwrap();
    assert_eq!(
        read_hyps(&path).unwrap(),
        vec![
            ("x".to_string(), vec![3, EOS]),
            ("y".to_string(), vec![EOS])
        ]
    );
}

#[test]
fn local_fusion_without_lm_weight_trains_like_ce() {
    let (dir, cfg) = prepared();
    let mut ce = cfg.clone();
    ce.criterion = Criterion::Ce;
    ce.out_dir = dir.path().join("ce");
    let mut local = cfg.clone();
    local.criterion = Criterion::Local;
    local.gamma_abs = Some(1.0);
    local.gamma_rel = 0.0;
    local.out_dir = dir.path().join("local");
    local.decode_mode = Some(DecodeMode::Shallow);
    let a = cmd_train(&ce).unwrap();
    let b = cmd_train(&local).unwrap();
    let bits = |m: &AcousticModel| {
        m.flat_params()
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(a.am.as_ref().unwrap()), bits(b.am.as_ref().unwrap()));
    for (x, y) in a.epochs.iter().zip(&b.epochs) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
    }
}

#[test]
fn mmi_without_init_checkpoint_is_a_config_error() {
    let (_dir, mut cfg) = prepared();
    cfg.criterion = Criterion::Mmi;
    cfg.init_checkpoint = None;
    let err = cmd_train(&cfg).err().expect("mmi without init must fail");
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(
        !cfg.out_dir.exists(),
        "no artifacts before the config check"
    );
}

#[test]
fn mmi_fine_tunes_from_a_ce_checkpoint() {
    let (dir, cfg) = trained();
    let mut mmi = cfg.clone();
    mmi.criterion = Criterion::Mmi;
    mmi.epochs = 1;
    mmi.nbest = 3;
    mmi.init_checkpoint = Some(cfg.checkpoint_path());
    mmi.out_dir = dir.path().join("mmi");
    let r = cmd_train(&mmi).unwrap();
    assert!(r.epochs[0].train_loss.is_finite());
    assert!(mmi.checkpoint_path().exists());
}

#[test]
fn decoding_with_a_mismatched_architecture_lists_parameter_names() {
    let (_dir, mut cfg) = trained();
    cfg.encoder_layers = 2;
    match cmd_decode(&cfg) {
        Err(Error::Checkpoint(msg)) => assert!(msg.contains("enc1"), "{msg}"),
        other => panic!(
            "expected a checkpoint error, got {:?}",
            other.map(|h| h.len())
        ),
    }
}

#[test]
fn sweep_writes_one_row_per_grid_point_and_is_repeatable() {
    let (_dir, mut cfg) = prepared();
    cfg.criterion = Criterion::Local;
    cfg.epochs = 1;
    cfg.sweep_gamma_abs = vec![0.5, 2.0, 5.0];
    cfg.sweep_gamma_rel = vec![0.35];
    cfg.sweep_gamma_den = vec![1.0];
    let rows = cmd_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    let csv_path = cfg.out_dir.join("sweep.csv");
    let first = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(
        first.lines().next().unwrap(),
        "criterion,gamma_abs,gamma_rel,gamma_den,dev_wer,seed"
    );
    assert_eq!(first.lines().count(), 4);
    cmd_sweep(&cfg).unwrap();
    assert_eq!(first, fs::read_to_string(&csv_path).unwrap());
}

#[test]
fn single_point_sweep_matches_train_then_eval() {
    let (dir, mut cfg) = prepared();
    cfg.criterion = Criterion::Local;
    cfg.epochs = 1;
    cfg.sweep_gamma_abs = vec![2.0];
    cfg.sweep_gamma_rel = vec![0.35];
    cfg.sweep_gamma_den = vec![1.0];
    let rows = cmd_sweep(&cfg).unwrap();

    let mut direct = cfg.clone();
    direct.gamma_abs = Some(2.0);
    direct.out_dir = dir.path().join("direct");
    cmd_train(&direct).unwrap();
    cmd_decode(&direct).unwrap();
    assert_eq!(rows[0].dev_wer, cmd_eval(&direct).unwrap().wer);
}

#[test]
fn sweep_records_failed_points_as_nan() {
    let (_dir, mut cfg) = prepared();
    cfg.criterion = Criterion::Local;
    cfg.epochs = 1;
    cfg.sweep_gamma_abs = vec![-1.0, 2.0];
    let rows = cmd_sweep(&cfg).unwrap();
    assert!(rows[0].dev_wer.is_nan());
    assert!(rows[1].dev_wer.is_finite());
}

#[test]
fn bench_reports_three_criteria_relative_to_ce() {
    let (_dir, mut cfg) = prepared();
    cfg.bench_steps = 3;
    cfg.bench_warmup = 1;
    cfg.nbest = 3;
    let rows = cmd_bench(&cfg).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.criterion.as_str()).collect();
    assert_eq!(names, ["ce", "local", "mmi"]);
    assert_eq!(rows[0].slowdown, 1.0);
    let csv = fs::read_to_string(cfg.out_dir.join("bench.csv")).unwrap();
    assert_eq!(csv, format_bench(&rows));
    assert!(csv.starts_with("criterion,ms_per_step,slowdown\n"));
}

#[test]
fn ce_dev_loss_decreases_over_the_first_epochs() {
    // Plain fixed-rate SGD has no schedule, so the first five epochs of a
    // longer run are exactly these five.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.data_dir = dir.path().join("data");
    cfg.out_dir = dir.path().join("run");
    cfg.epochs = 5;
    cmd_gen(&cfg).unwrap();
    let r = cmd_train(&cfg).unwrap();
    let losses: Vec<f64> = r.epochs.iter().map(|e| e.dev_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

fn seqfuse(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_seqfuse"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = format!("data_dir={}", dir.path().join("data").display());

    let out = seqfuse(&["gen", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = seqfuse(&["train", "--set", "criterion=mmi", "--set", &data]);
    assert_eq!(out.status.code(), Some(2));

    let out = seqfuse(&["eval", "--set", &data]);
    assert_eq!(out.status.code(), Some(3));

    let out = seqfuse(&[
        "gen",
        "--set",
        &data,
        "--set",
        "n_train=5",
        "--set",
        "n_text_only=5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("data/train.jsonl").exists());
}
