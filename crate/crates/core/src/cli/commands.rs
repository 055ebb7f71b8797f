//! The `gen`, `train`, `decode`, `eval`, `sweep` and `bench` commands.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
use super::config::{Criterion, LmType, RunConfig};
use super::trainer::{self, DecodedUtterance, LossSetup, Optimizer};
use crate::criteria::Utterance;
use crate::decoding::DecodeMode;
use crate::error::{Error, Result};
use crate::metrics::{corpus_report, WerReport};
use crate::models::{AcousticModel, LanguageModel, NGramLm, RecurrentLm};
use crate::task::{self, generate_dataset, read_text, read_utterances, write_dataset};

pub fn cmd_gen(cfg: &RunConfig) -> Result<()> {
    let ds = generate_dataset(&cfg.task()).map_err(|e| Error::Config(e.to_string()))?;
    write_dataset(&cfg.data_dir, &ds)?;
    info!(
        "wrote {} train, {} dev, {} test utterances and {} text-only sentences to {}",
        ds.train.len(),
        ds.dev.len(),
        ds.test.len(),
        ds.text_only.len(),
        cfg.data_dir.display()
    );
    Ok(())
}

fn split_path(cfg: &RunConfig, split: &str) -> std::path::PathBuf {
    cfg.data_dir.join(format!("{split}.jsonl"))
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<Utterance>> {
    read_utterances(&split_path(cfg, split), cfg.vocab_size)
}

fn check_vocab(cfg: &RunConfig) -> Result<()> {
    let vocab = task::read_vocab(&cfg.data_dir.join("vocab.txt"))?;
    if vocab.len() != cfg.vocab_size {
        return Err(Error::Data(format!(
            "vocabulary file has {} symbols but vocab_size = {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Loads the external LM named by the config.
pub fn load_lm(cfg: &RunConfig) -> Result<LanguageModel> {
    let path = &cfg.lm_path;
    if !path.exists() {
        return Err(Error::Config(format!(
            "language model {} not found (train it first with criterion = lm)",
            path.display()
        )));
    }
    let lm = match cfg.lm_type {
        LmType::NGram => {
            let file = fs::File::open(path)?;
            LanguageModel::NGram(NGramLm::read_counts(BufReader::new(file))?)
        }
        LmType::Rnn => {
            let mut lm = RecurrentLm::new(cfg.vocab_size, cfg.lm_hidden, cfg.seed);
            Checkpoint::load(path)?.restore(&mut lm)?;
            LanguageModel::Recurrent(lm)
        }
    };
    if lm.vocab() != cfg.vocab_size {
        return Err(Error::Config(format!(
            "language model vocabulary {} differs from vocab_size {}",
            lm.vocab(),
            cfg.vocab_size
        )));
    }
    Ok(lm)
}

pub fn load_am(cfg: &RunConfig, path: &Path) -> Result<AcousticModel> {
    let mut am =
        AcousticModel::new(cfg.am_dims(), cfg.seed).map_err(|e| Error::Config(e.to_string()))?;
    Checkpoint::load(path)?.restore(&mut am)?;
    Ok(am)
}

fn meta(cfg: &RunConfig, kind: &str, step: u64, epoch: usize) -> CheckpointMeta {
    CheckpointMeta {
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        criterion: cfg.criterion.name().into(),
        step,
        epoch,
        seed: cfg.seed,
    }
}

pub fn loss_setup(cfg: &RunConfig) -> LossSetup {
    LossSetup {
        criterion: cfg.criterion,
        scales: cfg.training_scales(),
        nbest: cfg.nbest,
        max_len: cfg.decode_max_len,
        joint_lm: cfg.joint_lm,
    }
}

pub fn optimizer(cfg: &RunConfig) -> Optimizer {
    Optimizer {
        lr: cfg.effective_lr(),
        batch_size: cfg.effective_batch_size(),
        clip_norm: cfg.clip_norm,
    }
}

/// LM for a run: required for fused criteria, optional for CE (whose dev
/// decoding falls back to the AM alone when no LM exists).
fn run_lm(cfg: &RunConfig) -> Result<(LanguageModel, bool)> {
    match cfg.criterion {
        Criterion::Ce if !cfg.lm_path.exists() => {
            warn!(
                "no language model at {}; dev decoding uses the AM alone",
                cfg.lm_path.display()
            );
            Ok((
                LanguageModel::NGram(NGramLm::uniform(cfg.vocab_size)),
                false,
            ))
        }
        _ => Ok((load_lm(cfg)?, true)),
    }
}

pub struct TrainResult {
    pub am: Option<AcousticModel>,
    pub lm: LanguageModel,
    pub epochs: Vec<trainer::EpochRecord>,
    pub step_seconds: Vec<f64>,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_vocab(cfg)?;
    if cfg.criterion == Criterion::Lm {
        return train_lm(cfg);
    }
    let (mut lm, have_lm) = run_lm(cfg)?;
    let mut am = match &cfg.init_checkpoint {
        Some(p) => load_am(cfg, p)?,
        None => {
            AcousticModel::new(cfg.am_dims(), cfg.seed).map_err(|e| Error::Config(e.to_string()))?
        }
    };
    let train_set = load_split(cfg, "train")?;
    let dev_set = load_split(cfg, "dev")?;
    let mut decode = cfg.decode_config();
    if !have_lm {
        decode.mode = DecodeMode::AmOnly;
    }
    let t0 = Instant::now();
    let outcome = trainer::train(
        &mut am,
        &mut lm,
        &train_set,
        &dev_set,
        &loss_setup(cfg),
        &optimizer(cfg),
        &decode,
        cfg.epochs,
        cfg.seed,
    )?;
    let mean_ms =
        1e3 * outcome.step_seconds.iter().sum::<f64>() / outcome.step_seconds.len().max(1) as f64;
    info!(
        "trained {} steps in {:.1}s ({mean_ms:.2} ms/step)",
        outcome.steps,
        t0.elapsed().as_secs_f64()
    );

    fs::create_dir_all(&cfg.out_dir)?;
    Checkpoint::from_model(&am, meta(cfg, "am", outcome.steps, cfg.epochs))
        .save(&cfg.out_dir.join("model.ckpt"))?;
    if cfg.joint_lm {
        if let LanguageModel::Recurrent(rnn) = &lm {
            Checkpoint::from_model(rnn, meta(cfg, "rnnlm", outcome.steps, cfg.epochs))
                .save(&cfg.out_dir.join("lm.ckpt"))?;
        }
    }
    let mut metrics = BufWriter::new(fs::File::create(cfg.out_dir.join("metrics.jsonl"))?);
    for e in &outcome.epochs {
        serde_json::to_writer(&mut metrics, e)?;
        metrics.write_all(b"\n")?;
    }
    metrics.flush()?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.print())?;
    Ok(TrainResult {
        am: Some(am),
        lm,
        epochs: outcome.epochs,
        step_seconds: outcome.step_seconds,
    })
}

fn train_lm(cfg: &RunConfig) -> Result<TrainResult> {
    let text = read_text(&cfg.data_dir.join("text_only.txt"), cfg.vocab_size)?;
    if let Some(dir) = cfg.lm_path.parent() {
        fs::create_dir_all(dir)?;
    }
    let lm = match cfg.lm_type {
        LmType::NGram => {
            let lm = NGramLm::train(&text, cfg.lm_order, cfg.lm_kappa, cfg.vocab_size)
                .map_err(|e| Error::Config(e.to_string()))?;
            lm.write_counts(BufWriter::new(fs::File::create(&cfg.lm_path)?))?;
            LanguageModel::NGram(lm)
        }
        LmType::Rnn => {
            let mut lm = RecurrentLm::new(cfg.vocab_size, cfg.lm_hidden, cfg.seed);
            trainer::train_recurrent_lm(&mut lm, &text, &optimizer(cfg), cfg.epochs, cfg.seed)?;
            Checkpoint::from_model(&lm, meta(cfg, "rnnlm", 0, cfg.epochs)).save(&cfg.lm_path)?;
            LanguageModel::Recurrent(lm)
        }
    };
    info!("wrote language model to {}", cfg.lm_path.display());
    Ok(TrainResult {
        am: None,
        lm,
        epochs: Vec::new(),
        step_seconds: Vec::new(),
    })
}

pub fn cmd_decode(cfg: &RunConfig) -> Result<Vec<DecodedUtterance>> {
    check_vocab(cfg)?;
    let am = load_am(cfg, &cfg.checkpoint_path())?;
    let dc = cfg.decode_config();
    let lm = if dc.mode == DecodeMode::AmOnly {
        LanguageModel::NGram(NGramLm::uniform(cfg.vocab_size))
    } else {
        load_lm(cfg)?
    };
    let utts = load_split(cfg, &cfg.split)?;
    let hyps = trainer::decode_all(&am, &lm, &utts, &dc)?;
    let path = cfg.hyp_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    write_hyps(&path, &hyps)?;
    info!(
        "decoded {} utterances ({} mode) into {}",
        hyps.len(),
        dc.mode,
        path.display()
    );
    Ok(hyps)
}

pub fn write_hyps(path: &Path, hyps: &[DecodedUtterance]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for h in hyps {
        serde_json::to_writer(&mut out, h)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct HypRecord {
    id: String,
    hyp: Vec<usize>,
}

pub fn read_hyps(path: &Path) -> Result<Vec<(String, Vec<usize>)>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: HypRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((r.id, r.hyp));
    }
    Ok(out)
}

/// Pairs references with hypotheses by id; every id must appear on both
/// sides exactly once.
pub fn evaluate(refs: &[Utterance], hyps: &[(String, Vec<usize>)]) -> Result<WerReport> {
    let mut by_id: HashMap<&str, &[usize]> = HashMap::new();
    for (id, h) in hyps {
        if by_id.insert(id.as_str(), h.as_slice()).is_some() {
            return Err(Error::Data(format!("duplicate hypothesis id {id}")));
        }
    }
    let ref_ids: BTreeSet<&str> = refs.iter().map(|u| u.id.as_str()).collect();
    let hyp_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    let missing: Vec<&str> = ref_ids.difference(&hyp_ids).copied().collect();
    let extra: Vec<&str> = hyp_ids.difference(&ref_ids).copied().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Data(format!(
            "hypothesis ids do not match references: missing {missing:?}, extra {extra:?}"
        )));
    }
    let pairs: Vec<(&[usize], &[usize])> = refs
        .iter()
        .map(|u| (u.tokens.as_slice(), by_id[u.id.as_str()]))
        .collect();
    corpus_report(&pairs).map_err(|e| Error::Data(e.to_string()))
}

pub fn format_report(r: &WerReport) -> String {
    format!(
        "WER {:.2}% ({} errors: {} sub, {} ins, {} del; {} reference tokens, {} utterances)",
        r.wer,
        r.edits.distance,
        r.edits.substitutions,
        r.edits.insertions,
        r.edits.deletions,
        r.ref_tokens,
        r.utterances
    )
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<WerReport> {
    let refs = load_split(cfg, &cfg.split)?;
    let hyps = read_hyps(&cfg.hyp_path())?;
    evaluate(&refs, &hyps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub criterion: String,
    pub gamma_abs: f64,
    pub gamma_rel: f64,
    pub gamma_den: f64,
    pub dev_wer: f64,
    pub seed: u64,
}

/// Trains and decodes one model per grid point; failures become NaN rows.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut i = 0;
    for &ga in &cfg.sweep_gamma_abs {
        for &gr in &cfg.sweep_gamma_rel {
            for &gd in &cfg.sweep_gamma_den {
                let mut point = cfg.clone();
                point.gamma_abs = Some(ga);
                point.gamma_rel = gr;
                point.gamma_den = gd;
                point.out_dir = cfg.out_dir.join(format!("point{i:03}"));
                point.checkpoint = None;
                point.hyp_path = None;
                point.split = "dev".into();
                i += 1;
                let wer = sweep_point(&point).unwrap_or_else(|e| {
                    warn!("grid point gamma_abs={ga} gamma_rel={gr} gamma_den={gd} failed: {e}");
                    f64::NAN
                });
                rows.push(SweepRow {
                    criterion: cfg.criterion.name().into(),
                    gamma_abs: ga,
                    gamma_rel: gr,
                    gamma_den: gd,
                    dev_wer: wer,
                    seed: cfg.seed,
                });
            }
        }
    }
    let path = cfg
        .sweep_out
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("sweep.csv"));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::from("criterion,gamma_abs,gamma_rel,gamma_den,dev_wer,seed\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.criterion, r.gamma_abs, r.gamma_rel, r.gamma_den, r.dev_wer, r.seed
        ));
    }
    fs::write(&path, out)?;
    Ok(rows)
}

fn sweep_point(cfg: &RunConfig) -> Result<f64> {
    cfg.validate()?;
    cmd_train(cfg)?;
    cmd_decode(cfg)?;
    Ok(cmd_eval(cfg)?.wer)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub criterion: String,
    pub ms_per_step: f64,
    pub slowdown: f64,
}

/// Mean wall-clock time per training step for each criterion on identical
/// data, model initialization, seed and batch size.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    check_vocab(cfg)?;
    let lm = load_lm(cfg)?;
    let train_set = load_split(cfg, "train")?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let batch_size = cfg.batch_size.unwrap_or(16);
    let mut rows: Vec<BenchRow> = Vec::new();
    for criterion in [Criterion::Ce, Criterion::Local, Criterion::Mmi] {
        let mut c = cfg.clone();
        c.criterion = criterion;
        c.gamma_abs = None;
        c.joint_lm = false;
        c.batch_size = Some(batch_size);
        let setup = loss_setup(&c);
        let opt = optimizer(&c);
        let mut am =
            AcousticModel::new(c.am_dims(), c.seed).map_err(|e| Error::Config(e.to_string()))?;
        let mut lm = lm.clone();
        let mut batches = std::iter::repeat(()).enumerate().flat_map(|(epoch, _)| {
            trainer::epoch_batches(train_set.len(), batch_size, c.seed, epoch + 1)
        });
        let mut timed = 0.0;
        for step in 0..cfg.bench_warmup + cfg.bench_steps {
            let idx = batches.next().expect("endless batches");
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &train_set[i]).collect();
            let t0 = Instant::now();
            trainer::train_step(&mut am, &mut lm, &batch, &setup, &opt)?;
            if step >= cfg.bench_warmup {
                timed += t0.elapsed().as_secs_f64();
            }
        }
        let ms = 1e3 * timed / cfg.bench_steps.max(1) as f64;
        let base = rows.first().map_or(ms, |r| r.ms_per_step);
        rows.push(BenchRow {
            criterion: criterion.name().into(),
            ms_per_step: ms,
            slowdown: ms / base,
        });
        info!("{}: {ms:.2} ms/step", criterion.name());
    }
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("bench.csv"), format_bench(&rows))?;
    Ok(rows)
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = String::from("criterion,ms_per_step,slowdown\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.3},{:.2}\n",
            r.criterion, r.ms_per_step, r.slowdown
        ));
    }
    s
}
