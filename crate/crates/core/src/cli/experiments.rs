//! In-memory comparison of the three training criteria on one task seed.

use log::info;
use serde::Serialize;

use super::commands::{loss_setup, optimizer};
use super::config::{Criterion, RunConfig};
use super::trainer;
use crate::criteria::Utterance;
use crate::decoding::{DecodeConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::models::{AcousticModel, LanguageModel, NGramLm};
use crate::task::generate_dataset;

/// Dev WERs of every model/decoder pairing in the comparison, each at the
/// decoding settings that scored best on dev.
#[derive(Clone, Debug, Serialize)]
pub struct FusionComparison {
    pub seed: u64,
    pub ce_am_only: f64,
    pub ce_shallow: f64,
    pub local_local: f64,
    pub local_am_only: f64,
    pub mmi_shallow: f64,
    /// `pairing: mode alpha beta length_norm` for each selected setting.
    pub settings: Vec<String>,
}

/// Per-criterion training configs and the decoding grid searched on dev.
#[derive(Clone, Debug)]
pub struct ComparisonPlan {
    pub ce: RunConfig,
    pub local: RunConfig,
    /// Fine-tunes the CE model.
    pub mmi: RunConfig,
    /// LM weights tried for fusion decoding. Local decoding additionally
    /// tries the trained weight.
    pub beta_grid: Vec<f64>,
    pub try_length_norm: bool,
}

impl ComparisonPlan {
    /// Every criterion trains for `base.epochs` (MMI for one) and decodes
    /// with its configured scales only.
    pub fn new(base: &RunConfig) -> Self {
        let with = |c: Criterion, epochs: usize| {
            let mut cfg = base.clone();
            cfg.criterion = c;
            cfg.epochs = epochs;
            cfg
        };
        ComparisonPlan {
            ce: with(Criterion::Ce, base.epochs),
            local: with(Criterion::Local, base.epochs),
            mmi: with(Criterion::Mmi, 1),
            beta_grid: vec![base.gamma_rel],
            try_length_norm: false,
        }
    }

    /// The settings used for the criterion comparison on the default task.
    pub fn tuned(base: &RunConfig) -> Self {
        let mut plan = Self::new(base);
        plan.ce.epochs = 50;
        plan.ce.lr = Some(0.05);
        plan.local.epochs = 50;
        plan.local.lr = Some(0.05);
        plan.mmi.epochs = 2;
        plan.beta_grid = vec![0.1, 0.2, 0.3, 0.45, 0.6];
        plan.try_length_norm = true;
        plan
    }
}

fn train(
    cfg: &RunConfig,
    am: &mut AcousticModel,
    lm: &LanguageModel,
    train: &[Utterance],
) -> Result<()> {
    trainer::train(
        am,
        &mut lm.clone(),
        train,
        &[],
        &loss_setup(cfg),
        &optimizer(cfg),
        &cfg.decode_config(),
        cfg.epochs,
        cfg.seed,
    )?;
    Ok(())
}

/// Lowest dev WER over `candidates`; ties keep the earlier candidate.
fn best_wer(
    am: &AcousticModel,
    lm: &LanguageModel,
    dev: &[Utterance],
    candidates: &[DecodeConfig],
) -> Result<(f64, DecodeConfig)> {
    let mut best: Option<(f64, DecodeConfig)> = None;
    for dc in candidates {
        let wer = trainer::decode_wer(am, lm, dev, dc)?.wer;
        if best.as_ref().map_or(true, |(b, _)| wer < *b) {
            best = Some((wer, dc.clone()));
        }
    }
    best.ok_or_else(|| Error::Config("empty decoding grid".into()))
}

fn describe(name: &str, dc: &DecodeConfig) -> String {
    format!(
        "{name}: {} {:.3} {:.3} {}",
        dc.mode, dc.alpha, dc.beta, dc.length_norm
    )
}

/// Generates the task for `base.seed`, trains the bigram LM on the text-only
/// corpus, then trains CE, local-fusion and MMI (from the CE model) acoustic
/// models and decodes the dev set with each pairing.
pub fn fusion_comparison(base: &RunConfig, plan: &ComparisonPlan) -> Result<FusionComparison> {
    let ds = generate_dataset(&base.task()).map_err(|e| Error::Config(e.to_string()))?;
    let ngram = NGramLm::train(&ds.text_only, base.lm_order, base.lm_kappa, base.vocab_size)?;
    let lm = LanguageModel::NGram(ngram);
    let seed = base.seed;
    let norms: &[bool] = if plan.try_length_norm {
        &[false, true]
    } else {
        &[false]
    };

    let grid =
        |cfg: &RunConfig, mode: DecodeMode, alpha: f64, betas: &[f64]| -> Vec<DecodeConfig> {
            let mut out = Vec::new();
            for &length_norm in norms {
                for &beta in betas {
                    let mut dc = cfg.decode_config();
                    dc.mode = mode;
                    dc.alpha = alpha;
                    dc.beta = beta;
                    dc.length_norm = length_norm;
                    out.push(dc);
                }
            }
            out
        };
    let mut settings = Vec::new();
    let mut pick = |name: &str, am: &AcousticModel, candidates: Vec<DecodeConfig>| -> Result<f64> {
        let (wer, dc) = best_wer(am, &lm, &ds.dev, &candidates)?;
        settings.push(describe(name, &dc));
        Ok(wer)
    };

    let mut ce_cfg = plan.ce.clone();
    ce_cfg.seed = seed;
    let mut ce = AcousticModel::new(base.am_dims(), seed)?;
    train(&ce_cfg, &mut ce, &lm, &ds.train)?;
    let ce_am_only = pick(
        "ce am_only",
        &ce,
        grid(&ce_cfg, DecodeMode::AmOnly, 1.0, &[0.0]),
    )?;
    let ce_shallow = pick(
        "ce shallow",
        &ce,
        grid(&ce_cfg, DecodeMode::Shallow, 1.0, &plan.beta_grid),
    )?;
    info!("seed {seed}: ce am_only {ce_am_only:.2}, ce shallow {ce_shallow:.2}");

    let mut local_cfg = plan.local.clone();
    local_cfg.seed = seed;
    let mut local = AcousticModel::new(base.am_dims(), seed)?;
    train(&local_cfg, &mut local, &lm, &ds.train)?;
    let trained = local_cfg.training_scales();
    let mut betas = vec![trained.beta];
    betas.extend(plan.beta_grid.iter().map(|b| b * trained.alpha));
    let local_local = pick(
        "local local",
        &local,
        grid(&local_cfg, DecodeMode::Local, trained.alpha, &betas),
    )?;
    let local_am_only = pick(
        "local am_only",
        &local,
        grid(&local_cfg, DecodeMode::AmOnly, 1.0, &[0.0]),
    )?;
    info!("seed {seed}: local local {local_local:.2}, local am_only {local_am_only:.2}");

    let mut mmi_cfg = plan.mmi.clone();
    mmi_cfg.seed = seed;
    let mut mmi = ce.clone();
    train(&mmi_cfg, &mut mmi, &lm, &ds.train)?;
    let mmi_shallow = pick(
        "mmi shallow",
        &mmi,
        grid(&mmi_cfg, DecodeMode::Shallow, 1.0, &plan.beta_grid),
    )?;
    info!("seed {seed}: mmi shallow {mmi_shallow:.2}");

    Ok(FusionComparison {
        seed,
        ce_am_only,
        ce_shallow,
        local_local,
        local_am_only,
        mmi_shallow,
        settings,
    })
}
