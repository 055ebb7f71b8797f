//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::criteria::Scales;
use crate::decoding::{DecodeConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::models::AmDims;
use crate::task::TaskConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Ce,
    Local,
    Mmi,
    /// Language-model pre-training on the text-only corpus.
    Lm,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ce => "ce",
            Criterion::Local => "local",
            Criterion::Mmi => "mmi",
            Criterion::Lm => "lm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmType {
    NGram,
    Rnn,
}

/// A config value that prints back to the text it was parsed from.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u64, bool, String);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("value must be finite".into())
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            Err("empty path".into())
        } else {
            Ok(PathBuf::from(s))
        }
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

/// `auto` stands for "derive from the criterion".
impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            T::parse_value(s).map(Some)
        }
    }
    fn show(&self) -> String {
        self.as_ref()
            .map_or_else(|| "auto".into(), ConfigValue::show)
    }
}

impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|x| f64::parse_value(x.trim())).collect()
    }
    fn show(&self) -> String {
        self.iter()
            .map(ConfigValue::show)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl ConfigValue for Criterion {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ce" => Ok(Criterion::Ce),
            "local" => Ok(Criterion::Local),
            "mmi" => Ok(Criterion::Mmi),
            "lm" => Ok(Criterion::Lm),
            _ => Err("expected ce, local, mmi or lm".into()),
        }
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

impl ConfigValue for LmType {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ngram" => Ok(LmType::NGram),
            "rnn" => Ok(LmType::Rnn),
            _ => Err("expected ngram or rnn".into()),
        }
    }
    fn show(&self) -> String {
        match self {
            LmType::NGram => "ngram",
            LmType::Rnn => "rnn",
        }
        .into()
    }
}

impl ConfigValue for DecodeMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

macro_rules! run_config {
    ($($(#[doc = $doc:literal])* $key:ident : $ty:ty = $default:expr;)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[doc = $doc])* pub $key: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($key: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Assigns one key without validating cross-key constraints.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($key) => {
                        self.$key = <$ty as ConfigValue>::parse_value(value).map_err(|e| {
                            Error::Config(format!("bad value `{value}` for `{key}`: {e}"))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// Every key, one `key = value` line each.
            pub fn print(&self) -> String {
                let mut s = String::new();
                $(writeln!(s, "{} = {}", stringify!($key), ConfigValue::show(&self.$key)).unwrap();)*
                s
            }
        }
    };
}

run_config! {
    data_dir: PathBuf = PathBuf::from("data");
    out_dir: PathBuf = PathBuf::from("runs/default");
    seed: u64 = 42;

    vocab_size: usize = 20;
    markov_order: usize = 1;
    temperature: f64 = 0.5;
    eos_prob: f64 = 0.2;
    max_sentence_len: usize = 30;
    frames_per_token: usize = 2;
    feature_dim: usize = 8;
    noise_std: f64 = 1.5;
    n_train: usize = 2000;
    n_dev: usize = 200;
    n_test: usize = 200;
    n_text_only: usize = 20000;

    embed_dim: usize = 16;
    hidden_dim: usize = 32;
    attention_dim: usize = 32;
    encoder_layers: usize = 1;

    lm_type: LmType = LmType::NGram;
    lm_order: usize = 2;
    lm_kappa: f64 = 0.1;
    lm_hidden: usize = 32;
    /// n-gram counts file or recurrent LM checkpoint.
    lm_path: PathBuf = PathBuf::from("runs/lm.counts");

    criterion: Criterion = Criterion::Ce;
    epochs: usize = 10;
    lr: Option<f64> = None;
    batch_size: Option<usize> = None;
    clip_norm: f64 = 5.0;
    gamma_abs: Option<f64> = None;
    gamma_rel: f64 = 0.35;
    gamma_den: f64 = 1.0;
    nbest: usize = 8;
    /// Local fusion only: also update the recurrent LM.
    joint_lm: bool = false;
    init_checkpoint: Option<PathBuf> = None;

    checkpoint: Option<PathBuf> = None;
    split: String = "dev".to_string();
    decode_mode: Option<DecodeMode> = None;
    decode_alpha: Option<f64> = None;
    decode_beta: Option<f64> = None;
    beam_size: usize = 4;
    decode_max_len: usize = 40;
    length_norm: bool = false;
    hyp_path: Option<PathBuf> = None;

    sweep_gamma_abs: Vec<f64> = vec![2.0];
    sweep_gamma_rel: Vec<f64> = vec![0.35];
    sweep_gamma_den: Vec<f64> = vec![1.0];
    sweep_out: Option<PathBuf> = None;

    bench_steps: usize = 200;
    bench_warmup: usize = 20;
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys not set keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{k}`",
                    i + 1
                )));
            }
            cfg.set(k, v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Applies `key=value` overrides and re-validates.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.criterion == Criterion::Mmi && self.init_checkpoint.is_none() {
            return fail("criterion = mmi requires init_checkpoint (a converged ce model)".into());
        }
        if self.joint_lm && (self.criterion != Criterion::Local || self.lm_type != LmType::Rnn) {
            return fail("joint_lm needs criterion = local and lm_type = rnn".into());
        }
        if !(0.0..=1.0).contains(&self.gamma_den) {
            return fail("gamma_den must lie in [0, 1]".into());
        }
        if self.gamma_rel < 0.0 || self.gamma_abs.is_some_and(|a| a < 0.0) {
            return fail("scales must be non-negative".into());
        }
        if self.decode_alpha.is_some_and(|a| a < 0.0) || self.decode_beta.is_some_and(|b| b < 0.0) {
            return fail("decode scales must be non-negative".into());
        }
        if self.lr.is_some_and(|lr| lr <= 0.0) || self.clip_norm <= 0.0 {
            return fail("lr and clip_norm must be positive".into());
        }
        if self.batch_size == Some(0) || self.nbest == 0 || self.beam_size == 0 {
            return fail("batch_size, nbest and beam_size must be at least 1".into());
        }
        if self.decode_max_len == 0 || self.lm_order == 0 || self.lm_kappa <= 0.0 {
            return fail("decode_max_len, lm_order and lm_kappa must be positive".into());
        }
        if !["train", "dev", "test"].contains(&self.split.as_str()) {
            return fail(format!(
                "split must be train, dev or test, got `{}`",
                self.split
            ));
        }
        self.task()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.encoder_layers == 0 || self.encoder_layers > 2 {
            return fail("encoder_layers must be 1 or 2".into());
        }
        if [
            self.embed_dim,
            self.hidden_dim,
            self.attention_dim,
            self.lm_hidden,
        ]
        .contains(&0)
        {
            return fail("model dimensions must be positive".into());
        }
        Ok(())
    }

    pub fn task(&self) -> TaskConfig {
        TaskConfig {
            vocab_size: self.vocab_size,
            markov_order: self.markov_order,
            temperature: self.temperature,
            eos_prob: self.eos_prob,
            max_sentence_len: self.max_sentence_len,
            frames_per_token: self.frames_per_token,
            feature_dim: self.feature_dim,
            noise_std: self.noise_std,
            n_train: self.n_train,
            n_dev: self.n_dev,
            n_test: self.n_test,
            n_text_only: self.n_text_only,
            seed: self.seed,
        }
    }

    pub fn am_dims(&self) -> AmDims {
        AmDims {
            vocab: self.vocab_size,
            feat_dim: self.feature_dim,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            encoder_layers: self.encoder_layers,
        }
    }

    pub fn effective_gamma_abs(&self) -> f64 {
        self.gamma_abs.unwrap_or(match self.criterion {
            Criterion::Local => 2.0,
            Criterion::Mmi => 0.1,
            Criterion::Ce | Criterion::Lm => 1.0,
        })
    }

    pub fn training_scales(&self) -> Scales {
        let a = self.effective_gamma_abs();
        Scales {
            alpha: a,
            beta: a * self.gamma_rel,
            gamma_den: self.gamma_den,
        }
    }

    pub fn effective_lr(&self) -> f64 {
        self.lr.unwrap_or(match self.criterion {
            Criterion::Mmi => 0.005,
            _ => 0.05,
        })
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.criterion {
            Criterion::Mmi => 4,
            _ => 16,
        })
    }

    /// Decoding paired with the training criterion: local fusion for
    /// locally fused models, shallow fusion otherwise.
    pub fn decode_config(&self) -> DecodeConfig {
        let mode = self.decode_mode.unwrap_or(match self.criterion {
            Criterion::Local => DecodeMode::Local,
            _ => DecodeMode::Shallow,
        });
        let (alpha, beta) = match mode {
            DecodeMode::Local => {
                let s = self.training_scales();
                (s.alpha, s.beta)
            }
            _ => (1.0, self.gamma_rel),
        };
        DecodeConfig {
            mode,
            alpha: self.decode_alpha.unwrap_or(alpha),
            beta: self.decode_beta.unwrap_or(beta),
            beam_size: self.beam_size,
            max_len: self.decode_max_len,
            length_norm: self.length_norm,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.ckpt"))
    }

    pub fn hyp_path(&self) -> PathBuf {
        self.hyp_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("hyps.{}.jsonl", self.split)))
    }
}
