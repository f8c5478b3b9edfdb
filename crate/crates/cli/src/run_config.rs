//! JSON run configuration and the run-directory layout.

use std::fs;
use std::path::{Path, PathBuf};

use ogrg_core::losses::{GroundingLossParams, LossWeights};
use ogrg_core::optim::AdamWConfig;
use ogrg_core::train::Schedule;
use ogrg_core::{AlignerConfig, BackboneConfig, MgnConfig, ModelConfig, Task, Vocab};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const LOG_FILE: &str = "log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const DEFAULT_RESOLUTION: usize = 416;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Grounding with dense grasp maps.
    Rgs,
    /// Grounding for the affordance pipeline.
    Rga,
    /// Mask-conditioned grasp network.
    Mgn,
}

impl Mode {
    pub fn default_max_tokens(self) -> usize {
        match self {
            Mode::Rgs => 20,
            Mode::Rga | Mode::Mgn => 25,
        }
    }

    pub fn task(self) -> Option<Task> {
        match self {
            Mode::Rgs => Some(Task::Rgs),
            Mode::Rga => Some(Task::Rga),
            Mode::Mgn => None,
        }
    }
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_save_every() -> usize {
    1
}

/// One training run. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Square input side; a multiple of 32. Datasets must match it.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Expression token limit; 20 (rgs) or 25 (rga, mgn) when absent.
    #[serde(default)]
    pub max_tokens: Option<usize>,
    /// Visual and language backbones; the toy backbone when absent. Its
    /// `vocab_size` and `max_tokens` must agree with the run.
    #[serde(default)]
    pub backbone: Option<BackboneConfig>,
    #[serde(default = "AlignerConfig::full")]
    pub aligner: AlignerConfig,
    #[serde(default)]
    pub mgn: MgnConfig,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub grounding_loss: GroundingLossParams,
    pub schedule: Schedule,
    pub train_data: PathBuf,
    #[serde(default)]
    pub val_data: Option<PathBuf>,
    /// Vocabulary file (one token per line); the grammar lexicon plus the
    /// training expressions when absent.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Single-threaded, fixed-order numerics.
    #[serde(default)]
    pub strict: bool,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many epochs (and after the last).
    #[serde(default = "default_save_every")]
    pub save_every: usize,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config {origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.train_data);
        resolve(&mut cfg.out_dir);
        cfg.val_data.as_mut().map(resolve);
        cfg.vocab.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || !self.resolution.is_multiple_of(32) {
            return Err(CliError::usage(format!("resolution {} is not a positive multiple of 32", self.resolution)));
        }
        if self.max_tokens == Some(0) {
            return Err(CliError::usage("max_tokens must be at least 1"));
        }
        if self.save_every == 0 {
            return Err(CliError::usage("save_every must be at least 1"));
        }
        Ok(())
    }

    pub fn tokens(&self) -> usize {
        self.max_tokens.unwrap_or(self.mode.default_max_tokens())
    }

    /// Grounding network configuration for a vocabulary of `vocab_size` words.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let task = self
            .mode
            .task()
            .ok_or_else(|| CliError::usage("an mgn run has no grounding network"))?;
        let backbone = match &self.backbone {
            Some(b) => {
                if b.vocab_size != vocab_size || b.max_tokens != self.tokens() {
                    return Err(CliError::usage(format!(
                        "backbone expects vocab_size {} and max_tokens {}, run has {} and {}",
                        b.vocab_size,
                        b.max_tokens,
                        vocab_size,
                        self.tokens()
                    )));
                }
                b.clone()
            }
            None => BackboneConfig::toy(vocab_size, self.tokens()),
        };
        let cfg = ModelConfig {
            task,
            backbone,
            aligner: self.aligner.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A runnable starting point for `mode`.
    pub fn example(mode: Mode) -> Self {
        let (epochs, batch_size, lr) = match mode {
            Mode::Rgs => (300, 4, 2e-3),
            Mode::Rga => (30, 8, 1e-3),
            Mode::Mgn => (5, 16, 1e-3),
        };
        RunConfig {
            mode,
            resolution: 96,
            max_tokens: None,
            backbone: None,
            aligner: AlignerConfig::full(),
            mgn: MgnConfig::default(),
            loss_weights: LossWeights::default(),
            grounding_loss: GroundingLossParams::default(),
            schedule: Schedule {
                epochs,
                batch_size,
                lr,
                lr_power: 0.9,
                optimizer: AdamWConfig::default(),
                eval_every: 10,
            },
            train_data: "data/train".into(),
            val_data: None,
            vocab: None,
            seed: 0,
            strict: false,
            out_dir: format!("runs/{}", serde_json::to_value(mode).unwrap().as_str().unwrap()).into(),
            save_every: 10,
        }
    }
}

/// The lexicon of the scene grammar plus every word of `texts`.
pub fn default_vocab<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> Vocab {
    let words: Vec<String> = ogrg_synth::grammar::lexicon()
        .into_iter()
        .chain(texts.into_iter().map(|t| t.as_ref().to_string()))
        .collect();
    Vocab::from_corpus(words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_round_trip() {
        for mode in [Mode::Rgs, Mode::Rga, Mode::Mgn] {
            let cfg = RunConfig::example(mode);
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(RunConfig::from_json(&text, "x").unwrap(), cfg);
        }
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"{"mode":"rga","schedule":{"epochs":1,"batch_size":2,"lr":0.001,"lr_power":0.9,
            "optimizer":{"beta1":0.9,"beta2":0.999,"eps":1e-8,"weight_decay":0.01,"clip_norm":null},"eval_every":0},
            "train_data":"d","out_dir":"o"}"#;
        let cfg = RunConfig::from_json(text, "x").unwrap();
        assert_eq!(cfg.resolution, 416);
        assert_eq!(cfg.tokens(), 25);
        assert_eq!(cfg.save_every, 1);
        assert_eq!(cfg.aligner, AlignerConfig::full());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut cfg = RunConfig::example(Mode::Rgs);
        cfg.resolution = 100;
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(matches!(RunConfig::from_json(&text, "x"), Err(CliError::Usage(_))));
        let text = text.replace("\"mode\"", "\"colour\":1,\"mode\"");
        assert!(matches!(RunConfig::from_json(&text, "x"), Err(CliError::Usage(_))));
    }

    #[test]
    fn backbone_must_match_vocab() {
        let mut cfg = RunConfig::example(Mode::Rgs);
        cfg.backbone = Some(BackboneConfig::toy(50, 20));
        assert!(cfg.model_config(50).is_ok());
        assert!(cfg.model_config(51).is_err());
        assert!(RunConfig::example(Mode::Mgn).model_config(50).is_err());
    }
}
