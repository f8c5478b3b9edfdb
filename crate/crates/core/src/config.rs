//! Model configuration and its content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// Number of visual stages and fusion stages.
pub const N_STAGES: usize = 4;
/// Total stride of the visual backbone at its coarsest stage.
pub const MAX_STRIDE: usize = 32;

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    /// C_1..C_4; each stage doubles the previous one.
    pub stage_channels: [usize; N_STAGES],
    /// Transformer blocks per visual stage.
    pub stage_depths: [usize; N_STAGES],
    pub stage_heads: [usize; N_STAGES],
    /// Largest attention window side. A stage map no larger than this is a
    /// single window; larger maps use the largest divisor not above it.
    pub window: usize,
    /// Alternate blocks shift their windows by half a window.
    pub shifted_windows: bool,
    pub mlp_ratio: usize,
    /// C_t.
    pub token_dim: usize,
    /// L.
    pub max_tokens: usize,
    pub vocab_size: usize,
    /// Language transformer blocks per group (one group per stage).
    pub lang_depths: [usize; N_STAGES],
    pub lang_heads: usize,
    /// Feed the fused language stream f_l^i into the next language group.
    pub lang_feed_back: bool,
    pub patch_stride: usize,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignerConfig {
    pub heads: usize,
    /// Update the language stream too; `false` gives one-way (vision-only) fusion.
    pub bidirectional: bool,
    /// Fuse depth features at stage 1.
    pub depth: bool,
    /// Pass each stage's fused features straight to the next aligner instead
    /// of injecting them into the backbones.
    pub direct_bridge: bool,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Mask plus dense grasp maps, decoded from f_v^i.
    Rgs,
    /// Grounding mask only, decoded from f_back_v^i.
    Rga,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub task: Task,
    pub backbone: BackboneConfig,
    pub aligner: AlignerConfig,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgnConfig {
    /// Channels at 1/2 and 1/4 resolution.
    pub channels: [usize; 2],
}

impl Default for MgnConfig {
    fn default() -> Self {
        MgnConfig { channels: [16, 32] }
    }
}

impl BackboneConfig {
    /// Desk-scale default: C = (32, 64, 128, 256), depths (1, 1, 2, 1), C_t = 64.
    pub fn toy(vocab_size: usize, max_tokens: usize) -> Self {
        BackboneConfig {
            stage_channels: [32, 64, 128, 256],
            stage_depths: [1, 1, 2, 1],
            stage_heads: [1, 2, 4, 8],
            window: 24,
            shifted_windows: false,
            mlp_ratio: 2,
            token_dim: 64,
            max_tokens,
            vocab_size,
            lang_depths: [1, 1, 1, 1],
            lang_heads: 2,
            lang_feed_back: true,
            patch_stride: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.stage_channels;
        if c[0] == 0 {
            return Err(CoreError::config("stage_channels must be positive"));
        }
        for i in 1..N_STAGES {
            if c[i] != 2 * c[i - 1] {
                return Err(CoreError::config(format!("stage_channels must double per stage, got {c:?}")));
            }
        }
        for i in 0..N_STAGES {
            if self.stage_heads[i] == 0 || !c[i].is_multiple_of(self.stage_heads[i]) {
                return Err(CoreError::config(format!("stage {} heads must divide {}", i + 1, c[i])));
            }
        }
        if self.patch_stride != 4 {
            return Err(CoreError::config("patch_stride must be 4"));
        }
        if self.window == 0 || self.mlp_ratio == 0 {
            return Err(CoreError::config("window and mlp_ratio must be positive"));
        }
        if self.token_dim == 0 || self.lang_heads == 0 || !self.token_dim.is_multiple_of(self.lang_heads) {
            return Err(CoreError::config("lang_heads must divide token_dim"));
        }
        if self.max_tokens == 0 {
            return Err(CoreError::config("max_tokens must be at least 1"));
        }
        if self.vocab_size < 3 {
            return Err(CoreError::config("vocab_size must cover <pad>, <unk> and one word"));
        }
        Ok(())
    }

    /// Attention window side for a stage map of side `size`.
    pub fn window_for(&self, size: usize) -> usize {
        if size <= self.window {
            size
        } else {
            (1..=self.window).rev().find(|w| size.is_multiple_of(*w)).unwrap_or(1)
        }
    }
}

impl AlignerConfig {
    pub fn full() -> Self {
        AlignerConfig {
            heads: 1,
            bidirectional: true,
            depth: true,
            direct_bridge: false,
        }
    }
}

impl ModelConfig {
    pub fn toy(task: Task, vocab_size: usize, max_tokens: usize) -> Self {
        ModelConfig {
            task,
            backbone: BackboneConfig::toy(vocab_size, max_tokens),
            aligner: AlignerConfig::full(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        let a = &self.aligner;
        let c = &self.backbone.stage_channels;
        if a.heads == 0 || c.iter().any(|ci| ci % a.heads != 0) || !self.backbone.token_dim.is_multiple_of(a.heads) {
            return Err(CoreError::config("aligner heads must divide every C_i and C_t"));
        }
        Ok(())
    }

    /// Checks that an input of `h × w` pixels fits the stage ladder.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        if h == 0 || w == 0 || !h.is_multiple_of(MAX_STRIDE) || !w.is_multiple_of(MAX_STRIDE) {
            return Err(CoreError::input(format!("input {h}x{w} is not divisible by {MAX_STRIDE}")));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the compact JSON serialization (fields in declaration order).
pub fn config_hash<C: Serialize>(cfg: &C) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_is_valid() {
        ModelConfig::toy(Task::Rgs, 100, 20).validate().unwrap();
    }

    #[test]
    fn windows_divide_stage_maps() {
        let b = BackboneConfig::toy(10, 20);
        assert_eq!(b.window_for(24), 24);
        assert_eq!(b.window_for(104), 13);
        assert_eq!(b.window_for(52), 13);
        assert_eq!(b.window_for(13), 13);
    }

    #[test]
    fn non_doubling_channels_rejected() {
        let mut b = BackboneConfig::toy(10, 20);
        b.stage_channels = [32, 64, 96, 192];
        assert!(b.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ModelConfig::toy(Task::Rgs, 100, 20);
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.aligner.depth = false;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn input_divisibility() {
        let m = ModelConfig::toy(Task::Rgs, 100, 20);
        assert!(m.check_input(96, 96).is_ok());
        assert!(m.check_input(100, 96).is_err());
    }
}
