//! The full grounding network: backbones, four fusion stages, decoder, heads.

use ogrg_tensor::{Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aligner::{AlignerStage, FusedStage};
use crate::config::{config_hash, ModelConfig, Task, N_STAGES};
use crate::decoder::{FcnDecoder, Heads, RgsOutput};
use crate::encoders::{DepthBackbone, LangInput, LanguageBackbone, PatchMerge, VisualBackbone};
use crate::error::{CoreError, Result};
use crate::nn::{to_map, to_tokens, Scope, Store};

/// One batch of network inputs.
pub struct ModelInput<T: Real> {
    /// Standardized RGB `[B, 3, H, W]`.
    pub image: Tensor<T>,
    /// Normalized depth `[B, 1, H, W]`.
    pub depth: Tensor<T>,
    pub lang: LangInput,
}

pub struct ModelOutput<T: Real> {
    pub f_in_v: Vec<Tensor<T>>,
    pub f_in_l: Vec<Tensor<T>>,
    /// Depth features in token layout `[B, D_1, C_1]`.
    pub f_d: Option<Tensor<T>>,
    pub stages: Vec<FusedStage<T>>,
    /// Decoder inputs `V_1..V_4` as maps.
    pub v: Vec<Tensor<T>>,
    pub y1: Tensor<T>,
    /// Grounding logits (both tasks).
    pub m: Tensor<T>,
    /// Grasp maps (grasp-synthesis task only).
    pub rgs: Option<RgsOutput<T>>,
}

pub struct Ogrg<T: Real> {
    pub cfg: ModelConfig,
    pub store: Store<T>,
    pub visual: VisualBackbone<T>,
    pub language: LanguageBackbone<T>,
    pub depth: Option<DepthBackbone<T>>,
    pub aligners: Vec<AlignerStage<T>>,
    /// Stage-to-stage links of the direct-bridge variant.
    pub bridges: Vec<PatchMerge<T>>,
    pub decoder: FcnDecoder<T>,
    pub heads: Heads<T>,
}

impl<T: Real> Ogrg<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = Store::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Scope::new(&mut store, &mut rng);
        let b = &cfg.backbone;
        let c = b.stage_channels;
        let visual = VisualBackbone::new(&mut s.sub("visual"), b);
        let language = LanguageBackbone::new(&mut s.sub("language"), b);
        let depth = cfg.aligner.depth.then(|| DepthBackbone::new(&mut s.sub("depth"), c[0]));
        let aligners = (0..N_STAGES)
            .map(|i| AlignerStage::new(&mut s.sub(&format!("aligner{}", i + 1)), i + 1, c[i], b.token_dim, &cfg.aligner))
            .collect();
        let bridges = if cfg.aligner.direct_bridge {
            (0..N_STAGES - 1)
                .map(|i| PatchMerge::new(&mut s.sub(&format!("bridge{}", i + 1)), c[i]))
                .collect()
        } else {
            Vec::new()
        };
        let decoder = FcnDecoder::new(&mut s.sub("decoder"), &c);
        let heads = Heads::new(&mut s.sub("heads"), c[0], cfg.task == Task::Rgs);
        drop(s);
        Ok(Ogrg {
            cfg: cfg.clone(),
            store,
            visual,
            language,
            depth,
            aligners,
            bridges,
            decoder,
            heads,
        })
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.cfg)
    }

    pub fn forward(&self, input: &ModelInput<T>, train: bool) -> Result<ModelOutput<T>> {
        let &[b, 3, h, w] = input.image.shape() else {
            return Err(CoreError::input(format!("image must be [B, 3, H, W], got {:?}", input.image.shape())));
        };
        self.cfg.check_input(h, w)?;
        if input.depth.shape() != [b, 1, h, w] {
            return Err(CoreError::input(format!("depth shape {:?} does not match image", input.depth.shape())));
        }
        if input.lang.batch != b {
            return Err(CoreError::input("expression batch does not match image batch"));
        }
        let a = &self.cfg.aligner;
        let ct = self.cfg.backbone.token_dim;
        let row_mask = input.lang.row_mask::<T>(ct);
        let mut x = self.visual.embed(&input.image)?;
        let mut l = self.language.embed(&input.lang)?;
        let f_d = match &self.depth {
            Some(d) => Some(to_tokens(&d.forward(&input.depth, train)?)?),
            None => None,
        };
        let (mut hi, mut wi) = (h / 4, w / 4);
        let mut out_v = Vec::new();
        let mut out_l = Vec::new();
        let mut stages: Vec<FusedStage<T>> = Vec::new();
        let mut v = Vec::new();
        for i in 0..N_STAGES {
            let f_in_v = self.visual.stage(i, &x, hi, wi)?;
            let f_in_l = self.language.group(i, &l, &input.lang, &row_mask)?;
            let (mut av, mut al) = (f_in_v.clone(), f_in_l.clone());
            if a.direct_bridge && i > 0 {
                let prev = &stages[i - 1];
                av = av.add(&self.bridges[i - 1].forward(&prev.f_back_v, hi * 2, wi * 2)?)?;
                if let Some(fb) = &prev.f_back_l {
                    al = al.add(fb)?;
                }
            }
            let fused = self.aligners[i].forward(&av, &al, &input.lang, if i == 0 { f_d.as_ref() } else { None })?;
            let next_v = if a.direct_bridge { f_in_v.clone() } else { fused.f_v.clone() };
            l = if a.direct_bridge || !self.cfg.backbone.lang_feed_back {
                f_in_l.clone()
            } else {
                fused.f_l.clone()
            };
            let vi = match self.cfg.task {
                Task::Rgs => &fused.f_v,
                Task::Rga => &fused.f_back_v,
            };
            v.push(to_map(vi, hi, wi)?);
            if i + 1 < N_STAGES {
                x = self.visual.merge(i, &next_v, hi, wi)?;
                hi /= 2;
                wi /= 2;
            }
            out_v.push(f_in_v);
            out_l.push(f_in_l);
            stages.push(fused);
        }
        let y1 = self.decoder.forward(&v, train)?;
        let (m, rgs) = match self.cfg.task {
            Task::Rgs => {
                let r = self.heads.rgs(&y1)?;
                (r.m.clone(), Some(r))
            }
            Task::Rga => (self.heads.mask(&y1)?, None),
        };
        Ok(ModelOutput {
            f_in_v: out_v,
            f_in_l: out_l,
            f_d,
            stages,
            v,
            y1,
            m,
            rgs,
        })
    }
}
