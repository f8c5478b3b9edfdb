//! Visual, language and depth backbones.

use std::rc::Rc;

use ogrg_tensor::{Real, Tensor};

use crate::attention::attend;
use crate::config::{BackboneConfig, N_STAGES};
use crate::error::{CoreError, Result};
use crate::nn::{to_tokens, BasicBlock, Conv2d, ConvBnRelu, Init, LayerNorm, Linear, Scope, INIT_STD};

/// Per-channel image statistics used after scaling pixels to `[0, 1]`.
pub const IMAGE_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGE_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Interleaved 8-bit RGB (`H×W×3`) to standardized planar `3×H×W`.
pub fn normalize_image(rgb: &[u8], h: usize, w: usize) -> Result<Vec<f32>> {
    if rgb.len() != h * w * 3 {
        return Err(CoreError::input(format!("{} RGB bytes for a {h}x{w} image", rgb.len())));
    }
    let mut out = vec![0.0; 3 * h * w];
    for (p, px) in rgb.chunks(3).enumerate() {
        for c in 0..3 {
            out[c * h * w + p] = (px[c] as f32 / 255.0 - IMAGE_MEAN[c]) / IMAGE_STD[c];
        }
    }
    Ok(out)
}

/// Per-image depth normalization: invalid readings (zero or non-finite) take
/// the median of valid ones, then `(D − median) / max |D − median|`. A flat
/// depth map normalizes to zeros.
pub fn normalize_depth(raw: &[f32]) -> Result<Vec<f32>> {
    let mut valid: Vec<f32> = raw.iter().copied().filter(|d| d.is_finite() && *d > 0.0).collect();
    if valid.is_empty() {
        return Err(CoreError::input("depth map has no valid readings"));
    }
    valid.sort_by(|a, b| a.total_cmp(b));
    let n = valid.len();
    let median = if n % 2 == 1 {
        valid[n / 2]
    } else {
        (valid[n / 2 - 1] + valid[n / 2]) / 2.0
    };
    let filled: Vec<f32> = raw
        .iter()
        .map(|&d| if d.is_finite() && d > 0.0 { d } else { median })
        .collect();
    let dev = filled.iter().map(|d| (d - median).abs()).fold(0.0f32, f32::max);
    Ok(if dev == 0.0 {
        vec![0.0; raw.len()]
    } else {
        filled.iter().map(|d| (d - median) / dev).collect()
    })
}

/// Fixed 2-D sinusoidal position code `[h·w, c]`: the first half of the
/// channels encode the row, the second half the column.
pub fn position_encoding<T: Real>(h: usize, w: usize, c: usize) -> Tensor<T> {
    let half = c / 2;
    let pairs = half / 2;
    let mut data = vec![T::zero(); h * w * c];
    for y in 0..h {
        for x in 0..w {
            let row = &mut data[(y * w + x) * c..(y * w + x + 1) * c];
            for (offset, pos) in [(0, y), (half, x)] {
                for k in 0..pairs {
                    let freq = 1.0 / 10000f64.powf(2.0 * k as f64 / half as f64);
                    let a = pos as f64 * freq;
                    row[offset + 2 * k] = T::lit(a.sin());
                    row[offset + 2 * k + 1] = T::lit(a.cos());
                }
            }
        }
    }
    Tensor::from_vec(data, &[h * w, c]).expect("shape matches data")
}

/// Multi-head self-attention with a fused QKV projection.
pub struct SelfAttention<T: Real> {
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub heads: usize,
}

impl<T: Real> SelfAttention<T> {
    pub fn new(s: &mut Scope<T>, dim: usize, heads: usize) -> Self {
        SelfAttention {
            qkv: Linear::new(&mut s.sub("qkv"), dim, 3 * dim, true),
            proj: Linear::new(&mut s.sub("proj"), dim, dim, true),
            heads,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, key_keep: Option<&[bool]>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let c = x.dim(-1);
        let qkv = self.qkv.forward(x)?;
        let q = qkv.narrow(-1, 0, c)?;
        let k = qkv.narrow(-1, c, c)?;
        let v = qkv.narrow(-1, 2 * c, c)?;
        let d = (c / self.heads) as f64;
        let a = attend(&q, &k, &v, self.heads, d.sqrt(), key_keep, bias)?;
        self.proj.forward(&a.out)
    }
}

pub struct Mlp<T: Real> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new(s: &mut Scope<T>, dim: usize, ratio: usize) -> Self {
        Mlp {
            fc1: Linear::new(&mut s.sub("fc1"), dim, ratio * dim, true),
            fc2: Linear::new(&mut s.sub("fc2"), ratio * dim, dim, true),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.fc2.forward(&self.fc1.forward(x)?.relu())
    }
}

/// Pre-norm transformer block over `[B, N, C]` tokens.
pub struct Block<T: Real> {
    pub norm1: LayerNorm<T>,
    pub attn: SelfAttention<T>,
    pub norm2: LayerNorm<T>,
    pub mlp: Mlp<T>,
}

impl<T: Real> Block<T> {
    pub fn new(s: &mut Scope<T>, dim: usize, heads: usize, ratio: usize) -> Self {
        Block {
            norm1: LayerNorm::new(&mut s.sub("norm1"), dim),
            attn: SelfAttention::new(&mut s.sub("attn"), dim, heads),
            norm2: LayerNorm::new(&mut s.sub("norm2"), dim),
            mlp: Mlp::new(&mut s.sub("mlp"), dim, ratio),
        }
    }

    /// `attn_map` wraps the attention call (window partitioning).
    fn forward_with(
        &self,
        x: &Tensor<T>,
        attn_map: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let x = x.add(&attn_map(&self.norm1.forward(x)?)?)?;
        Ok(x.add(&self.mlp.forward(&self.norm2.forward(&x)?)?)?)
    }

    pub fn forward(&self, x: &Tensor<T>, key_keep: Option<&[bool]>) -> Result<Tensor<T>> {
        self.forward_with(x, |h| self.attn.forward(h, key_keep, None))
    }
}

/// Window layout of one stage map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Windows {
    h: usize,
    w: usize,
    wh: usize,
    ww: usize,
    shift: (usize, usize),
}

impl Windows {
    fn count(&self) -> usize {
        (self.h / self.wh) * (self.w / self.ww)
    }

    fn is_global(&self) -> bool {
        self.wh == self.h && self.ww == self.w
    }

    /// Flat `[B, H, W, C]` gather index for a cyclic shift by `(−dy, −dx)`.
    fn roll_index(&self, b: usize, c: usize, dy: usize, dx: usize) -> Rc<Vec<usize>> {
        let (h, w) = (self.h, self.w);
        let mut idx = Vec::with_capacity(b * h * w * c);
        for bi in 0..b {
            for y in 0..h {
                for x in 0..w {
                    let src = ((bi * h + (y + dy) % h) * w + (x + dx) % w) * c;
                    idx.extend(src..src + c);
                }
            }
        }
        Rc::new(idx)
    }

    /// `[nW, heads, N, N]` logit bias keeping attention inside the regions a
    /// cyclic shift brought together.
    fn shift_bias<T: Real>(&self, heads: usize) -> Result<Tensor<T>> {
        let (sh, sw) = self.shift;
        let region = |p: usize, len: usize, win: usize, s: usize| {
            if p < len - win {
                0
            } else if p < len - s {
                1
            } else {
                2
            }
        };
        let (nwy, nwx) = (self.h / self.wh, self.w / self.ww);
        let n = self.wh * self.ww;
        let mut data = Vec::with_capacity(nwy * nwx * heads * n * n);
        for wy in 0..nwy {
            for wx in 0..nwx {
                let ids: Vec<usize> = (0..n)
                    .map(|i| {
                        let (y, x) = (wy * self.wh + i / self.ww, wx * self.ww + i % self.ww);
                        region(y, self.h, self.wh, sh) * 3 + region(x, self.w, self.ww, sw)
                    })
                    .collect();
                for _ in 0..heads {
                    for i in 0..n {
                        for j in 0..n {
                            data.push(if ids[i] == ids[j] { T::zero() } else { T::lit(-1e9) });
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_vec(data, &[nwy * nwx, heads, n, n])?)
    }

    fn partition<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c) = (x.dim(0), x.dim(-1));
        let (nwy, nwx) = (self.h / self.wh, self.w / self.ww);
        Ok(x.reshape(&[b, nwy, self.wh, nwx, self.ww, c])?
            .permute(&[0, 1, 3, 2, 4, 5])?
            .reshape(&[b * nwy * nwx, self.wh * self.ww, c])?)
    }

    fn unpartition<T: Real>(&self, x: &Tensor<T>, b: usize) -> Result<Tensor<T>> {
        let c = x.dim(-1);
        let (nwy, nwx) = (self.h / self.wh, self.w / self.ww);
        Ok(x.reshape(&[b, nwy, nwx, self.wh, self.ww, c])?
            .permute(&[0, 1, 3, 2, 4, 5])?
            .reshape(&[b, self.h * self.w, c])?)
    }
}

/// Transformer block attending within (optionally shifted) windows.
pub struct WindowBlock<T: Real> {
    pub block: Block<T>,
    pub shifted: bool,
}

impl<T: Real> WindowBlock<T> {
    pub fn forward(&self, x: &Tensor<T>, h: usize, w: usize, cfg: &BackboneConfig) -> Result<Tensor<T>> {
        let (wh, ww) = (cfg.window_for(h), cfg.window_for(w));
        let mut win = Windows { h, w, wh, ww, shift: (0, 0) };
        if win.is_global() {
            return self.block.forward(x, None);
        }
        if self.shifted {
            win.shift = (wh / 2, ww / 2);
        }
        let (b, c) = (x.dim(0), x.dim(-1));
        let heads = self.block.attn.heads;
        self.block.forward_with(x, |hx| {
            let (sy, sx) = win.shift;
            let rolled = if win.shift == (0, 0) {
                hx.clone()
            } else {
                hx.gather(win.roll_index(b, c, sy, sx), &[b, h * w, c])?
            };
            let bias = if win.shift == (0, 0) { None } else { Some(win.shift_bias::<T>(heads)?) };
            let parts = win.partition(&rolled)?;
            debug_assert_eq!(parts.dim(0), b * win.count());
            let out = win.unpartition(&self.block.attn.forward(&parts, None, bias.as_ref())?, b)?;
            if win.shift == (0, 0) {
                Ok(out)
            } else {
                Ok(out.gather(win.roll_index(b, c, h - sy, w - sx), &[b, h * w, c])?)
            }
        })
    }
}

/// 2×2 neighborhood concatenation followed by a linear reduction to `2C`.
pub struct PatchMerge<T: Real> {
    pub norm: LayerNorm<T>,
    pub reduce: Linear<T>,
}

impl<T: Real> PatchMerge<T> {
    pub fn new(s: &mut Scope<T>, c: usize) -> Self {
        PatchMerge {
            norm: LayerNorm::new(&mut s.sub("norm"), 4 * c),
            reduce: Linear::new(&mut s.sub("reduce"), 4 * c, 2 * c, false),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        let (b, c) = (x.dim(0), x.dim(-1));
        let merged = x
            .reshape(&[b, h / 2, 2, w / 2, 2, c])?
            .permute(&[0, 1, 3, 2, 4, 5])?
            .reshape(&[b, (h / 2) * (w / 2), 4 * c])?;
        self.reduce.forward(&self.norm.forward(&merged)?)
    }
}

/// Hierarchical windowed-attention image encoder. Features travel as
/// `[B, H_i·W_i, C_i]` token maps.
pub struct VisualBackbone<T: Real> {
    pub cfg: BackboneConfig,
    pub patch: Conv2d<T>,
    pub patch_norm: LayerNorm<T>,
    pub stages: Vec<Vec<WindowBlock<T>>>,
    pub merges: Vec<PatchMerge<T>>,
}

impl<T: Real> VisualBackbone<T> {
    pub fn new(s: &mut Scope<T>, cfg: &BackboneConfig) -> Self {
        let c = cfg.stage_channels;
        let p = cfg.patch_stride;
        let patch = {
            let mut ps = s.sub("patch");
            Conv2d {
                weight: ps.param("weight", &[c[0], 3, p, p], Init::TruncNormal(INIT_STD)),
                bias: Some(ps.param("bias", &[c[0]], Init::Zeros)),
                stride: p,
                pad: 0,
            }
        };
        let patch_norm = LayerNorm::new(&mut s.sub("patch_norm"), c[0]);
        let stages = (0..N_STAGES)
            .map(|i| {
                (0..cfg.stage_depths[i])
                    .map(|j| WindowBlock {
                        block: Block::new(&mut s.sub(&format!("stage{}.block{j}", i + 1)), c[i], cfg.stage_heads[i], cfg.mlp_ratio),
                        shifted: cfg.shifted_windows && j % 2 == 1,
                    })
                    .collect()
            })
            .collect();
        let merges = (0..N_STAGES - 1)
            .map(|i| PatchMerge::new(&mut s.sub(&format!("merge{}", i + 1)), c[i]))
            .collect();
        VisualBackbone {
            cfg: cfg.clone(),
            patch,
            patch_norm,
            stages,
            merges,
        }
    }

    /// Patch embedding plus position code: `[B, 3, H, W]` → `[B, H/4·W/4, C_1]`.
    pub fn embed(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.patch.forward(image)?;
        let (h, w) = (x.dim(2), x.dim(3));
        let t = self.patch_norm.forward(&to_tokens(&x)?)?;
        Ok(t.add(&position_encoding(h, w, self.cfg.stage_channels[0]))?)
    }

    /// Transformer blocks of stage `i` (0-based) on an `h×w` token map.
    pub fn stage(&self, i: usize, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        let mut x = x.clone();
        for b in &self.stages[i] {
            x = b.forward(&x, h, w, &self.cfg)?;
        }
        Ok(x)
    }

    /// Patch merging from stage `i` to `i + 1`.
    pub fn merge(&self, i: usize, x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
        self.merges[i].forward(x, h, w)
    }
}

/// Token and padding information for a batch of expressions.
#[derive(Clone, Debug)]
pub struct LangInput {
    pub batch: usize,
    pub len: usize,
    pub ids: Vec<usize>,
    /// `true` for real tokens.
    pub keep: Vec<bool>,
}

impl LangInput {
    /// Constant `[B, L, dim]` tensor with ones on real tokens and zeros on pads.
    pub fn row_mask<T: Real>(&self, dim: usize) -> Tensor<T> {
        let data = self
            .keep
            .iter()
            .flat_map(|&k| std::iter::repeat_n(if k { T::one() } else { T::zero() }, dim))
            .collect();
        Tensor::from_vec(data, &[self.batch, self.len, dim]).expect("shape matches data")
    }
}

/// Token transformer split into one block group per stage.
pub struct LanguageBackbone<T: Real> {
    pub embedding: Tensor<T>,
    pub position: Tensor<T>,
    pub groups: Vec<Vec<Block<T>>>,
    pub vocab_size: usize,
}

impl<T: Real> LanguageBackbone<T> {
    pub fn new(s: &mut Scope<T>, cfg: &BackboneConfig) -> Self {
        let ct = cfg.token_dim;
        LanguageBackbone {
            embedding: s.param("embedding", &[cfg.vocab_size, ct], Init::TruncNormal(INIT_STD)),
            position: s.param("position", &[cfg.max_tokens, ct], Init::TruncNormal(INIT_STD)),
            groups: (0..N_STAGES)
                .map(|g| {
                    (0..cfg.lang_depths[g])
                        .map(|j| Block::new(&mut s.sub(&format!("group{}.block{j}", g + 1)), ct, cfg.lang_heads, cfg.mlp_ratio))
                        .collect()
                })
                .collect(),
            vocab_size: cfg.vocab_size,
        }
    }

    /// Token plus position embeddings, pad rows zeroed: `[B, L, C_t]`.
    pub fn embed(&self, input: &LangInput) -> Result<Tensor<T>> {
        let (b, l) = (input.batch, input.len);
        if l != self.position.dim(0) {
            return Err(CoreError::input(format!("{l} tokens per expression, model expects {}", self.position.dim(0))));
        }
        if input.ids.len() != b * l || input.keep.len() != b * l {
            return Err(CoreError::Contract("token ids and mask must cover B×L entries".into()));
        }
        if let Some(&bad) = input.ids.iter().find(|&&id| id >= self.vocab_size) {
            return Err(CoreError::input(format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
        }
        if input.keep.chunks(l).any(|row| !row.contains(&true)) {
            return Err(CoreError::input("expression without real tokens"));
        }
        let ct = self.embedding.dim(1);
        let x = self.embedding.embedding(&input.ids)?.reshape(&[b, l, ct])?.add(&self.position)?;
        Ok(x.mul(&input.row_mask(ct))?)
    }

    /// Blocks of group `g` (0-based); pad rows are re-zeroed after each block.
    pub fn group(&self, g: usize, x: &Tensor<T>, input: &LangInput, row_mask: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = x.clone();
        for b in &self.groups[g] {
            x = b.forward(&x, Some(&input.keep))?.mul(row_mask)?;
        }
        Ok(x)
    }
}

/// Residual convolutional depth encoder with total stride 4.
pub struct DepthBackbone<T: Real> {
    pub stem: ConvBnRelu<T>,
    pub down: ConvBnRelu<T>,
    pub block: BasicBlock<T>,
}

impl<T: Real> DepthBackbone<T> {
    pub fn new(s: &mut Scope<T>, c1: usize) -> Self {
        DepthBackbone {
            stem: ConvBnRelu::new(&mut s.sub("stem"), 1, c1 / 2, 7, 2),
            down: ConvBnRelu::new(&mut s.sub("down"), c1 / 2, c1, 3, 2),
            block: BasicBlock::new(&mut s.sub("block"), c1),
        }
    }

    /// Normalized depth `[B, 1, H, W]` → `f_d` as `[B, C_1, H/4, W/4]`.
    pub fn forward(&self, depth: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let x = self.stem.forward(depth, train)?;
        let x = self.down.forward(&x, train)?;
        self.block.forward(&x, train)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_normalization() {
        let d = normalize_depth(&[1.0, 0.0, 0.8, 0.9, 1.0]).unwrap();
        // median of valid {0.8, 0.9, 1.0, 1.0} is 0.95; the invalid pixel takes it
        assert_eq!(d[1], 0.0);
        assert!((d[2] + 1.0).abs() < 1e-6);
        assert!(normalize_depth(&[0.0, f32::NAN]).is_err());
        assert_eq!(normalize_depth(&[0.7; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn doubling_depth_is_exactly_invariant() {
        let raw: Vec<f32> = (0..50).map(|i| 0.9 + (i as f32 * 0.37).sin() * 0.05).collect();
        let doubled: Vec<f32> = raw.iter().map(|d| d * 2.0).collect();
        assert_eq!(normalize_depth(&raw).unwrap(), normalize_depth(&doubled).unwrap());
    }

    #[test]
    fn image_standardization() {
        let v = normalize_image(&[255, 0, 0, 0, 255, 0], 1, 2).unwrap();
        assert!((v[0] - (1.0 - 0.485) / 0.229).abs() < 1e-6);
        assert!((v[3] - (1.0 - 0.456) / 0.224).abs() < 1e-6);
        assert!(normalize_image(&[0; 5], 1, 2).is_err());
    }

    #[test]
    fn position_code_distinguishes_cells() {
        let p = position_encoding::<f64>(4, 4, 16).to_vec();
        let row = |i: usize| &p[i * 16..(i + 1) * 16];
        for a in 0..16 {
            for b in a + 1..16 {
                assert_ne!(row(a), row(b));
            }
        }
    }

    #[test]
    fn shifted_window_round_trip_index() {
        let win = Windows { h: 4, w: 4, wh: 2, ww: 2, shift: (1, 1) };
        let fwd = win.roll_index(1, 1, 1, 1);
        let back = win.roll_index(1, 1, 3, 3);
        for i in 0..16 {
            assert_eq!(fwd[back[i]], i);
        }
        let bias = win.shift_bias::<f64>(1).unwrap();
        assert_eq!(bias.shape(), [4, 1, 4, 4]);
        // the top-left window holds one region only
        assert!(bias.to_vec()[..16].iter().all(|&v| v == 0.0));
        // the bottom-right window mixes four regions
        assert!(bias.to_vec()[48..].iter().any(|&v| v < -1.0));
    }
}
