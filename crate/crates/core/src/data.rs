//! Dataset records to network-ready examples and batches.

use ogrg_geometry::GraspRectangle;
use ogrg_synth::{dense_targets, DatasetRecord, DenseTargets, WeakLabel};
use ogrg_tensor::{Real, Tensor};

use crate::encoders::{normalize_depth, normalize_image, LangInput};
use crate::error::{CoreError, Result};
use crate::losses::{CellLabel, RgsTargets};
use crate::mgn::{mgn_input, MGN_PLANES};
use crate::model::ModelInput;
use crate::vocab::{Tokens, Vocab};

/// One preprocessed sample.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub height: usize,
    pub width: usize,
    /// Standardized planar RGB.
    pub image: Vec<f32>,
    /// Normalized depth.
    pub depth: Vec<f32>,
    /// Raw depth, meters.
    pub depth_m: Vec<f32>,
    pub expr: String,
    pub tokens: Tokens,
    pub dense: DenseTargets,
    /// Ground-truth grasps, pixels.
    pub grasps: Vec<GraspRectangle>,
    pub weak: WeakLabel,
}

impl Example {
    pub fn from_record(rec: &DatasetRecord, vocab: &Vocab, max_tokens: usize) -> Result<Self> {
        if rec.width != rec.height {
            return Err(CoreError::input(format!("{}: images must be square, got {}x{}", rec.id, rec.width, rec.height)));
        }
        let (h, w) = (rec.height, rec.width);
        if rec.target_mask.len() != h * w || rec.depth_m.len() != h * w {
            return Err(CoreError::input(format!("{}: plane sizes do not match {w}x{h}", rec.id)));
        }
        Ok(Example {
            id: rec.id.clone(),
            height: h,
            width: w,
            image: normalize_image(&rec.rgb, h, w)?,
            depth: normalize_depth(&rec.depth_m)?,
            depth_m: rec.depth_m.clone(),
            expr: rec.expr.clone(),
            tokens: vocab.tokenize(&rec.expr, max_tokens)?,
            dense: dense_targets(w, rec.target_mask.clone(), &rec.grasps),
            grasps: rec.grasps.clone(),
            weak: rec.weak,
        })
    }

    pub fn mask_f32(&self) -> Vec<f32> {
        self.dense.mask.iter().map(|&m| m as u8 as f32).collect()
    }

    pub fn cell(&self) -> CellLabel {
        CellLabel {
            x: self.weak.x as usize,
            y: self.weak.y as usize,
            k: self.weak.k as usize,
            label: self.weak.label,
        }
    }
}

fn same_size(items: &[&Example]) -> Result<(usize, usize)> {
    let first = items.first().ok_or_else(|| CoreError::input("empty batch"))?;
    let (h, w) = (first.height, first.width);
    if items.iter().any(|e| e.height != h || e.width != w || e.tokens.ids.len() != first.tokens.ids.len()) {
        return Err(CoreError::input("batch mixes image sizes or expression lengths"));
    }
    Ok((h, w))
}

fn tensor<T: Real>(v: impl Iterator<Item = f32>, shape: &[usize]) -> Result<Tensor<T>> {
    Ok(Tensor::from_vec(v.map(|x| T::lit(x as f64)).collect(), shape)?)
}

pub fn model_input<T: Real>(items: &[&Example]) -> Result<ModelInput<T>> {
    let (h, w) = same_size(items)?;
    let b = items.len();
    let len = items[0].tokens.ids.len();
    Ok(ModelInput {
        image: tensor(items.iter().flat_map(|e| e.image.iter().copied()), &[b, 3, h, w])?,
        depth: tensor(items.iter().flat_map(|e| e.depth.iter().copied()), &[b, 1, h, w])?,
        lang: LangInput {
            batch: b,
            len,
            ids: items.iter().flat_map(|e| e.tokens.ids.iter().copied()).collect(),
            keep: items.iter().flat_map(|e| e.tokens.mask.iter().copied()).collect(),
        },
    })
}

pub fn target_masks(items: &[&Example]) -> Vec<f32> {
    items.iter().flat_map(|e| e.mask_f32()).collect()
}

pub fn rgs_targets<T: Real>(items: &[&Example]) -> Result<RgsTargets<T>> {
    let (h, w) = same_size(items)?;
    let b = items.len();
    let region = items.iter().flat_map(|e| e.dense.quality.iter().map(|&q| (q > 0.0) as u8 as f32));
    let region2 = items.iter().flat_map(|e| {
        let r: Vec<f32> = e.dense.quality.iter().map(|&q| (q > 0.0) as u8 as f32).collect();
        [r.clone(), r].concat()
    });
    Ok(RgsTargets {
        mask: target_masks(items),
        q: tensor(items.iter().flat_map(|e| e.dense.quality.iter().copied()), &[b, 1, h, w])?,
        theta: tensor(
            items.iter().flat_map(|e| e.dense.sin2.iter().chain(&e.dense.cos2).copied()),
            &[b, 2, h, w],
        )?,
        p: tensor(items.iter().flat_map(|e| e.dense.opening.iter().copied()), &[b, 1, h, w])?,
        region: tensor(region, &[b, 1, h, w])?,
        region2: tensor(region2, &[b, 2, h, w])?,
    })
}

/// `[B, 5, H, W]` grasp-network input conditioned on the given masks
/// (one `H·W` plane per item).
pub fn mgn_batch<T: Real>(items: &[&Example], masks: &[Vec<f32>]) -> Result<Tensor<T>> {
    let (h, w) = same_size(items)?;
    if masks.len() != items.len() {
        return Err(CoreError::Contract(format!("{} masks for {} items", masks.len(), items.len())));
    }
    let mut data = Vec::with_capacity(items.len() * MGN_PLANES * h * w);
    for (e, m) in items.iter().zip(masks) {
        data.extend(mgn_input(&e.image, &e.depth, m, h, w)?);
    }
    tensor(data.into_iter(), &[items.len(), MGN_PLANES, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ogrg_synth::{gen_sample, GenConfig};

    fn example(idx: u64) -> Example {
        let s = gen_sample(&GenConfig::new(32, 5), idx).unwrap();
        Example::from_record(&DatasetRecord::from_sample(&s), &Vocab::synthetic(), 12).unwrap()
    }

    #[test]
    fn batches_have_expected_shapes() {
        let (a, b) = (example(0), example(1));
        let items = [&a, &b];
        let input: ModelInput<f32> = model_input(&items).unwrap();
        assert_eq!(input.image.shape(), &[2, 3, 32, 32]);
        assert_eq!(input.lang.ids.len(), 24);
        let t: RgsTargets<f32> = rgs_targets(&items).unwrap();
        assert_eq!(t.theta.shape(), &[2, 2, 32, 32]);
        assert_eq!(t.region.data().iter().sum::<f32>() * 2.0, t.region2.data().iter().sum::<f32>());
        assert!(t.region.data().iter().sum::<f32>() > 0.0);
        let x: Tensor<f32> = mgn_batch(&items, &[a.mask_f32(), b.mask_f32()]).unwrap();
        assert_eq!(x.shape(), &[2, 5, 32, 32]);
    }

    #[test]
    fn grasp_regions_lie_inside_the_frame_of_their_rectangles() {
        let e = example(3);
        for (i, &q) in e.dense.quality.iter().enumerate() {
            if q > 0.0 {
                let (x, y) = ((i % 32) as f64, (i / 32) as f64);
                assert!(e.grasps.iter().any(|r| {
                    let (s, c) = r.angle.sin_cos();
                    let (dx, dy) = (x - r.cx, y - r.cy);
                    (dx * c + dy * s).abs() <= r.width / 6.0 + 1e-9
                }));
            }
        }
    }
}
