//! Inference, metrics and oracle-adjudicated grasp simulation.

use ogrg_geometry::{
    candidate_poses, extract_rgs_pose, jaccard_at_n, mask_miou, mask_oiou, BinaryMask, GraspOutcome, GraspPose,
    RgsMaps,
};
use ogrg_synth::{grasp_success_oracle, max_width_px, DatasetRecord, Raster, SceneSample, L_STAR_NATIVE};
use ogrg_tensor::{no_grad, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::{mgn_batch, model_input, Example};
use crate::decoder::mask_from_logits;
use crate::error::{CoreError, Result};
use crate::mgn::{extract_rga_pose, Mgn};
use crate::model::Ogrg;
use crate::vocab::Vocab;

/// Smoothed-quality floor and size cap of the J@Any candidate set.
pub const ANY_MIN_QUALITY: f64 = 0.3;
pub const ANY_CAP: usize = 20;

/// Dense grasp maps of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspMaps {
    pub quality: Vec<f32>,
    pub sin2: Vec<f32>,
    pub cos2: Vec<f32>,
    pub opening: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<bool>,
    pub maps: Option<GraspMaps>,
}

impl Prediction {
    fn rgs_maps<'a>(&'a self, depth_m: &'a [f32]) -> Option<RgsMaps<'a>> {
        self.maps.as_ref().map(|m| RgsMaps {
            height: self.height,
            width: self.width,
            quality: &m.quality,
            sin2: &m.sin2,
            cos2: &m.cos2,
            opening: &m.opening,
            depth: depth_m,
        })
    }

    /// Ranked poses at quality peaks (grasp-synthesis models only).
    pub fn poses(&self, depth_m: &[f32], top_n: usize) -> Result<Vec<GraspPose>> {
        let maps = self
            .rgs_maps(depth_m)
            .ok_or_else(|| CoreError::Contract("no grasp maps in a grounding-only prediction".into()))?;
        Ok(extract_rgs_pose(&maps, top_n, max_width_px(self.width))?)
    }

    pub fn candidates(&self, depth_m: &[f32]) -> Result<Vec<GraspPose>> {
        let maps = self
            .rgs_maps(depth_m)
            .ok_or_else(|| CoreError::Contract("no grasp maps in a grounding-only prediction".into()))?;
        Ok(candidate_poses(&maps, ANY_MIN_QUALITY, ANY_CAP, max_width_px(self.width))?)
    }
}

fn planes(t: &Tensor<f32>, b: usize, plane: usize) -> Vec<Vec<f32>> {
    let d = t.data();
    (0..b).map(|i| d[i * plane..(i + 1) * plane].to_vec()).collect()
}

/// Eval-mode predictions in batches of `batch`.
pub fn predict(model: &Ogrg<f32>, items: &[&Example], batch: usize) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        let (h, w) = (chunk[0].height, chunk[0].width);
        let plane = h * w;
        let b = chunk.len();
        let o = no_grad(|| model.forward(&model_input(chunk)?, false))?;
        let masks = mask_from_logits(&o.m)?;
        let maps = match &o.rgs {
            Some(r) => {
                let theta = r.theta.data();
                let q = planes(&r.q, b, plane);
                let p = planes(&r.p, b, plane);
                (0..b)
                    .map(|i| {
                        Some(GraspMaps {
                            quality: q[i].clone(),
                            sin2: theta[2 * i * plane..(2 * i + 1) * plane].to_vec(),
                            cos2: theta[(2 * i + 1) * plane..(2 * i + 2) * plane].to_vec(),
                            opening: p[i].clone(),
                        })
                    })
                    .collect()
            }
            None => vec![None; b],
        };
        for (i, maps) in maps.into_iter().enumerate() {
            out.push(Prediction {
                height: h,
                width: w,
                mask: masks[i * plane..(i + 1) * plane].to_vec(),
                maps,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub miou: f64,
    pub oiou: f64,
    /// Fractions in [0, 1]; absent for grounding-only models.
    pub j1: Option<f64>,
    pub j_any: Option<f64>,
}

pub fn metrics(preds: &[Prediction], items: &[&Example]) -> Result<Metrics> {
    if preds.len() != items.len() || preds.is_empty() {
        return Err(CoreError::Contract(format!("{} predictions for {} samples", preds.len(), items.len())));
    }
    let mut pm = Vec::with_capacity(preds.len());
    let mut gm = Vec::with_capacity(preds.len());
    let (mut j1, mut jany, mut graded) = (0usize, 0usize, 0usize);
    for (p, e) in preds.iter().zip(items) {
        pm.push(BinaryMask::new(p.height, p.width, p.mask.clone())?);
        gm.push(BinaryMask::new(e.height, e.width, e.dense.mask.clone())?);
        if p.maps.is_some() && !e.grasps.is_empty() {
            graded += 1;
            j1 += jaccard_at_n(&p.poses(&e.depth_m, 1)?, &e.grasps, 1)? as usize;
            let cands = p.candidates(&e.depth_m)?;
            jany += jaccard_at_n(&cands, &e.grasps, cands.len().max(1))? as usize;
        }
    }
    let frac = |n: usize| (graded > 0).then(|| n as f64 / graded as f64);
    Ok(Metrics {
        count: preds.len(),
        miou: mask_miou(&pm, &gm)?,
        oiou: mask_oiou(&pm, &gm)?,
        j1: frac(j1),
        j_any: frac(jany),
    })
}

/// One simulated grasp attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: String,
    /// Pixel-space pose that was executed.
    pub pose: GraspPose,
    pub outcome: GraspOutcome,
}

/// Segment, predict affordances from the predicted mask, grasp at the argmax,
/// and let the scene oracle decide.
pub fn simulate(model: &Ogrg<f32>, mgn: &Mgn<f32>, scenes: &[SceneSample], vocab: &Vocab) -> Result<Vec<Episode>> {
    let max_tokens = model.cfg.backbone.max_tokens;
    let mut out = Vec::with_capacity(scenes.len());
    for s in scenes {
        let e = Example::from_record(&DatasetRecord::from_sample(s), vocab, max_tokens)?;
        let pred = predict(model, &[&e], 1)?.remove(0);
        let mask: Vec<f32> = pred.mask.iter().map(|&m| m as u8 as f32).collect();
        out.push(grasp_episode(mgn, s, &e, &mask)?);
    }
    Ok(out)
}

/// Runs the grasp network on `mask` and adjudicates the argmax grasp.
pub fn grasp_episode(mgn: &Mgn<f32>, s: &SceneSample, e: &Example, mask: &[f32]) -> Result<Episode> {
    let (h, w) = (e.height, e.width);
    let raster = Raster::new(w);
    let x = mgn_batch(&[e], &[mask.to_vec()])?;
    let a = no_grad(|| mgn.forward(&x, false))?;
    let pose = extract_rga_pose(&a.data(), h, w, &e.depth_m, L_STAR_NATIVE / raster.scale())?;
    let (u, v) = raster.to_native(pose.x, pose.y);
    let native = GraspPose {
        x: u,
        y: v,
        z: pose.z,
        theta: pose.theta,
        l: L_STAR_NATIVE,
    };
    let o = grasp_success_oracle(&s.scene, s.target(), &native);
    Ok(Episode {
        id: s.id.clone(),
        pose,
        outcome: GraspOutcome {
            grasped_any: o.grasped_any,
            grasped_target: o.grasped_target,
        },
    })
}
