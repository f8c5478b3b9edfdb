//! Predictions as evaluable records, scoring, and the `eval`/`predict` commands.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ogrg_core::data::{mgn_batch, Example};
use ogrg_core::eval::predict as predict_batch;
use ogrg_core::mgn::{extract_rga_pose, Mgn};
use ogrg_core::Ogrg;
use ogrg_geometry::dump::{read_dump, write_dump, PredictionRecord};
use ogrg_geometry::{jaccard_at_n, mask_miou, mask_oiou, BinaryMask, GraspPose};
use ogrg_synth::dataset::{read_mask_png, write_mask_png, write_rgb_png};
use ogrg_synth::{import_dataset, DatasetRecord, Raster, L_STAR_NATIVE, N_ROTATIONS};
use ogrg_tensor::no_grad;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};
use crate::heatmap::colorize;
use crate::runs::{load_run, prepare_out_dir};

/// Published forward rate of the full model on an RTX 2080 Ti, for context only.
pub const REFERENCE_FPS: f64 = 17.59;

/// One sample's prediction in evaluable form.
pub struct Predicted {
    pub id: String,
    pub mask: BinaryMask,
    /// Ranked, pixel space.
    pub poses: Vec<GraspPose>,
    /// Quality (grasp-synthesis) or best-rotation affordance, for heatmaps.
    pub heat: Option<Vec<f32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Miou,
    Oiou,
    J1,
    JAny,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Miou, Metric::Oiou, Metric::J1, Metric::JAny];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Miou => "miou",
            Metric::Oiou => "oiou",
            Metric::J1 => "j1",
            Metric::JAny => "j_any",
        }
    }
}

pub fn parse_metrics(s: &str) -> Result<Vec<Metric>> {
    s.split(',')
        .map(|m| match m.trim() {
            "miou" => Ok(Metric::Miou),
            "oiou" => Ok(Metric::Oiou),
            "j1" | "j@1" => Ok(Metric::J1),
            "jany" | "j_any" | "j@any" => Ok(Metric::JAny),
            other => Err(CliError::usage(format!("unknown metric {other:?}; use miou, oiou, j1, jany"))),
        })
        .collect()
}

/// Grasp-network affordances on `mask`: the argmax pose and the per-pixel best rotation.
pub fn affordance_pose(mgn: &Mgn<f32>, e: &Example, mask: &[f32]) -> Result<(GraspPose, Vec<f32>)> {
    let (h, w) = (e.height, e.width);
    let x = mgn_batch(&[e], &[mask.to_vec()])?;
    let a = no_grad(|| mgn.forward(&x, false))?.to_vec();
    let pose = extract_rga_pose(&a, h, w, &e.depth_m, L_STAR_NATIVE / Raster::new(w).scale())?;
    let plane = h * w;
    let best = (0..plane)
        .map(|i| (0..N_ROTATIONS).map(|k| a[k * plane + i]).fold(0.0f32, f32::max))
        .collect();
    Ok((pose, best))
}

/// Runs the grounding network (and the grasp network, when given) on one
/// sample; returns the prediction and the grounding forward time.
pub fn predict_one(model: &Ogrg<f32>, mgn: Option<&Mgn<f32>>, e: &Example) -> Result<(Predicted, f64)> {
    let t = Instant::now();
    let p = predict_batch(model, &[e], 1)?.remove(0);
    let secs = t.elapsed().as_secs_f64();
    let mask = BinaryMask::new(p.height, p.width, p.mask.clone())?;
    let (poses, heat) = match (&p.maps, mgn) {
        (Some(maps), _) => {
            let mut poses = p.poses(&e.depth_m, 1)?;
            for c in p.candidates(&e.depth_m)? {
                if !poses.contains(&c) {
                    poses.push(c);
                }
            }
            (poses, Some(maps.quality.clone()))
        }
        (None, Some(mgn)) => {
            let m: Vec<f32> = p.mask.iter().map(|&b| b as u8 as f32).collect();
            let (pose, best) = affordance_pose(mgn, e, &m)?;
            (vec![pose], Some(best))
        }
        (None, None) => (Vec::new(), None),
    };
    Ok((
        Predicted {
            id: e.id.clone(),
            mask,
            poses,
            heat,
        },
        secs,
    ))
}

/// Scores predictions against a dataset. Grasp metrics are reported when any
/// prediction carries poses; J@1 uses the first pose and J@Any all of them.
pub fn score(preds: &[Predicted], truth: &[DatasetRecord], which: &[Metric]) -> Result<Map<String, Value>> {
    let by_id: HashMap<&str, &Predicted> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    if truth.is_empty() {
        return Err(CliError::data("no ground-truth samples"));
    }
    let mut pm = Vec::with_capacity(truth.len());
    let mut gm = Vec::with_capacity(truth.len());
    let (mut j1, mut jany, mut graded) = (0usize, 0usize, 0usize);
    let grasp = preds.iter().any(|p| !p.poses.is_empty());
    for r in truth {
        let p = by_id
            .get(r.id.as_str())
            .ok_or_else(|| CliError::data(format!("no prediction for sample {}", r.id)))?;
        pm.push(p.mask.clone());
        gm.push(BinaryMask::new(r.height, r.width, r.target_mask.clone())?);
        if grasp && !r.grasps.is_empty() {
            graded += 1;
            if !p.poses.is_empty() {
                j1 += jaccard_at_n(&p.poses, &r.grasps, 1)? as usize;
                jany += jaccard_at_n(&p.poses, &r.grasps, p.poses.len())? as usize;
            }
        }
    }
    let mut out = Map::new();
    out.insert("count".into(), truth.len().into());
    for m in which {
        let v = match m {
            Metric::Miou => Value::from(mask_miou(&pm, &gm)?),
            Metric::Oiou => Value::from(mask_oiou(&pm, &gm)?),
            Metric::J1 if graded > 0 => Value::from(j1 as f64 / graded as f64),
            Metric::JAny if graded > 0 => Value::from(jany as f64 / graded as f64),
            _ => Value::Null,
        };
        out.insert(m.key().into(), v);
    }
    Ok(out)
}

/// Reads a prediction dump; mask paths resolve against the dump's directory.
pub fn load_dump(path: &Path) -> Result<Vec<Predicted>> {
    let base = path.parent().unwrap_or(Path::new(""));
    read_dump(path)?
        .into_iter()
        .map(|r| {
            let (w, h, bits) = read_mask_png(&base.join(&r.mask))?;
            Ok(Predicted {
                mask: BinaryMask::new(h, w, bits)?,
                poses: r.grasp_poses(),
                id: r.id,
                heat: None,
            })
        })
        .collect()
}

pub fn load_truth(dir: &Path) -> Result<Vec<DatasetRecord>> {
    import_dataset(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

pub enum Source<'a> {
    Dump(&'a Path),
    Checkpoint {
        path: &'a Path,
        mgn: Option<&'a Path>,
        config: Option<&'a Path>,
    },
}

fn examples(recs: &[DatasetRecord], run: &crate::runs::LoadedRun) -> Result<Vec<Example>> {
    Ok(recs
        .iter()
        .map(|r| Example::from_record(r, &run.vocab, run.cfg.tokens()))
        .collect::<ogrg_core::Result<_>>()?)
}

pub fn eval(source: Source, data: &Path, which: &[Metric]) -> Result<Map<String, Value>> {
    let truth = load_truth(data)?;
    let preds = match source {
        Source::Dump(p) => load_dump(p)?,
        Source::Checkpoint { path, mgn, config } => {
            let run = load_run(path, config)?;
            let mgn_run = mgn.map(|m| load_run(m, None)).transpose()?;
            let mgn = mgn_run.as_ref().map(|r| r.grasp()).transpose()?;
            let model = run.grounding()?;
            examples(&truth, &run)?
                .iter()
                .map(|e| predict_one(model, mgn, e).map(|p| p.0))
                .collect::<Result<_>>()?
        }
    };
    score(&preds, &truth, which)
}

pub struct PredictReport {
    pub images: usize,
    pub resolution: usize,
    pub forward_fps: f64,
}

pub fn predict(
    checkpoint: &Path,
    mgn: Option<&Path>,
    input: &Path,
    out: &Path,
    limit: Option<usize>,
    force: bool,
) -> Result<PredictReport> {
    let run = load_run(checkpoint, None)?;
    let mgn_run = mgn.map(|m| load_run(m, None)).transpose()?;
    let mgn = mgn_run.as_ref().map(|r| r.grasp()).transpose()?;
    let model = run.grounding()?;
    let mut recs = load_truth(input)?;
    recs.truncate(limit.unwrap_or(usize::MAX));
    if recs.is_empty() {
        return Err(CliError::data(format!("{}: no samples", input.display())));
    }
    let items = examples(&recs, &run)?;
    prepare_out_dir(out, force)?;
    fs::create_dir_all(out.join("masks"))?;
    fs::create_dir_all(out.join("heatmaps"))?;
    let mut dump = Vec::with_capacity(items.len());
    let mut times = Vec::with_capacity(items.len());
    for e in &items {
        let (p, secs) = predict_one(model, mgn, e)?;
        times.push(secs);
        let mask_rel = format!("masks/{}.png", p.id);
        write_mask_png(&out.join(&mask_rel), p.mask.width, p.mask.height, &p.mask.bits)?;
        if let Some(heat) = &p.heat {
            let path = out.join(format!("heatmaps/{}.png", p.id));
            write_rgb_png(&path, p.mask.width, p.mask.height, &colorize(heat))?;
        }
        dump.push(PredictionRecord::from_poses(p.id, mask_rel, &p.poses));
    }
    write_dump(&out.join("predictions.jsonl"), &dump)?;
    // the first pass pays one-off allocation costs
    let timed = if times.len() > 1 { &times[1..] } else { &times[..] };
    let total: f64 = timed.iter().sum();
    Ok(PredictReport {
        images: items.len(),
        resolution: items[0].width,
        forward_fps: timed.len() as f64 / total.max(f64::MIN_POSITIVE),
    })
}
