//! Sample generation and the on-disk dataset format.
//!
//! A dataset directory holds `manifest.jsonl` plus `rgb/`, `depth/` and
//! `mask/` PNGs named by sample id. RGB is 8-bit, depth 16-bit millimeters,
//! masks 8-bit with values {0, 255}.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ogrg_geometry::GraspRectangle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};
use crate::grammar::{gen_expression, Expression, TemplateClass};
use crate::render::{render, Raster, Rendered};
use crate::targets::{object_grasps, rect_to_pixels, sample_weak_label, WeakLabel};
use crate::world::{gen_scene, Bank, Scene};

const SCENE_RETRIES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    /// Render resolution (square).
    pub size: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub templates: Vec<TemplateClass>,
    /// Half of the scenes may repeat pool objects when set.
    pub allow_duplicates: bool,
    pub bank: Bank,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(size: usize, seed: u64) -> Self {
        GenConfig {
            size,
            min_objects: 1,
            max_objects: 7,
            templates: TemplateClass::ALL.to_vec(),
            allow_duplicates: true,
            bank: Bank::Train,
            seed,
        }
    }
}

/// A generated scene with its expression, annotations and render.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub id: String,
    pub scene: Scene,
    pub expression: Expression,
    pub rendered: Rendered,
    /// Target grasps in native coordinates.
    pub grasps_native: Vec<GraspRectangle>,
    pub weak: WeakLabel,
}

impl SceneSample {
    pub fn target(&self) -> usize {
        self.expression.target
    }

    /// Target grasps in render pixel coordinates.
    pub fn grasps(&self) -> Vec<GraspRectangle> {
        let raster = Raster::new(self.rendered.size);
        self.grasps_native.iter().map(|r| rect_to_pixels(r, raster)).collect()
    }
}

/// Independent, reproducible stream per sample index.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates sample `index` of the dataset described by `cfg`. Scenes without
/// an expressible unique referent, or whose target has no valid grasp, are
/// resampled.
pub fn gen_sample(cfg: &GenConfig, index: u64) -> Result<SceneSample> {
    if cfg.templates.is_empty() {
        return Err(SynthError::Parameter("no template classes".into()));
    }
    if cfg.min_objects > cfg.max_objects {
        return Err(SynthError::Parameter("min_objects exceeds max_objects".into()));
    }
    if cfg.size == 0 {
        return Err(SynthError::Parameter("zero render size".into()));
    }
    let mut rng = sample_rng(cfg.seed, index);
    let class = cfg.templates[rng.gen_range(0..cfg.templates.len())];
    let mut last = None;
    for _ in 0..SCENE_RETRIES {
        let n = rng.gen_range(cfg.min_objects..=cfg.max_objects);
        let dup = cfg.allow_duplicates && rng.gen_bool(0.5);
        let scene = gen_scene(&mut rng, n, dup, cfg.bank)?;
        let expression = match gen_expression(&scene, class, &mut rng) {
            Ok(e) => e,
            Err(e) => {
                last = Some(e);
                continue;
            }
        };
        let target = expression.target;
        let grasps_native = object_grasps(&scene, target);
        let rendered = render(&scene, cfg.size);
        if grasps_native.is_empty() || !rendered.labels.contains(&Some(target as u8)) {
            last = Some(SynthError::Generation("target has no valid grasp".into()));
            continue;
        }
        let weak = sample_weak_label(&scene, &rendered, target, &mut rng);
        return Ok(SceneSample {
            id: format!("{index:06}"),
            scene,
            expression,
            rendered,
            grasps_native,
            weak,
        });
    }
    Err(last.unwrap_or_else(|| SynthError::Generation("no sample".into())))
}

/// Manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub rgb: String,
    pub depth: String,
    pub expr: String,
    pub template: TemplateClass,
    pub target_mask: String,
    /// `[x, y, theta_deg, w, h]` in pixels.
    pub grasps: Vec<[f64; 5]>,
    pub weak: WeakLabel,
}

/// A dataset sample loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
    pub depth_m: Vec<f32>,
    pub expr: String,
    pub template: TemplateClass,
    pub target_mask: Vec<bool>,
    pub grasps: Vec<GraspRectangle>,
    pub weak: WeakLabel,
}

impl DatasetRecord {
    pub fn from_sample(s: &SceneSample) -> Self {
        DatasetRecord {
            id: s.id.clone(),
            width: s.rendered.size,
            height: s.rendered.size,
            rgb: s.rendered.rgb.clone(),
            depth_m: s.rendered.depth_m(),
            expr: s.expression.text.clone(),
            template: s.expression.class,
            target_mask: s.rendered.mask(s.target()),
            grasps: s.grasps(),
            weak: s.weak,
        }
    }
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Image {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn write_png(path: &Path, w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(data).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

struct Png {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn read_png(path: &Path) -> Result<Png> {
    let file = BufReader::new(File::open(path).map_err(|e| image_err(path, e))?);
    let mut reader = png::Decoder::new(file).read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| image_err(path, e))?;
    data.truncate(info.buffer_size());
    Ok(Png {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        data,
    })
}

pub fn write_rgb_png(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
    write_png(path, w, h, png::ColorType::Rgb, png::BitDepth::Eight, rgb)
}

pub fn write_gray_png(path: &Path, w: usize, h: usize, gray: &[u8]) -> Result<()> {
    write_png(path, w, h, png::ColorType::Grayscale, png::BitDepth::Eight, gray)
}

pub fn write_mask_png(path: &Path, w: usize, h: usize, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_gray_png(path, w, h, &bytes)
}

/// Depth in meters, stored as 16-bit millimeters.
pub fn write_depth_png(path: &Path, w: usize, h: usize, depth_m: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(2 * depth_m.len());
    for &d in depth_m {
        let mm = (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        bytes.extend_from_slice(&mm.to_be_bytes());
    }
    write_png(path, w, h, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let p = read_png(path)?;
    if (p.color, p.depth) != (png::ColorType::Rgb, png::BitDepth::Eight) {
        return Err(image_err(path, format!("expected 8-bit RGB, got {:?} {:?}", p.color, p.depth)));
    }
    Ok((p.width, p.height, p.data))
}

pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let p = read_png(path)?;
    if (p.color, p.depth) != (png::ColorType::Grayscale, png::BitDepth::Eight) {
        return Err(image_err(path, format!("expected 8-bit gray, got {:?} {:?}", p.color, p.depth)));
    }
    if let Some(v) = p.data.iter().find(|&&v| v != 0 && v != 255) {
        return Err(image_err(path, format!("mask value {v} is not 0 or 255")));
    }
    Ok((p.width, p.height, p.data.iter().map(|&v| v == 255).collect()))
}

pub fn read_depth_png(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let p = read_png(path)?;
    if (p.color, p.depth) != (png::ColorType::Grayscale, png::BitDepth::Sixteen) {
        return Err(image_err(path, format!("expected 16-bit gray, got {:?} {:?}", p.color, p.depth)));
    }
    let d = p
        .data
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 1000.0)
        .collect();
    Ok((p.width, p.height, d))
}

/// Writes images and the manifest into `dir` (created if missing).
pub fn export_dataset(records: &[DatasetRecord], dir: &Path) -> Result<()> {
    for sub in ["rgb", "depth", "mask"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut manifest = BufWriter::new(File::create(dir.join("manifest.jsonl"))?);
    for r in records {
        let rec = ManifestRecord {
            id: r.id.clone(),
            rgb: format!("rgb/{}.png", r.id),
            depth: format!("depth/{}.png", r.id),
            expr: r.expr.clone(),
            template: r.template,
            target_mask: format!("mask/{}.png", r.id),
            grasps: r
                .grasps
                .iter()
                .map(|g| [g.cx, g.cy, g.angle.to_degrees(), g.width, g.height])
                .collect(),
            weak: r.weak,
        };
        write_rgb_png(&dir.join(&rec.rgb), r.width, r.height, &r.rgb)?;
        write_depth_png(&dir.join(&rec.depth), r.width, r.height, &r.depth_m)?;
        write_mask_png(&dir.join(&rec.target_mask), r.width, r.height, &r.target_mask)?;
        serde_json::to_writer(&mut manifest, &rec).map_err(|e| SynthError::Input(e.to_string()))?;
        manifest.write_all(b"\n")?;
    }
    manifest.flush()?;
    Ok(())
}

/// Reads `manifest.jsonl` (without loading images).
pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join("manifest.jsonl");
    let reader = BufReader::new(File::open(&path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| SynthError::Record {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads every sample of a dataset directory.
pub fn import_dataset(dir: &Path) -> Result<Vec<DatasetRecord>> {
    read_manifest(dir)?
        .into_iter()
        .map(|m| {
            let (w, h, rgb) = read_rgb_png(&dir.join(&m.rgb))?;
            let (dw, dh, depth_m) = read_depth_png(&dir.join(&m.depth))?;
            let (mw, mh, target_mask) = read_mask_png(&dir.join(&m.target_mask))?;
            if (dw, dh) != (w, h) || (mw, mh) != (w, h) {
                return Err(SynthError::Input(format!("sample {}: image sizes differ", m.id)));
            }
            Ok(DatasetRecord {
                id: m.id,
                width: w,
                height: h,
                rgb,
                depth_m,
                expr: m.expr,
                template: m.template,
                target_mask,
                grasps: m
                    .grasps
                    .iter()
                    .map(|g| GraspRectangle::new(g[0], g[1], g[2].to_radians(), g[3], g[4]))
                    .collect(),
                weak: m.weak,
            })
        })
        .collect()
}
