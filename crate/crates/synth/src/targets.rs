//! Annotated grasps per object, dense RGS target maps, and single-cell weak labels.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use ogrg_geometry::{wrap_half_turn, GraspPose, GraspRectangle, JAW_RATIO};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::grasped_object;
use crate::render::{Raster, Rendered};
use crate::world::{Part, Scene, Shape};

/// Discrete rotations of the affordance stack, spanning 180°.
pub const N_ROTATIONS: usize = 6;
/// Opening width normalizer for dense width maps, native pixels.
pub const MAX_WIDTH_NATIVE: f64 = 150.0;
/// Fixed gripper opening for affordance grasps, native pixels.
pub const L_STAR_NATIVE: f64 = 96.0;
/// Clearance added on each side of an object's extent when annotating grasps.
pub const GRASP_MARGIN: f64 = 10.0;

/// Angle of rotation bin `k`, in `(−π/2, π/2]`.
pub fn rotation_angle(k: usize) -> f64 {
    wrap_half_turn(k as f64 * FRAC_PI_6)
}

fn rect_from_local(scene: &Scene, i: usize, local: (f64, f64), axis: f64, extent: f64) -> GraspRectangle {
    let o = &scene.objects[i];
    let (cx, cy) = o.centroid();
    let (s, c) = o.orientation.sin_cos();
    let l = extent + 2.0 * GRASP_MARGIN;
    GraspRectangle::new(
        cx + c * local.0 - s * local.1,
        cy + s * local.0 + c * local.1,
        wrap_half_turn(o.orientation + axis),
        l,
        JAW_RATIO * l,
    )
}

/// Candidate grasps by shape, before the oracle filter. Native coordinates.
fn candidate_grasps(scene: &Scene, i: usize) -> Vec<GraspRectangle> {
    let k = scene.objects[i].kind();
    match k.shape {
        Shape::Circle => (0..N_ROTATIONS)
            .map(|b| rect_from_local(scene, i, (0.0, 0.0), b as f64 * FRAC_PI_6, k.a))
            .collect(),
        Shape::Square => [0.0, FRAC_PI_2]
            .iter()
            .map(|&ax| rect_from_local(scene, i, (0.0, 0.0), ax, k.a))
            .collect(),
        Shape::Rectangle => [-0.25, 0.0, 0.25]
            .iter()
            .map(|&f| rect_from_local(scene, i, (f * k.a, 0.0), FRAC_PI_2, k.b))
            .collect(),
        Shape::Triangle => {
            // across each edge toward its opposite vertex, centered on that chord
            let r_in = k.a / (2.0 * 3f64.sqrt());
            [-90.0f64, 30.0, 150.0]
                .iter()
                .map(|&deg| {
                    let t = deg.to_radians();
                    let (dx, dy) = (t.cos(), t.sin());
                    let shift = r_in / 2.0;
                    rect_from_local(scene, i, (dx * shift, dy * shift), t, 3.0 * r_in)
                })
                .collect()
        }
        Shape::Ell => {
            let parts = k.parts();
            let mut out = Vec::new();
            // horizontal arm: across its thickness at 65% of its length
            if let Part::Polygon(v) = &parts[0] {
                let (x0, y0, x1, y1) = (v[0].0, v[0].1, v[2].0, v[2].1);
                let x = x0 + 0.65 * (x1 - x0);
                out.push(rect_from_local(scene, i, (x, (y0 + y1) / 2.0), FRAC_PI_2, y1 - y0));
            }
            if let Part::Polygon(v) = &parts[1] {
                let (x0, y0, x1, y1) = (v[0].0, v[0].1, v[2].0, v[2].1);
                let y = (y0 - k.b) + 0.65 * (y1 - (y0 - k.b));
                out.push(rect_from_local(scene, i, ((x0 + x1) / 2.0, y), 0.0, x1 - x0));
            }
            out
        }
    }
}

/// Annotated grasps of object `i` that the oracle accepts, native coordinates.
pub fn object_grasps(scene: &Scene, i: usize) -> Vec<GraspRectangle> {
    candidate_grasps(scene, i)
        .into_iter()
        .filter(|r| {
            let pose = GraspPose {
                x: r.cx,
                y: r.cy,
                z: 0.0,
                theta: r.angle,
                l: r.width,
            };
            grasped_object(scene, &pose) == Some(i)
        })
        .collect()
}

/// Converts a native rectangle to pixel coordinates of a render.
pub fn rect_to_pixels(r: &GraspRectangle, raster: Raster) -> GraspRectangle {
    let (x, y) = raster.from_native(r.cx, r.cy);
    let s = raster.scale();
    GraspRectangle::new(x, y, r.angle, r.width / s, r.height / s)
}

/// Dense supervision for one target at one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTargets {
    pub size: usize,
    pub mask: Vec<bool>,
    pub quality: Vec<f32>,
    pub sin2: Vec<f32>,
    pub cos2: Vec<f32>,
    /// Opening width over [`MAX_WIDTH_NATIVE`].
    pub opening: Vec<f32>,
}

/// [`MAX_WIDTH_NATIVE`] in pixels of a `size × size` render.
pub fn max_width_px(size: usize) -> f64 {
    MAX_WIDTH_NATIVE / Raster::new(size).scale()
}

/// Rasterizes the center third (along the opening axis) of each pixel-space
/// rectangle; later rectangles overwrite earlier ones where they overlap.
pub fn dense_targets(size: usize, mask: Vec<bool>, grasps_px: &[GraspRectangle]) -> DenseTargets {
    let n = size * size;
    let w_max = max_width_px(size);
    let mut t = DenseTargets {
        size,
        mask,
        quality: vec![0.0; n],
        sin2: vec![0.0; n],
        cos2: vec![0.0; n],
        opening: vec![0.0; n],
    };
    for r in grasps_px {
        let (s, c) = r.angle.sin_cos();
        let (s2, c2) = (2.0 * r.angle).sin_cos();
        for y in 0..size {
            for x in 0..size {
                let (du, dv) = (x as f64 - r.cx, y as f64 - r.cy);
                let along = du * c + dv * s;
                let across = -du * s + dv * c;
                if along.abs() <= r.width / 6.0 && across.abs() <= r.height / 2.0 {
                    let i = y * size + x;
                    t.quality[i] = 1.0;
                    t.sin2[i] = s2 as f32;
                    t.cos2[i] = c2 as f32;
                    t.opening[i] = (r.width / w_max) as f32;
                }
            }
        }
    }
    t
}

/// One labeled cell `(x, y, k)` of the affordance stack, in render pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabel {
    pub x: u32,
    pub y: u32,
    pub k: u32,
    pub label: u8,
}

/// Native-coordinate pose of an affordance cell with the fixed opening.
pub fn cell_pose(raster: Raster, x: usize, y: usize, k: usize) -> GraspPose {
    let (u, v) = raster.to_native(x as f64, y as f64);
    GraspPose {
        x: u,
        y: v,
        z: 0.0,
        theta: rotation_angle(k),
        l: L_STAR_NATIVE,
    }
}

/// Samples one weak label: half on the target (labelled by the oracle), a
/// quarter on other objects and a quarter on the table (both labelled 0).
pub fn sample_weak_label<R: Rng + ?Sized>(scene: &Scene, rendered: &Rendered, target: usize, rng: &mut R) -> WeakLabel {
    let size = rendered.size;
    let raster = Raster::new(size);
    let pick = |rng: &mut R, want: &dyn Fn(Option<u8>) -> bool| -> Option<usize> {
        let cells: Vec<usize> = (0..size * size).filter(|&i| want(rendered.labels[i])).collect();
        (!cells.is_empty()).then(|| cells[rng.gen_range(0..cells.len())])
    };
    let r: f64 = rng.gen();
    let t = target as u8;
    let cell = if r < 0.5 {
        pick(rng, &|l| l == Some(t))
    } else if r < 0.75 {
        pick(rng, &|l| l.is_some() && l != Some(t)).or_else(|| pick(rng, &|l| l.is_none()))
    } else {
        pick(rng, &|l| l.is_none())
    }
    .or_else(|| pick(rng, &|l| l == Some(t)))
    .expect("target covers at least one pixel");
    let k = rng.gen_range(0..N_ROTATIONS);
    let (x, y) = (cell % size, cell / size);
    let label = grasped_object(scene, &cell_pose(raster, x, y, k)) == Some(target);
    WeakLabel {
        x: x as u32,
        y: y as u32,
        k: k as u32,
        label: label as u8,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_targets_fill_center_third() {
        let size = 32;
        let r = GraspRectangle::new(10.0, 12.0, 0.0, 12.0, 4.0);
        let t = dense_targets(size, vec![false; size * size], &[r]);
        let hits: Vec<(usize, usize)> = (0..size * size).filter(|&i| t.quality[i] == 1.0).map(|i| (i % size, i / size)).collect();
        assert_eq!(hits.len(), 25);
        assert!(hits.iter().all(|&(x, y)| (8..=12).contains(&x) && (10..=14).contains(&y)));
        let i = 12 * size + 10;
        assert_eq!((t.sin2[i], t.cos2[i]), (0.0, 1.0));
        assert!((t.opening[i] as f64 - 12.0 / max_width_px(size)).abs() < 1e-6);

        // turned a quarter: opening runs down the rows
        let r = GraspRectangle::new(10.0, 12.0, FRAC_PI_2, 12.0, 2.0);
        let t = dense_targets(size, vec![false; size * size], &[r]);
        let hits: Vec<(usize, usize)> = (0..size * size).filter(|&i| t.quality[i] == 1.0).map(|i| (i % size, i / size)).collect();
        assert!(hits.iter().all(|&(x, y)| (9..=11).contains(&x) && (10..=14).contains(&y)));
        assert!(hits.contains(&(10, 10)) && hits.contains(&(10, 14)));
        assert!((t.cos2[i] + 1.0).abs() < 1e-6 && t.sin2[i].abs() < 1e-6);
    }
}
