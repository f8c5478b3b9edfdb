//! Grasp poses and their extraction from dense quality/angle/width maps.

use crate::error::{GeometryError, Result};
use crate::rect::{wrap_half_turn, GraspRectangle};

/// Jaw thickness as a fraction of opening width when a pose is drawn as a rectangle.
pub const JAW_RATIO: f64 = 0.5;

/// Smoothing applied to the quality map before peak picking.
pub const QUALITY_SIGMA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspPose {
    /// Column.
    pub x: f64,
    /// Row.
    pub y: f64,
    /// Depth at the center, meters.
    pub z: f64,
    /// Opening axis angle in `(−π/2, π/2]`.
    pub theta: f64,
    /// Opening width, pixels.
    pub l: f64,
}

impl GraspPose {
    pub fn to_rect(&self) -> GraspRectangle {
        GraspRectangle::new(self.x, self.y, self.theta, self.l, self.l * JAW_RATIO)
    }
}

/// Borrowed per-pixel prediction maps of one sample, all `height × width`, row-major.
#[derive(Clone, Copy, Debug)]
pub struct RgsMaps<'a> {
    pub height: usize,
    pub width: usize,
    pub quality: &'a [f32],
    pub sin2: &'a [f32],
    pub cos2: &'a [f32],
    /// Opening width as a fraction of `max_width`.
    pub opening: &'a [f32],
    /// Meters.
    pub depth: &'a [f32],
}

impl RgsMaps<'_> {
    fn check(&self) -> Result<()> {
        let n = self.height * self.width;
        for (name, m) in [
            ("quality", self.quality),
            ("sin2", self.sin2),
            ("cos2", self.cos2),
            ("opening", self.opening),
            ("depth", self.depth),
        ] {
            if m.len() != n {
                return Err(GeometryError::Input(format!(
                    "{name} map has {} values, expected {}x{}",
                    m.len(),
                    self.height,
                    self.width
                )));
            }
        }
        if n == 0 {
            return Err(GeometryError::Input("empty maps".into()));
        }
        Ok(())
    }

    /// Reads the pose at pixel `(x, y)`.
    pub fn pose_at(&self, x: usize, y: usize, max_width: f64) -> GraspPose {
        let i = y * self.width + x;
        let theta = 0.5 * (self.sin2[i] as f64).atan2(self.cos2[i] as f64);
        GraspPose {
            x: x as f64,
            y: y as f64,
            z: self.depth[i] as f64,
            theta: wrap_half_turn(theta),
            l: self.opening[i] as f64 * max_width,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_smooth(map: &[f32], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; map.len()];
    for y in 0..height {
        for x in 0..width {
            rows[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * map[y * width + clampi(x as isize + j as isize - r, width)] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0; map.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * rows[clampi(y as isize + j as isize - r, height) * width + x])
                .sum();
        }
    }
    out
}

/// 8-neighborhood local maxima as `(value, y, x)`, ranked by value descending
/// then `(y, x)` ascending. A plateau contributes only its pixels with no equal
/// neighbor earlier in raster order.
pub fn local_maxima(map: &[f64], height: usize, width: usize) -> Vec<(f64, usize, usize)> {
    let mut peaks = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let v = map[y * width + x];
            let mut is_peak = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= height as isize || nx >= width as isize {
                        continue;
                    }
                    let u = map[ny as usize * width + nx as usize];
                    let earlier = (dy, dx) < (0, 0);
                    if u > v || (earlier && u == v) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push((v, y, x));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    peaks
}

/// Ranked grasp poses at the smoothed quality peaks; at most `top_n`.
pub fn extract_rgs_pose(maps: &RgsMaps<'_>, top_n: usize, max_width: f64) -> Result<Vec<GraspPose>> {
    if top_n < 1 {
        return Err(GeometryError::Parameter("top_n must be at least 1".into()));
    }
    maps.check()?;
    let q = gaussian_smooth(maps.quality, maps.height, maps.width, QUALITY_SIGMA);
    Ok(local_maxima(&q, maps.height, maps.width)
        .into_iter()
        .take(top_n)
        .map(|(_, y, x)| maps.pose_at(x, y, max_width))
        .collect())
}

/// Candidate set for J@Any: smoothed peaks with value at least `min_quality`,
/// capped at `cap`. Always contains the top peak.
pub fn candidate_poses(
    maps: &RgsMaps<'_>,
    min_quality: f64,
    cap: usize,
    max_width: f64,
) -> Result<Vec<GraspPose>> {
    maps.check()?;
    let q = gaussian_smooth(maps.quality, maps.height, maps.width, QUALITY_SIGMA);
    Ok(local_maxima(&q, maps.height, maps.width)
        .into_iter()
        .enumerate()
        .take_while(|(i, p)| *i == 0 || p.0 >= min_quality)
        .take(cap.max(1))
        .map(|(_, (_, y, x))| maps.pose_at(x, y, max_width))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps<'a>(q: &'a [f32], zeros: &'a [f32], ones: &'a [f32], h: usize, w: usize) -> RgsMaps<'a> {
        RgsMaps {
            height: h,
            width: w,
            quality: q,
            sin2: zeros,
            cos2: ones,
            opening: ones,
            depth: ones,
        }
    }

    #[test]
    fn delta_peak_is_found() {
        let (h, w) = (8, 10);
        let mut q = vec![0.0; h * w];
        q[3 * w + 5] = 1.0;
        let (z, o) = (vec![0.0; h * w], vec![1.0; h * w]);
        let p = extract_rgs_pose(&maps(&q, &z, &o, h, w), 1, 100.0).unwrap();
        assert_eq!((p[0].x, p[0].y), (5.0, 3.0));
        assert_eq!(p[0].theta, 0.0);
        assert_eq!(p[0].l, 100.0);
    }

    #[test]
    fn constant_map_resolves_to_origin() {
        let (h, w) = (6, 7);
        let q = vec![0.4; h * w];
        let (z, o) = (vec![0.0; h * w], vec![1.0; h * w]);
        let p = extract_rgs_pose(&maps(&q, &z, &o, h, w), 3, 1.0).unwrap();
        assert_eq!((p[0].x, p[0].y), (0.0, 0.0));
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn zero_top_n_is_rejected() {
        let q = vec![0.0; 4];
        let p = extract_rgs_pose(&maps(&q, &q, &q, 2, 2), 0, 1.0);
        assert!(matches!(p, Err(GeometryError::Parameter(_))));
    }

    #[test]
    fn angle_decodes_from_double_angle() {
        let t: f64 = -1.2;
        let (s, c) = (2.0 * t).sin_cos();
        let m = RgsMaps {
            height: 1,
            width: 1,
            quality: &[1.0],
            sin2: &[s as f32],
            cos2: &[c as f32],
            opening: &[0.5],
            depth: &[0.9],
        };
        let p = m.pose_at(0, 0, 150.0);
        assert!((p.theta - t).abs() < 1e-6);
        assert!((p.l - 75.0).abs() < 1e-9);
        assert!((p.z - 0.9).abs() < 1e-6);
    }
}
