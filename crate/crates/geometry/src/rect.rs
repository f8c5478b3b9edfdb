//! Rotated grasp rectangles and their exact overlap.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{GeometryError, Result};

/// Wraps an angle onto `(−π/2, π/2]`; grasps are symmetric under half turns.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// Smallest angle between two grasp orientations, in degrees within `[0, 90]`.
pub fn angle_diff(theta1: f64, theta2: f64) -> f64 {
    let d = (theta1 - theta2).rem_euclid(PI);
    d.min(PI - d).max(0.0).to_degrees()
}

/// An oriented rectangle. `width` runs along the jaw opening axis
/// `(cos θ, sin θ)` in (column, row) pixel coordinates; `height` is the jaw
/// thickness across it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspRectangle {
    pub cx: f64,
    pub cy: f64,
    pub angle: f64,
    pub width: f64,
    pub height: f64,
}

impl GraspRectangle {
    pub fn new(cx: f64, cy: f64, angle: f64, width: f64, height: f64) -> Self {
        GraspRectangle {
            cx,
            cy,
            angle,
            width,
            height,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Corners with positive shoelace area: `(−,−), (+,−), (+,+), (−,+)` in
    /// the (opening, thickness) frame.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.angle.sin_cos();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        let at = |a: f64, b: f64| (self.cx + a * c - b * s, self.cy + a * s + b * c);
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    /// Inverse of [`corners`](Self::corners); the angle comes back wrapped.
    pub fn from_corners(p: &[(f64, f64); 4]) -> Self {
        let cx = p.iter().map(|q| q.0).sum::<f64>() / 4.0;
        let cy = p.iter().map(|q| q.1).sum::<f64>() / 4.0;
        let (ux, uy) = (p[1].0 - p[0].0, p[1].1 - p[0].1);
        let (vx, vy) = (p[3].0 - p[0].0, p[3].1 - p[0].1);
        GraspRectangle {
            cx,
            cy,
            angle: wrap_half_turn(uy.atan2(ux)),
            width: ux.hypot(uy),
            height: vx.hypot(vy),
        }
    }

    /// Same rectangle rotated by `phi` about `(ox, oy)`.
    pub fn rotated_about(&self, ox: f64, oy: f64, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let (dx, dy) = (self.cx - ox, self.cy - oy);
        GraspRectangle {
            cx: ox + c * dx - s * dy,
            cy: oy + s * dx + c * dy,
            angle: self.angle + phi,
            ..*self
        }
    }

    fn check(&self) -> Result<()> {
        let ok = [self.cx, self.cy, self.angle, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !ok || self.width <= 0.0 || self.height <= 0.0 {
            return Err(GeometryError::Input(format!(
                "degenerate rectangle {}x{} at ({}, {})",
                self.width, self.height, self.cx, self.cy
            )));
        }
        Ok(())
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Clips `subject` against each edge of the convex, positively oriented `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        let mut prev = *input.last().unwrap();
        let mut prev_side = cross(a, b, prev);
        for &p in &input {
            let side = cross(a, b, p);
            if (side >= 0.0) != (prev_side >= 0.0) {
                let t = prev_side / (prev_side - side);
                out.push((prev.0 + t * (p.0 - prev.0), prev.1 + t * (p.1 - prev.1)));
            }
            if side >= 0.0 {
                out.push(p);
            }
            prev = p;
            prev_side = side;
        }
    }
    out
}

/// Area of the intersection of two rectangles.
pub fn intersection_area(a: &GraspRectangle, b: &GraspRectangle) -> Result<f64> {
    a.check()?;
    b.check()?;
    let poly = clip_convex(&a.corners(), &b.corners());
    if poly.len() < 3 {
        return Ok(0.0);
    }
    Ok(shoelace(&poly).max(0.0))
}

/// Intersection over union of two rectangles, by exact polygon clipping.
pub fn rect_iou(a: &GraspRectangle, b: &GraspRectangle) -> Result<f64> {
    let inter = intersection_area(a, b)?;
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_diff_examples() {
        let d = |a: f64, b: f64| angle_diff(a.to_radians(), b.to_radians());
        assert!((d(0.0, 170.0) - 10.0).abs() < 1e-9);
        assert!((d(45.0, -45.0) - 90.0).abs() < 1e-9);
        assert!((d(10.0, 25.0) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn identical_and_disjoint() {
        let a = GraspRectangle::new(10.0, 10.0, 0.3, 8.0, 4.0);
        assert!((rect_iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = GraspRectangle::new(40.0, 10.0, 0.3, 8.0, 4.0);
        assert_eq!(rect_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn corners_are_positively_oriented_and_invertible() {
        let r = GraspRectangle::new(3.0, -2.0, 1.1, 6.0, 2.5);
        let c = r.corners();
        assert!((shoelace(&c) - r.area()).abs() < 1e-9);
        let back = GraspRectangle::from_corners(&c);
        for (x, y) in [(back.cx, r.cx), (back.cy, r.cy), (back.angle, r.angle), (back.width, r.width), (back.height, r.height)] {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_area_is_an_input_error() {
        let a = GraspRectangle::new(0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(rect_iou(&a, &a), Err(GeometryError::Input(_))));
    }

    #[test]
    fn half_overlap_axis_aligned() {
        let a = GraspRectangle::new(0.0, 0.0, 0.0, 4.0, 2.0);
        let b = GraspRectangle::new(2.0, 0.0, 0.0, 4.0, 2.0);
        assert!((rect_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_lands_in_half_open_range() {
        assert!((wrap_half_turn(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_half_turn(PI) - 0.0).abs() < 1e-15);
        assert!((wrap_half_turn(2.0) - (2.0 - PI)).abs() < 1e-15);
    }
}
