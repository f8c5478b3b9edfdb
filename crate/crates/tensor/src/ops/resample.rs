//! Bilinear resampling: integer-factor upsampling and precomputed warps
//! (used for image rotation).

use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

/// Source taps for one output coordinate along one axis.
#[derive(Clone, Copy, Debug)]
struct AxisTap {
    i0: usize,
    i1: usize,
    w0: f64,
    w1: f64,
}

/// Half-pixel-center mapping (`align_corners = false`) from `out` samples to `len` inputs.
fn axis_taps(len: usize, scale: usize) -> Vec<AxisTap> {
    (0..len * scale)
        .map(|o| {
            let src = ((o as f64 + 0.5) / scale as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let w1 = (src - i0 as f64).clamp(0.0, 1.0);
            AxisTap {
                i0,
                i1,
                w0: 1.0 - w1,
                w1,
            }
        })
        .collect()
}

struct Upsample<T: Real> {
    input: Tensor<T>,
    rows: Vec<AxisTap>,
    cols: Vec<AxisTap>,
    h: usize,
    w: usize,
}

impl<T: Real> BackwardOp<T> for Upsample<T> {
    fn name(&self) -> &'static str {
        "upsample_bilinear"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let (h, w) = (self.h, self.w);
        let (oh, ow) = (self.rows.len(), self.cols.len());
        if let Some(gx) = sink.slot(&self.input) {
            let planes = gx.len() / (h * w);
            for p in 0..planes {
                let gxp = &mut gx[p * h * w..(p + 1) * h * w];
                let gp = &grad[p * oh * ow..(p + 1) * oh * ow];
                for (oy, ry) in self.rows.iter().enumerate() {
                    let (wy0, wy1) = (T::lit(ry.w0), T::lit(ry.w1));
                    for (ox, rx) in self.cols.iter().enumerate() {
                        let g = gp[oy * ow + ox];
                        let (wx0, wx1) = (T::lit(rx.w0), T::lit(rx.w1));
                        gxp[ry.i0 * w + rx.i0] += g * wy0 * wx0;
                        gxp[ry.i0 * w + rx.i1] += g * wy0 * wx1;
                        gxp[ry.i1 * w + rx.i0] += g * wy1 * wx0;
                        gxp[ry.i1 * w + rx.i1] += g * wy1 * wx1;
                    }
                }
            }
        }
    }
}

/// Out-of-frame handling for [`WarpMap::rotation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    /// Samples outside the image take a per-channel fill value.
    Fill,
    /// Sample coordinates are clamped into the image.
    Clamp,
}

/// Precomputed bilinear warp from an `in_h×in_w` grid to an `out_h×out_w` grid.
#[derive(Clone, Debug)]
pub struct WarpMap {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Up to four `(source index, weight)` taps per output pixel.
    taps: Vec<[(usize, f64); 4]>,
    /// Weight of the fill value per output pixel.
    fill: Vec<f64>,
}

impl WarpMap {
    /// Map that samples `input(c + R(angle)·(p − c))` for every output pixel `p`,
    /// where `c` is the image center and `R` rotates `(x, y)` pixel vectors
    /// (x = column, y = row). Applying it to an image rotates the content by
    /// `−angle`; a horizontal segment in the output corresponds to direction
    /// `(cos angle, sin angle)` in the input.
    pub fn rotation(h: usize, w: usize, angle: f64, border: Border) -> Self {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (s, c) = angle.sin_cos();
        let mut taps = Vec::with_capacity(h * w);
        let mut fill = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                let (t, f) = bilinear_taps(sx, sy, h, w, border);
                taps.push(t);
                fill.push(f);
            }
        }
        WarpMap {
            in_h: h,
            in_w: w,
            out_h: h,
            out_w: w,
            taps,
            fill,
        }
    }

    /// Applies the warp to plain per-plane data (`planes × in_h × in_w`),
    /// with one fill value per plane.
    pub fn apply_slice<T: Real>(&self, src: &[T], fill: &[T]) -> Vec<T> {
        let (ip, op) = (self.in_h * self.in_w, self.out_h * self.out_w);
        let planes = src.len() / ip;
        let mut out = vec![T::zero(); planes * op];
        for p in 0..planes {
            let sp = &src[p * ip..(p + 1) * ip];
            let fv = fill.get(p).copied().unwrap_or_else(T::zero);
            for (o, (taps, &fw)) in self.taps.iter().zip(&self.fill).enumerate() {
                let mut acc = T::zero();
                for &(i, wt) in taps {
                    if wt != 0.0 {
                        acc += T::lit(wt) * sp[i];
                    }
                }
                if fw != 0.0 {
                    acc += T::lit(fw) * fv;
                }
                out[p * op + o] = acc;
            }
        }
        out
    }
}

fn bilinear_taps(sx: f64, sy: f64, h: usize, w: usize, border: Border) -> ([(usize, f64); 4], f64) {
    let (sx, sy) = match border {
        Border::Clamp => (sx.clamp(0.0, (w - 1) as f64), sy.clamp(0.0, (h - 1) as f64)),
        Border::Fill => (sx, sy),
    };
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    let mut taps = [(0usize, 0.0f64); 4];
    let mut fill = 0.0;
    for (slot, (x, y, wt)) in taps.iter_mut().zip(corners) {
        if wt == 0.0 {
            continue;
        }
        if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
            *slot = (y as usize * w + x as usize, wt);
        } else {
            fill += wt;
        }
    }
    (taps, fill)
}

struct Warp<T: Real> {
    input: Tensor<T>,
    map: Rc<WarpMap>,
}

impl<T: Real> BackwardOp<T> for Warp<T> {
    fn name(&self) -> &'static str {
        "warp"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let m = &self.map;
        let (ip, op) = (m.in_h * m.in_w, m.out_h * m.out_w);
        if let Some(gx) = sink.slot(&self.input) {
            let planes = gx.len() / ip;
            for p in 0..planes {
                for (o, taps) in m.taps.iter().enumerate() {
                    let g = grad[p * op + o];
                    for &(i, wt) in taps {
                        if wt != 0.0 {
                            gx[p * ip + i] += T::lit(wt) * g;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Bilinear upsampling of the last two axes by an integer factor, with
    /// half-pixel centers (`align_corners = false`) and edge clamping.
    pub fn upsample_bilinear(&self, scale: usize) -> Result<Tensor<T>> {
        if scale < 1 {
            return Err(TensorError::param("upsample_bilinear", "scale must be >= 1"));
        }
        let s = self.shape();
        if s.len() < 2 || s[s.len() - 1] == 0 || s[s.len() - 2] == 0 {
            return Err(TensorError::param(
                "upsample_bilinear",
                format!("needs a non-empty [.., H, W] input, got {s:?}"),
            ));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let rows = axis_taps(h, scale);
        let cols = axis_taps(w, scale);
        let (oh, ow) = (rows.len(), cols.len());
        let planes = self.numel() / (h * w);
        let mut out = vec![T::zero(); planes * oh * ow];
        {
            let x = self.data();
            for p in 0..planes {
                let xp = &x[p * h * w..(p + 1) * h * w];
                let yp = &mut out[p * oh * ow..(p + 1) * oh * ow];
                for (oy, ry) in rows.iter().enumerate() {
                    let (wy0, wy1) = (T::lit(ry.w0), T::lit(ry.w1));
                    for (ox, rx) in cols.iter().enumerate() {
                        let (wx0, wx1) = (T::lit(rx.w0), T::lit(rx.w1));
                        let top = wx0 * xp[ry.i0 * w + rx.i0] + wx1 * xp[ry.i0 * w + rx.i1];
                        let bot = wx0 * xp[ry.i1 * w + rx.i0] + wx1 * xp[ry.i1 * w + rx.i1];
                        yp[oy * ow + ox] = wy0 * top + wy1 * bot;
                    }
                }
            }
        }
        let mut shape = s.to_vec();
        let nd = shape.len();
        shape[nd - 2] = oh;
        shape[nd - 1] = ow;
        Ok(Tensor::from_op(
            shape,
            out,
            Upsample {
                input: self.clone(),
                rows,
                cols,
                h,
                w,
            },
        ))
    }

    /// Applies a precomputed warp to the last two axes. Fill values are treated
    /// as zero; use [`WarpMap::apply_slice`] for constant-filled data inputs.
    pub fn warp(&self, map: &Rc<WarpMap>) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() < 2 || s[s.len() - 2] != map.in_h || s[s.len() - 1] != map.in_w {
            return Err(TensorError::dim("warp", s, &[map.in_h, map.in_w]));
        }
        let data = map.apply_slice(&self.data(), &[]);
        let mut shape = s.to_vec();
        let nd = shape.len();
        shape[nd - 2] = map.out_h;
        shape[nd - 1] = map.out_w;
        Ok(Tensor::from_op(
            shape,
            data,
            Warp {
                input: self.clone(),
                map: Rc::clone(map),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_stays_constant() {
        let x = Tensor::<f64>::full(&[2, 3, 3], 1.5);
        let y = x.upsample_bilinear(2).unwrap();
        assert_eq!(y.shape(), &[2, 6, 6]);
        assert!(y.to_vec().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn single_sample_spreads_uniformly() {
        let x = Tensor::<f32>::full(&[1, 1, 1], 0.25);
        let y = x.upsample_bilinear(3).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert!(y.to_vec().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn zero_scale_is_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        assert!(matches!(
            x.upsample_bilinear(0),
            Err(TensorError::Parameter { .. })
        ));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let map = Rc::new(WarpMap::rotation(5, 5, 0.0, Border::Fill));
        let x = Tensor::<f32>::from_vec((0..25).map(|v| v as f32 * 0.3).collect(), &[1, 5, 5]).unwrap();
        assert_eq!(x.warp(&map).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn quarter_turn_is_a_lattice_permutation() {
        let map = WarpMap::rotation(4, 4, std::f64::consts::FRAC_PI_2, Border::Clamp);
        let src: Vec<f64> = (0..16).map(f64::from).collect();
        let out = map.apply_slice(&src, &[]);
        // output(x, y) = input(c + R(90°)(p − c)) = input(x' = c + c − y, y' = x)
        for y in 0..4 {
            for x in 0..4 {
                let (sx, sy) = (3 - y, x);
                assert!((out[y * 4 + x] - src[sy * 4 + sx]).abs() < 1e-9);
            }
        }
    }
}
