use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

#[derive(Clone, Copy, Debug)]
struct Geometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

fn im2col<T: Real>(g: &Geometry, x: &[T], cols: &mut [T]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let npos = g.positions();
    for c in 0..g.c_in {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * npos..][..npos];
                for oy in 0..g.h_out {
                    let iy = (oy * s) as isize - p + ky as isize;
                    let dst = &mut row[oy * g.w_out..(oy + 1) * g.w_out];
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * s) as isize - p + kx as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(g: &Geometry, cols: &[T], dx: &mut [T]) {
    let (k, s, p) = (g.k, g.stride, g.pad as isize);
    let npos = g.positions();
    for c in 0..g.c_in {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * npos..][..npos];
                for oy in 0..g.h_out {
                    let iy = (oy * s) as isize - p + ky as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.w_out {
                        let ix = (ox * s) as isize - p + kx as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += row[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2d<T: Real> {
    input: Tensor<T>,
    weight: Tensor<T>,
    bias: Option<Tensor<T>>,
    g: Geometry,
}

impl<T: Real> BackwardOp<T> for Conv2d<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.input, &self.weight];
        if let Some(b) = &self.bias {
            v.push(b);
        }
        v
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let g = self.g;
        let (npos, patch) = (g.positions(), g.patch());
        let in_plane = g.c_in * g.h * g.w;
        let out_plane = g.c_out * npos;
        if let Some(b) = &self.bias {
            if let Some(gb) = sink.slot(b) {
                for bi in 0..g.batch {
                    for (co, acc) in gb.iter_mut().enumerate() {
                        let s: T = grad[bi * out_plane + co * npos..][..npos].iter().copied().sum();
                        *acc += s;
                    }
                }
            }
        }
        let x = self.input.data();
        let w = self.weight.data();
        let mut cols = if g.pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); patch * npos]
        };
        if self.weight.requires_grad() {
            let gw = sink.slot(&self.weight).expect("weight requires grad");
            for bi in 0..g.batch {
                let xb = &x[bi * in_plane..(bi + 1) * in_plane];
                let cols_ref: &[T] = if g.pointwise() {
                    xb
                } else {
                    im2col(&g, xb, &mut cols);
                    &cols
                };
                let gy = &grad[bi * out_plane..];
                T::gemm(g.c_out, npos, patch, gy, npos, 1, cols_ref, 1, npos, gw, patch, 1, true);
            }
        }
        if self.input.requires_grad() {
            let gx = sink.slot(&self.input).expect("input requires grad");
            let mut dcols = vec![T::zero(); patch * npos];
            for bi in 0..g.batch {
                let gy = &grad[bi * out_plane..];
                let gxb = &mut gx[bi * in_plane..(bi + 1) * in_plane];
                if g.pointwise() {
                    T::gemm(patch, g.c_out, npos, &w, 1, patch, gy, npos, 1, gxb, npos, 1, true);
                } else {
                    T::gemm(patch, g.c_out, npos, &w, 1, patch, gy, npos, 1, &mut dcols, npos, 1, false);
                    col2im_add(&g, &dcols, gxb);
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// 2-D cross-correlation.
    ///
    /// `self` is `[B, C_in, H, W]` (or `[C_in, H, W]`), `weight` is
    /// `[C_out, C_in, k, k]`, `bias` is `[C_out]`. Output size per axis is
    /// `(H + 2·pad − k) / stride + 1`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        let ws = weight.shape();
        let unbatched = xs.len() == 3;
        let (batch, c_in, h, w) = match *xs {
            [c, h, w] => (1, c, h, w),
            [b, c, h, w] => (b, c, h, w),
            _ => return Err(TensorError::dim("conv2d", xs, ws)),
        };
        let [c_out, wc_in, kh, kw] = *ws else {
            return Err(TensorError::dim("conv2d", xs, ws));
        };
        if wc_in != c_in || kh != kw {
            return Err(TensorError::dim("conv2d", xs, ws));
        }
        if let Some(b) = bias {
            if b.shape() != [c_out] {
                return Err(TensorError::dim("conv2d", ws, b.shape()));
            }
        }
        if stride == 0 {
            return Err(TensorError::param("conv2d", "stride must be >= 1"));
        }
        let k = kh;
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(TensorError::param(
                "conv2d",
                format!("kernel {k} larger than padded input {h}x{w}"),
            ));
        }
        let g = Geometry {
            batch,
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            pad,
            h_out: (h + 2 * pad - k) / stride + 1,
            w_out: (w + 2 * pad - k) / stride + 1,
        };
        let (npos, patch) = (g.positions(), g.patch());
        let in_plane = c_in * h * w;
        let out_plane = c_out * npos;
        let mut out = vec![T::zero(); batch * out_plane];
        {
            let x = self.data();
            let wv = weight.data();
            let mut cols = if g.pointwise() {
                Vec::new()
            } else {
                vec![T::zero(); patch * npos]
            };
            for bi in 0..batch {
                let xb = &x[bi * in_plane..(bi + 1) * in_plane];
                let cols_ref: &[T] = if g.pointwise() {
                    xb
                } else {
                    im2col(&g, xb, &mut cols);
                    &cols
                };
                let yb = &mut out[bi * out_plane..(bi + 1) * out_plane];
                T::gemm(c_out, patch, npos, &wv, patch, 1, cols_ref, npos, 1, yb, npos, 1, false);
                if let Some(b) = bias {
                    let bv = b.data();
                    for (co, row) in yb.chunks_mut(npos).enumerate() {
                        let bc = bv[co];
                        row.iter_mut().for_each(|v| *v += bc);
                    }
                }
            }
        }
        let shape = if unbatched {
            vec![c_out, g.h_out, g.w_out]
        } else {
            vec![batch, c_out, g.h_out, g.w_out]
        };
        Ok(Tensor::from_op(
            shape,
            out,
            Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.cloned(),
                g,
            },
        ))
    }
}
