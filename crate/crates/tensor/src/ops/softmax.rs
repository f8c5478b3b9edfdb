use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

/// Per-batch key mask for [`Tensor::softmax_lastdim`]: `keep[b * keys + j]`
/// tells whether key `j` of batch item `b` may receive attention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMask {
    pub batch: usize,
    pub keys: usize,
    pub keep: Rc<Vec<bool>>,
}

impl KeyMask {
    pub fn new(batch: usize, keys: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != batch * keys {
            return Err(TensorError::dim("key_mask", &[batch, keys], &[keep.len()]));
        }
        Ok(KeyMask {
            batch,
            keys,
            keep: Rc::new(keep),
        })
    }

    pub fn row(&self, b: usize) -> &[bool] {
        &self.keep[b * self.keys..(b + 1) * self.keys]
    }
}

struct Softmax<T: Real> {
    input: Tensor<T>,
    width: usize,
}

impl<T: Real> BackwardOp<T> for Softmax<T> {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input]
    }

    fn backward(&self, out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let y = out.data();
        let w = self.width;
        if let Some(gx) = sink.slot(&self.input) {
            for ((gxr, yr), gr) in gx.chunks_mut(w).zip(y.chunks(w)).zip(grad.chunks(w)) {
                let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for j in 0..w {
                    gxr[j] += yr[j] * (gr[j] - dot);
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Softmax over the last axis with max subtraction.
    ///
    /// With a mask, masked keys behave as `−∞` logits and get exactly zero
    /// weight; the mask's batch axis is the tensor's first axis and it
    /// broadcasts over all middle axes.
    pub fn softmax_lastdim(&self, mask: Option<&KeyMask>) -> Result<Tensor<T>> {
        let shape = self.shape();
        let w = *shape
            .last()
            .ok_or_else(|| TensorError::param("softmax", "scalar input"))?;
        if w == 0 {
            return Err(TensorError::param("softmax", "empty last axis"));
        }
        let rows = self.numel() / w;
        let rows_per_batch = if let Some(m) = mask {
            if shape.len() < 2 || shape[0] != m.batch || m.keys != w {
                return Err(TensorError::dim("softmax", shape, &[m.batch, m.keys]));
            }
            rows / m.batch
        } else {
            rows
        };
        let x = self.data();
        if x.iter().any(|v| v.is_nan()) {
            return Err(TensorError::numeric("softmax", "NaN input"));
        }
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let keep = mask.map(|m| m.row(r / rows_per_batch));
            let xr = &x[r * w..(r + 1) * w];
            let yr = &mut out[r * w..(r + 1) * w];
            let allowed = |j: usize| keep.is_none_or(|k| k[j]);
            let mut mx = T::neg_infinity();
            for (j, &v) in xr.iter().enumerate() {
                if allowed(j) && v > mx {
                    mx = v;
                }
            }
            if mx == T::neg_infinity() {
                return Err(TensorError::param("softmax", "every key is masked"));
            }
            let mut s = T::zero();
            for j in 0..w {
                if allowed(j) {
                    let e = (xr[j] - mx).exp();
                    yr[j] = e;
                    s += e;
                }
            }
            let inv = T::one() / s;
            yr.iter_mut().for_each(|v| *v *= inv);
        }
        drop(x);
        Ok(Tensor::from_op(
            shape.to_vec(),
            out,
            Softmax {
                input: self.clone(),
                width: w,
            },
        ))
    }
}
