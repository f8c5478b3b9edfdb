//! Batch normalization over `[B, C, H, W]` and layer normalization over the last axis.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardOp, GradSink, Tensor};

/// Running statistics and hyper-parameters of a batch-norm layer.
pub struct BatchNormState<'a, T: Real> {
    pub running_mean: &'a Tensor<T>,
    pub running_var: &'a Tensor<T>,
    pub momentum: T,
    pub eps: T,
    pub train: bool,
}

struct BatchNorm<T: Real> {
    input: Tensor<T>,
    gamma: Tensor<T>,
    beta: Tensor<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    batch: usize,
    channels: usize,
    plane: usize,
    train: bool,
}

impl<T: Real> BackwardOp<T> for BatchNorm<T> {
    fn name(&self) -> &'static str {
        "batchnorm2d"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input, &self.gamma, &self.beta]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let (c_n, plane) = (self.channels, self.plane);
        let n = T::lit((self.batch * plane) as f64);
        let mut sum_dy = vec![T::zero(); c_n];
        let mut sum_dy_xhat = vec![T::zero(); c_n];
        for b in 0..self.batch {
            for c in 0..c_n {
                let off = (b * c_n + c) * plane;
                for i in off..off + plane {
                    sum_dy[c] += grad[i];
                    sum_dy_xhat[c] += grad[i] * self.xhat[i];
                }
            }
        }
        sink.add(&self.beta, &sum_dy);
        sink.add(&self.gamma, &sum_dy_xhat);
        if self.input.requires_grad() {
            let gamma = self.gamma.data();
            let gx = sink.slot(&self.input).expect("input requires grad");
            for b in 0..self.batch {
                for c in 0..c_n {
                    let off = (b * c_n + c) * plane;
                    let scale = gamma[c] * self.inv_std[c];
                    for i in off..off + plane {
                        gx[i] += if self.train {
                            scale / n * (n * grad[i] - sum_dy[c] - self.xhat[i] * sum_dy_xhat[c])
                        } else {
                            scale * grad[i]
                        };
                    }
                }
            }
        }
    }
}

struct LayerNorm<T: Real> {
    input: Tensor<T>,
    gamma: Tensor<T>,
    beta: Tensor<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    width: usize,
}

impl<T: Real> BackwardOp<T> for LayerNorm<T> {
    fn name(&self) -> &'static str {
        "layernorm"
    }

    fn inputs(&self) -> Vec<&Tensor<T>> {
        vec![&self.input, &self.gamma, &self.beta]
    }

    fn backward(&self, _out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>) {
        let w = self.width;
        let mut g_gamma = vec![T::zero(); w];
        let mut g_beta = vec![T::zero(); w];
        for (gr, xr) in grad.chunks(w).zip(self.xhat.chunks(w)) {
            for j in 0..w {
                g_beta[j] += gr[j];
                g_gamma[j] += gr[j] * xr[j];
            }
        }
        sink.add(&self.gamma, &g_gamma);
        sink.add(&self.beta, &g_beta);
        if self.input.requires_grad() {
            let gamma = self.gamma.data();
            let n = T::lit(w as f64);
            let gx = sink.slot(&self.input).expect("input requires grad");
            for (r, ((gxr, gr), xr)) in gx
                .chunks_mut(w)
                .zip(grad.chunks(w))
                .zip(self.xhat.chunks(w))
                .enumerate()
            {
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for j in 0..w {
                    let d = gr[j] * gamma[j];
                    s1 += d;
                    s2 += d * xr[j];
                }
                let inv = self.inv_std[r];
                for j in 0..w {
                    let d = gr[j] * gamma[j];
                    gxr[j] += inv / n * (n * d - s1 - xr[j] * s2);
                }
            }
        }
    }
}

impl<T: Real> Tensor<T> {
    /// Batch normalization of a `[B, C, H, W]` (or `[C, H, W]`) tensor.
    ///
    /// Train mode normalizes with batch statistics and updates the running
    /// statistics with `momentum` (running variance uses the unbiased estimate);
    /// eval mode uses the running statistics.
    pub fn batchnorm2d(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        state: BatchNormState<'_, T>,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        let (batch, channels, plane) = match *xs {
            [c, h, w] => (1, c, h * w),
            [b, c, h, w] => (b, c, h * w),
            _ => return Err(TensorError::dim("batchnorm2d", xs, gamma.shape())),
        };
        for p in [gamma, beta, state.running_mean, state.running_var] {
            if p.shape() != [channels] {
                return Err(TensorError::dim("batchnorm2d", xs, p.shape()));
            }
        }
        if batch * plane == 0 {
            return Err(TensorError::param("batchnorm2d", "zero-size batch"));
        }
        if state.eps <= T::zero() {
            return Err(TensorError::param("batchnorm2d", "eps must be positive"));
        }
        let n = batch * plane;
        let x = self.data();
        let (mean, var) = if state.train {
            let mut mean = vec![T::zero(); channels];
            let mut var = vec![T::zero(); channels];
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * plane;
                    mean[c] += x[off..off + plane].iter().copied().sum::<T>();
                }
            }
            let nf = T::lit(n as f64);
            mean.iter_mut().for_each(|m| *m = *m / nf);
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * plane;
                    var[c] += x[off..off + plane]
                        .iter()
                        .map(|&v| (v - mean[c]) * (v - mean[c]))
                        .sum::<T>();
                }
            }
            let unbiased: Vec<T> = var
                .iter()
                .map(|&v| if n > 1 { v / T::lit((n - 1) as f64) } else { v })
                .collect();
            var.iter_mut().for_each(|v| *v = *v / nf);
            let m = state.momentum;
            let one = T::one();
            {
                let mut rm = state.running_mean.data_mut();
                let mut rv = state.running_var.data_mut();
                for c in 0..channels {
                    rm[c] = (one - m) * rm[c] + m * mean[c];
                    rv[c] = (one - m) * rv[c] + m * unbiased[c];
                }
            }
            (mean, var)
        } else {
            (state.running_mean.to_vec(), state.running_var.to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + state.eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        {
            let g = gamma.data();
            let bt = beta.data();
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * plane;
                    for i in off..off + plane {
                        let xh = (x[i] - mean[c]) * inv_std[c];
                        xhat[i] = xh;
                        out[i] = g[c] * xh + bt[c];
                    }
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            xs.to_vec(),
            out,
            BatchNorm {
                input: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                xhat,
                inv_std,
                batch,
                channels,
                plane,
                train: state.train,
            },
        ))
    }

    /// Layer normalization over the last axis.
    pub fn layernorm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let xs = self.shape();
        let w = *xs
            .last()
            .ok_or_else(|| TensorError::param("layernorm", "scalar input"))?;
        if gamma.shape() != [w] || beta.shape() != [w] {
            return Err(TensorError::dim("layernorm", xs, gamma.shape()));
        }
        if w == 0 {
            return Err(TensorError::param("layernorm", "zero-size normalized axis"));
        }
        if eps <= T::zero() {
            return Err(TensorError::param("layernorm", "eps must be positive"));
        }
        let x = self.data();
        let rows = x.len() / w;
        let wf = T::lit(w as f64);
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(rows);
        {
            let g = gamma.data();
            let bt = beta.data();
            for r in 0..rows {
                let xr = &x[r * w..(r + 1) * w];
                let mean = xr.iter().copied().sum::<T>() / wf;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / wf;
                let inv = T::one() / (var + eps).sqrt();
                inv_std.push(inv);
                for j in 0..w {
                    let xh = (xr[j] - mean) * inv;
                    xhat[r * w + j] = xh;
                    out[r * w + j] = g[j] * xh + bt[j];
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            xs.to_vec(),
            out,
            LayerNorm {
                input: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                xhat,
                inv_std,
                width: w,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state<'a>(rm: &'a Tensor<f64>, rv: &'a Tensor<f64>, train: bool) -> BatchNormState<'a, f64> {
        BatchNormState {
            running_mean: rm,
            running_var: rv,
            momentum: 0.1,
            eps: 1e-5,
            train,
        }
    }

    #[test]
    fn beta_shift_sets_channel_mean() {
        let x = Tensor::<f64>::from_vec((0..16).map(|v| (v * v) as f64).collect(), &[2, 2, 2, 2]).unwrap();
        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::from_vec(vec![0.5, -2.0], &[2]).unwrap();
        let (rm, rv) = (Tensor::zeros(&[2]), Tensor::full(&[2], 1.0));
        let y = x.batchnorm2d(&g, &b, state(&rm, &rv, true)).unwrap().to_vec();
        for (c, want) in [(0usize, 0.5), (1, -2.0)] {
            let vals: Vec<f64> = (0..2)
                .flat_map(|bi| y[(bi * 2 + c) * 4..(bi * 2 + c) * 4 + 4].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - want).abs() < 1e-12);
        }
        // running stats moved by momentum 0.1 toward batch statistics
        assert!(rm.to_vec()[0] > 0.0);
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]).unwrap();
        let g = Tensor::full(&[1], 2.0);
        let b = Tensor::full(&[1], 1.0);
        let (rm, rv) = (Tensor::full(&[1], 1.0), Tensor::full(&[1], 4.0 - 1e-5));
        let y = x.batchnorm2d(&g, &b, state(&rm, &rv, false)).unwrap().to_vec();
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!((y[3] - 4.0).abs() < 1e-9);
        assert_eq!(rm.to_vec(), vec![1.0]);
    }

    #[test]
    fn zero_size_batch_is_rejected() {
        let x = Tensor::<f64>::zeros(&[0, 2, 3, 3]);
        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let (rm, rv) = (Tensor::zeros(&[2]), Tensor::full(&[2], 1.0));
        assert!(matches!(
            x.batchnorm2d(&g, &b, state(&rm, &rv, true)),
            Err(TensorError::Parameter { .. })
        ));
    }
}
