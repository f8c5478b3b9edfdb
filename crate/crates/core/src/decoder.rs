//! Top-down FCN decoder and the per-pixel output heads.

use ogrg_tensor::{Real, Tensor};

use crate::error::{CoreError, Result};
use crate::nn::{Conv2d, ConvBnRelu, Scope};

/// Output upsampling factor from stage-1 resolution to the input.
pub const HEAD_UPSAMPLE: usize = 4;

/// `Y_4 = V_4`; `Y_i = ConvBnRelu([Up×2(Y_{i+1}); V_i])` for `i = 3, 2, 1`.
pub struct FcnDecoder<T: Real> {
    /// Fusion convolutions for stages 3, 2, 1 in that order.
    pub fuse: Vec<ConvBnRelu<T>>,
}

impl<T: Real> FcnDecoder<T> {
    pub fn new(s: &mut Scope<T>, channels: &[usize; 4]) -> Self {
        FcnDecoder {
            fuse: (0..3)
                .rev()
                .map(|i| ConvBnRelu::new(&mut s.sub(&format!("fuse{}", i + 1)), channels[i + 1] + channels[i], channels[i], 3, 1))
                .collect(),
        }
    }

    /// `v` holds `V_1..V_4` as `[B, C_i, H_i, W_i]` maps.
    pub fn forward(&self, v: &[Tensor<T>], train: bool) -> Result<Tensor<T>> {
        if v.len() != 4 {
            return Err(CoreError::Contract(format!("decoder needs 4 stage maps, got {}", v.len())));
        }
        let mut y = v[3].clone();
        for (conv, i) in self.fuse.iter().zip((0..3).rev()) {
            let up = y.upsample_bilinear(2)?;
            if up.shape()[2..] != v[i].shape()[2..] || up.dim(0) != v[i].dim(0) {
                return Err(CoreError::Tensor(ogrg_tensor::TensorError::Dimension {
                    op: "fcn_decode",
                    lhs: up.shape().to_vec(),
                    rhs: v[i].shape().to_vec(),
                }));
            }
            y = conv.forward(&Tensor::concat(&[up, v[i].clone()], 1)?, train)?;
        }
        Ok(y)
    }
}

/// Dense grasp-synthesis maps at input resolution.
pub struct RgsOutput<T: Real> {
    /// Background/target logits `[B, 2, H, W]`.
    pub m: Tensor<T>,
    /// Quality in `[0, 1]`, `[B, 1, H, W]`.
    pub q: Tensor<T>,
    /// `(sin 2θ, cos 2θ)` in `[−1, 1]`, `[B, 2, H, W]`.
    pub theta: Tensor<T>,
    /// Opening over the maximum width, `[B, 1, H, W]`.
    pub p: Tensor<T>,
}

/// Parallel 1×1 heads, each followed by ×4 bilinear upsampling.
pub struct Heads<T: Real> {
    pub m: Conv2d<T>,
    pub grasp: Option<GraspHeads<T>>,
}

pub struct GraspHeads<T: Real> {
    pub q: Conv2d<T>,
    pub theta: Conv2d<T>,
    pub p: Conv2d<T>,
}

impl<T: Real> Heads<T> {
    pub fn new(s: &mut Scope<T>, c1: usize, grasp: bool) -> Self {
        Heads {
            m: Conv2d::new(&mut s.sub("m"), c1, 2, 1, 1, true),
            grasp: grasp.then(|| GraspHeads {
                q: Conv2d::new(&mut s.sub("q"), c1, 1, 1, 1, true),
                theta: Conv2d::new(&mut s.sub("theta"), c1, 2, 1, 1, true),
                p: Conv2d::new(&mut s.sub("p"), c1, 1, 1, 1, true),
            }),
        }
    }

    /// Grounding logits `[B, 2, H, W]`.
    pub fn mask(&self, y1: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.m.forward(y1)?.upsample_bilinear(HEAD_UPSAMPLE)?)
    }

    pub fn rgs(&self, y1: &Tensor<T>) -> Result<RgsOutput<T>> {
        let g = self
            .grasp
            .as_ref()
            .ok_or_else(|| CoreError::Contract("grasp heads exist only in the grasp-synthesis task".into()))?;
        Ok(RgsOutput {
            m: self.mask(y1)?,
            q: g.q.forward(y1)?.upsample_bilinear(HEAD_UPSAMPLE)?.sigmoid(),
            theta: g.theta.forward(y1)?.upsample_bilinear(HEAD_UPSAMPLE)?.tanh(),
            p: g.p.forward(y1)?.upsample_bilinear(HEAD_UPSAMPLE)?.sigmoid(),
        })
    }
}

/// Foreground where the target logit exceeds the background logit.
pub fn mask_from_logits<T: Real>(m: &Tensor<T>) -> Result<Vec<bool>> {
    let &[b, 2, h, w] = m.shape() else {
        return Err(CoreError::Contract(format!("mask logits must be [B, 2, H, W], got {:?}", m.shape())));
    };
    let d = m.data();
    let plane = h * w;
    Ok((0..b * plane)
        .map(|i| {
            let (bi, p) = (i / plane, i % plane);
            d[(bi * 2 + 1) * plane + p] > d[bi * 2 * plane + p]
        })
        .collect())
}

/// `θ = ½·atan2(sin 2θ, cos 2θ)`, in `(−π/2, π/2]`.
pub fn decode_angle(sin2: f64, cos2: f64) -> f64 {
    ogrg_geometry::wrap_half_turn(0.5 * sin2.atan2(cos2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Store;
    use ogrg_tensor::init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ladder(rng: &mut ChaCha8Rng, b: usize, c: [usize; 4], s: usize) -> Vec<Tensor<f64>> {
        (0..4).map(|i| init::randn(rng, &[b, c[i], s >> i, s >> i])).collect()
    }

    #[test]
    fn decodes_to_stage_one_resolution() {
        let mut store = Store::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = [4, 8, 16, 32];
        let dec = FcnDecoder::new(&mut Scope::new(&mut store, &mut rng), &c);
        let v = ladder(&mut rng, 2, c, 16);
        assert_eq!(dec.forward(&v, true).unwrap().shape(), [2, 4, 16, 16]);
        let bad: Vec<_> = (0..4).map(|i| v[i.min(2)].clone()).collect();
        assert!(dec.forward(&bad, true).is_err());
    }

    #[test]
    fn heads_have_activation_ranges() {
        let mut store = Store::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let heads = Heads::new(&mut Scope::new(&mut store, &mut rng), 4, true);
        let y: Tensor<f64> = init::randn(&mut rng, &[1, 4, 3, 3]).scale(5.0);
        let out = heads.rgs(&y).unwrap();
        assert_eq!(out.m.shape(), [1, 2, 12, 12]);
        assert!(out.q.to_vec().iter().chain(out.p.to_vec().iter()).all(|&v| (0.0..=1.0).contains(&v)));
        assert!(out.theta.to_vec().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        // the mask head of the grounding task is the same computation
        assert_eq!(heads.mask(&y).unwrap().to_vec(), out.m.to_vec());
    }

    #[test]
    fn zero_features_give_bias_logits() {
        let mut store = Store::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let heads = Heads::new(&mut Scope::new(&mut store, &mut rng), 4, false);
        heads.m.bias.as_ref().unwrap().data_mut().copy_from_slice(&[0.25, -1.5]);
        let m = heads.mask(&Tensor::zeros(&[1, 4, 2, 2])).unwrap().to_vec();
        assert!(m[..64].iter().all(|&v| v == 0.25));
        assert!(m[64..].iter().all(|&v| v == -1.5));
        assert!(heads.rgs(&Tensor::zeros(&[1, 4, 2, 2])).is_err());
    }

    #[test]
    fn angle_decoding_range() {
        for k in -180..=180 {
            let t = (k as f64).to_radians();
            let a = decode_angle((2.0 * t).sin(), (2.0 * t).cos());
            assert!(a > -std::f64::consts::FRAC_PI_2 && a <= std::f64::consts::FRAC_PI_2 + 1e-12);
        }
    }
}
