//! Mask-conditioned grasping network: per-pixel affordances over six gripper
//! rotations, built by rotating the input, predicting with one shared head,
//! and rotating the prediction back.

use std::rc::Rc;

use ogrg_geometry::GraspPose;
use ogrg_synth::{rotation_angle, N_ROTATIONS};
use ogrg_tensor::{Border, Real, Tensor, WarpMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{config_hash, MgnConfig};
use crate::error::{CoreError, Result};
use crate::nn::{BasicBlock, Conv2d, ConvBnRelu, Scope, Store};

/// Input planes: standardized RGB, normalized depth, target mask.
pub const MGN_PLANES: usize = 5;
const MASK_TOL: f32 = 1e-6;

/// Stacks the planes of one sample, snapping the mask to exact {0, 1}.
pub fn mgn_input(image: &[f32], depth: &[f32], mask: &[f32], h: usize, w: usize) -> Result<Vec<f32>> {
    let n = h * w;
    if image.len() != 3 * n || depth.len() != n || mask.len() != n {
        return Err(CoreError::input(format!(
            "planes of {} / {} / {} values for a {h}x{w} image",
            image.len(),
            depth.len(),
            mask.len()
        )));
    }
    let mut out = Vec::with_capacity(MGN_PLANES * n);
    out.extend_from_slice(image);
    out.extend_from_slice(depth);
    for &m in mask {
        if (m - 1.0).abs() <= MASK_TOL {
            out.push(1.0);
        } else if m.abs() <= MASK_TOL {
            out.push(0.0);
        } else {
            return Err(CoreError::input(format!("mask value {m} is not binary")));
        }
    }
    Ok(out)
}

/// Fill values for out-of-frame pixels: mean color, border-median depth, no mask.
fn fills<T: Real>(planes: &[T], h: usize, w: usize) -> Vec<T> {
    let n = h * w;
    let mut f = Vec::with_capacity(MGN_PLANES);
    for c in 0..3 {
        let s = planes[c * n..(c + 1) * n].iter().fold(0.0, |a, v| a + v.as_f64());
        f.push(T::lit(s / n as f64));
    }
    let d = &planes[3 * n..4 * n];
    let mut border: Vec<f64> = (0..n)
        .filter(|&i| i / w == 0 || i / w == h - 1 || i % w == 0 || i % w == w - 1)
        .map(|i| d[i].as_f64())
        .collect();
    border.sort_by(f64::total_cmp);
    let m = border.len();
    f.push(T::lit(if m % 2 == 1 {
        border[m / 2]
    } else {
        (border[m / 2 - 1] + border[m / 2]) / 2.0
    }));
    f.push(T::zero());
    f
}

/// Rotates a `[B, 5, H, W]` batch for channel `k` (per-sample fills).
/// Channel 0 is the identity.
pub fn rotate_input<T: Real>(x: &Tensor<T>, ks: &[usize]) -> Result<Tensor<T>> {
    let &[b, MGN_PLANES, h, w] = x.shape() else {
        return Err(CoreError::input(format!("input must be [B, 5, H, W], got {:?}", x.shape())));
    };
    if ks.len() != b {
        return Err(CoreError::Contract(format!("{} rotations for a batch of {b}", ks.len())));
    }
    let data = x.data();
    let per = MGN_PLANES * h * w;
    let mut out = Vec::with_capacity(b * per);
    for (i, &k) in ks.iter().enumerate() {
        let src = &data[i * per..(i + 1) * per];
        if k == 0 {
            out.extend_from_slice(src);
        } else {
            let map = WarpMap::rotation(h, w, rotation_angle(k), Border::Fill);
            out.extend(map.apply_slice(src, &fills(src, h, w)));
        }
    }
    Ok(Tensor::from_vec(out, x.shape())?)
}

/// Rotates a `[B, 1, H, W]` prediction back from channel `k`'s frame.
pub fn unrotate<T: Real>(y: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    if k == 0 {
        return Ok(y.clone());
    }
    let &[_, _, h, w] = y.shape() else {
        return Err(CoreError::Contract(format!("prediction must be [B, 1, H, W], got {:?}", y.shape())));
    };
    let map = Rc::new(WarpMap::rotation(h, w, -rotation_angle(k), Border::Clamp));
    Ok(y.warp(&map)?)
}

/// Half-turn of every plane, as an exact index permutation.
fn rot180<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape().to_vec();
    let plane = s[s.len() - 2] * s[s.len() - 1];
    let n = x.numel();
    let idx: Vec<usize> = (0..n).map(|i| (i / plane) * plane + plane - 1 - i % plane).collect();
    Ok(x.reshape(&[n])?.gather(Rc::new(idx), &s)?)
}

pub struct Mgn<T: Real> {
    pub cfg: MgnConfig,
    pub store: Store<T>,
    c1: ConvBnRelu<T>,
    b1: BasicBlock<T>,
    c2: ConvBnRelu<T>,
    b2: BasicBlock<T>,
    fuse: ConvBnRelu<T>,
    head: Conv2d<T>,
}

impl<T: Real> Mgn<T> {
    pub fn new(cfg: &MgnConfig, seed: u64) -> Result<Self> {
        let [c1, c2] = cfg.channels;
        if c1 == 0 || c2 == 0 {
            return Err(CoreError::config("grasp network channels must be positive"));
        }
        let mut store = Store::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Scope::new(&mut store, &mut rng);
        let mut s = s.sub("mgn");
        let net = (
            ConvBnRelu::new(&mut s.sub("c1"), MGN_PLANES, c1, 3, 2),
            BasicBlock::new(&mut s.sub("b1"), c1),
            ConvBnRelu::new(&mut s.sub("c2"), c1, c2, 3, 2),
            BasicBlock::new(&mut s.sub("b2"), c2),
            ConvBnRelu::new(&mut s.sub("fuse"), c1 + c2, c1, 3, 1),
            Conv2d::new(&mut s.sub("head"), c1, 1, 1, 1, true),
        );
        drop(s);
        Ok(Mgn {
            cfg: cfg.clone(),
            store,
            c1: net.0,
            b1: net.1,
            c2: net.2,
            b2: net.3,
            fuse: net.4,
            head: net.5,
        })
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.cfg)
    }

    /// Single-angle head: `[B, 5, H, W]` to affordance logits `[B, 1, H, W]`.
    fn logits(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let a = self.b1.forward(&self.c1.forward(x, train)?, train)?;
        let b = self.b2.forward(&self.c2.forward(&a, train)?, train)?;
        let up = b.upsample_bilinear(2)?;
        let f = self.fuse.forward(&Tensor::concat(&[a, up], 1)?, train)?;
        Ok(self.head.forward(&f)?.upsample_bilinear(2)?)
    }

    /// Shared head averaged with its half-turn conjugate, so that a scene
    /// rotated by 180° gives the rotated prediction. Output in (0, 1).
    pub fn head(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let &[b, MGN_PLANES, h, w] = x.shape() else {
            return Err(CoreError::input(format!("input must be [B, 5, H, W], got {:?}", x.shape())));
        };
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(CoreError::input(format!("{h}x{w} input is not a positive multiple of 4")));
        }
        let both = self.logits(&Tensor::concat(&[x.clone(), rot180(x)?], 0)?, train)?;
        let direct = both.narrow(0, 0, b)?;
        let turned = rot180(&both.narrow(0, b, b)?)?;
        Ok(direct.add(&turned)?.scale(T::lit(0.5)).sigmoid())
    }

    /// Full affordance stack `[B, 6, H, W]`.
    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let b = x.dim(0);
        let channels = (0..N_ROTATIONS)
            .map(|k| unrotate(&self.head(&rotate_input(x, &vec![k; b])?, train)?, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::concat(&channels, 1)?)
    }

    /// Channel `ks[i]` of sample `i` only, `[B, 1, H, W]`; enough for
    /// single-cell supervision at a sixth of the cost.
    pub fn forward_channels(&self, x: &Tensor<T>, ks: &[usize], train: bool) -> Result<Tensor<T>> {
        if ks.iter().any(|&k| k >= N_ROTATIONS) {
            return Err(CoreError::input("rotation index out of range"));
        }
        let y = self.head(&rotate_input(x, ks)?, train)?;
        let b = ks.len();
        let items = (0..b)
            .map(|i| unrotate(&y.narrow(0, i, 1)?, ks[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::concat(&items, 0)?)
    }
}

/// Global argmax of one `[6, H, W]` stack; ties go to the smallest `(k, y, x)`.
/// Returns a pixel-space pose with depth read at the chosen pixel.
pub fn extract_rga_pose(a: &[f32], h: usize, w: usize, depth_m: &[f32], l_star: f64) -> Result<GraspPose> {
    if a.len() != N_ROTATIONS * h * w || depth_m.len() != h * w || a.is_empty() {
        return Err(CoreError::input(format!("affordance stack of {} values for a {h}x{w} image", a.len())));
    }
    if a.iter().any(|v| v.is_nan()) {
        return Err(CoreError::Numeric("NaN in affordance stack".into()));
    }
    let mut best = 0;
    for (i, &v) in a.iter().enumerate() {
        if v > a[best] {
            best = i;
        }
    }
    let (k, p) = (best / (h * w), best % (h * w));
    Ok(GraspPose {
        x: (p % w) as f64,
        y: (p / w) as f64,
        z: depth_m[p] as f64,
        theta: rotation_angle(k),
        l: l_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ogrg_tensor::init;

    #[test]
    fn mask_must_be_binary() {
        let img = vec![0.0; 12];
        let d = vec![0.0; 4];
        assert!(mgn_input(&img, &d, &[0.0, 1.0, 1.0 - 1e-7, 1e-7], 2, 2).is_ok());
        assert!(matches!(mgn_input(&img, &d, &[0.0, 0.5, 1.0, 0.0], 2, 2), Err(CoreError::Input(_))));
    }

    #[test]
    fn rot180_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Tensor<f32> = init::randn(&mut rng, &[2, 3, 4, 5]);
        let y = rot180(&x).unwrap();
        assert_eq!(y.data()[0], x.data()[19]);
        assert_eq!(rot180(&y).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn argmax_rules() {
        let (h, w) = (3, 4);
        let d: Vec<f32> = (0..12).map(|i| 0.5 + i as f32).collect();
        let mut a = vec![0.1f32; 6 * 12];
        let p = extract_rga_pose(&a, h, w, &d, 20.0).unwrap();
        assert_eq!((p.x, p.y, p.theta), (0.0, 0.0, 0.0));
        a[(4 * 3 + 2) * 4 + 1] = 0.9;
        let p = extract_rga_pose(&a, h, w, &d, 20.0).unwrap();
        assert_eq!((p.x, p.y, p.z, p.l), (1.0, 2.0, 9.5, 20.0));
        assert_eq!(p.theta, rotation_angle(4));
        a[5] = f32::NAN;
        assert!(matches!(extract_rga_pose(&a, h, w, &d, 20.0), Err(CoreError::Numeric(_))));
    }

    #[test]
    fn outputs_are_probabilities() {
        let mgn: Mgn<f32> = Mgn::new(&MgnConfig::default(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Tensor<f32> = init::randn(&mut rng, &[1, 5, 16, 16]);
        let a = mgn.forward(&x, false).unwrap();
        assert_eq!(a.shape(), &[1, 6, 16, 16]);
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(mgn.forward(&Tensor::zeros(&[1, 5, 18, 18]), false).is_err());
    }
}
