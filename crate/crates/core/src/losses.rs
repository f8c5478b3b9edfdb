//! Training losses for grounding, grasp maps and weak affordance labels.

use std::rc::Rc;

use ogrg_tensor::{Real, Tensor};

use crate::decoder::RgsOutput;
use crate::error::{CoreError, Result};

/// Clamp for probabilities entering a logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn binary_values<T: Real>(target: &[f32], shape: &[usize]) -> Result<Tensor<T>> {
    if let Some(v) = target.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(CoreError::input(format!("target value {v} is not binary")));
    }
    Ok(Tensor::from_vec(target.iter().map(|&v| T::lit(v as f64)).collect(), shape)?)
}

/// Target-minus-background logit `[B, H·W]` from `[B, 2, H, W]` logits.
fn fg_logit<T: Real>(m: &Tensor<T>) -> Result<Tensor<T>> {
    let &[b, 2, h, w] = m.shape() else {
        return Err(CoreError::Contract(format!("mask logits must be [B, 2, H, W], got {:?}", m.shape())));
    };
    Ok(m.narrow(1, 1, 1)?.sub(&m.narrow(1, 0, 1)?)?.reshape(&[b, h * w])?)
}

/// Signed logit `z` with `p_t = σ(z)`, and the target as a tensor.
fn signed_logit<T: Real>(m: &Tensor<T>, target: &[f32]) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = fg_logit(m)?;
    if target.len() != d.numel() {
        return Err(CoreError::Tensor(ogrg_tensor::TensorError::Dimension {
            op: "mask_loss",
            lhs: m.shape().to_vec(),
            rhs: vec![target.len()],
        }));
    }
    let t = binary_values::<T>(target, d.shape())?;
    let sign = t.scale(T::lit(2.0)).add_scalar(T::lit(-1.0));
    Ok((d.mul(&sign)?, t))
}

/// Two-class pixel cross-entropy, averaged over pixels.
pub fn mask_ce<T: Real>(m: &Tensor<T>, target: &[f32]) -> Result<Tensor<T>> {
    let (z, _) = signed_logit(m, target)?;
    Ok(z.neg().softplus().mean())
}

/// `1 − (2·Σp·t + s) / (Σp + Σt + s)` per sample, averaged over the batch.
pub fn dice_loss<T: Real>(m: &Tensor<T>, target: &[f32], smooth: f64) -> Result<Tensor<T>> {
    let (_, t) = signed_logit(m, target)?;
    let p = fg_logit(m)?.sigmoid();
    dice_from_probs(&p, &t, smooth)
}

pub fn dice_from_probs<T: Real>(p: &Tensor<T>, t: &Tensor<T>, smooth: f64) -> Result<Tensor<T>> {
    let s = T::lit(smooth);
    let inter = p.mul(t)?.sum_last().scale(T::lit(2.0)).add_scalar(s);
    let denom = p.sum_last().add(&t.sum_last())?.add_scalar(s);
    Ok(inter.div(&denom)?.neg().add_scalar(T::one()).mean())
}

/// `α·(1 − p_t)^γ·(−ln p_t)`, averaged over pixels. `α` weights every pixel.
pub fn focal_loss<T: Real>(m: &Tensor<T>, target: &[f32], gamma: f64, alpha: f64) -> Result<Tensor<T>> {
    let (z, _) = signed_logit(m, target)?;
    let ce = z.neg().softplus();
    let weighted = if gamma == 0.0 {
        ce
    } else {
        z.neg().sigmoid().powf(T::lit(gamma)).mul(&ce)?
    };
    Ok(weighted.scale(T::lit(alpha)).mean())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct GroundingLossParams {
    pub gamma: f64,
    pub alpha: f64,
    pub dice_smooth: f64,
}

impl Default for GroundingLossParams {
    fn default() -> Self {
        GroundingLossParams {
            gamma: 2.0,
            alpha: 0.25,
            dice_smooth: 1.0,
        }
    }
}

/// Dice plus focal loss on grounding logits.
pub fn rga_grounding_loss<T: Real>(m: &Tensor<T>, target: &[f32], p: &GroundingLossParams) -> Result<Tensor<T>> {
    Ok(dice_loss(m, target, p.dice_smooth)?.add(&focal_loss(m, target, p.gamma, p.alpha)?)?)
}

/// Mean smooth-L1 (β = 1) over elements where `weight` is 1; zero when none are.
pub fn masked_smooth_l1<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, weight: &Tensor<T>) -> Result<Tensor<T>> {
    let count = weight.data().iter().fold(T::zero(), |a, &b| a + b);
    let denom = if count > T::one() { count } else { T::one() };
    Ok(pred.sub(target)?.smooth_l1().mul(weight)?.sum().scale(T::one() / denom))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub m: f64,
    pub q: f64,
    pub theta: f64,
    pub p: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            m: 1.0,
            q: 1.0,
            theta: 1.0,
            p: 1.0,
        }
    }
}

/// Dense grasp-synthesis targets for a batch.
pub struct RgsTargets<T: Real> {
    /// Target mask, `B·H·W` values in {0, 1}.
    pub mask: Vec<f32>,
    pub q: Tensor<T>,
    pub theta: Tensor<T>,
    pub p: Tensor<T>,
    /// 1 where the quality target is positive, `[B, 1, H, W]` and `[B, 2, H, W]`.
    pub region: Tensor<T>,
    pub region2: Tensor<T>,
}

pub struct RgsLoss<T: Real> {
    pub total: Tensor<T>,
    pub m: f64,
    pub q: f64,
    pub theta: f64,
    pub p: f64,
}

/// `w_M·CE(M) + w_Q·SL1(Q) + w_Θ·SL1(Θ) + w_P·SL1(P)`; Θ and P only where Q > 0.
pub fn rgs_loss<T: Real>(out: &RgsOutput<T>, t: &RgsTargets<T>, w: &LossWeights) -> Result<RgsLoss<T>> {
    for (a, b) in [(&out.q, &t.q), (&out.theta, &t.theta), (&out.p, &t.p)] {
        if a.shape() != b.shape() {
            return Err(CoreError::Tensor(ogrg_tensor::TensorError::Dimension {
                op: "rgs_loss",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            }));
        }
    }
    let m = mask_ce(&out.m, &t.mask)?;
    let q = out.q.sub(&t.q)?.smooth_l1().mean();
    let theta = masked_smooth_l1(&out.theta, &t.theta, &t.region2)?;
    let p = masked_smooth_l1(&out.p, &t.p, &t.region)?;
    let total = m
        .scale(T::lit(w.m))
        .add(&q.scale(T::lit(w.q)))?
        .add(&theta.scale(T::lit(w.theta)))?
        .add(&p.scale(T::lit(w.p)))?;
    Ok(RgsLoss {
        m: m.item().as_f64(),
        q: q.item().as_f64(),
        theta: theta.item().as_f64(),
        p: p.item().as_f64(),
        total,
    })
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn bce_probs<T: Real>(a: &Tensor<T>, labels: &[u8]) -> Result<Tensor<T>> {
    if a.numel() != labels.len() {
        return Err(CoreError::Contract(format!("{} probabilities for {} labels", a.numel(), labels.len())));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(CoreError::input("grasp labels must be 0 or 1"));
    }
    let y = Tensor::from_vec(labels.iter().map(|&l| T::lit(l as f64)).collect(), a.shape())?;
    let (lo, hi) = (T::lit(PROB_EPS), T::lit(1.0 - PROB_EPS));
    let pos = a.clamp(lo, hi).ln().mul(&y)?;
    let neg = a.neg().add_scalar(T::one()).clamp(lo, hi).ln().mul(&y.neg().add_scalar(T::one()))?;
    Ok(pos.add(&neg)?.neg().mean())
}

/// One labelled affordance cell per batch item: `(x, y, k, label)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellLabel {
    pub x: usize,
    pub y: usize,
    pub k: usize,
    pub label: u8,
}

/// BCE at each item's labelled cell of `A` (`[B, N, H, W]`); every other cell
/// gets exactly zero gradient.
pub fn motion_loss<T: Real>(a: &Tensor<T>, labels: &[CellLabel]) -> Result<Tensor<T>> {
    let &[b, n, h, w] = a.shape() else {
        return Err(CoreError::Contract(format!("affordances must be [B, N, H, W], got {:?}", a.shape())));
    };
    if labels.len() != b {
        return Err(CoreError::Contract(format!("{} labels for a batch of {b}", labels.len())));
    }
    let mut idx = Vec::with_capacity(b);
    for (i, l) in labels.iter().enumerate() {
        if l.x >= w || l.y >= h || l.k >= n {
            return Err(CoreError::input(format!("label cell ({}, {}, {}) outside a {w}x{h}x{n} stack", l.x, l.y, l.k)));
        }
        idx.push(((i * n + l.k) * h + l.y) * w + l.x);
    }
    let cells = a.reshape(&[a.numel()])?.gather(Rc::new(idx), &[b])?;
    bce_probs(&cells, &labels.iter().map(|l| l.label).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ogrg_tensor::init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logits(fg: &[f64]) -> Tensor<f64> {
        // background logit 0, target logit fg
        let n = fg.len();
        let mut v = vec![0.0; n];
        v.extend_from_slice(fg);
        Tensor::from_vec(v, &[1, 2, 1, n]).unwrap()
    }

    #[test]
    fn smooth_l1_closed_forms() {
        let z = Tensor::<f64>::zeros(&[2]);
        let one = Tensor::full(&[2], 1.0);
        let half = Tensor::from_vec(vec![0.5, 0.5], &[2]).unwrap();
        assert_eq!(masked_smooth_l1(&half, &z, &one).unwrap().item(), 0.125);
        let two = Tensor::from_vec(vec![2.0, -2.0], &[2]).unwrap();
        assert_eq!(masked_smooth_l1(&two, &z, &one).unwrap().item(), 1.5);
        assert_eq!(masked_smooth_l1(&two, &two, &one).unwrap().item(), 0.0);
        assert_eq!(masked_smooth_l1(&two, &z, &z).unwrap().item(), 0.0);
    }

    #[test]
    fn saturated_grounding_loss_vanishes() {
        let m = logits(&[40.0, -40.0, 40.0]);
        let loss = rga_grounding_loss(&m, &[1.0, 0.0, 1.0], &GroundingLossParams::default()).unwrap();
        assert!(loss.item() < 1e-9);
        assert!(mask_ce(&m, &[1.0, 0.0, 1.0]).unwrap().item() < 1e-9);
    }

    #[test]
    fn focal_reduces_to_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let m: Tensor<f64> = init::randn(&mut rng, &[2, 2, 3, 3]);
            let t: Vec<f32> = (0..18).map(|i| ((i * 7) % 3 == 0) as u8 as f32).collect();
            let f = focal_loss(&m, &t, 0.0, 1.0).unwrap().item();
            let ce = mask_ce(&m, &t).unwrap().item();
            assert!((f - ce).abs() < 1e-12);
        }
    }

    #[test]
    fn dice_of_half_overlap() {
        let p = Tensor::<f64>::from_vec(vec![1.0, 1.0, 0.0, 0.0], &[1, 4]).unwrap();
        let t = Tensor::from_vec(vec![0.0, 1.0, 1.0, 0.0], &[1, 4]).unwrap();
        assert_eq!(dice_from_probs(&p, &t, 0.0).unwrap().item(), 0.5);
    }

    #[test]
    fn non_binary_target_rejected() {
        let m = logits(&[0.0, 0.0]);
        assert!(matches!(dice_loss(&m, &[0.5, 1.0], 1.0), Err(CoreError::Input(_))));
    }

    #[test]
    fn motion_loss_values_and_gradient_support() {
        let a = Tensor::<f64>::param(vec![0.5; 2 * 6 * 2 * 2], &[2, 6, 2, 2]).unwrap();
        let labels = [
            CellLabel { x: 1, y: 0, k: 3, label: 1 },
            CellLabel { x: 0, y: 1, k: 5, label: 1 },
        ];
        let loss = motion_loss(&a, &labels).unwrap();
        assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-12);
        loss.backward().unwrap();
        let g = a.grad().unwrap();
        let nonzero: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        assert_eq!(nonzero, vec![(3 * 2) * 2 + 1, ((6 + 5) * 2 + 1) * 2]);
        let bad = [CellLabel { x: 2, y: 0, k: 0, label: 1 }, labels[0]];
        assert!(motion_loss(&a, &bad).is_err());
    }

    #[test]
    fn saturated_bce() {
        let a = Tensor::<f64>::from_vec(vec![1.0 - 1e-9, 1e-9], &[2]).unwrap();
        assert!(bce_probs(&a, &[1, 0]).unwrap().item() < 1e-6);
    }
}
