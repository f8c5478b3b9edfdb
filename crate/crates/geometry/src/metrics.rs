//! Grasp and segmentation evaluation metrics.

use crate::error::{GeometryError, Result};
use crate::pose::GraspPose;
use crate::rect::{angle_diff, rect_iou, GraspRectangle};

pub const IOU_THRESHOLD: f64 = 0.25;
pub const ANGLE_THRESHOLD_DEG: f64 = 30.0;
/// Values within this distance of a threshold count as on it (and so fail the
/// strict comparison), so that `30°` converted through radians still fails.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Whether a predicted pose matches a ground-truth rectangle under both thresholds.
pub fn grasp_matches(pred: &GraspPose, gt: &GraspRectangle) -> Result<bool> {
    let iou = rect_iou(&pred.to_rect(), gt)?;
    let dtheta = angle_diff(pred.theta, gt.angle);
    Ok(iou > IOU_THRESHOLD + THRESHOLD_SLACK && dtheta < ANGLE_THRESHOLD_DEG - THRESHOLD_SLACK)
}

/// Success iff any of the first `n` ranked predictions matches any ground truth.
pub fn jaccard_at_n(preds: &[GraspPose], gts: &[GraspRectangle], n: usize) -> Result<bool> {
    if n < 1 {
        return Err(GeometryError::Parameter("n must be at least 1".into()));
    }
    if gts.is_empty() {
        return Err(GeometryError::Input("no ground-truth rectangles".into()));
    }
    for p in preds.iter().take(n) {
        for g in gts {
            if grasp_matches(p, g)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(GeometryError::Dimension {
                op: "BinaryMask::new",
                lhs: vec![height, width],
                rhs: vec![bits.len()],
            });
        }
        Ok(BinaryMask { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    /// Thresholds a probability map at 0.5.
    pub fn from_probs(height: usize, width: usize, probs: &[f32]) -> Result<Self> {
        Self::new(height, width, probs.iter().map(|&p| p > 0.5).collect())
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `(intersection, union)` pixel counts of one pair.
pub fn mask_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize)> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(GeometryError::Dimension {
            op: "mask_iou",
            lhs: vec![pred.height, pred.width],
            rhs: vec![gt.height, gt.width],
        });
    }
    let mut inter = 0;
    let mut union = 0;
    for (&a, &b) in pred.bits.iter().zip(&gt.bits) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok((inter, union))
}

/// IoU of one pair; two empty masks agree perfectly.
pub fn mask_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (i, u) = mask_counts(pred, gt)?;
    Ok(if u == 0 { 1.0 } else { i as f64 / u as f64 })
}

fn check_pairs(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(GeometryError::Dimension {
            op: "mask metrics",
            lhs: vec![preds.len()],
            rhs: vec![gts.len()],
        });
    }
    if preds.is_empty() {
        return Err(GeometryError::Input("no samples".into()));
    }
    Ok(())
}

/// Mean of per-sample IoUs.
pub fn mask_miou(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let mut s = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        s += mask_iou(p, g)?;
    }
    Ok(s / preds.len() as f64)
}

/// Pooled intersection over pooled union across all samples.
pub fn mask_oiou(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let (mut si, mut su) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(gts) {
        let (i, u) = mask_counts(p, g)?;
        si += i;
        su += u;
    }
    Ok(if su == 0 { 1.0 } else { si as f64 / su as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraspOutcome {
    pub grasped_any: bool,
    pub grasped_target: bool,
}

/// Percentage of attempts that lifted the referred object.
pub fn grasp_success_rate(outcomes: &[GraspOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(GeometryError::Input("no grasp attempts".into()));
    }
    let ok = outcomes
        .iter()
        .filter(|o| o.grasped_any && o.grasped_target)
        .count();
    Ok(100.0 * ok as f64 / outcomes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(x: f64, y: f64, theta_deg: f64, l: f64) -> GraspPose {
        GraspPose {
            x,
            y,
            z: 1.0,
            theta: theta_deg.to_radians(),
            l,
        }
    }

    #[test]
    fn exact_match_succeeds_and_rotated_fails() {
        let gt = GraspRectangle::new(50.0, 40.0, 0.0, 20.0, 10.0);
        assert!(jaccard_at_n(&[pose(50.0, 40.0, 0.0, 20.0)], &[gt], 1).unwrap());
        assert!(!jaccard_at_n(&[pose(50.0, 40.0, 45.0, 20.0)], &[gt], 1).unwrap());
    }

    #[test]
    fn empty_ground_truth_is_an_input_error() {
        assert!(matches!(
            jaccard_at_n(&[pose(1.0, 1.0, 0.0, 2.0)], &[], 1),
            Err(GeometryError::Input(_))
        ));
    }

    #[test]
    fn success_rate_examples() {
        let mk = |a, t| GraspOutcome {
            grasped_any: a,
            grasped_target: t,
        };
        let mut v = vec![mk(true, true); 17];
        v.extend(vec![mk(false, false); 7]);
        assert!((grasp_success_rate(&v).unwrap() - 70.8).abs() < 0.05);
        assert_eq!(grasp_success_rate(&[mk(false, false); 3]).unwrap(), 0.0);
        // lifted the wrong object
        assert_eq!(grasp_success_rate(&[mk(true, false)]).unwrap(), 0.0);
        assert!(grasp_success_rate(&[]).is_err());
    }

    #[test]
    fn empty_pair_counts_as_one() {
        let e = BinaryMask::empty(3, 3);
        assert_eq!(mask_iou(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let a = BinaryMask::empty(3, 3);
        let b = BinaryMask::empty(3, 4);
        assert!(matches!(mask_iou(&a, &b), Err(GeometryError::Dimension { .. })));
    }
}
