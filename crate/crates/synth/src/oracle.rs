//! Analytic parallel-jaw grasp adjudication in native coordinates.

use ogrg_geometry::{GraspPose, JAW_RATIO};

use crate::world::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleOutcome {
    pub grasped_any: bool,
    pub grasped_target: bool,
}

/// Index of the object a grasp would lift, if any. The pose is in native
/// coordinates with `l` in native pixels.
///
/// The grasp holds object `O` when the center lies on `O`, every part of `O`
/// on the contact line falls strictly between the open jaws, and neither jaw
/// segment (length `JAW_RATIO·l`, centered at `±l/2` along the opening axis)
/// touches another object.
pub fn grasped_object(scene: &Scene, pose: &GraspPose) -> Option<usize> {
    let (x, y, l) = (pose.x, pose.y, pose.l);
    if !(l > 0.0) || !x.is_finite() || !y.is_finite() {
        return None;
    }
    let o = scene.object_at(x, y)?;
    let (s, c) = pose.theta.sin_cos();
    let half = l / 2.0;
    let fits = scene.objects[o]
        .line_intervals((x, y), (c, s))
        .iter()
        .all(|&(t0, t1)| t0 > -half && t1 < half);
    if !fits {
        return None;
    }
    let h = JAW_RATIO * l / 2.0;
    for side in [-1.0, 1.0] {
        let jc = (x + side * half * c, y + side * half * s);
        let a = (jc.0 + h * s, jc.1 - h * c);
        let b = (jc.0 - h * s, jc.1 + h * c);
        for (i, other) in scene.objects.iter().enumerate() {
            if i != o && other.touches_segment(a, b) {
                return None;
            }
        }
    }
    Some(o)
}

pub fn grasp_success_oracle(scene: &Scene, target: usize, pose: &GraspPose) -> OracleOutcome {
    match grasped_object(scene, pose) {
        Some(o) => OracleOutcome {
            grasped_any: true,
            grasped_target: o == target,
        },
        None => OracleOutcome {
            grasped_any: false,
            grasped_target: false,
        },
    }
}
