//! Grasp geometry and evaluation: rotated rectangles, pose decoding from dense
//! maps, rectangle-Jaccard grasp matching, and mask IoU metrics.

pub mod dump;
mod error;
pub mod metrics;
pub mod pose;
pub mod rect;

pub use error::{GeometryError, Result};
pub use metrics::{
    grasp_success_rate, jaccard_at_n, mask_iou, mask_miou, mask_oiou, BinaryMask, GraspOutcome,
};
pub use pose::{candidate_poses, extract_rgs_pose, GraspPose, RgsMaps, JAW_RATIO};
pub use rect::{angle_diff, rect_iou, wrap_half_turn, GraspRectangle};
