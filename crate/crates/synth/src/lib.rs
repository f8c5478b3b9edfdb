//! Deterministic synthetic tabletop world: colored shape objects rendered as
//! RGB-D at any resolution, templated referring expressions with unique
//! referents, grasp annotations, weak affordance labels, and an analytic
//! grasp oracle.

pub mod dataset;
mod error;
pub mod grammar;
pub mod oracle;
pub mod render;
pub mod targets;
pub mod world;

pub use dataset::{
    export_dataset, gen_sample, import_dataset, DatasetRecord, GenConfig, ManifestRecord, SceneSample,
};
pub use error::{Result, SynthError};
pub use grammar::{gen_expression, parse, referents, Expression, Query, TemplateClass};
pub use oracle::{grasp_success_oracle, grasped_object, OracleOutcome};
pub use render::{render, Raster, Rendered};
pub use targets::{
    cell_pose, dense_targets, max_width_px, object_grasps, rotation_angle, sample_weak_label, DenseTargets, WeakLabel,
    L_STAR_NATIVE, MAX_WIDTH_NATIVE, N_ROTATIONS,
};
pub use world::{gen_scene, Background, Bank, Color, ObjectKind, PlacedObject, Scene, Shape, POOL, WORKSPACE};
