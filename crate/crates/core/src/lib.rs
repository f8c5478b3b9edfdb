//! Open-vocabulary grounded grasping: encoders, bidirectional aligner,
//! grasp heads, motion-guided affordance network and training loops.

pub mod aligner;
pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoders;
mod error;
pub mod eval;
pub mod gradsuite;
pub mod losses;
pub mod mgn;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;
pub mod vocab;

pub use config::{AlignerConfig, BackboneConfig, MgnConfig, ModelConfig, Task};
pub use error::{CoreError, Result};
pub use model::{ModelInput, ModelOutput, Ogrg};
pub use vocab::{Tokens, Vocab};
