//! Motion data: frame schema, synthetic gait clips, autoregressive pair
//! datasets, CSV import/export, and network-driven rollout.

mod clip;
mod dataset;
mod gait;
mod rollout;
mod schema;

pub use clip::MotionClip;
pub use dataset::MotionDataset;
pub use gait::{generate_gait, standard_corpus, GaitSpec, GaitType, STEP_HEIGHT_CM};
pub use rollout::{constant_controls, rollout, rollout_with, Rollout};
pub use schema::{FootRef, SkeletonSchema, CONTROL_COLS, JOINT_COLS, N_FEET, ROOT_COLS};
