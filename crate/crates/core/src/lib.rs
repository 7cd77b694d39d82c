//! Training-free lifting of a pretrained 2D vision transformer to 3D
//! volumes by cycling its attention over the HW, DW and DH planes.
//!
//! The building blocks, bottom up:
//!
//! * [`tensor`]: row-major `f32` tensors and adaptive average pooling.
//! * [`block`]: one frozen ViT block with 2D rotary embeddings.
//! * [`plane`]: the plane-cycle operator (reshape to a plane, pool global
//!   tokens, apply the block per slice, restore).
//! * [`lifting`]: patch embedding, schedules, and the slice-wise 2D,
//!   flattened 3D and plane-cycle forward modes.
//! * [`metrics`]: FeatDice, PCA projections, attention cost and timing.
//! * [`archive`] / [`weights`]: the tensor archive format and weight manifest.
//! * [`cli`]: the `planecycle` command-line tool.

pub mod archive;
pub mod block;
pub mod cli;
pub mod error;
pub mod lifting;
pub mod metrics;
pub mod plane;
pub mod ppm;
pub mod rng;
pub mod selftest;
pub mod tensor;
pub mod weights;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use lifting::{
    build_cycle_schedule, extract_global_summary, forward, patch_embed_volume, ForwardOutput,
    LiftMode, LiftingEngine, NetworkWeights, Schedule,
};
pub use plane::{
    plane_cycle_step, pool_global_tokens, reshape_to_plane, restore_from_plane, GlobalTokens,
    PlaneAxis, PoolMode, VolumeFeatures,
};
pub use tensor::{adaptive_avg_pool_1d, Shape, Tensor};
