//! Composable architectural blocks over the tensor graph: shifted-window
//! attention, channel/spatial attention gating, fast-normalized fusion and
//! spatial pyramid pooling, plus parameter (de)serialization.

mod fusion;
mod gam;
pub mod serial;
mod spp;
mod swin;

pub use fusion::{bifpn_fuse, FusionWeights, FUSION_EPS};
pub use gam::{gam, GamParams};
pub use spp::{spp, SppConfig};
pub use swin::{
    swin_block, window_partition, window_unpartition, wmsa, SwinParams, WindowLayout, WmsaOutput,
};
