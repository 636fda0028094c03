//! Forward pass of a map-guided sparse video transformer: overlapping patch embedding,
//! a query mask pooled from blur maps, window attention that skips in-focus windows,
//! temporal key/value striding and pixel-shuffle upsampling. Weights are seeded or
//! loaded; nothing is trained here.

mod attention;
mod geometry;
mod mask;
mod model;
mod shuffle;
mod weights;
mod window;

pub use attention::{attention_forward, block_stack_forward, window_is_active, BlockStats};
pub use geometry::{soft_comp, soft_split, PatchGeometry, PatchGrid, Volume};
pub use mask::{build_query_mask, QueryMask};
pub use model::{forward, ClipInput, ForwardOutput};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
pub use weights::{BlockWeights, LayerNorm, Linear, MgstConfig, ModelWeights, INPUT_CHANNELS};
pub use window::{partition_windows, select_kv_frames, Window, WindowSpec};
