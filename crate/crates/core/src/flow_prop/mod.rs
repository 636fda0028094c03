//! Optical-flow utilities and the non-learned image propagation stage.

mod completion;
mod consistency;
mod propagate;
mod references;
mod warp;

pub use completion::{complete_flow, complete_flows, CompletedFlow, CompletionParams};
pub use consistency::{fb_consistency, ConsistencyMap};
pub use propagate::{propagate, propagate_to_saturation, PropagationResult, DEFAULT_CONSISTENCY_THRESHOLD, UNTOUCHED};
pub use references::{query_global_references, ClipWithReferences};
pub use warp::{warp, Warped};

use crate::error::Result;
use crate::image::{FlowSequence, Image};

/// Forward and backward flows of a global translation where the content of frame `t`
/// moves by `(dx, dy)` in frame `t + 1`. Backward flows are the negation.
pub fn translation_flows(width: usize, height: usize, frames: usize, dx: f64, dy: f64) -> Result<(FlowSequence, FlowSequence)> {
    let pairs = frames.saturating_sub(1);
    let field = |sx: f64, sy: f64| Image::from_fn(width, height, 2, move |_, _, c| if c == 0 { sx } else { sy });
    Ok((
        FlowSequence::new(vec![field(dx, dy); pairs])?,
        FlowSequence::new(vec![field(-dx, -dy); pairs])?,
    ))
}
