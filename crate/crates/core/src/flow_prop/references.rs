use std::collections::BTreeSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::{FrameSequence, MaskSequence};

/// A local clip followed by its global reference frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipWithReferences {
    pub frames: FrameSequence,
    pub masks: MaskSequence,
    /// Source index of every delivered frame: the clip in order, then the references in
    /// the order given.
    pub source_indices: Vec<usize>,
    pub clip_len: usize,
}

/// Cuts `clip` out of the video and appends the frames at `references` after it.
pub fn query_global_references(
    frames: &FrameSequence,
    masks: &MaskSequence,
    clip: Range<usize>,
    references: &[usize],
) -> Result<ClipWithReferences> {
    let total = frames.len();
    if masks.len() != total {
        return Err(Error::dims(format!("{total} masks"), masks.len()));
    }
    masks.ensure_dims(frames.dims())?;
    if clip.is_empty() || clip.end > total {
        return Err(Error::InvalidIndex(format!("clip {clip:?} in a {total}-frame video")));
    }
    let mut seen = BTreeSet::new();
    for &r in references {
        if r >= total {
            return Err(Error::InvalidIndex(format!("reference {r} in a {total}-frame video")));
        }
        if clip.contains(&r) {
            return Err(Error::InvalidIndex(format!("reference {r} lies inside clip {clip:?}")));
        }
        if !seen.insert(r) {
            return Err(Error::InvalidIndex(format!("reference {r} given twice")));
        }
    }
    let clip_len = clip.len();
    let source_indices: Vec<usize> = clip.chain(references.iter().copied()).collect();
    Ok(ClipWithReferences {
        frames: frames.select(&source_indices)?,
        masks: masks.select(&source_indices)?,
        source_indices,
        clip_len,
    })
}
