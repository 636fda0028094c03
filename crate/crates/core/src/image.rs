//! Dense multi-channel float rasters and the typed per-frame sequences built on them.
//!
//! Every raster is stored row-major with interleaved channels. A [`Sequence`] is a list
//! of rasters sharing one size, tagged with a [`SampleKind`] that fixes the channel count,
//! the legal value range and how the samples behave under flips, time reversal and
//! resampling.

use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::resample;

/// Row-major, channel-interleaved `f64` raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::dims(
                format!("{width}x{height}x{channels} = {expected} samples"),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a raster by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    fn offset(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let o = self.offset(x, y);
        self.data[o + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = self.offset(x, y);
        &mut self.data[o..o + self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Extracts one channel as a single-channel raster.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels, "channel {c} out of range");
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    /// BT.601 luma of a 3-channel raster; single-channel input is returned as is.
    pub fn luma(&self) -> Image {
        match self.channels {
            1 => self.clone(),
            3 => Image {
                width: self.width,
                height: self.height,
                channels: 1,
                data: self
                    .data
                    .chunks_exact(3)
                    .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                    .collect(),
            },
            n => panic!("luma of a {n}-channel raster"),
        }
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(Error::dims(self.shape_string(), other.shape_string()));
        }
        Ok(())
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.shape_string(), other.shape_string()));
        }
        Ok(())
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    /// Mirrors columns: `x -> width - 1 - x`.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.pixel_mut(self.width - 1 - x, y).copy_from_slice(self.pixel(x, y));
            }
        }
        out
    }
}

/// How samples of a sequence are resampled when downsampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resampling {
    Bicubic,
    Nearest,
}

/// Static description of what a sequence holds.
pub trait SampleKind {
    const NAME: &'static str;
    const CHANNELS: usize;
    const RESAMPLING: Resampling;
    /// Flow sequences hold one field per adjacent frame pair and may be empty.
    const PAIRWISE: bool = false;

    fn validate(value: f64) -> bool;

    /// Applied to every pixel after a horizontal mirror.
    fn mirror(_px: &mut [f64]) {}

    /// Applied to every pixel after time reversal.
    fn reverse_time(_px: &mut [f64]) {}

    /// Applied to every sample after resampling by `factor`.
    fn rescale(value: f64, _factor: usize) -> f64 {
        value
    }
}

/// RGB frames in `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct Rgb;
/// Relative depth in `[0, 255]`.
#[derive(Clone, Copy, Debug)]
pub struct Depth;
/// Blur kernel size per pixel (0 = in focus) or a non-negative estimated blurriness.
#[derive(Clone, Copy, Debug)]
pub struct BlurMap;
/// Binary focus mask: 0 = in focus, 1 = blurred.
#[derive(Clone, Copy, Debug)]
pub struct Mask;
/// Two-channel `(dx, dy)` displacement in pixels.
#[derive(Clone, Copy, Debug)]
pub struct Flow;

impl SampleKind for Rgb {
    const NAME: &'static str = "frame";
    const CHANNELS: usize = 3;
    const RESAMPLING: Resampling = Resampling::Bicubic;
    fn validate(v: f64) -> bool {
        (0.0..=1.0).contains(&v)
    }
    fn rescale(v: f64, _: usize) -> f64 {
        v.clamp(0.0, 1.0)
    }
}

impl SampleKind for Depth {
    const NAME: &'static str = "depth";
    const CHANNELS: usize = 1;
    const RESAMPLING: Resampling = Resampling::Bicubic;
    fn validate(v: f64) -> bool {
        (0.0..=255.0).contains(&v)
    }
    fn rescale(v: f64, _: usize) -> f64 {
        v.clamp(0.0, 255.0)
    }
}

impl SampleKind for BlurMap {
    const NAME: &'static str = "blur map";
    const CHANNELS: usize = 1;
    const RESAMPLING: Resampling = Resampling::Nearest;
    fn validate(v: f64) -> bool {
        v >= 0.0 && v.is_finite()
    }
}

impl SampleKind for Mask {
    const NAME: &'static str = "mask";
    const CHANNELS: usize = 1;
    const RESAMPLING: Resampling = Resampling::Nearest;
    fn validate(v: f64) -> bool {
        v == 0.0 || v == 1.0
    }
}

impl SampleKind for Flow {
    const NAME: &'static str = "flow";
    const CHANNELS: usize = 2;
    const RESAMPLING: Resampling = Resampling::Bicubic;
    const PAIRWISE: bool = true;
    fn validate(v: f64) -> bool {
        v.is_finite()
    }
    fn mirror(px: &mut [f64]) {
        px[0] = -px[0];
    }
    fn reverse_time(px: &mut [f64]) {
        px[0] = -px[0];
        px[1] = -px[1];
    }
    fn rescale(v: f64, factor: usize) -> f64 {
        v / factor as f64
    }
}

/// Ordered rasters of one kind sharing a single size.
#[derive(Debug)]
pub struct Sequence<K> {
    items: Vec<Image>,
    kind: PhantomData<K>,
}

impl<K> Clone for Sequence<K> {
    fn clone(&self) -> Self {
        Self {
            items: self.items.clone(),
            kind: PhantomData,
        }
    }
}

impl<K> PartialEq for Sequence<K> {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

pub type FrameSequence = Sequence<Rgb>;
pub type DepthSequence = Sequence<Depth>;
pub type BlurMapSequence = Sequence<BlurMap>;
pub type MaskSequence = Sequence<Mask>;
pub type FlowSequence = Sequence<Flow>;

impl<K: SampleKind> Sequence<K> {
    /// Validates channel count, shared dimensions and value range.
    pub fn new(items: Vec<Image>) -> Result<Self> {
        if items.is_empty() && !K::PAIRWISE {
            return Err(Error::EmptyInput(format!("{} sequence has no entries", K::NAME)));
        }
        if let Some(first) = items.first() {
            for (t, img) in items.iter().enumerate() {
                if img.channels() != K::CHANNELS {
                    return Err(Error::dims(
                        format!("{} channels for a {}", K::CHANNELS, K::NAME),
                        format!("{} channels at index {t}", img.channels()),
                    ));
                }
                first.ensure_same_dims(img)?;
                if let Some(bad) = img.data().iter().find(|&&v| !K::validate(v)) {
                    return Err(Error::InvalidParameter(format!(
                        "{} value {bad} at index {t} is out of range",
                        K::NAME
                    )));
                }
            }
        }
        Ok(Self::from_trusted(items))
    }

    pub(crate) fn from_trusted(items: Vec<Image>) -> Self {
        Self {
            items,
            kind: PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(width, height)` shared by all entries; `(0, 0)` for an empty flow sequence.
    pub fn dims(&self) -> (usize, usize) {
        self.items.first().map_or((0, 0), Image::dims)
    }

    pub fn frames(&self) -> &[Image] {
        &self.items
    }

    pub fn get(&self, t: usize) -> Option<&Image> {
        self.items.get(t)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Image> {
        self.items.iter()
    }

    pub fn into_inner(self) -> Vec<Image> {
        self.items
    }

    /// Sub-sequence at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let items = indices
            .iter()
            .map(|&i| {
                self.items
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidIndex(format!("{i} >= length {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_trusted(items))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if !self.is_empty() && self.dims() != dims {
            return Err(Error::dims(
                format!("{}x{}", dims.0, dims.1),
                format!("{} of {}x{}", K::NAME, self.dims().0, self.dims().1),
            ));
        }
        Ok(())
    }

    pub fn horizontal_flip(&self) -> Self {
        Self::from_trusted(
            self.items
                .iter()
                .map(|img| {
                    let mut out = img.flip_horizontal();
                    for px in out.data_mut().chunks_exact_mut(K::CHANNELS) {
                        K::mirror(px);
                    }
                    out
                })
                .collect(),
        )
    }

    /// Frame `t` becomes frame `len - 1 - t`. Flow fields are re-paired and negated so
    /// each entry still maps frame `t` to `t + 1` of the reversed sequence.
    pub fn temporal_reverse(&self) -> Self {
        Self::from_trusted(
            self.items
                .iter()
                .rev()
                .map(|img| {
                    let mut out = img.clone();
                    for px in out.data_mut().chunks_exact_mut(K::CHANNELS) {
                        K::reverse_time(px);
                    }
                    out
                })
                .collect(),
        )
    }

    /// Bicubic for frames, depth and flows; nearest neighbour for blur maps and masks.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|img| {
                let mut out = match K::RESAMPLING {
                    Resampling::Bicubic => resample::downsample_bicubic(img, factor)?,
                    Resampling::Nearest => resample::downsample_nearest(img, factor)?,
                };
                if factor != 1 {
                    for v in out.data_mut() {
                        *v = K::rescale(*v, factor);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_trusted(items))
    }
}

impl<'a, K> IntoIterator for &'a Sequence<K> {
    type Item = &'a Image;
    type IntoIter = std::slice::Iter<'a, Image>;
    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 / 10.0)
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let err = FrameSequence::new(vec![ramp(4, 3), ramp(3, 4)]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn rejects_empty_frames_but_accepts_empty_flows() {
        assert!(matches!(FrameSequence::new(vec![]), Err(Error::EmptyInput(_))));
        assert!(FlowSequence::new(vec![]).unwrap().is_empty());
    }

    #[test]
    fn rejects_out_of_range_values() {
        let bad = Image::filled(2, 2, 1, 0.5);
        assert!(MaskSequence::new(vec![bad]).is_err());
        let bad = Image::filled(2, 2, 1, 256.0);
        assert!(DepthSequence::new(vec![bad]).is_err());
    }

    #[test]
    fn flip_swaps_a_two_pixel_row() {
        let img = Image::from_vec(2, 1, 3, vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9]).unwrap();
        let seq = FrameSequence::new(vec![img]).unwrap();
        let flipped = seq.horizontal_flip();
        assert_eq!(flipped.frames()[0].data(), &[0.7, 0.8, 0.9, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn flip_leaves_single_column_alone() {
        let seq = FrameSequence::new(vec![ramp(1, 5)]).unwrap();
        assert_eq!(seq.horizontal_flip(), seq);
    }

    #[test]
    fn reverse_of_single_frame_is_identity() {
        let seq = FrameSequence::new(vec![ramp(3, 3)]).unwrap();
        assert_eq!(seq.temporal_reverse(), seq);
    }

    #[test]
    fn flow_flip_negates_dx() {
        let f = Image::from_vec(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let seq = FlowSequence::new(vec![f]).unwrap();
        assert_eq!(seq.horizontal_flip().frames()[0].data(), &[-3.0, 4.0, -1.0, 2.0]);
    }

    #[test]
    fn luma_weights_sum_to_one() {
        let img = Image::filled(2, 2, 3, 0.4);
        for v in img.luma().data() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }
}
