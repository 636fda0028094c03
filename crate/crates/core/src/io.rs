//! On-disk formats: 8-bit RGB frames, 8/16-bit gray depth, blur maps and masks as PNG,
//! Middlebury `.flo` flow fields. Every writer goes through [`write_atomic`].

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb as RgbPixel};

use crate::error::{Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FlowSequence, FrameSequence, Image, MaskSequence};

/// Kernel sizes are stored as `size * 20` in 8-bit blur-map PNGs.
pub const BLUR_MAP_PNG_SCALE: f64 = 20.0;

/// Magic tag at the start of every `.flo` file.
pub const FLO_TAG: &[u8; 4] = b"PIEH";

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Sorted `*.png` paths in `dir`.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    list_with_extension(dir, "png")
}

pub fn list_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .{ext} files in {}", dir.display())));
    }
    Ok(paths)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn encode_png(path: &Path, img: DynamicImage) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, buf.get_ref())
}

fn gray_from_u8(buf: &ImageBuffer<Luma<u8>, Vec<u8>>, f: impl Fn(u8) -> f64) -> Image {
    let (w, h) = buf.dimensions();
    Image::from_vec(w as usize, h as usize, 1, buf.as_raw().iter().map(|&v| f(v)).collect())
        .expect("buffer size matches dimensions")
}

fn gray_from_u16(buf: &ImageBuffer<Luma<u16>, Vec<u16>>, f: impl Fn(u16) -> f64) -> Image {
    let (w, h) = buf.dimensions();
    Image::from_vec(w as usize, h as usize, 1, buf.as_raw().iter().map(|&v| f(v)).collect())
        .expect("buffer size matches dimensions")
}

/// 8-bit PNG: each sample `p` becomes `p / 255`.
pub fn read_frame(path: &Path) -> Result<Image> {
    let img = match decode(path)? {
        DynamicImage::ImageRgb8(buf) => buf,
        img @ (DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)) => img.to_rgb8(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: expected an 8-bit RGB PNG, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&p| f64::from(p) / 255.0).collect();
    Image::from_vec(w as usize, h as usize, 3, data)
}

pub fn write_frame(path: &Path, frame: &Image) -> Result<()> {
    let buf = ImageBuffer::<RgbPixel<u8>, _>::from_raw(
        frame.width() as u32,
        frame.height() as u32,
        frame.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
    )
    .ok_or_else(|| Error::Format("frame buffer size".into()))?;
    encode_png(path, DynamicImage::ImageRgb8(buf))
}

/// 16-bit values map linearly onto `[0, 255]`; 8-bit values are taken as is.
pub fn read_depth(path: &Path) -> Result<Image> {
    match decode(path)? {
        DynamicImage::ImageLuma16(buf) => Ok(gray_from_u16(&buf, |v| f64::from(v) * 255.0 / 65535.0)),
        DynamicImage::ImageLuma8(buf) => Ok(gray_from_u8(&buf, f64::from)),
        other => Err(Error::UnsupportedFormat(format!(
            "{}: depth must be 8- or 16-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_depth(path: &Path, depth: &Image) -> Result<()> {
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(
        depth.width() as u32,
        depth.height() as u32,
        depth
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 255.0) * 65535.0 / 255.0).round() as u16)
            .collect(),
    )
    .ok_or_else(|| Error::Format("depth buffer size".into()))?;
    encode_png(path, DynamicImage::ImageLuma16(buf))
}

/// How a blur map is laid out in its PNG.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlurMapEncoding {
    /// 8-bit, kernel size times [`BLUR_MAP_PNG_SCALE`]; exact for sizes up to 12.
    KernelSize,
    /// 16-bit, `[0, 1]` scaled to `[0, 65535]`; used for estimated maps.
    Unit,
}

/// Decodes either blur-map encoding, chosen by bit depth.
pub fn read_blur_map(path: &Path) -> Result<Image> {
    match decode(path)? {
        DynamicImage::ImageLuma8(buf) => Ok(gray_from_u8(&buf, |v| f64::from(v) / BLUR_MAP_PNG_SCALE)),
        DynamicImage::ImageLuma16(buf) => Ok(gray_from_u16(&buf, |v| f64::from(v) / 65535.0)),
        other => Err(Error::UnsupportedFormat(format!(
            "{}: blur map must be 8- or 16-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_blur_map(path: &Path, map: &Image, encoding: BlurMapEncoding) -> Result<()> {
    let (w, h) = (map.width() as u32, map.height() as u32);
    let img = match encoding {
        BlurMapEncoding::KernelSize => DynamicImage::ImageLuma8(
            ImageBuffer::from_raw(
                w,
                h,
                map.data()
                    .iter()
                    .map(|&v| (v * BLUR_MAP_PNG_SCALE).round().clamp(0.0, 255.0) as u8)
                    .collect(),
            )
            .ok_or_else(|| Error::Format("blur map buffer size".into()))?,
        ),
        BlurMapEncoding::Unit => DynamicImage::ImageLuma16(
            ImageBuffer::from_raw(
                w,
                h,
                map.data()
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect(),
            )
            .ok_or_else(|| Error::Format("blur map buffer size".into()))?,
        ),
    };
    encode_png(path, img)
}

/// Any nonzero 8-bit sample above mid-gray reads as blurred.
pub fn read_mask(path: &Path) -> Result<Image> {
    match decode(path)? {
        DynamicImage::ImageLuma8(buf) => Ok(gray_from_u8(&buf, |v| if v > 127 { 1.0 } else { 0.0 })),
        other => Err(Error::UnsupportedFormat(format!(
            "{}: mask must be 8-bit grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_mask(path: &Path, mask: &Image) -> Result<()> {
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(
        mask.width() as u32,
        mask.height() as u32,
        mask.data().iter().map(|&v| if v >= 0.5 { 255 } else { 0 }).collect(),
    )
    .ok_or_else(|| Error::Format("mask buffer size".into()))?;
    encode_png(path, DynamicImage::ImageLuma8(buf))
}

/// Provenance raster as 16-bit PNG holding `source + 1` (0 = untouched).
pub fn write_provenance(path: &Path, width: usize, height: usize, provenance: &[i32]) -> Result<()> {
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(
        width as u32,
        height as u32,
        provenance.iter().map(|&s| (s + 1).clamp(0, 65535) as u16).collect(),
    )
    .ok_or_else(|| Error::Format("provenance buffer size".into()))?;
    encode_png(path, DynamicImage::ImageLuma16(buf))
}

fn load_dir<T>(dir: &Path, read: impl Fn(&Path) -> Result<Image>, build: impl Fn(Vec<Image>) -> Result<T>) -> Result<T> {
    let frames = list_pngs(dir)?
        .iter()
        .map(|p| read(p))
        .collect::<Result<Vec<_>>>()?;
    build(frames)
}

/// Loads every PNG in `dir` in filename order.
pub fn load_frames(dir: &Path) -> Result<FrameSequence> {
    load_dir(dir, read_frame, FrameSequence::new)
}

pub fn load_depth(dir: &Path) -> Result<DepthSequence> {
    load_dir(dir, read_depth, DepthSequence::new)
}

pub fn load_blur_maps(dir: &Path) -> Result<BlurMapSequence> {
    load_dir(dir, read_blur_map, BlurMapSequence::new)
}

pub fn load_masks(dir: &Path) -> Result<MaskSequence> {
    load_dir(dir, read_mask, MaskSequence::new)
}

/// Zero-padded file name used by every sequence writer.
pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("{index:05}.{ext}")
}

/// Writes `items` as `dir/00000.png`, `dir/00001.png`, ... and returns the paths.
pub fn save_sequence(
    dir: &Path,
    items: &[Image],
    write: impl Fn(&Path, &Image) -> Result<()> + Sync,
) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    items
        .par_iter()
        .enumerate()
        .map(|(t, img)| {
            let path = dir.join(frame_file_name(t, "png"));
            write(&path, img)?;
            Ok(path)
        })
        .collect()
}

/// Serializes one flow field in Middlebury layout.
pub fn encode_flo(flow: &Image) -> Result<Vec<u8>> {
    if flow.channels() != 2 {
        return Err(Error::dims("2-channel flow", flow.shape_string()));
    }
    let mut out = Vec::with_capacity(12 + flow.data().len() * 4);
    out.extend_from_slice(FLO_TAG);
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for &v in flow.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_flo(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 12 {
        return Err(Error::Length {
            expected: 12,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != FLO_TAG {
        return Err(Error::Format(format!("bad flo tag {:?}", &bytes[..4])));
    }
    let read_i32 = |at: usize| i32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let (w, h) = (read_i32(4), read_i32(8));
    if w < 0 || h < 0 {
        return Err(Error::Format(format!("negative flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + w * h * 8;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Image::from_vec(w, h, 2, data)
}

pub fn read_flo(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn write_flo(path: &Path, flow: &Image) -> Result<()> {
    write_atomic(path, &encode_flo(flow)?)
}

/// Loads every `.flo` in `dir` whose file name starts with `prefix`, in name order.
pub fn load_flows(dir: &Path, prefix: &str) -> Result<FlowSequence> {
    let paths: Vec<PathBuf> = list_with_extension(dir, "flo")?
        .into_iter()
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix))
        })
        .collect();
    let flows = paths.iter().map(|p| read_flo(p)).collect::<Result<Vec<_>>>()?;
    FlowSequence::new(flows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_flo_is_twenty_bytes() {
        let flow = Image::from_vec(1, 1, 2, vec![2.5, -1.0]).unwrap();
        let bytes = encode_flo(&flow).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(decode_flo(&bytes).unwrap(), flow);
    }

    #[test]
    fn zero_flow_has_zero_payload() {
        let bytes = encode_flo(&Image::new(3, 2, 2)).unwrap();
        assert!(bytes[12..].iter().all(|&b| b == 0));
    }

    #[test]
    fn bad_tag_and_truncation_are_reported() {
        let mut bytes = encode_flo(&Image::new(2, 2, 2)).unwrap();
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(decode_flo(truncated), Err(Error::Length { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_flo(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn flo_file_round_trips_bitwise(
            w in 1usize..6,
            h in 1usize..6,
            seed in prop::collection::vec(-1.0e6f32..1.0e6, 72)
        ) {
            let data: Vec<f64> = seed.iter().cycle().take(w * h * 2).map(|&v| f64::from(v)).collect();
            let flow = Image::from_vec(w, h, 2, data).unwrap();
            let bytes = encode_flo(&flow).unwrap();
            let back = decode_flo(&bytes).unwrap();
            prop_assert_eq!(&back, &flow);
            prop_assert_eq!(encode_flo(&back).unwrap(), bytes);
        }
    }
}
