use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};

use super::{BinaryMask, MultiChannelImage};
use crate::error::{Error, Result};

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

/// Reads an 8-bit RGB, 8-bit gray or 16-bit gray PNG with samples scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => MultiChannelImage::new(
            w,
            h,
            1,
            buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageRgb8(buf) => MultiChannelImage::new(
            w,
            h,
            3,
            buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageLuma16(buf) => MultiChannelImage::new(
            w,
            h,
            1,
            buf.into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        ),
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            format: format!("{:?}", other.color()),
        }),
    }
}

/// Reads a mask PNG; any gray value above 127 (8-bit) or 32767 (16-bit) is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_image(path.as_ref())?;
    if img.channels() != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.as_ref().to_path_buf(),
            format: "mask must be single-channel".into(),
        });
    }
    BinaryMask::from_vec(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v > 0.5).collect(),
    )
}

/// Writes a mask as an 8-bit PNG with values {0, 255}.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = mask
        .as_slice()
        .iter()
        .map(|&v| if v { 255u8 } else { 0 })
        .collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer sized from mask");
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes an RGB image with samples in `[0, 1]` as an 8-bit PNG.
pub fn save_image_rgb8(img: &MultiChannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if img.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            found: img.channels(),
        });
    }
    let raw = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer sized from image");
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Sidecar holding the min/max scale of a saliency PNG: `<png path>.scale`.
pub fn scale_sidecar_path(png: impl AsRef<Path>) -> PathBuf {
    let mut os = png.as_ref().as_os_str().to_owned();
    os.push(".scale");
    PathBuf::from(os)
}

/// Encodes a single-channel map as a min-max scaled 16-bit PNG. Returns the
/// PNG bytes with the `(min, max)` needed to restore the values.
pub fn encode_saliency_png(map: &MultiChannelImage) -> Result<(Vec<u8>, f64, f64)> {
    if map.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: map.channels(),
        });
    }
    let (lo, hi) = map.min_max();
    let range = hi - lo;
    let raw: Vec<u16> = map
        .data()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .expect("buffer sized from map");
    let mut bytes = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: PathBuf::from("<memory>"),
            message: e.to_string(),
        })?;
    Ok((bytes.into_inner(), lo, hi))
}

/// Writes a single-channel saliency map as a min-max scaled 16-bit PNG plus the
/// `.scale` sidecar (`<min> <max>` as decimal reals).
pub fn save_saliency(map: &MultiChannelImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (bytes, lo, hi) = encode_saliency_png(map)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = scale_sidecar_path(path);
    fs::write(&sidecar, format!("{lo} {hi}\n")).map_err(|e| Error::io(sidecar, e))
}

/// Inverse of [`save_saliency`]. Without a sidecar the map is read in `[0, 1]`.
pub fn load_saliency(path: impl AsRef<Path>) -> Result<MultiChannelImage> {
    let path = path.as_ref();
    let img = load_image(path)?;
    let sidecar = scale_sidecar_path(path);
    let (lo, hi) = match fs::read_to_string(&sidecar) {
        Ok(text) => {
            let parts: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Decode {
                    path: sidecar.clone(),
                    message: e.to_string(),
                })?;
            if parts.len() != 2 {
                return Err(Error::Decode {
                    path: sidecar,
                    message: "expected `<min> <max>`".into(),
                });
            }
            (parts[0], parts[1])
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => (0.0, 1.0),
        Err(e) => return Err(Error::io(sidecar, e)),
    };
    let data = img.data().iter().map(|v| lo + v * (hi - lo)).collect();
    MultiChannelImage::new(img.width(), img.height(), 1, data)
}
