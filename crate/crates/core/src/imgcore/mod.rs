//! Raster data model and the image utilities shared by every stage:
//! PNG I/O, sRGB to Lab conversion, patch extraction, Otsu thresholding,
//! connected components, binary morphology and bilinear upsampling.

mod color;
mod components;
mod io;
mod morphology;
mod patch;
mod resample;
mod threshold;

pub use color::rgb_to_lab;
pub use components::{area_filter, connected_components, remove_frame_components, Components};
pub use io::{
    encode_saliency_png, load_image, load_mask, load_saliency, save_image_rgb8, save_mask, save_saliency,
    scale_sidecar_path,
};
pub use morphology::{dilate, disc_offsets, erode, morph, MorphOp};
pub use patch::{extract_patch, extract_patch_into, PatchSpec};
pub use resample::bilinear_upsample;
pub use threshold::{otsu_threshold, OTSU_BINS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer pixel coordinate, `x` along columns and `y` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }
}

/// Pixel adjacency used by component labeling and delineation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Adjacency {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Adjacency {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        match self {
            Adjacency::Four => &FOUR,
            Adjacency::Eight => &EIGHT,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            4 => Ok(Adjacency::Four),
            8 => Ok(Adjacency::Eight),
            other => Err(Error::InvalidParameter(format!(
                "adjacency must be 4 or 8, got {other}"
            ))),
        }
    }
}

/// Offsets `(x + dx, y + dy)` clipped to a `width` x `height` domain.
pub(crate) fn neighbor(
    x: usize,
    y: usize,
    dx: isize,
    dy: isize,
    width: usize,
    height: usize,
) -> Option<(usize, usize)> {
    let nx = x as isize + dx;
    let ny = y as isize + dy;
    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
        None
    } else {
        Some((nx as usize, ny as usize))
    }
}

/// An `m`-channel raster of finite reals, stored row-major with channels
/// interleaved per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl MultiChannelImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 || data.len() != width * height * channels
        {
            return Err(Error::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(MultiChannelImage {
            width,
            height,
            channels,
            data,
        })
    }

    /// Panics on zero-sized dimensions.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(width > 0 && height > 0 && channels > 0, "empty image");
        MultiChannelImage {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds an image from a per-sample closure `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(x, y, c);
                }
            }
        }
        img
    }

    /// Stacks equally sized single planes into one multi-channel image.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        if channels == 0 || planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Feature vector `I(p)`.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Copy of channel `c` as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Iterator over the per-pixel feature vectors in raster order.
    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    pub fn same_domain(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Minimum and maximum over all samples.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A binary raster; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height || data.is_empty() {
            return Err(Error::InvalidDimensions {
                width,
                height,
                channels: 1,
            });
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    pub fn foreground(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| Pixel::new(i % self.width, i / self.width))
    }

    pub fn complement(&self) -> Self {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_domain(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn same_domain(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// The mask as a 0/1 single-channel image.
    pub fn to_image(&self) -> MultiChannelImage {
        MultiChannelImage::from_fn(self.width, self.height, 1, |x, y, _| {
            if self.get(x, y) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_dims() {
        assert!(matches!(
            MultiChannelImage::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::NonFinite(0))
        ));
        assert!(MultiChannelImage::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(MultiChannelImage::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn planes_round_trip() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![5.0, 6.0, 7.0, 8.0];
        let img = MultiChannelImage::from_planes(2, 2, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(img.channel(0), a);
        assert_eq!(img.channel(1), b);
        assert_eq!(img.pixel(1, 1), &[4.0, 8.0]);
    }

    #[test]
    fn mask_set_ops() {
        let m = BinaryMask::from_fn(3, 3, |x, y| x == y);
        assert_eq!(m.count(), 3);
        assert_eq!(m.complement().count(), 6);
        assert!(m.is_subset_of(&BinaryMask::from_fn(3, 3, |_, _| true)));
        assert_eq!(m.foreground().collect::<Vec<_>>()[2], Pixel::new(2, 2));
    }
}
