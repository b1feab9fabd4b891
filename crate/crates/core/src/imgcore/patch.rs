use serde::{Deserialize, Serialize};

use super::{MultiChannelImage, Pixel};
use crate::error::{Error, Result};

/// Square `k x k` neighborhood with dilation `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub kernel_size: usize,
    pub dilation: usize,
}

impl PatchSpec {
    pub fn new(kernel_size: usize, dilation: usize) -> Result<Self> {
        let spec = PatchSpec {
            kernel_size,
            dilation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.dilation == 0 {
            return Err(Error::InvalidParameter("dilation must be >= 1".into()));
        }
        Ok(())
    }

    /// Patch vector length for an image with `channels` channels.
    pub fn len(&self, channels: usize) -> usize {
        self.kernel_size * self.kernel_size * channels
    }

    /// Index of the first sample of the center tap.
    pub fn center_tap(&self, channels: usize) -> usize {
        (self.kernel_size * self.kernel_size / 2) * channels
    }

    /// Neighbor offsets in raster order (rows outer, columns inner).
    pub fn offsets(&self) -> impl Iterator<Item = (isize, isize)> {
        let r = (self.kernel_size / 2) as isize;
        let d = self.dilation as isize;
        (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| (dx * d, dy * d)))
    }
}

/// Patch `P(p)`: feature vectors of `A(p)` concatenated in raster order,
/// with out-of-domain neighbors contributing zeros.
pub fn extract_patch(img: &MultiChannelImage, p: Pixel, spec: &PatchSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if p.x >= img.width() || p.y >= img.height() {
        return Err(Error::OutOfDomain {
            x: p.x as i64,
            y: p.y as i64,
            width: img.width(),
            height: img.height(),
        });
    }
    let mut out = vec![0.0; spec.len(img.channels())];
    extract_patch_into(img, p.x, p.y, spec, &mut out);
    Ok(out)
}

/// Unchecked variant writing into `out` (length `spec.len(channels)`).
#[inline]
pub fn extract_patch_into(
    img: &MultiChannelImage,
    x: usize,
    y: usize,
    spec: &PatchSpec,
    out: &mut [f64],
) {
    let m = img.channels();
    let (w, h) = (img.width() as isize, img.height() as isize);
    for (slot, (dx, dy)) in out.chunks_exact_mut(m).zip(spec.offsets()) {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        if nx >= 0 && ny >= 0 && nx < w && ny < h {
            slot.copy_from_slice(img.pixel(nx as usize, ny as usize));
        } else {
            slot.fill(0.0);
        }
    }
}
