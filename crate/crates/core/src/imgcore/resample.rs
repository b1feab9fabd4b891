use super::MultiChannelImage;
use crate::error::{Error, Result};

/// Bilinear upsampling of a single-channel map with corner pixel centers aligned.
pub fn bilinear_upsample(
    map: &MultiChannelImage,
    target_w: usize,
    target_h: usize,
) -> Result<MultiChannelImage> {
    if map.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: map.channels(),
        });
    }
    let (sw, sh) = (map.width(), map.height());
    if target_w < sw || target_h < sh {
        return Err(Error::InvalidParameter(format!(
            "cannot shrink {sw}x{sh} to {target_w}x{target_h}"
        )));
    }
    if target_w == sw && target_h == sh {
        return Ok(map.clone());
    }
    let scale = |dst: usize, src: usize, i: usize| -> (usize, usize, f64) {
        if src == 1 || dst == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let i0 = (pos.floor() as usize).min(src - 1);
        let i1 = (i0 + 1).min(src - 1);
        (i0, i1, pos - i0 as f64)
    };
    let cols: Vec<_> = (0..target_w).map(|x| scale(target_w, sw, x)).collect();
    let rows: Vec<_> = (0..target_h).map(|y| scale(target_h, sh, y)).collect();
    Ok(MultiChannelImage::from_fn(target_w, target_h, 1, |x, y, _| {
        let (x0, x1, fx) = cols[x];
        let (y0, y1, fy) = rows[y];
        let top = map.get(x0, y0, 0) * (1.0 - fx) + map.get(x1, y0, 0) * fx;
        let bottom = map.get(x0, y1, 0) * (1.0 - fx) + map.get(x1, y1, 0) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}
