//! Saliency map to object mask: Otsu binarization, frame and area
//! filtering, and seeded dynamic-trees delineation on the Lab image.

mod dtrees;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{
    area_filter, connected_components, dilate, erode, otsu_threshold, remove_frame_components, rgb_to_lab,
};
use crate::{Adjacency, BinaryMask, MultiChannelImage, Pixel};

pub use dtrees::{dynamic_trees_delineate, dynamic_trees_forest, Forest};

const REFERENCE_DIAGONAL: f64 = 565.685_424_949_238; // 400 x 400
const DEFAULT_R_IN: f64 = 5.0;
const DEFAULT_R_OUT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocConfig {
    pub min_area: usize,
    pub max_area: usize,
    #[serde(default)]
    pub frame_removal: bool,
    #[serde(default)]
    pub delineation: bool,
    /// Erosion radius for internal seeds; scaled from 5 px at 400x400 when unset.
    #[serde(default)]
    pub r_in: Option<usize>,
    /// Dilation radius for external seeds; scaled from 10 px at 400x400 when unset.
    #[serde(default)]
    pub r_out: Option<usize>,
    #[serde(default)]
    pub adjacency: Adjacency,
}

impl PostprocConfig {
    /// OT + frame removal + AF[1000, 9000] + DT.
    pub fn parasites() -> Self {
        PostprocConfig {
            min_area: 1000,
            max_area: 9000,
            frame_removal: true,
            delineation: true,
            r_in: None,
            r_out: None,
            adjacency: Adjacency::Eight,
        }
    }

    /// OT + AF[100, 20000].
    pub fn brats() -> Self {
        PostprocConfig {
            min_area: 100,
            max_area: 20000,
            frame_removal: false,
            delineation: false,
            r_in: None,
            r_out: None,
            adjacency: Adjacency::Eight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_area > self.max_area {
            return Err(Error::InvalidParameter(format!(
                "area range [{}, {}] is empty",
                self.min_area, self.max_area
            )));
        }
        if self.r_in == Some(0) || self.r_out == Some(0) {
            return Err(Error::InvalidParameter("seed radii must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed radii for a `width x height` image.
    pub fn radii(&self, width: usize, height: usize) -> (usize, usize) {
        let scale = ((width * width + height * height) as f64).sqrt() / REFERENCE_DIAGONAL;
        let scaled = |base: f64| ((base * scale).round() as usize).max(1);
        (
            self.r_in.unwrap_or_else(|| scaled(DEFAULT_R_IN)),
            self.r_out.unwrap_or_else(|| scaled(DEFAULT_R_OUT)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub internal: Vec<Pixel>,
    pub external: Vec<Pixel>,
}

/// Pixels strictly above the Otsu threshold of the map. A constant map
/// gives an empty mask.
pub fn binarize_otsu(saliency: &MultiChannelImage) -> Result<BinaryMask> {
    if saliency.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            found: saliency.channels(),
        });
    }
    let (w, h) = (saliency.width(), saliency.height());
    match otsu_threshold(saliency.data()) {
        Ok(t) => BinaryMask::from_vec(w, h, saliency.data().iter().map(|v| *v > t).collect()),
        Err(Error::DegenerateThreshold) => {
            log::debug!("constant saliency map, empty mask");
            Ok(BinaryMask::new(w, h))
        }
        Err(e) => Err(e),
    }
}

/// Internal seeds: the mask eroded by `r_in`, or the pixel of its largest
/// component closest to that component's centroid when erosion empties it.
/// External seeds: the complement of the mask dilated by `r_out`, or the
/// image frame when that is empty.
pub fn make_seeds(mask: &BinaryMask, r_in: usize, r_out: usize) -> Result<SeedSet> {
    if !mask.any() {
        return Err(Error::EmptyInput("cannot seed an empty mask".into()));
    }
    if r_in == 0 || r_out == 0 {
        return Err(Error::InvalidParameter("seed radii must be >= 1".into()));
    }
    let mut internal: Vec<Pixel> = erode(mask, r_in).foreground().collect();
    if internal.is_empty() {
        internal.push(centroid_pixel(mask));
    }
    let mut external: Vec<Pixel> = dilate(mask, r_out).complement().foreground().collect();
    if external.is_empty() {
        let (w, h) = (mask.width(), mask.height());
        external = BinaryMask::from_fn(w, h, |x, y| x == 0 || y == 0 || x == w - 1 || y == h - 1)
            .foreground()
            .filter(|p| !internal.contains(p))
            .collect();
    }
    Ok(SeedSet { internal, external })
}

fn centroid_pixel(mask: &BinaryMask) -> Pixel {
    let comps = connected_components(mask, Adjacency::Eight);
    let (best, _) = comps
        .areas
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (i, &a)| if a > acc.1 { (i, a) } else { acc });
    let label = best as u32 + 1;
    let members: Vec<Pixel> = mask.foreground().filter(|p| comps.label(p.x, p.y) == label).collect();
    let n = members.len() as f64;
    let cx = members.iter().map(|p| p.x as f64).sum::<f64>() / n;
    let cy = members.iter().map(|p| p.y as f64).sum::<f64>() / n;
    let d = |p: &Pixel| (p.x as f64 - cx).powi(2) + (p.y as f64 - cy).powi(2);
    members
        .iter()
        .copied()
        .fold(None::<Pixel>, |best, p| match best {
            Some(b) if d(&b) <= d(&p) => Some(b),
            _ => Some(p),
        })
        .expect("mask is non-empty")
}

/// Full pipeline on a saliency map already on the image domain. `original`
/// is RGB in [0, 1] (converted to Lab) or single-channel.
pub fn postprocess(
    saliency: &MultiChannelImage,
    original: &MultiChannelImage,
    cfg: &PostprocConfig,
) -> Result<BinaryMask> {
    cfg.validate()?;
    if !original.same_domain(saliency.width(), saliency.height()) {
        return Err(Error::DomainMismatch(
            saliency.width(),
            saliency.height(),
            original.width(),
            original.height(),
        ));
    }
    let mut mask = binarize_otsu(saliency)?;
    if !mask.any() {
        return Ok(mask);
    }
    if cfg.frame_removal {
        mask = remove_frame_components(&mask, cfg.adjacency);
    }
    mask = area_filter(&mask, cfg.min_area, cfg.max_area, cfg.adjacency)?;
    if !cfg.delineation || !mask.any() {
        return Ok(mask);
    }
    let (r_in, r_out) = cfg.radii(mask.width(), mask.height());
    let seeds = make_seeds(&mask, r_in, r_out)?;
    let lab = if original.channels() == 3 {
        rgb_to_lab(original)?
    } else {
        original.clone()
    };
    let grown = dynamic_trees_delineate(&lab, &seeds, cfg.adjacency)?;
    area_filter(&grown, cfg.min_area, cfg.max_area, cfg.adjacency)
}
