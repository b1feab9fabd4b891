use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use flimsod_core::imgcore::{load_image, load_mask};
use flimsod_core::markers::{parse_markers, ImageMarkers, MarkerSet};
use flimsod_core::{BinaryMask, ImageSet, MultiChannelImage};

use crate::config::PipelineConfig;

/// Image, marker and ground-truth directories of one dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: PathBuf,
    pub markers: PathBuf,
    pub ground_truth: Option<PathBuf>,
}

/// Sorted stems of the `.png` files in `dir`.
pub fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

impl Dataset {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Dataset {
            images: cfg.images.clone(),
            markers: cfg.markers.clone(),
            ground_truth: cfg.ground_truth.clone(),
        }
    }

    pub fn image_ids(&self) -> Result<Vec<String>> {
        png_stems(&self.images)
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.images.join(format!("{id}.png"))
    }

    pub fn marker_path(&self, id: &str) -> PathBuf {
        self.markers.join(format!("{id}.txt"))
    }

    pub fn load_image(&self, id: &str) -> Result<MultiChannelImage> {
        let path = self.image_path(id);
        load_image(&path).with_context(|| format!("loading image {}", path.display()))
    }

    pub fn load_gt(&self, id: &str) -> Result<BinaryMask> {
        let Some(dir) = &self.ground_truth else {
            bail!("no ground-truth directory configured");
        };
        let path = dir.join(format!("{id}.png"));
        load_mask(&path).with_context(|| format!("loading ground truth {}", path.display()))
    }

    pub fn has_markers(&self, id: &str) -> bool {
        self.marker_path(id).is_file()
    }

    pub fn load_markers(&self, id: &str) -> Result<ImageMarkers> {
        let path = self.marker_path(id);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading markers {}", path.display()))?;
        let im = parse_markers(&text).with_context(|| format!("parsing markers {}", path.display()))?;
        if im.image_id != id {
            bail!("{} describes image {:?}, expected {id:?}", path.display(), im.image_id);
        }
        Ok(im)
    }

    /// Training ids from the config, or every image that has a marker file.
    pub fn training_ids(&self, cfg: &PipelineConfig) -> Result<Vec<String>> {
        match &cfg.train {
            Some(ids) => Ok(ids.clone()),
            None => Ok(self.image_ids()?.into_iter().filter(|id| self.has_markers(id)).collect()),
        }
    }

    pub fn load_training(&self, ids: &[String]) -> Result<(ImageSet, MarkerSet)> {
        if ids.is_empty() {
            bail!("no training images (no marker files in {})", self.markers.display());
        }
        let mut images = ImageSet::new();
        let mut markers = MarkerSet::new();
        for id in ids {
            images.insert(id.clone(), self.load_image(id)?);
            markers.insert(self.load_markers(id)?);
        }
        Ok((images, markers))
    }
}
