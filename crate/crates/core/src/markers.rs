//! Marker sets: the canonical text format, coordinate mapping to deeper
//! encoder blocks, and per-channel statistics over marker pixels.
//!
//! Canonical file layout (UTF-8, `#` starts a comment):
//!
//! ```text
//! FLIM-MARKERS 1
//! <image-id> <width> <height>
//! <x> <y> <marker-id> <label>
//! ...
//! ```
//!
//! Label 1 is foreground (object) and label 2 is background. All lines that
//! share a marker id form one marker.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Pixel;
use crate::ImageSet;

pub const MARKER_MAGIC: &str = "FLIM-MARKERS 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Foreground = 1,
    Background = 2,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Label::Foreground),
            2 => Ok(Label::Background),
            other => Err(Error::InvalidLabel(other)),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub id: u32,
    pub label: Label,
    /// Distinct pixels in first-appearance order.
    pub pixels: Vec<Pixel>,
}

/// All markers drawn on one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMarkers {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    /// Sorted by ascending marker id.
    pub markers: Vec<Marker>,
}

impl ImageMarkers {
    /// Union of marker pixels, deduplicated across markers.
    pub fn pixel_union(&self) -> BTreeSet<Pixel> {
        self.markers
            .iter()
            .flat_map(|m| m.pixels.iter().copied())
            .collect()
    }

    /// Canonical text form; [`parse_markers`] of the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MARKER_MAGIC}").unwrap();
        writeln!(out, "{} {} {}", self.image_id, self.width, self.height).unwrap();
        for m in &self.markers {
            for p in &m.pixels {
                writeln!(out, "{} {} {} {}", p.x, p.y, m.id, m.label.as_u8()).unwrap();
            }
        }
        out
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::MarkerSyntax {
        line,
        message: message.into(),
    }
}

/// Parses one marker file.
pub fn parse_markers(text: &str) -> Result<ImageMarkers> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (n, magic) = lines.next().ok_or_else(|| syntax(1, "empty marker file"))?;
    if magic.split_whitespace().collect::<Vec<_>>() != ["FLIM-MARKERS", "1"] {
        return Err(syntax(n, format!("expected `{MARKER_MAGIC}`")));
    }

    let (n, header) = lines
        .next()
        .ok_or_else(|| syntax(n + 1, "missing `<image-id> <width> <height>` header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(syntax(n, "header must be `<image-id> <width> <height>`"));
    }
    let image_id = fields[0].to_string();
    let parse_dim = |s: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(syntax(n, format!("invalid dimension `{s}`"))),
        }
    };
    let (width, height) = (parse_dim(fields[1])?, parse_dim(fields[2])?);

    let mut markers: BTreeMap<u32, (Label, Vec<Pixel>, HashSet<Pixel>)> = BTreeMap::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(syntax(n, "expected `<x> <y> <marker-id> <label>`"));
        }
        let x: i64 = fields[0]
            .parse()
            .map_err(|_| syntax(n, format!("invalid x `{}`", fields[0])))?;
        let y: i64 = fields[1]
            .parse()
            .map_err(|_| syntax(n, format!("invalid y `{}`", fields[1])))?;
        let id: u32 = fields[2]
            .parse()
            .map_err(|_| syntax(n, format!("invalid marker id `{}`", fields[2])))?;
        let label = fields[3]
            .parse::<u8>()
            .ok()
            .and_then(|v| Label::try_from(v).ok())
            .ok_or_else(|| syntax(n, format!("invalid label `{}` (expected 1 or 2)", fields[3])))?;
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
            return Err(Error::OutOfDomain {
                x,
                y,
                width,
                height,
            });
        }
        let p = Pixel::new(x as usize, y as usize);
        let entry = markers
            .entry(id)
            .or_insert_with(|| (label, Vec::new(), HashSet::new()));
        if entry.0 != label {
            return Err(Error::DuplicateMarkerId {
                image: image_id.clone(),
                id,
            });
        }
        if entry.2.insert(p) {
            entry.1.push(p);
        }
    }

    Ok(ImageMarkers {
        image_id,
        width,
        height,
        markers: markers
            .into_iter()
            .map(|(id, (label, pixels, _))| Marker { id, label, pixels })
            .collect(),
    })
}

/// Markers of every training image, keyed by image id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerSet {
    images: BTreeMap<String, ImageMarkers>,
}

impl MarkerSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or replaces) the markers of one image.
    pub fn insert(&mut self, markers: ImageMarkers) -> Option<ImageMarkers> {
        self.images.insert(markers.image_id.clone(), markers)
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageMarkers> {
        self.images.get(image_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageMarkers> {
        self.images.values()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Total number of markers over all images.
    pub fn marker_count(&self) -> usize {
        self.images.values().map(|m| m.markers.len()).sum()
    }

    /// Restricts the set to the given image ids.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> MarkerSet {
        let mut out = MarkerSet::new();
        for id in ids {
            if let Some(m) = self.images.get(id) {
                out.insert(m.clone());
            }
        }
        out
    }

    /// Total number of distinct marker pixels `|M|`.
    pub fn pixel_count(&self) -> usize {
        self.images.values().map(|m| m.pixel_union().len()).sum()
    }
}

impl FromIterator<ImageMarkers> for MarkerSet {
    fn from_iter<I: IntoIterator<Item = ImageMarkers>>(iter: I) -> Self {
        let mut set = MarkerSet::new();
        for m in iter {
            set.insert(m);
        }
        set
    }
}

/// Maps every marker pixel `(x, y)` to `(x / s, y / s)` (floor), the domain of
/// a block whose preceding poolings have cumulative stride `s`.
pub fn map_markers_to_block(ms: &MarkerSet, cumulative_stride: usize) -> Result<MarkerSet> {
    if cumulative_stride == 0 {
        return Err(Error::InvalidParameter("cumulative stride must be >= 1".into()));
    }
    let s = cumulative_stride;
    Ok(ms
        .iter()
        .map(|im| ImageMarkers {
            image_id: im.image_id.clone(),
            width: im.width.div_ceil(s),
            height: im.height.div_ceil(s),
            markers: im
                .markers
                .iter()
                .map(|m| {
                    let mut seen = HashSet::new();
                    let pixels = m
                        .pixels
                        .iter()
                        .map(|p| Pixel::new(p.x / s, p.y / s))
                        .filter(|p| seen.insert(*p))
                        .collect();
                    Marker {
                        id: m.id,
                        label: m.label,
                        pixels,
                    }
                })
                .collect(),
        })
        .collect())
}

/// Per-channel mean and standard deviation over marker pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub epsilon: f64,
}

impl MarkerStats {
    /// Stats that leave values unchanged up to `epsilon`.
    pub fn identity(channels: usize, epsilon: f64) -> Self {
        MarkerStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            epsilon,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and population standard deviation of each channel over the union of
/// marker pixels of all images.
pub fn marker_stats(images: &ImageSet, ms: &MarkerSet, epsilon: f64) -> Result<MarkerStats> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParameter("epsilon must be > 0".into()));
    }
    let mut samples: Vec<&[f64]> = Vec::new();
    let mut channels = None;
    for im in ms.iter() {
        let img = images
            .get(&im.image_id)
            .ok_or_else(|| Error::UnknownImage(im.image_id.clone()))?;
        if !img.same_domain(im.width, im.height) {
            return Err(Error::DomainMismatch(
                img.width(),
                img.height(),
                im.width,
                im.height,
            ));
        }
        match channels {
            None => channels = Some(img.channels()),
            Some(m) if m != img.channels() => {
                return Err(Error::ChannelMismatch {
                    expected: m,
                    found: img.channels(),
                })
            }
            _ => {}
        }
        samples.extend(im.pixel_union().into_iter().map(|p| img.pixel(p.x, p.y)));
    }
    let m = match channels {
        Some(m) if !samples.is_empty() => m,
        _ => return Err(Error::EmptyMarkers(String::new())),
    };
    let n = samples.len() as f64;
    let mut mean = vec![0.0; m];
    for s in &samples {
        for (acc, v) in mean.iter_mut().zip(s.iter()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for s in &samples {
        for ((acc, v), mu) in var.iter_mut().zip(s.iter()).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
    Ok(MarkerStats { mean, std, epsilon })
}
