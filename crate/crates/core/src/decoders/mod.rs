//! Point-wise decoders turning a feature map into a saliency map.
//!
//! Every decoder is a weighted sum of channels followed by ReLU. The
//! heuristic decoders pick weights in {-1, 0, +1} per image (`ts`, `at`,
//! `lt`) or per pixel (`pb`, `mb`); `lm` uses kernel labels only; `bp`
//! learns real weights by gradient descent and decodes through a sigmoid.

mod bp;
mod heuristics;
mod local;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markers::Label;
use crate::MultiChannelImage;

pub use bp::{downsample_nearest, train_bp_decoder, BpHyper, BpProblem, BpTraining};
pub use heuristics::{
    attention_stats, channel_stats, weights_at, weights_lt, weights_lt_with, weights_ts, weights_ts_with,
    AttentionStats, ChannelStats, TsThresholds,
};
pub use local::{local_stats, weights_mb, weights_pb, LocalStats, VARIANCE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    Ts,
    At,
    Lt,
    Pb,
    Mb,
    Lm,
    Bp,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 7] = [
        DecoderKind::Ts,
        DecoderKind::At,
        DecoderKind::Lt,
        DecoderKind::Pb,
        DecoderKind::Mb,
        DecoderKind::Lm,
        DecoderKind::Bp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderKind::Ts => "ts",
            DecoderKind::At => "at",
            DecoderKind::Lt => "lt",
            DecoderKind::Pb => "pb",
            DecoderKind::Mb => "mb",
            DecoderKind::Lm => "lm",
            DecoderKind::Bp => "bp",
        }
    }

    /// Weights restricted to {-1, 0, +1}.
    pub fn is_tri_state(self) -> bool {
        self != DecoderKind::Bp
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownDecoder(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub kind: DecoderKind,
    pub alpha: Vec<f64>,
}

/// One weight vector per pixel, stored pixel-major like feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelWeightField {
    pub kind: DecoderKind,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub alpha: Vec<f64>,
}

impl PixelWeightField {
    /// The same vector at every pixel.
    pub fn constant(width: usize, height: usize, w: &WeightVector) -> Self {
        PixelWeightField {
            kind: w.kind,
            width,
            height,
            channels: w.alpha.len(),
            alpha: w.alpha.repeat(width * height),
        }
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.alpha[i..i + self.channels]
    }
}

#[inline]
fn weighted_sum(px: &[f64], alpha: &[f64]) -> f64 {
    let mut s = 0.0;
    for (v, a) in px.iter().zip(alpha) {
        s += a * v;
    }
    s
}

/// `S(p) = max(0, sum_i alpha_i I_i(p))`.
pub fn decode_pointwise(featmap: &MultiChannelImage, w: &WeightVector) -> Result<MultiChannelImage> {
    if w.alpha.len() != featmap.channels() {
        return Err(Error::ChannelMismatch {
            expected: featmap.channels(),
            found: w.alpha.len(),
        });
    }
    let data = featmap
        .pixels()
        .map(|px| weighted_sum(px, &w.alpha).max(0.0))
        .collect();
    MultiChannelImage::new(featmap.width(), featmap.height(), 1, data)
}

/// `S(p) = max(0, sum_i alpha_i(p) I_i(p))`.
pub fn decode_pixelwise(featmap: &MultiChannelImage, field: &PixelWeightField) -> Result<MultiChannelImage> {
    if !featmap.same_domain(field.width, field.height) {
        return Err(Error::DomainMismatch(featmap.width(), featmap.height(), field.width, field.height));
    }
    if field.channels != featmap.channels() {
        return Err(Error::ChannelMismatch {
            expected: featmap.channels(),
            found: field.channels,
        });
    }
    let data = featmap
        .pixels()
        .zip(field.alpha.chunks_exact(field.channels.max(1)))
        .map(|(px, a)| weighted_sum(px, a).max(0.0))
        .collect();
    MultiChannelImage::new(featmap.width(), featmap.height(), 1, data)
}

/// Sigmoid of the weighted sum, the output head the `bp` weights were trained with.
pub fn decode_sigmoid(featmap: &MultiChannelImage, w: &WeightVector) -> Result<MultiChannelImage> {
    if w.alpha.len() != featmap.channels() {
        return Err(Error::ChannelMismatch {
            expected: featmap.channels(),
            found: w.alpha.len(),
        });
    }
    let data = featmap
        .pixels()
        .map(|px| bp::sigmoid(weighted_sum(px, &w.alpha)))
        .collect();
    MultiChannelImage::new(featmap.width(), featmap.height(), 1, data)
}

/// +1 for foreground-labeled channels, -1 for background ones.
pub fn weights_lm(labels: &[Label]) -> WeightVector {
    WeightVector {
        kind: DecoderKind::Lm,
        alpha: labels
            .iter()
            .map(|l| match l {
                Label::Foreground => 1.0,
                Label::Background => -1.0,
            })
            .collect(),
    }
}

pub(crate) fn check_labels(featmap: &MultiChannelImage, labels: &[Label]) -> Result<()> {
    if labels.len() != featmap.channels() {
        return Err(Error::ChannelMismatch {
            expected: featmap.channels(),
            found: labels.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Radius of the square window used by `pb` and `mb`.
    #[serde(default = "default_radius")]
    pub neighborhood: usize,
    #[serde(default)]
    pub ts: TsThresholds,
}

fn default_radius() -> usize {
    1
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            neighborhood: default_radius(),
            ts: TsThresholds::default(),
        }
    }
}

/// Decodes `featmap` with any decoder. `labels` are the channel labels of
/// the block that produced it; `bp` needs previously trained weights.
pub fn decode(
    featmap: &MultiChannelImage,
    labels: &[Label],
    kind: DecoderKind,
    cfg: &DecoderConfig,
    bp_weights: Option<&WeightVector>,
) -> Result<MultiChannelImage> {
    match kind {
        DecoderKind::Ts => decode_pointwise(featmap, &weights_ts_with(&channel_stats(featmap)?, &cfg.ts)),
        DecoderKind::At => decode_pointwise(featmap, &weights_at(featmap)?),
        DecoderKind::Lt => decode_pointwise(featmap, &weights_lt_with(featmap, labels, &cfg.ts)?),
        DecoderKind::Lm => {
            check_labels(featmap, labels)?;
            decode_pointwise(featmap, &weights_lm(labels))
        }
        DecoderKind::Pb => decode_pixelwise(featmap, &weights_pb(featmap, labels, cfg.neighborhood)?),
        DecoderKind::Mb => decode_pixelwise(featmap, &weights_mb(featmap, labels, cfg.neighborhood)?),
        DecoderKind::Bp => {
            let w = bp_weights.ok_or_else(|| Error::Model("the bp decoder needs trained weights".into()))?;
            decode_sigmoid(featmap, w)
        }
    }
}
