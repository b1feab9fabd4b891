use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bank::{build_kernel_bank_traced, BankTrace, KernelBank};
use super::{conv_block_forward, ArchitectureConfig, BlockSpec};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::markers::{map_markers_to_block, marker_stats, Label, MarkerSet, MarkerStats};
use crate::{ImageSet, MultiChannelImage};

pub const MODEL_SCHEMA: &str = "flim-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub spec: BlockSpec,
    /// Product of the pooling strides of all earlier blocks.
    pub input_stride: usize,
    pub stats: MarkerStats,
    pub bank: KernelBank,
}

impl EncoderBlock {
    pub fn forward(&self, img: &MultiChannelImage) -> Result<MultiChannelImage> {
        conv_block_forward(img, &self.stats, &self.bank, &self.spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub input_channels: usize,
    pub epsilon: f64,
    pub blocks: Vec<EncoderBlock>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    #[serde(flatten)]
    model: EncoderModel,
}

impl EncoderModel {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block `b`, counted from 1.
    pub fn block(&self, b: usize) -> Result<&EncoderBlock> {
        if b == 0 || b > self.blocks.len() {
            return Err(Error::BlockOutOfRange {
                block: b,
                blocks: self.blocks.len(),
            });
        }
        Ok(&self.blocks[b - 1])
    }

    /// Channel labels of the output of block `b`.
    pub fn labels(&self, b: usize) -> Result<Vec<Label>> {
        Ok(self.block(b)?.bank.labels())
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks.iter().map(|b| b.bank.parameter_count()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            schema: MODEL_SCHEMA.to_string(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema != MODEL_SCHEMA {
            return Err(Error::Model(format!("unsupported schema {:?}", file.schema)));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Model("model has no blocks".into()));
        }
        let mut channels = self.input_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            b.spec.validate()?;
            let len = b.bank.patch.len(channels);
            if b.bank.in_channels != channels
                || b.stats.channels() != channels
                || b.stats.std.len() != channels
                || b.bank.kernels.iter().any(|k| k.weights.len() != len)
                || b.bank.is_empty()
            {
                return Err(Error::Model(format!("block {} is inconsistent", i + 1)));
            }
            channels = b.bank.len();
        }
        Ok(())
    }
}

pub fn train_encoder(
    images: &ImageSet,
    ms: &MarkerSet,
    arch: &ArchitectureConfig,
    seed: u64,
) -> Result<EncoderModel> {
    train_encoder_traced(images, ms, arch, seed).map(|(m, _)| m)
}

/// Trains blocks in order. Block `b` sees markers mapped by its input
/// stride, normalizes with statistics of its own input maps and clusters
/// with the sub-seed of `b`.
pub fn train_encoder_traced(
    images: &ImageSet,
    ms: &MarkerSet,
    arch: &ArchitectureConfig,
    seed: u64,
) -> Result<(EncoderModel, Vec<BankTrace>)> {
    arch.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyInput("no training images".into()));
    }
    for id in images.keys() {
        if ms.get(id).is_none_or(|m| m.markers.is_empty()) {
            return Err(Error::EmptyMarkers(format!("image {id} has no markers")));
        }
    }
    let training = ms.subset(images.keys().map(String::as_str));
    let input_channels = images.values().next().map(|i| i.channels()).unwrap_or(0);

    let mut current = images.clone();
    let mut blocks = Vec::with_capacity(arch.blocks.len());
    let mut traces = Vec::with_capacity(arch.blocks.len());
    for (i, spec) in arch.blocks.iter().enumerate() {
        let b = i + 1;
        let stride = arch.input_stride(b);
        let mapped = map_markers_to_block(&training, stride)?;
        if mapped.pixel_count() == 0 {
            return Err(Error::EmptyMarkers(format!("block {b} has no marker pixels")));
        }
        let stats = marker_stats(&current, &mapped, arch.epsilon)?;
        let (bank, trace) =
            build_kernel_bank_traced(&current, &mapped, spec, &stats, derive_seed(seed, &[b as u64]))?;
        log::info!("block {b}: {} kernels, input stride {stride}", bank.len());
        let block = EncoderBlock {
            spec: *spec,
            input_stride: stride,
            stats,
            bank,
        };
        if b < arch.blocks.len() {
            current = current
                .iter()
                .map(|(id, img)| Ok((id.clone(), block.forward(img)?)))
                .collect::<Result<_>>()?;
        }
        blocks.push(block);
        traces.push(trace);
    }
    Ok((
        EncoderModel {
            input_channels,
            epsilon: arch.epsilon,
            blocks,
        },
        traces,
    ))
}

/// Feature map of block `upto_block` (1-based).
pub fn encoder_forward(
    img: &MultiChannelImage,
    model: &EncoderModel,
    upto_block: usize,
) -> Result<MultiChannelImage> {
    model.block(upto_block)?;
    let mut cur = model.blocks[0].forward(img)?;
    for block in &model.blocks[1..upto_block] {
        cur = block.forward(&cur)?;
    }
    Ok(cur)
}

/// Feature maps of every block, in order.
pub fn encoder_forward_all(img: &MultiChannelImage, model: &EncoderModel) -> Result<Vec<MultiChannelImage>> {
    let mut out: Vec<MultiChannelImage> = Vec::with_capacity(model.num_blocks());
    for block in &model.blocks {
        let next = block.forward(out.last().unwrap_or(img))?;
        out.push(next);
    }
    Ok(out)
}
