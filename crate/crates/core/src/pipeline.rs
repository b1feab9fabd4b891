//! Encoder, decoder and upsampling chained for one image.

use crate::decoders::{decode, train_bp_decoder, BpHyper, BpTraining, DecoderConfig, DecoderKind, WeightVector};
use crate::encoder::{encoder_forward, EncoderModel};
use crate::error::{Error, Result};
use crate::imgcore::bilinear_upsample;
use crate::postproc::{postprocess, PostprocConfig};
use crate::{BinaryMask, MultiChannelImage};

/// Saliency of block `block` decoded with `kind`, on the feature-map domain.
pub fn block_saliency(
    img: &MultiChannelImage,
    model: &EncoderModel,
    block: usize,
    kind: DecoderKind,
    cfg: &DecoderConfig,
    bp: Option<&WeightVector>,
) -> Result<MultiChannelImage> {
    let feats = encoder_forward(img, model, block)?;
    decode(&feats, &model.labels(block)?, kind, cfg, bp)
}

/// Saliency upsampled to the input image domain.
pub fn infer_saliency(
    img: &MultiChannelImage,
    model: &EncoderModel,
    block: usize,
    kind: DecoderKind,
    cfg: &DecoderConfig,
    bp: Option<&WeightVector>,
) -> Result<MultiChannelImage> {
    let s = block_saliency(img, model, block, kind, cfg, bp)?;
    bilinear_upsample(&s, img.width(), img.height())
}

/// Saliency followed by post-processing.
pub fn infer_mask(
    img: &MultiChannelImage,
    model: &EncoderModel,
    block: usize,
    kind: DecoderKind,
    cfg: &DecoderConfig,
    bp: Option<&WeightVector>,
    post: &PostprocConfig,
) -> Result<(MultiChannelImage, BinaryMask)> {
    let s = infer_saliency(img, model, block, kind, cfg, bp)?;
    let m = postprocess(&s, img, post)?;
    Ok((s, m))
}

/// Trains `bp` weights on block `block` features of the given images.
pub fn train_bp_for_block(
    model: &EncoderModel,
    block: usize,
    images: &[&MultiChannelImage],
    gts: &[&BinaryMask],
    hyper: &BpHyper,
) -> Result<BpTraining> {
    if images.len() != gts.len() {
        return Err(Error::InvalidParameter("one ground truth per image is required".into()));
    }
    let feats = images
        .iter()
        .map(|img| encoder_forward(img, model, block))
        .collect::<Result<Vec<_>>>()?;
    let gts: Vec<BinaryMask> = gts.iter().map(|g| (*g).clone()).collect();
    train_bp_decoder(&feats, &gts, hyper)
}
