//! Flyweight salient object detection.
//!
//! A convolutional encoder is estimated block by block from marker pixels
//! drawn on a few training images (k-means over normalized patches, no
//! backpropagation). Saliency is decoded from any block's feature map by a
//! point-wise combination of channels whose weights are chosen per image (or
//! per pixel) by a heuristic, and the saliency map is turned into an object
//! mask by Otsu thresholding, component filtering and seeded delineation.
//!
//! Module map:
//!
//! - [`imgcore`]: rasters, PNG I/O, Lab, patches, Otsu, components, morphology
//! - [`markers`]: marker files, block mapping, marker statistics
//! - [`encoder`]: kernel estimation and the block forward pass
//! - [`decoders`]: the `ts`, `at`, `lt`, `pb`, `mb`, `lm` and `bp` decoders
//! - [`postproc`]: binarization, filtering, seeds and dynamic-trees delineation
//! - [`evalsel`]: metrics, reports and representative image selection
//! - [`pipeline`]: encoder, decoder and post-processing chained per image
//! - [`synth`]: synthetic scenes with known object masks

pub mod decoders;
pub mod encoder;
pub mod error;
pub mod evalsel;
pub mod imgcore;
pub mod markers;
pub mod pipeline;
pub mod postproc;
pub mod synth;

use std::collections::BTreeMap;

pub use error::{Error, Result};
pub use imgcore::{Adjacency, BinaryMask, MultiChannelImage, Pixel};

/// Images keyed by identifier.
pub type ImageSet = BTreeMap<String, MultiChannelImage>;

/// Mixes a root seed with a path of indices into an independent sub-seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(splitmix(root), |acc, &p| splitmix(acc ^ splitmix(p)))
}
