//! FLIM encoder: kernels are estimated block by block by clustering
//! normalized patches around marker pixels; the forward pass is
//! normalize → convolve → ReLU → pool.

mod bank;
pub mod kmeans;
mod model;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{extract_patch_into, MultiChannelImage, PatchSpec};
use crate::markers::MarkerStats;

pub use bank::{build_kernel_bank, build_kernel_bank_traced, estimate_kernels_for_marker, BankTrace, Kernel, KernelBank, MarkerKernels};
pub use model::{encoder_forward, encoder_forward_all, train_encoder, train_encoder_traced, EncoderBlock, EncoderModel, MODEL_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    #[serde(rename = "type")]
    pub kind: PoolKind,
    pub size: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn identity() -> Self {
        PoolSpec {
            kind: PoolKind::Max,
            size: 1,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter(format!(
                "pooling size and stride must be >= 1, got {} and {}",
                self.size, self.stride
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of one convolutional block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    pub kernels_per_marker: usize,
    pub pooling: PoolSpec,
}

fn one() -> usize {
    1
}

impl BlockSpec {
    pub fn patch(&self) -> PatchSpec {
        PatchSpec {
            kernel_size: self.kernel_size,
            dilation: self.dilation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.patch().validate()?;
        if self.kernels_per_marker == 0 {
            return Err(Error::InvalidParameter("kernels_per_marker must be >= 1".into()));
        }
        self.pooling.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

pub fn default_epsilon() -> f64 {
    1e-4
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidParameter("architecture has no blocks".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon {}", self.epsilon)));
        }
        self.blocks.iter().try_for_each(BlockSpec::validate)
    }

    /// Four 3x3 blocks with 3x3 stride-2 pooling (max, avg, max, avg).
    pub fn parasites(kernels_per_marker: usize) -> Self {
        let block = |kind| BlockSpec {
            kernel_size: 3,
            dilation: 1,
            kernels_per_marker,
            pooling: PoolSpec {
                kind,
                size: 3,
                stride: 2,
            },
        };
        ArchitectureConfig {
            blocks: vec![
                block(PoolKind::Max),
                block(PoolKind::Avg),
                block(PoolKind::Max),
                block(PoolKind::Avg),
            ],
            epsilon: default_epsilon(),
        }
    }

    /// Product of pooling strides of blocks before block `b` (1-based).
    pub fn input_stride(&self, b: usize) -> usize {
        self.blocks[..b - 1].iter().map(|s| s.pooling.stride).product()
    }
}

/// `(v - mu_j) / (sigma_j + eps)` per channel.
pub fn normalize(img: &MultiChannelImage, stats: &MarkerStats) -> Result<MultiChannelImage> {
    if img.channels() != stats.channels() {
        return Err(Error::ChannelMismatch {
            expected: stats.channels(),
            found: img.channels(),
        });
    }
    let m = img.channels();
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i % m;
            (v - stats.mean[c]) / (stats.std[c] + stats.epsilon)
        })
        .collect();
    MultiChannelImage::new(img.width(), img.height(), m, data)
}

/// Zero-padded stride-1 convolution of an already normalized image, with ReLU.
pub fn convolve_relu(img: &MultiChannelImage, bank: &KernelBank) -> Result<MultiChannelImage> {
    if img.channels() != bank.in_channels {
        return Err(Error::ChannelMismatch {
            expected: bank.in_channels,
            found: img.channels(),
        });
    }
    let (w, h) = (img.width(), img.height());
    let n = bank.len();
    let flat = bank.flat_weights();
    let len = bank.patch.len(bank.in_channels);
    let mut patch = vec![0.0; len];
    let mut out = vec![0.0; w * h * n];
    for y in 0..h {
        for x in 0..w {
            extract_patch_into(img, x, y, &bank.patch, &mut patch);
            let dst = &mut out[(y * w + x) * n..(y * w + x + 1) * n];
            for (j, o) in dst.iter_mut().enumerate() {
                let k = &flat[j * len..(j + 1) * len];
                let v: f64 = k.iter().zip(&patch).map(|(a, b)| a * b).sum();
                *o = v.max(0.0);
            }
        }
    }
    MultiChannelImage::new(w, h, n, out)
}

/// Window of `size` taps centered on `(ox*stride, oy*stride)`; taps outside
/// the domain count as zeros.
pub fn pool(img: &MultiChannelImage, spec: &PoolSpec) -> Result<MultiChannelImage> {
    spec.validate()?;
    if spec.size == 1 && spec.stride == 1 {
        return Ok(img.clone());
    }
    let (w, h, m) = (img.width(), img.height(), img.channels());
    let (ow, oh) = (w.div_ceil(spec.stride), h.div_ceil(spec.stride));
    let half = ((spec.size - 1) / 2) as isize;
    let area = (spec.size * spec.size) as f64;
    let mut out = vec![0.0; ow * oh * m];
    let mut acc = vec![0.0; m];
    for oy in 0..oh {
        for ox in 0..ow {
            let (cx, cy) = ((ox * spec.stride) as isize, (oy * spec.stride) as isize);
            let mut padded = false;
            match spec.kind {
                PoolKind::Max => acc.fill(f64::NEG_INFINITY),
                PoolKind::Avg => acc.fill(0.0),
            }
            for i in 0..spec.size as isize {
                for j in 0..spec.size as isize {
                    let (x, y) = (cx + j - half, cy + i - half);
                    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        padded = true;
                        continue;
                    }
                    let px = img.pixel(x as usize, y as usize);
                    match spec.kind {
                        PoolKind::Max => acc.iter_mut().zip(px).for_each(|(a, v)| *a = a.max(*v)),
                        PoolKind::Avg => acc.iter_mut().zip(px).for_each(|(a, v)| *a += v),
                    }
                }
            }
            let dst = &mut out[(oy * ow + ox) * m..(oy * ow + ox + 1) * m];
            for (d, a) in dst.iter_mut().zip(&acc) {
                *d = match spec.kind {
                    PoolKind::Max if padded => a.max(0.0),
                    PoolKind::Max => *a,
                    PoolKind::Avg => a / area,
                };
            }
        }
    }
    MultiChannelImage::new(ow, oh, m, out)
}

/// One block: normalize with `stats`, convolve with `bank`, ReLU, pool.
pub fn conv_block_forward(
    img: &MultiChannelImage,
    stats: &MarkerStats,
    bank: &KernelBank,
    spec: &BlockSpec,
) -> Result<MultiChannelImage> {
    let normed = normalize(img, stats)?;
    let activ = convolve_relu(&normed, bank)?;
    pool(&activ, &spec.pooling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markers::Label;

    fn bank_from(patch: PatchSpec, in_channels: usize, weights: Vec<Vec<f64>>) -> KernelBank {
        KernelBank {
            patch,
            in_channels,
            kernels: weights
                .into_iter()
                .map(|w| Kernel {
                    weights: w,
                    marker_id: 1,
                    image_id: "a".into(),
                    label: Label::Foreground,
                })
                .collect(),
        }
    }

    #[test]
    fn normalize_constant_mean_is_zero() {
        let img = MultiChannelImage::from_fn(3, 2, 2, |_, _, c| [4.0, -1.0][c]);
        let stats = MarkerStats {
            mean: vec![4.0, -1.0],
            std: vec![2.0, 0.5],
            epsilon: 1e-6,
        };
        assert!(normalize(&img, &stats).unwrap().data().iter().all(|v| *v == 0.0));
        assert!(normalize(&img, &MarkerStats::identity(3, 1e-6)).is_err());
    }

    #[test]
    fn identity_block() {
        let img = MultiChannelImage::from_fn(5, 4, 1, |x, y, _| (x * 3 + y) as f64);
        let bank = bank_from(PatchSpec::new(1, 1).unwrap(), 1, vec![vec![1.0]]);
        let spec = BlockSpec {
            kernel_size: 1,
            dilation: 1,
            kernels_per_marker: 1,
            pooling: PoolSpec::identity(),
        };
        let out = conv_block_forward(&img, &MarkerStats::identity(1, 1e-12), &bank, &spec).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pooling_dims_and_values() {
        let img = MultiChannelImage::from_fn(5, 3, 1, |x, y, _| (y * 5 + x) as f64);
        let max = pool(&img, &PoolSpec { kind: PoolKind::Max, size: 3, stride: 2 }).unwrap();
        assert_eq!((max.width(), max.height()), (3, 2));
        // window around (0,0) covers x,y in {0,1}
        assert_eq!(max.get(0, 0, 0), 6.0);
        assert_eq!(max.get(2, 1, 0), 14.0);
        let avg = pool(&img, &PoolSpec { kind: PoolKind::Avg, size: 3, stride: 2 }).unwrap();
        assert!((avg.get(0, 0, 0) - (0.0 + 1.0 + 5.0 + 6.0) / 9.0).abs() < 1e-12);
        let even = pool(&img, &PoolSpec { kind: PoolKind::Max, size: 2, stride: 2 }).unwrap();
        // offsets 0 and 1 for an even window
        assert_eq!(even.get(0, 0, 0), 6.0);
    }

    #[test]
    fn relu_output_nonnegative() {
        let img = MultiChannelImage::from_fn(6, 6, 2, |x, y, c| ((x * 7 + y * 3 + c) % 5) as f64 - 2.0);
        let bank = bank_from(
            PatchSpec::new(3, 1).unwrap(),
            2,
            vec![vec![-1.0 / 18f64.sqrt(); 18], vec![1.0 / 18f64.sqrt(); 18]],
        );
        let spec = BlockSpec {
            kernel_size: 3,
            dilation: 1,
            kernels_per_marker: 2,
            pooling: PoolSpec { kind: PoolKind::Avg, size: 3, stride: 2 },
        };
        let out = conv_block_forward(&img, &MarkerStats::identity(2, 1e-6), &bank, &spec).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (3, 3, 2));
        assert!(out.data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn architecture_validation() {
        let arch = ArchitectureConfig::parasites(2);
        arch.validate().unwrap();
        assert_eq!(arch.input_stride(1), 1);
        assert_eq!(arch.input_stride(3), 4);
        let mut bad = arch.clone();
        bad.blocks[0].kernel_size = 2;
        assert!(bad.validate().is_err());
        assert!(ArchitectureConfig { blocks: vec![], epsilon: 1e-6 }.validate().is_err());
        let json = serde_json::to_string(&arch).unwrap();
        assert!(json.contains("\"type\":\"max\""));
        let back: ArchitectureConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arch);
    }
}
