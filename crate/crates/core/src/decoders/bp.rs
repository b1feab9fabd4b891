use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DecoderKind, WeightVector};
use crate::error::{Error, Result};
use crate::{BinaryMask, MultiChannelImage};

const DICE_SMOOTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpHyper {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BpHyper {
    fn default() -> Self {
        BpHyper {
            lr: 0.01,
            epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BpTraining {
    pub weights: WeightVector,
    /// Loss before each update, followed by the loss of the returned weights.
    pub losses: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Nearest-neighbor resampling with corner-aligned grids.
pub fn downsample_nearest(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    let map = |i: usize, dst: usize, src: usize| {
        if dst <= 1 {
            0
        } else {
            ((i * (src - 1)) as f64 / (dst - 1) as f64).round() as usize
        }
    };
    BinaryMask::from_fn(width, height, |x, y| {
        mask.get(map(x, width, mask.width()), map(y, height, mask.height()))
    })
}

/// Training data of the `bp` decoder with ground truths already on the
/// feature-map domains.
#[derive(Debug, Clone)]
pub struct BpProblem {
    featmaps: Vec<MultiChannelImage>,
    targets: Vec<Vec<f64>>,
    channels: usize,
}

impl BpProblem {
    pub fn new(featmaps: &[MultiChannelImage], gts: &[BinaryMask]) -> Result<Self> {
        if featmaps.is_empty() {
            return Err(Error::EmptyInput("bp training needs at least one image".into()));
        }
        if featmaps.len() != gts.len() {
            return Err(Error::InvalidParameter(format!(
                "{} feature maps but {} ground truths",
                featmaps.len(),
                gts.len()
            )));
        }
        let channels = featmaps[0].channels();
        let mut targets = Vec::with_capacity(gts.len());
        for (f, g) in featmaps.iter().zip(gts) {
            if f.channels() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    found: f.channels(),
                });
            }
            let g = downsample_nearest(g, f.width(), f.height());
            targets.push(g.as_slice().iter().map(|&b| b as u8 as f64).collect());
        }
        Ok(BpProblem {
            featmaps: featmaps.to_vec(),
            targets,
            channels,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn loss(&self, alpha: &[f64]) -> f64 {
        self.evaluate(alpha, false).0
    }

    /// Mean over images of (soft Dice loss + mean BCE) / 2 and its gradient.
    pub fn loss_and_grad(&self, alpha: &[f64]) -> (f64, Vec<f64>) {
        self.evaluate(alpha, true)
    }

    fn evaluate(&self, alpha: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let k = self.featmaps.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; alpha.len()];
        let mut z = Vec::new();
        for (f, g) in self.featmaps.iter().zip(&self.targets) {
            let n = f.num_pixels() as f64;
            z.clear();
            z.extend(f.pixels().map(|px| px.iter().zip(alpha).map(|(v, a)| v * a).sum::<f64>()));
            let (mut inter, mut sum_s, mut sum_g, mut bce) = (0.0, 0.0, 0.0, 0.0);
            for (&zp, &gp) in z.iter().zip(g) {
                let s = sigmoid(zp);
                inter += s * gp;
                sum_s += s;
                sum_g += gp;
                bce += softplus(zp) - gp * zp;
            }
            let num = 2.0 * inter + DICE_SMOOTH;
            let den = sum_s + sum_g + DICE_SMOOTH;
            let dice = 1.0 - num / den;
            total += 0.5 * (dice + bce / n) / k;
            if want_grad {
                for ((&zp, &gp), px) in z.iter().zip(g).zip(f.pixels()) {
                    let s = sigmoid(zp);
                    let d_dice = -(2.0 * gp * den - num) / (den * den) * s * (1.0 - s);
                    let d_bce = (s - gp) / n;
                    let dz = 0.5 * (d_dice + d_bce) / k;
                    for (gi, v) in grad.iter_mut().zip(px) {
                        *gi += dz * v;
                    }
                }
            }
        }
        (total, grad)
    }
}

/// Learns point-wise weights with a sigmoid head: Xavier-uniform start,
/// full-batch Adam for `hyper.epochs` steps.
pub fn train_bp_decoder(featmaps: &[MultiChannelImage], gts: &[BinaryMask], hyper: &BpHyper) -> Result<BpTraining> {
    let problem = BpProblem::new(featmaps, gts)?;
    let m = problem.channels();
    let bound = (6.0 / (m as f64 + 1.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut alpha: Vec<f64> = (0..m).map(|_| rng.random_range(-bound..=bound)).collect();

    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m1 = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    let mut losses = Vec::with_capacity(hyper.epochs + 1);
    for t in 1..=hyper.epochs {
        let (loss, grad) = problem.loss_and_grad(&alpha);
        losses.push(loss);
        let c1 = 1.0 - b1.powi(t as i32);
        let c2 = 1.0 - b2.powi(t as i32);
        for i in 0..m {
            m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
            alpha[i] -= hyper.lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
        }
    }
    losses.push(problem.loss(&alpha));
    Ok(BpTraining {
        weights: WeightVector {
            kind: DecoderKind::Bp,
            alpha,
        },
        losses,
    })
}
