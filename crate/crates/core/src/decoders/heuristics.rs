use serde::{Deserialize, Serialize};

use super::{check_labels, DecoderKind, WeightVector};
use crate::error::{Error, Result};
use crate::imgcore::otsu_threshold;
use crate::markers::Label;
use crate::MultiChannelImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Mean activation of each channel.
    pub means: Vec<f64>,
    /// Otsu threshold of the channel means.
    pub tau: f64,
    /// Population standard deviation of the channel means.
    pub sigma: f64,
    /// Fraction of each channel's pixels above that channel's Otsu threshold.
    pub above: Vec<f64>,
}

/// Fraction limits of the tri-state rule: a channel is background when
/// its above-Otsu fraction exceeds `background`, object when below `object`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsThresholds {
    pub background: f64,
    pub object: f64,
}

impl Default for TsThresholds {
    fn default() -> Self {
        TsThresholds {
            background: 0.2,
            object: 0.1,
        }
    }
}

pub fn channel_stats(featmap: &MultiChannelImage) -> Result<ChannelStats> {
    let m = featmap.channels();
    let n = featmap.num_pixels();
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput("feature map has no channels or pixels".into()));
    }
    let mut means = vec![0.0; m];
    for px in featmap.pixels() {
        for (acc, v) in means.iter_mut().zip(px) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= n as f64);
    let mu = means.iter().sum::<f64>() / m as f64;
    let sigma = (means.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64).sqrt();
    let tau = match otsu_threshold(&means) {
        Ok(t) => t,
        Err(Error::DegenerateThreshold) => mu,
        Err(e) => return Err(e),
    };
    let above = (0..m)
        .map(|c| {
            let values = featmap.channel(c);
            match otsu_threshold(&values) {
                Ok(t) => Ok(values.iter().filter(|v| **v > t).count() as f64 / n as f64),
                Err(Error::DegenerateThreshold) => Ok(0.0),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ChannelStats {
        means,
        tau,
        sigma,
        above,
    })
}

pub fn weights_ts(stats: &ChannelStats) -> WeightVector {
    weights_ts_with(stats, &TsThresholds::default())
}

pub fn weights_ts_with(stats: &ChannelStats, thr: &TsThresholds) -> WeightVector {
    let alpha = stats
        .means
        .iter()
        .zip(&stats.above)
        .map(|(&mu, &t)| {
            if mu >= stats.tau + stats.sigma && t > thr.background {
                -1.0
            } else if mu <= stats.tau - stats.sigma && t < thr.object {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    WeightVector {
        kind: DecoderKind::Ts,
        alpha,
    }
}

pub fn weights_lt(featmap: &MultiChannelImage, labels: &[Label]) -> Result<WeightVector> {
    weights_lt_with(featmap, labels, &TsThresholds::default())
}

/// Tri-state weights with background-labeled channels zeroed.
pub fn weights_lt_with(featmap: &MultiChannelImage, labels: &[Label], thr: &TsThresholds) -> Result<WeightVector> {
    check_labels(featmap, labels)?;
    let ts = weights_ts_with(&channel_stats(featmap)?, thr);
    let alpha = ts
        .alpha
        .iter()
        .zip(labels)
        .map(|(&a, l)| if *l == Label::Background { 0.0 } else { a })
        .collect();
    Ok(WeightVector {
        kind: DecoderKind::Lt,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    /// Cross-channel max per pixel, scaled to [0, 1].
    pub x: Vec<f64>,
    /// Cross-channel mean per pixel, scaled to [0, 1].
    pub y: Vec<f64>,
    /// Scaled `x + y`.
    pub a: Vec<f64>,
    /// Cosine between `a` and each channel.
    pub c: Vec<f64>,
    pub mu_c: f64,
    pub sigma_c: f64,
}

/// Min-max scaling to [0, 1]; a constant input maps to zeros.
fn scale_unit(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi <= lo {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

fn cosine(a: &[f64], b: impl Iterator<Item = f64> + Clone) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.clone().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

pub fn attention_stats(featmap: &MultiChannelImage) -> Result<AttentionStats> {
    let m = featmap.channels();
    if m == 0 || featmap.num_pixels() == 0 {
        return Err(Error::EmptyInput("feature map has no channels or pixels".into()));
    }
    let xmax: Vec<f64> = featmap
        .pixels()
        .map(|px| px.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let ymean: Vec<f64> = featmap.pixels().map(|px| px.iter().sum::<f64>() / m as f64).collect();
    let x = scale_unit(&xmax);
    let y = scale_unit(&ymean);
    let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    let a = scale_unit(&sum);
    let c: Vec<f64> = (0..m)
        .map(|i| cosine(&a, featmap.data().iter().skip(i).step_by(m).copied()))
        .collect();
    let mu_c = c.iter().sum::<f64>() / m as f64;
    let sigma_c = (c.iter().map(|v| (v - mu_c) * (v - mu_c)).sum::<f64>() / m as f64).sqrt();
    Ok(AttentionStats {
        x,
        y,
        a,
        c,
        mu_c,
        sigma_c,
    })
}

/// +1 for channels less similar to the spatial attention than average,
/// -1 for more similar ones.
pub fn weights_at(featmap: &MultiChannelImage) -> Result<WeightVector> {
    let st = attention_stats(featmap)?;
    let half = st.sigma_c / 2.0;
    let alpha = st
        .c
        .iter()
        .map(|&c| {
            if c < st.mu_c - half {
                1.0
            } else if c > st.mu_c + half {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(WeightVector {
        kind: DecoderKind::At,
        alpha,
    })
}
