use serde::{Deserialize, Serialize};

use super::{check_labels, DecoderKind, PixelWeightField};
use crate::error::{Error, Result};
use crate::markers::Label;
use crate::{MultiChannelImage, Pixel};

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Label-conditional statistics of the window around one pixel. Index 0
/// holds foreground channels, index 1 background channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalStats {
    pub count: [usize; 2],
    pub mean: [f64; 2],
    /// Population variance, before the floor is applied.
    pub variance: [f64; 2],
    /// `phi[i][j]`: likelihood of channel `i`'s activation under label `j + 1`.
    pub phi: Vec<[f64; 2]>,
}

struct Split {
    channels: [Vec<usize>; 2],
}

impl Split {
    fn new(featmap: &MultiChannelImage, labels: &[Label]) -> Result<Self> {
        check_labels(featmap, labels)?;
        let mut channels = [Vec::new(), Vec::new()];
        for (i, l) in labels.iter().enumerate() {
            channels[l.as_u8() as usize - 1].push(i);
        }
        for (j, c) in channels.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::MissingLabel(j as u8 + 1));
            }
        }
        Ok(Split { channels })
    }
}

struct Window {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Window {
    fn new(img: &MultiChannelImage, x: usize, y: usize, r: usize) -> Self {
        Window {
            x0: x.saturating_sub(r),
            x1: (x + r).min(img.width() - 1),
            y0: y.saturating_sub(r),
            y1: (y + r).min(img.height() - 1),
        }
    }

    fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }
}

/// Mean and variance over the in-domain window for each label, summing over
/// channels (outer) and window pixels (inner).
fn window_moments(img: &MultiChannelImage, split: &Split, win: &Window) -> ([usize; 2], [f64; 2], [f64; 2]) {
    let mut count = [0; 2];
    let mut mean = [0.0; 2];
    let mut var = [0.0; 2];
    for j in 0..2 {
        let n = win.area() * split.channels[j].len();
        let mut s = 0.0;
        for &i in &split.channels[j] {
            for y in win.y0..=win.y1 {
                for x in win.x0..=win.x1 {
                    s += img.get(x, y, i);
                }
            }
        }
        let mu = s / n as f64;
        let mut ss = 0.0;
        for &i in &split.channels[j] {
            for y in win.y0..=win.y1 {
                for x in win.x0..=win.x1 {
                    let d = img.get(x, y, i) - mu;
                    ss += d * d;
                }
            }
        }
        count[j] = n;
        mean[j] = mu;
        var[j] = ss / n as f64;
    }
    (count, mean, var)
}

#[inline]
fn phi(v: f64, mean: f64, var: f64) -> f64 {
    let d = v - mean;
    (-(d * d) / (2.0 * var.max(VARIANCE_FLOOR))).exp()
}

pub fn local_stats(featmap: &MultiChannelImage, labels: &[Label], p: Pixel, radius: usize) -> Result<LocalStats> {
    let split = Split::new(featmap, labels)?;
    if p.x >= featmap.width() || p.y >= featmap.height() {
        return Err(Error::OutOfDomain {
            x: p.x as i64,
            y: p.y as i64,
            width: featmap.width(),
            height: featmap.height(),
        });
    }
    let win = Window::new(featmap, p.x, p.y, radius);
    let (count, mean, variance) = window_moments(featmap, &split, &win);
    let phi = featmap
        .pixel(p.x, p.y)
        .iter()
        .map(|&v| [phi(v, mean[0], variance[0]), phi(v, mean[1], variance[1])])
        .collect();
    Ok(LocalStats {
        count,
        mean,
        variance,
        phi,
    })
}

fn field(
    featmap: &MultiChannelImage,
    labels: &[Label],
    radius: usize,
    kind: DecoderKind,
    rule: impl Fn(Label, f64, &[f64; 2], &[f64; 2]) -> f64,
) -> Result<PixelWeightField> {
    let split = Split::new(featmap, labels)?;
    let (w, h, m) = (featmap.width(), featmap.height(), featmap.channels());
    let mut alpha = Vec::with_capacity(w * h * m);
    for y in 0..h {
        for x in 0..w {
            let (_, mean, var) = window_moments(featmap, &split, &Window::new(featmap, x, y, radius));
            for (&v, &l) in featmap.pixel(x, y).iter().zip(labels) {
                alpha.push(rule(l, v, &mean, &var));
            }
        }
    }
    Ok(PixelWeightField {
        kind,
        width: w,
        height: h,
        channels: m,
        alpha,
    })
}

/// Per pixel: +1 on a foreground channel whose activation is more likely
/// under the foreground statistics, -1 on a background channel more likely
/// under the background statistics.
pub fn weights_pb(featmap: &MultiChannelImage, labels: &[Label], radius: usize) -> Result<PixelWeightField> {
    field(featmap, labels, radius, DecoderKind::Pb, |l, v, mean, var| {
        let (p1, p2) = (phi(v, mean[0], var[0]), phi(v, mean[1], var[1]));
        match l {
            Label::Foreground if p1 > p2 => 1.0,
            Label::Background if p1 < p2 => -1.0,
            _ => 0.0,
        }
    })
}

/// Per pixel: +1 on foreground channels where the foreground window mean
/// dominates, -1 on background channels where the background mean dominates.
pub fn weights_mb(featmap: &MultiChannelImage, labels: &[Label], radius: usize) -> Result<PixelWeightField> {
    field(featmap, labels, radius, DecoderKind::Mb, |l, _, mean, _| match l {
        Label::Foreground if mean[0] > mean[1] => 1.0,
        Label::Background if mean[0] < mean[1] => -1.0,
        _ => 0.0,
    })
}
