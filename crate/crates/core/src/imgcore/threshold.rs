use crate::error::{Error, Result};

/// Histogram resolution used for real-valued Otsu thresholds.
pub const OTSU_BINS: usize = 256;

/// Otsu threshold of a finite real multiset.
///
/// Values are min-max scaled into 256 bins; every candidate split after bin
/// `t` is scored by the inter-class variance of the actual values on either
/// side, and the upper edge of the best bin is returned. Ties go to the lowest
/// bin, and a value belongs to the upper class iff it is strictly above the
/// returned threshold. Fails with [`Error::DegenerateThreshold`] when all
/// values are equal.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("otsu threshold of no values".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range <= 0.0 {
        return Err(Error::DegenerateThreshold);
    }

    let mut counts = [0usize; OTSU_BINS];
    let mut sums = [0.0f64; OTSU_BINS];
    for &v in values {
        let bin = (((v - lo) / range) * OTSU_BINS as f64) as usize;
        let bin = bin.min(OTSU_BINS - 1);
        counts[bin] += 1;
        sums[bin] += v;
    }
    let total = values.len() as f64;
    let total_sum: f64 = sums.iter().sum();

    let mut best_t = 0;
    let mut best_var = f64::NEG_INFINITY;
    let (mut w0, mut s0) = (0.0f64, 0.0f64);
    for t in 0..OTSU_BINS - 1 {
        w0 += counts[t] as f64;
        s0 += sums[t];
        let w1 = total - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            break;
        }
        let diff = s0 / w0 - (total_sum - s0) / w1;
        let var = w0 * w1 * diff * diff;
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    Ok(lo + (best_t + 1) as f64 * range / OTSU_BINS as f64)
}
