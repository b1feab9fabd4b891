use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::{normalize, BlockSpec};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::imgcore::{extract_patch_into, PatchSpec};
use crate::markers::{Label, MarkerSet, MarkerStats};
use crate::ImageSet;

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub image_id: String,
    pub marker_id: u32,
    pub label: Label,
}

/// Unit-norm kernels of one block; kernel `j` produces output channel `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBank {
    pub patch: PatchSpec,
    pub in_channels: usize,
    pub kernels: Vec<Kernel>,
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Channel labels of the block output.
    pub fn labels(&self) -> Vec<Label> {
        self.kernels.iter().map(|k| k.label).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.len() * self.patch.len(self.in_channels)
    }

    pub(crate) fn flat_weights(&self) -> Vec<f64> {
        self.kernels.iter().flat_map(|k| k.weights.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MarkerKernels {
    pub kernels: Vec<Vec<f64>>,
    pub zero_norm_replaced: usize,
    pub wcss_history: Vec<f64>,
}

/// Clusters one marker's patches into `min(m2, patches)` centers and scales
/// each center to unit norm. A zero center becomes the one-hot vector at
/// `fallback_tap`.
pub fn estimate_kernels_for_marker(
    patches: &[Vec<f64>],
    m2: usize,
    seed: u64,
    fallback_tap: usize,
) -> Result<MarkerKernels> {
    if patches.is_empty() {
        return Err(Error::EmptyInput("marker has no patches".into()));
    }
    if m2 == 0 {
        return Err(Error::InvalidParameter("kernels per marker must be >= 1".into()));
    }
    let k = m2.min(patches.len());
    let result = kmeans(patches, k, seed)?;
    let mut replaced = 0;
    let kernels = result
        .centers
        .into_iter()
        .map(|mut c| {
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < ZERO_NORM {
                replaced += 1;
                log::warn!("zero-norm cluster center replaced by a one-hot kernel");
                c.fill(0.0);
                c[fallback_tap] = 1.0;
            } else {
                c.iter_mut().for_each(|v| *v /= norm);
            }
            c
        })
        .collect();
    Ok(MarkerKernels {
        kernels,
        zero_norm_replaced: replaced,
        wcss_history: result.wcss_history,
    })
}

/// Per-marker clustering traces collected while building a bank.
#[derive(Debug, Clone, Default)]
pub struct BankTrace {
    pub wcss_histories: Vec<Vec<f64>>,
    pub zero_norm_replaced: usize,
}

pub fn build_kernel_bank(
    images: &ImageSet,
    markers: &MarkerSet,
    spec: &BlockSpec,
    stats: &MarkerStats,
    seed: u64,
) -> Result<KernelBank> {
    build_kernel_bank_traced(images, markers, spec, stats, seed).map(|(bank, _)| bank)
}

/// Builds the bank from normalized patches centered at every marker pixel.
/// Marker `j` (images in id order, markers in id order) clusters with the
/// sub-seed derived from `seed` and `j`.
pub fn build_kernel_bank_traced(
    images: &ImageSet,
    markers: &MarkerSet,
    spec: &BlockSpec,
    stats: &MarkerStats,
    seed: u64,
) -> Result<(KernelBank, BankTrace)> {
    spec.validate()?;
    if markers.marker_count() == 0 {
        return Err(Error::EmptyMarkers("no markers for this block".into()));
    }
    let patch = spec.patch();
    let channels = stats.channels();
    let len = patch.len(channels);
    let mut kernels = Vec::new();
    let mut trace = BankTrace::default();
    let mut j = 0u64;
    for im in markers.iter() {
        let img = images
            .get(&im.image_id)
            .ok_or_else(|| Error::UnknownImage(im.image_id.clone()))?;
        if !img.same_domain(im.width, im.height) {
            return Err(Error::DomainMismatch(img.width(), img.height(), im.width, im.height));
        }
        let normed = normalize(img, stats)?;
        for marker in &im.markers {
            let patches: Vec<Vec<f64>> = marker
                .pixels
                .iter()
                .map(|p| {
                    let mut v = vec![0.0; len];
                    extract_patch_into(&normed, p.x, p.y, &patch, &mut v);
                    v
                })
                .collect();
            if patches.is_empty() {
                return Err(Error::EmptyMarkers(format!(
                    "marker {} of image {} has no pixels",
                    marker.id, im.image_id
                )));
            }
            let est = estimate_kernels_for_marker(
                &patches,
                spec.kernels_per_marker,
                derive_seed(seed, &[j]),
                patch.center_tap(channels),
            )?;
            j += 1;
            trace.zero_norm_replaced += est.zero_norm_replaced;
            trace.wcss_histories.push(est.wcss_history);
            kernels.extend(est.kernels.into_iter().map(|weights| Kernel {
                weights,
                image_id: im.image_id.clone(),
                marker_id: marker.id,
                label: marker.label,
            }));
        }
    }
    Ok((
        KernelBank {
            patch,
            in_channels: channels,
            kernels,
        },
        trace,
    ))
}
