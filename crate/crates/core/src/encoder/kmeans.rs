//! Seeded k-means (k-means++ initialization, Lloyd iterations) used to turn
//! marker patches into convolution kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const MOVEMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after every assignment step, including
    /// one final assignment against the returned centers.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a center
            chosen.iter().position(|c| !c).expect("k <= n")
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &points[next]));
        }
    }
    centers
}

/// Clusters `points` into `k` groups. Deterministic for a given `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::EmptyInput("k-means needs at least one point".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} with {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut history = Vec::new();
    let mut assignment = vec![0usize; points.len()];
    let mut dists = vec![0.0f64; points.len()];
    let mut iterations = 0;

    let assign = |centers: &[Vec<f64>], assignment: &mut [usize], dists: &mut [f64]| -> f64 {
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, centers);
            assignment[i] = j;
            dists[i] = d;
            wcss += d;
        }
        wcss
    };

    while iterations < MAX_ITERATIONS {
        history.push(assign(&centers, &mut assignment, &mut dists));
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut new_centers = Vec::with_capacity(k);
        for (j, (sum, &count)) in sums.into_iter().zip(&counts).enumerate() {
            if count > 0 {
                new_centers.push(sum.into_iter().map(|s| s / count as f64).collect());
            } else {
                // re-seed with the point farthest from its own center
                let far = dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                        if d > best.1 {
                            (i, d)
                        } else {
                            best
                        }
                    })
                    .0;
                dists[far] = 0.0;
                log::debug!("k-means: empty cluster {j} re-seeded with point {far}");
                new_centers.push(points[far].clone());
            }
        }
        let movement = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = new_centers;
        if movement < MOVEMENT_TOLERANCE {
            break;
        }
    }
    history.push(assign(&centers, &mut assignment, &mut dists));
    Ok(KMeansResult {
        centers,
        wcss_history: history,
        iterations,
    })
}
