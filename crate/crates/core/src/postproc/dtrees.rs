use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::SeedSet;
use crate::error::{Error, Result};
use crate::imgcore::neighbor;
use crate::{Adjacency, BinaryMask, MultiChannelImage};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    order: u64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.order.cmp(&other.order))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Optimum-path forest produced by dynamic-trees growth.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub width: usize,
    pub height: usize,
    /// Predecessor of each pixel, `None` at roots.
    pub pred: Vec<Option<usize>>,
    pub root: Vec<usize>,
    pub cost: Vec<f64>,
    /// Pixels whose tree is rooted at an internal seed.
    pub object: BinaryMask,
}

pub fn dynamic_trees_delineate(img: &MultiChannelImage, seeds: &SeedSet, adj: Adjacency) -> Result<BinaryMask> {
    dynamic_trees_forest(img, seeds, adj).map(|f| f.object)
}

/// Grows one tree per seed. A pixel popped from the queue is added to its
/// tree's running mean, then offers each unfinished neighbor the path cost
/// `max(cost(p), |color(q) - mean(tree(p))|)`. Ties pop in insertion order.
pub fn dynamic_trees_forest(img: &MultiChannelImage, seeds: &SeedSet, adj: Adjacency) -> Result<Forest> {
    if seeds.internal.is_empty() || seeds.external.is_empty() {
        return Err(Error::EmptyInput("delineation needs internal and external seeds".into()));
    }
    let (w, h, m) = (img.width(), img.height(), img.channels());
    let n = w * h;
    let mut is_internal = vec![None::<bool>; n];
    for (p, internal) in seeds
        .internal
        .iter()
        .map(|p| (p, true))
        .chain(seeds.external.iter().map(|p| (p, false)))
    {
        if p.x >= w || p.y >= h {
            return Err(Error::OutOfDomain {
                x: p.x as i64,
                y: p.y as i64,
                width: w,
                height: h,
            });
        }
        let i = p.y * w + p.x;
        if is_internal[i].is_some_and(|prev| prev != internal) {
            return Err(Error::InvalidParameter(format!(
                "pixel ({}, {}) is both an internal and an external seed",
                p.x, p.y
            )));
        }
        is_internal[i] = Some(internal);
    }

    let mut cost = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut root: Vec<usize> = (0..n).collect();
    let mut done = vec![false; n];
    let mut sums = vec![0.0; n * m];
    let mut counts = vec![0usize; n];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (i, s) in is_internal.iter().enumerate() {
        if s.is_some() {
            cost[i] = 0.0;
            heap.push(Reverse(Entry { cost: 0.0, order, index: i }));
            order += 1;
        }
    }
    let data = img.data();
    let mut mean = vec![0.0; m];
    while let Some(Reverse(e)) = heap.pop() {
        let p = e.index;
        if done[p] || e.cost > cost[p] {
            continue;
        }
        done[p] = true;
        let r = root[p];
        counts[r] += 1;
        for c in 0..m {
            sums[r * m + c] += data[p * m + c];
        }
        for c in 0..m {
            mean[c] = sums[r * m + c] / counts[r] as f64;
        }
        let (x, y) = (p % w, p / w);
        for &(dx, dy) in adj.offsets() {
            let Some((nx, ny)) = neighbor(x, y, dx, dy, w, h) else {
                continue;
            };
            let q = ny * w + nx;
            if done[q] {
                continue;
            }
            let d2: f64 = (0..m).map(|c| (data[q * m + c] - mean[c]).powi(2)).sum();
            let nc = cost[p].max(d2.sqrt());
            if nc < cost[q] {
                cost[q] = nc;
                pred[q] = Some(p);
                root[q] = r;
                heap.push(Reverse(Entry { cost: nc, order, index: q }));
                order += 1;
            }
        }
    }
    let object = BinaryMask::from_vec(w, h, root.iter().map(|&r| is_internal[r] == Some(true)).collect())?;
    Ok(Forest {
        width: w,
        height: h,
        pred,
        root,
        cost,
        object,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Pixel;

    fn two_region() -> MultiChannelImage {
        MultiChannelImage::from_fn(10, 8, 3, |x, y, c| {
            if (3..7).contains(&x) && (2..6).contains(&y) {
                [70.0, 20.0, -10.0][c]
            } else {
                [30.0, 0.0, 5.0][c]
            }
        })
    }

    #[test]
    fn piecewise_constant_recovery() {
        let img = two_region();
        let seeds = SeedSet {
            internal: vec![Pixel::new(4, 3)],
            external: vec![Pixel::new(0, 0)],
        };
        let mask = dynamic_trees_delineate(&img, &seeds, Adjacency::Four).unwrap();
        let want = BinaryMask::from_fn(10, 8, |x, y| (3..7).contains(&x) && (2..6).contains(&y));
        assert_eq!(mask, want);
    }

    #[test]
    fn forest_costs_are_monotone() {
        let img = MultiChannelImage::from_fn(9, 9, 1, |x, y, _| ((x * 13 + y * 7) % 10) as f64);
        let seeds = SeedSet {
            internal: vec![Pixel::new(4, 4)],
            external: vec![Pixel::new(0, 0), Pixel::new(8, 8)],
        };
        let f = dynamic_trees_forest(&img, &seeds, Adjacency::Eight).unwrap();
        for (q, p) in f.pred.iter().enumerate() {
            if let Some(p) = p {
                assert!(f.cost[*p] <= f.cost[q]);
                assert_eq!(f.root[*p], f.root[q]);
            } else {
                assert_eq!(f.cost[q], 0.0);
            }
        }
        assert_eq!(f, dynamic_trees_forest(&img, &seeds, Adjacency::Eight).unwrap());
    }

    #[test]
    fn fully_seeded_is_identity() {
        let img = two_region();
        let truth = BinaryMask::from_fn(10, 8, |x, y| (x + y) % 3 == 0);
        let seeds = SeedSet {
            internal: truth.foreground().collect(),
            external: truth.complement().foreground().collect(),
        };
        assert_eq!(dynamic_trees_delineate(&img, &seeds, Adjacency::Four).unwrap(), truth);
    }

    #[test]
    fn seed_errors() {
        let img = two_region();
        let empty = SeedSet { internal: vec![], external: vec![Pixel::new(0, 0)] };
        assert!(dynamic_trees_delineate(&img, &empty, Adjacency::Four).is_err());
        let clash = SeedSet { internal: vec![Pixel::new(0, 0)], external: vec![Pixel::new(0, 0)] };
        assert!(dynamic_trees_delineate(&img, &clash, Adjacency::Four).is_err());
    }
}
