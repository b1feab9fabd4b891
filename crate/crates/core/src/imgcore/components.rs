use std::collections::VecDeque;

use super::{neighbor, Adjacency, BinaryMask};
use crate::error::{Error, Result};

/// Connected-component labeling of a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    /// Per-pixel label, 0 for background, components numbered from 1 in
    /// raster order of their first pixel.
    pub labels: Vec<u32>,
    /// `areas[l - 1]` is the pixel count of component `l`.
    pub areas: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Mask keeping the components for which `keep(label, area)` holds.
    pub fn select(&self, mut keep: impl FnMut(u32, usize) -> bool) -> BinaryMask {
        let kept: Vec<bool> = self
            .areas
            .iter()
            .enumerate()
            .map(|(i, &a)| keep(i as u32 + 1, a))
            .collect();
        let data = self
            .labels
            .iter()
            .map(|&l| l > 0 && kept[l as usize - 1])
            .collect();
        BinaryMask::from_vec(self.width, self.height, data).expect("same domain")
    }
}

pub fn connected_components(mask: &BinaryMask, adj: Adjacency) -> Components {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut area = 0;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = (i % w, i / w);
            for &(dx, dy) in adj.offsets() {
                if let Some((nx, ny)) = neighbor(x, y, dx, dy, w, h) {
                    let j = ny * w + nx;
                    if mask.as_slice()[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    Components {
        width: w,
        height: h,
        labels,
        areas,
    }
}

/// Erases components whose area falls outside `[min_area, max_area]` (inclusive).
pub fn area_filter(
    mask: &BinaryMask,
    min_area: usize,
    max_area: usize,
    adj: Adjacency,
) -> Result<BinaryMask> {
    if min_area > max_area {
        return Err(Error::InvalidParameter(format!(
            "area range [{min_area}, {max_area}] is empty"
        )));
    }
    Ok(connected_components(mask, adj).select(|_, a| (min_area..=max_area).contains(&a)))
}

/// Erases every component touching the first/last row or column.
pub fn remove_frame_components(mask: &BinaryMask, adj: Adjacency) -> BinaryMask {
    let comps = connected_components(mask, adj);
    let (w, h) = (mask.width(), mask.height());
    let mut touching = vec![false; comps.count() + 1];
    for x in 0..w {
        touching[comps.label(x, 0) as usize] = true;
        touching[comps.label(x, h - 1) as usize] = true;
    }
    for y in 0..h {
        touching[comps.label(0, y) as usize] = true;
        touching[comps.label(w - 1, y) as usize] = true;
    }
    comps.select(|l, _| !touching[l as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn squares() -> BinaryMask {
        BinaryMask::from_fn(8, 8, |x, y| (x < 2 && y < 2) || ((4..6).contains(&x) && (4..6).contains(&y)))
    }

    #[test]
    fn empty_mask_has_no_components() {
        let c = connected_components(&BinaryMask::new(5, 5), Adjacency::Eight);
        assert_eq!(c.count(), 0);
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_squares() {
        let c = connected_components(&squares(), Adjacency::Eight);
        assert_eq!(c.areas, vec![4, 4]);
        assert_eq!(c.label(0, 0), 1);
        assert_eq!(c.label(5, 5), 2);
    }

    #[test]
    fn diagonal_pair_depends_on_adjacency() {
        let m = BinaryMask::from_fn(2, 2, |x, y| x == y);
        assert_eq!(connected_components(&m, Adjacency::Eight).count(), 1);
        assert_eq!(connected_components(&m, Adjacency::Four).count(), 2);
    }

    #[test]
    fn area_filter_bounds_are_inclusive() {
        // 999-pixel and 1000-pixel blobs
        let m = BinaryMask::from_fn(120, 60, |x, y| {
            (y < 27 && x < 37 && y * 37 + x < 999) || ((30..50).contains(&y) && (60..110).contains(&x))
        });
        let c = connected_components(&m, Adjacency::Eight);
        assert_eq!(c.areas, vec![999, 1000]);
        let f = area_filter(&m, 1000, 9000, Adjacency::Eight).unwrap();
        assert_eq!(f.count(), 1000);
        assert!(!f.get(0, 0));
        assert_eq!(area_filter(&m, 1, 9000, Adjacency::Eight).unwrap(), m);
        assert!(area_filter(&m, 10, 9, Adjacency::Eight).is_err());
    }

    #[test]
    fn frame_components() {
        let m = BinaryMask::from_fn(10, 10, |x, y| (x == 0 && y > 2 && y < 6) || ((4..7).contains(&x) && (4..7).contains(&y)));
        let r = remove_frame_components(&m, Adjacency::Eight);
        assert!(!r.get(0, 3));
        assert!(r.get(5, 5));
        assert_eq!(r.count(), 9);
        let full = BinaryMask::from_fn(6, 6, |_, _| true);
        assert_eq!(remove_frame_components(&full, Adjacency::Eight).count(), 0);
    }

    proptest! {
        #[test]
        fn areas_sum_to_popcount(bits in proptest::collection::vec(any::<bool>(), 1..200), w in 1usize..20) {
            let h = bits.len().div_ceil(w);
            let m = BinaryMask::from_fn(w, h, |x, y| bits.get(y * w + x).copied().unwrap_or(false));
            for adj in [Adjacency::Four, Adjacency::Eight] {
                let c = connected_components(&m, adj);
                prop_assert_eq!(c.areas.iter().sum::<usize>(), m.count());
                let max = c.labels.iter().copied().max().unwrap_or(0) as usize;
                prop_assert_eq!(max, c.count());
            }
        }
    }
}
