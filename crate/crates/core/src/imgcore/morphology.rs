use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Offsets of the Euclidean disc `dx^2 + dy^2 <= r^2`.
pub fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Binary erosion or dilation with a disc of the given radius. Pixels outside
/// the domain count as background.
pub fn morph(mask: &BinaryMask, op: MorphOp, radius: usize) -> Result<BinaryMask> {
    if radius == 0 {
        return Err(Error::InvalidParameter("morphology radius must be >= 1".into()));
    }
    Ok(match op {
        MorphOp::Erode => erode(mask, radius),
        MorphOp::Dilate => dilate(mask, radius),
    })
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let disc = disc_offsets(radius);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        mask.get(x, y)
            && disc.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && mask.get(nx as usize, ny as usize)
            })
    })
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let disc = disc_offsets(radius);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut out = BinaryMask::new(mask.width(), mask.height());
    for p in mask.foreground() {
        for &(dx, dy) in &disc {
            let (nx, ny) = (p.x as isize + dx, p.y as isize + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_erode(m: &BinaryMask, r: usize) -> BinaryMask {
        let r2 = (r * r) as i64;
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            for qy in (y as i64 - r as i64)..=(y as i64 + r as i64) {
                for qx in (x as i64 - r as i64)..=(x as i64 + r as i64) {
                    let d2 = (qx - x as i64).pow(2) + (qy - y as i64).pow(2);
                    if d2 > r2 {
                        continue;
                    }
                    let inside = qx >= 0 && qy >= 0 && (qx as usize) < m.width() && (qy as usize) < m.height();
                    if !inside || !m.get(qx as usize, qy as usize) {
                        return false;
                    }
                }
            }
            true
        })
    }

    fn brute_dilate(m: &BinaryMask, r: usize) -> BinaryMask {
        let r2 = (r * r) as i64;
        BinaryMask::from_fn(m.width(), m.height(), |x, y| {
            m.foreground().any(|p| (p.x as i64 - x as i64).pow(2) + (p.y as i64 - y as i64).pow(2) <= r2)
        })
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        (1usize..14, 1usize..14, any::<u64>()).prop_map(|(w, h, seed)| {
            let mut s = seed | 1;
            BinaryMask::from_fn(w, h, |_, _| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                s % 3 != 0
            })
        })
    }

    #[test]
    fn erode_square_to_center() {
        let m = BinaryMask::from_fn(7, 7, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        let e = morph(&m, MorphOp::Erode, 1).unwrap();
        assert_eq!(e.foreground().collect::<Vec<_>>(), vec![super::super::Pixel::new(3, 3)]);
    }

    #[test]
    fn dilate_point_to_disc() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let d = morph(&m, MorphOp::Dilate, 1).unwrap();
        assert_eq!(d.count(), 5);
        assert!(d.get(2, 1) && d.get(1, 2) && d.get(3, 2) && d.get(2, 3));
        assert!(morph(&m, MorphOp::Dilate, 0).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in mask_strategy(), r in 1usize..4) {
            prop_assert_eq!(erode(&m, r), brute_erode(&m, r));
            prop_assert_eq!(dilate(&m, r), brute_dilate(&m, r));
        }

        #[test]
        fn opening_ordering_and_idempotence(m in mask_strategy(), r in 1usize..4) {
            let eroded = erode(&m, r);
            let opened = dilate(&eroded, r);
            prop_assert!(eroded.is_subset_of(&opened));
            prop_assert!(opened.is_subset_of(&m));
            prop_assert_eq!(dilate(&erode(&opened, r), r), opened);
        }
    }
}
