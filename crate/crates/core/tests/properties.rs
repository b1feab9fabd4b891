use std::collections::BTreeSet;

use proptest::prelude::*;

use flimsod_core::decoders::{
    channel_stats, decode_pixelwise, decode_pointwise, weights_at, weights_lt, weights_mb, weights_pb, weights_ts,
    DecoderKind, PixelWeightField, WeightVector,
};
use flimsod_core::encoder::{train_encoder, ArchitectureConfig, BlockSpec, PoolSpec};
use flimsod_core::evalsel::{selection_init, Decision, SelectionSession};
use flimsod_core::imgcore::connected_components;
use flimsod_core::markers::{ImageMarkers, Label, Marker, MarkerSet};
use flimsod_core::postproc::{binarize_otsu, postprocess, PostprocConfig};
use flimsod_core::{Adjacency, ImageSet, MultiChannelImage, Pixel};

/// Non-negative feature maps, as produced by ReLU blocks.
fn featmap(max_side: usize, channels: std::ops::Range<usize>) -> impl Strategy<Value = MultiChannelImage> {
    (2..max_side, 2..max_side, channels).prop_flat_map(|(w, h, m)| {
        prop::collection::vec(0.0f64..10.0, w * h * m)
            .prop_map(move |data| MultiChannelImage::new(w, h, m, data).unwrap())
    })
}

fn labels(m: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop::bool::ANY, m).prop_map(|bits| {
        let mut l: Vec<Label> = bits
            .into_iter()
            .map(|b| if b { Label::Foreground } else { Label::Background })
            .collect();
        // both labels present, as every trained bank has them
        let last = l.len() - 1;
        l[0] = Label::Foreground;
        l[last] = Label::Background;
        l
    })
}

fn tri_state(v: &[f64]) -> bool {
    v.iter().all(|a| *a == -1.0 || *a == 0.0 || *a == 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lt_with_all_foreground_labels_is_ts(f in featmap(9, 1..6)) {
        let lt = weights_lt(&f, &vec![Label::Foreground; f.channels()]).unwrap();
        let ts = weights_ts(&channel_stats(&f).unwrap());
        prop_assert_eq!(lt.alpha, ts.alpha);
    }

    #[test]
    fn heuristic_weights_are_tri_state(
        (f, l) in featmap(8, 2..6).prop_flat_map(|f| { let m = f.channels(); (Just(f), labels(m)) }),
        radius in 1usize..3,
    ) {
        prop_assert!(tri_state(&weights_ts(&channel_stats(&f).unwrap()).alpha));
        prop_assert!(tri_state(&weights_at(&f).unwrap().alpha));
        prop_assert!(tri_state(&weights_lt(&f, &l).unwrap().alpha));
        for field in [weights_pb(&f, &l, radius).unwrap(), weights_mb(&f, &l, radius).unwrap()] {
            prop_assert_eq!((field.width, field.height, field.channels), (f.width(), f.height(), f.channels()));
            prop_assert!(tri_state(&field.alpha));
        }
    }

    #[test]
    fn pointwise_decoding_is_scale_equivariant(
        f in featmap(8, 1..5),
        signs in prop::collection::vec(-1i8..=1, 5),
        c in 0.01f64..100.0,
    ) {
        let w = WeightVector { kind: DecoderKind::Lm, alpha: signs[..f.channels()].iter().map(|s| *s as f64).collect() };
        let a = decode_pointwise(&f.scaled(c), &w).unwrap();
        let b = decode_pointwise(&f, &w).unwrap().scaled(c);
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn constant_field_decodes_like_pointwise(f in featmap(8, 1..5), signs in prop::collection::vec(-1i8..=1, 5)) {
        let w = WeightVector { kind: DecoderKind::Mb, alpha: signs[..f.channels()].iter().map(|s| *s as f64).collect() };
        let field = PixelWeightField::constant(f.width(), f.height(), &w);
        prop_assert_eq!(decode_pixelwise(&f, &field).unwrap(), decode_pointwise(&f, &w).unwrap());
    }
}

/// Saliency with a few bright rectangles on a noisy floor, plus an RGB image
/// that agrees with it.
fn blob_scene() -> impl Strategy<Value = (MultiChannelImage, MultiChannelImage)> {
    let rect = (0usize..28, 0usize..28, 2usize..12, 2usize..12);
    (prop::collection::vec(rect, 1..4), prop::collection::vec(0.0f64..0.3, 32 * 32)).prop_map(|(rects, floor)| {
        let inside = |x: usize, y: usize| rects.iter().any(|&(rx, ry, w, h)| x >= rx && x < rx + w && y >= ry && y < ry + h);
        let sal = MultiChannelImage::from_fn(32, 32, 1, |x, y, _| if inside(x, y) { 0.8 + floor[y * 32 + x] * 0.5 } else { floor[y * 32 + x] });
        let rgb = MultiChannelImage::from_fn(32, 32, 3, |x, y, c| if inside(x, y) { [0.9, 0.7, 0.3][c] } else { [0.2, 0.3, 0.4][c] });
        (sal, rgb)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn postprocess_respects_area_bounds(
        (sal, rgb) in blob_scene(),
        min_area in 1usize..40,
        span in 0usize..200,
        frame_removal in prop::bool::ANY,
        delineation in prop::bool::ANY,
        eight in prop::bool::ANY,
    ) {
        let adjacency = if eight { Adjacency::Eight } else { Adjacency::Four };
        let cfg = PostprocConfig {
            min_area,
            max_area: min_area + span,
            frame_removal,
            delineation,
            r_in: Some(1),
            r_out: Some(2),
            adjacency,
        };
        let out = postprocess(&sal, &rgb, &cfg).unwrap();
        let comps = connected_components(&out, adjacency);
        for a in &comps.areas {
            prop_assert!((cfg.min_area..=cfg.max_area).contains(a), "area {} outside [{}, {}]", a, cfg.min_area, cfg.max_area);
        }
        if !delineation {
            prop_assert!(out.is_subset_of(&binarize_otsu(&sal).unwrap()));
        }
        prop_assert_eq!(&out, &postprocess(&sal, &rgb, &cfg).unwrap());
    }
}

#[derive(Debug, Clone)]
enum Op {
    Decide { accept: bool, x: f64, pick: usize },
    Auto { x: f64, pick: usize },
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        (prop::bool::ANY, 0.0f64..=1.0, 0usize..100).prop_map(|(accept, x, pick)| Op::Decide { accept, x, pick }),
        (0.0f64..=1.0, 0usize..100).prop_map(|(x, pick)| Op::Auto { x, pick }),
    ];
    prop::collection::vec(op, 0..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selection_session_invariants(n in 2usize..9, seed in any::<u64>(), script in ops()) {
        let ids: Vec<String> = (0..n).map(|i| format!("img{i}")).collect();
        let everything: BTreeSet<String> = ids.iter().cloned().collect();
        let mut s = selection_init(&ids, seed).unwrap();
        // training set before the still-revertible addition; the initial pick counts as one
        let mut before_add: Option<Vec<String>> = Some(Vec::new());
        for op in script {
            if s.pool.is_empty() {
                break;
            }
            let (x, pick) = match op { Op::Decide { x, pick, .. } | Op::Auto { x, pick } => (x, pick) };
            let candidate = s.pool.iter().nth(pick % s.pool.len()).unwrap().clone();
            let snapshot = s.training.clone();
            let decision = match op {
                Op::Decide { accept, .. } => s.decide(accept, x, &candidate).unwrap(),
                Op::Auto { .. } => s.step(x, &candidate).unwrap(),
            };
            match decision {
                Decision::Accepted => before_add = Some(snapshot),
                Decision::Reverted { removed: Some(_) } => {
                    prop_assert_eq!(Some(&s.training), before_add.as_ref());
                    before_add = None;
                }
                Decision::Reverted { removed: None } => prop_assert_eq!(&s.training, &snapshot),
            }
            prop_assert!(s.training.iter().all(|t| !s.pool.contains(t)));
            let union: BTreeSet<String> = s.training.iter().cloned().chain(s.pool.iter().cloned()).collect();
            prop_assert_eq!(&union, &everything);
            prop_assert_eq!(s.training.len() + s.pool.len(), n);
            prop_assert!((0.0..=1.0).contains(&s.x_prev));
            if let Some(z) = &s.z_prev {
                prop_assert!(s.training.contains(z));
            }
        }
        let replayed = SelectionSession::replay(&SelectionSession::parse_jsonl(&s.history_jsonl().unwrap()).unwrap()).unwrap();
        prop_assert_eq!(replayed, s);
    }
}

/// One image with markers of random sizes (pixels may repeat across markers).
fn marked_image() -> impl Strategy<Value = (MultiChannelImage, ImageMarkers)> {
    let marker = (prop::bool::ANY, prop::collection::btree_set((0usize..12, 0usize..12), 1..7));
    (prop::collection::vec(0.0f64..1.0, 12 * 12 * 2), prop::collection::vec(marker, 1..5)).prop_map(|(data, ms)| {
        let img = MultiChannelImage::new(12, 12, 2, data).unwrap();
        let markers = ms
            .into_iter()
            .enumerate()
            .map(|(i, (fg, px))| Marker {
                id: i as u32 + 1,
                label: if fg { Label::Foreground } else { Label::Background },
                pixels: px.into_iter().map(|(x, y)| Pixel::new(x, y)).collect(),
            })
            .collect();
        let im = ImageMarkers { image_id: "a".into(), width: 12, height: 12, markers };
        (img, im)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bank_size_law_and_unit_kernels((img, im) in marked_image(), m2 in 1usize..6, k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>()) {
        let expected: usize = im.markers.iter().map(|m| m.pixels.len().min(m2)).sum();
        let arch = ArchitectureConfig {
            blocks: vec![BlockSpec { kernel_size: k, dilation: 1, kernels_per_marker: m2, pooling: PoolSpec::identity() }],
            epsilon: 1e-6,
        };
        let images: ImageSet = [("a".to_string(), img)].into_iter().collect();
        let ms: MarkerSet = [im.clone()].into_iter().collect();
        let model = train_encoder(&images, &ms, &arch, seed).unwrap();
        let bank = &model.blocks[0].bank;
        prop_assert_eq!(bank.len(), expected);
        prop_assert_eq!(model.parameter_count(), expected * k * k * 2);
        for kernel in &bank.kernels {
            prop_assert_eq!(kernel.weights.len(), k * k * 2);
            let norm = kernel.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-6, "norm {}", norm);
        }
        // kernels inherit their marker's label, in marker order
        let labels: Vec<Label> = im.markers.iter().flat_map(|m| std::iter::repeat_n(m.label, m.pixels.len().min(m2))).collect();
        prop_assert_eq!(bank.labels(), labels);
        prop_assert_eq!(model, train_encoder(&images, &ms, &arch, seed).unwrap());
    }
}
