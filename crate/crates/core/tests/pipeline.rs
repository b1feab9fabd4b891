use flimsod_core::decoders::{BpHyper, DecoderConfig, DecoderKind};
use flimsod_core::encoder::{encoder_forward_all, train_encoder, ArchitectureConfig, BlockSpec, EncoderModel, PoolKind, PoolSpec};
use flimsod_core::evalsel::evaluate;
use flimsod_core::markers::{parse_markers, MarkerSet};
use flimsod_core::pipeline::{infer_mask, infer_saliency, train_bp_for_block};
use flimsod_core::postproc::PostprocConfig;
use flimsod_core::synth::{generate_suite, SynthConfig, SynthScene};
use flimsod_core::ImageSet;

fn arch() -> ArchitectureConfig {
    let block = |kind, kernel_size| BlockSpec {
        kernel_size,
        dilation: 1,
        kernels_per_marker: 4,
        pooling: PoolSpec { kind, size: 3, stride: 2 },
    };
    ArchitectureConfig {
        blocks: vec![block(PoolKind::Max, 5), block(PoolKind::Avg, 3)],
        epsilon: 1e-6,
    }
}

fn scenes() -> Vec<SynthScene> {
    let cfg = SynthConfig {
        width: 96,
        height: 96,
        ..SynthConfig::default()
    };
    generate_suite(8, 11, &cfg)
}

fn trained(scenes: &[SynthScene]) -> EncoderModel {
    let images: ImageSet = scenes.iter().map(|s| (s.id.clone(), s.image.clone())).collect();
    let ms: MarkerSet = scenes.iter().map(|s| s.markers.clone()).collect();
    train_encoder(&images, &ms, &arch(), 3).unwrap()
}

fn post() -> PostprocConfig {
    PostprocConfig {
        min_area: 60,
        max_area: 2000,
        ..PostprocConfig::parasites()
    }
}

#[test]
fn held_out_scenes_are_segmented() {
    let scenes = scenes();
    let model = trained(&scenes[..2]);
    // lm reads the marker labels directly; the local-statistics decoders are noisier
    for (kind, floor) in [(DecoderKind::Lm, 0.9), (DecoderKind::Pb, 0.75), (DecoderKind::Mb, 0.75)] {
        let mut f = 0.0;
        for s in &scenes[2..] {
            let (_, mask) = infer_mask(&s.image, &model, 1, kind, &DecoderConfig::default(), None, &post()).unwrap();
            f += evaluate(&s.id, &s.mask, &mask, 0.3).unwrap().f_beta;
        }
        f /= (scenes.len() - 2) as f64;
        assert!(f > floor, "{kind}: mean F_beta {f:.3}");
    }
}

#[test]
fn saved_model_reproduces_inference_bit_for_bit() {
    let scenes = scenes();
    let model = trained(&scenes[..2]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = EncoderModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for block in 1..=2 {
        for kind in [DecoderKind::Ts, DecoderKind::At, DecoderKind::Lt, DecoderKind::Lm] {
            let a = infer_saliency(&scenes[5].image, &model, block, kind, &DecoderConfig::default(), None).unwrap();
            let b = infer_saliency(&scenes[5].image, &loaded, block, kind, &DecoderConfig::default(), None).unwrap();
            assert_eq!(a, b, "{kind} block {block}");
        }
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), loaded.to_json().unwrap());
}

#[test]
fn unknown_schema_is_rejected() {
    let model = trained(&scenes()[..1]);
    let json = model.to_json().unwrap().replace("flim-model/1", "flim-model/9");
    assert!(EncoderModel::from_json(&json).is_err());
}

#[test]
fn feature_maps_shrink_with_pooling_and_stay_non_negative() {
    let scenes = scenes();
    let model = trained(&scenes[..2]);
    let feats = encoder_forward_all(&scenes[3].image, &model).unwrap();
    assert_eq!(feats.len(), 2);
    assert_eq!((feats[0].width(), feats[0].height()), (48, 48));
    assert_eq!((feats[1].width(), feats[1].height()), (24, 24));
    assert_eq!(feats[0].channels(), model.blocks[0].bank.len());
    assert_eq!(feats[1].channels(), model.blocks[1].bank.len());
    assert!(feats.iter().all(|f| f.data().iter().all(|v| *v >= 0.0)));
}

#[test]
fn bp_weights_decode_held_out_scenes() {
    let scenes = scenes();
    let model = trained(&scenes[..2]);
    let imgs: Vec<_> = scenes[..2].iter().map(|s| &s.image).collect();
    let gts: Vec<_> = scenes[..2].iter().map(|s| &s.mask).collect();
    let hyper = BpHyper {
        seed: 5,
        ..BpHyper::default()
    };
    let t = train_bp_for_block(&model, 1, &imgs, &gts, &hyper).unwrap();
    assert_eq!(t.weights.alpha.len(), model.blocks[0].bank.len());
    let again = train_bp_for_block(&model, 1, &imgs, &gts, &hyper).unwrap();
    assert_eq!(t.weights, again.weights);
    let s = &scenes[4];
    let (sal, mask) = infer_mask(&s.image, &model, 1, DecoderKind::Bp, &DecoderConfig::default(), Some(&t.weights), &post()).unwrap();
    assert!(sal.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(evaluate(&s.id, &s.mask, &mask, 0.3).unwrap().f_beta > 0.6);
}

#[test]
fn synthetic_marker_files_round_trip() {
    for s in scenes() {
        let text = s.markers.to_text();
        let parsed = parse_markers(&text).unwrap();
        assert_eq!(parsed, s.markers);
        assert_eq!(parsed.to_text(), text);
        assert!(parsed.pixel_union().iter().all(|p| s.mask.get(p.x, p.y) == parsed
            .markers
            .iter()
            .any(|m| m.label == flimsod_core::markers::Label::Foreground && m.pixels.contains(p))));
    }
}
