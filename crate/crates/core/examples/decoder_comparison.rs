//! Trains a two-block encoder on three synthetic scenes and reports F_beta
//! and MAE of every heuristic decoder at both blocks on the rest.
//!
//! `cargo run --release -p flimsod-core --example decoder_comparison`

use flimsod_core::decoders::{DecoderConfig, DecoderKind};
use flimsod_core::encoder::{train_encoder, ArchitectureConfig, BlockSpec, PoolKind, PoolSpec};
use flimsod_core::evalsel::evaluate;
use flimsod_core::markers::MarkerSet;
use flimsod_core::pipeline::infer_mask;
use flimsod_core::postproc::PostprocConfig;
use flimsod_core::synth::{generate_suite, SynthConfig};
use flimsod_core::ImageSet;

fn main() -> flimsod_core::Result<()> {
    let scenes = generate_suite(30, 2024, &SynthConfig::default());
    let (train, test) = scenes.split_at(3);
    let images: ImageSet = train.iter().map(|s| (s.id.clone(), s.image.clone())).collect();
    let markers: MarkerSet = train.iter().map(|s| s.markers.clone()).collect();

    let block = |kind, kernel_size| BlockSpec {
        kernel_size,
        dilation: 1,
        kernels_per_marker: 4,
        pooling: PoolSpec { kind, size: 3, stride: 2 },
    };
    let arch = ArchitectureConfig {
        blocks: vec![block(PoolKind::Max, 5), block(PoolKind::Avg, 3)],
        epsilon: 1e-6,
    };
    let model = train_encoder(&images, &markers, &arch, 7)?;
    println!("{} parameters", model.parameter_count());

    let post = PostprocConfig {
        min_area: 100,
        max_area: 3000,
        ..PostprocConfig::parasites()
    };
    use DecoderKind::*;
    for b in 1..=model.num_blocks() {
        for kind in [Ts, At, Lt, Pb, Mb, Lm] {
            let (mut f, mut mae) = (0.0, 0.0);
            for s in test {
                let (_, mask) = infer_mask(&s.image, &model, b, kind, &DecoderConfig::default(), None, &post)?;
                let r = evaluate(&s.id, &s.mask, &mask, 0.3)?;
                f += r.f_beta;
                mae += r.mae;
            }
            let n = test.len() as f64;
            println!("block {b} {kind}: F_beta {:.3}  MAE {:.4}", f / n, mae / n);
        }
    }
    Ok(())
}
