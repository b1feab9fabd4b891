#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flimsod_core::encoder::{ArchitectureConfig, BlockSpec, PoolKind, PoolSpec};
use flimsod_core::imgcore::{save_image_rgb8, save_mask};
use flimsod_core::synth::SynthScene;

/// Two blocks, 5x5 then 3x3 kernels, 4 kernels per marker.
pub fn two_block_arch() -> ArchitectureConfig {
    let block = |kind, kernel_size| BlockSpec {
        kernel_size,
        dilation: 1,
        kernels_per_marker: 4,
        pooling: PoolSpec {
            kind,
            size: 3,
            stride: 2,
        },
    };
    ArchitectureConfig {
        blocks: vec![block(PoolKind::Max, 5), block(PoolKind::Avg, 3)],
        epsilon: 1e-6,
    }
}

pub fn postproc_json() -> serde_json::Value {
    serde_json::json!({
        "min_area": 100,
        "max_area": 3000,
        "frame_removal": true,
        "delineation": true
    })
}

/// Writes `images/`, `gt/`, `markers/` (for `with_markers` only),
/// `arch.json` and `config.json` under `root`; `extra` keys override the
/// config defaults. Returns the config path.
pub fn write_dataset(
    root: &Path,
    scenes: &[SynthScene],
    with_markers: &[&str],
    arch: &ArchitectureConfig,
    extra: serde_json::Value,
) -> PathBuf {
    for sub in ["images", "gt", "markers", "work"] {
        std::fs::create_dir_all(root.join(sub)).unwrap();
    }
    for s in scenes {
        save_image_rgb8(&s.image, root.join("images").join(format!("{}.png", s.id))).unwrap();
        save_mask(&s.mask, root.join("gt").join(format!("{}.png", s.id))).unwrap();
        if with_markers.contains(&s.id.as_str()) {
            std::fs::write(root.join("markers").join(format!("{}.txt", s.id)), s.markers.to_text()).unwrap();
        }
    }
    std::fs::write(root.join("arch.json"), serde_json::to_string_pretty(arch).unwrap()).unwrap();
    let mut cfg = serde_json::json!({
        "architecture": "arch.json",
        "images": "images",
        "markers": "markers",
        "ground_truth": "gt",
        "seed": 7,
        "work_dir": "work"
    });
    if let serde_json::Value::Object(map) = extra {
        for (k, v) in map {
            cfg[k] = v;
        }
    }
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn flimsod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flimsod"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawning flimsod")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}
