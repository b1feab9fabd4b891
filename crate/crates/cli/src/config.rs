use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use flimsod_core::decoders::{BpHyper, DecoderConfig, DecoderKind};
use flimsod_core::encoder::ArchitectureConfig;
use flimsod_core::evalsel::DEFAULT_BETA_SQ;
use flimsod_core::postproc::PostprocConfig;

/// Run configuration. Relative paths are resolved against the directory of
/// the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// JSON file with the encoder architecture.
    pub architecture: PathBuf,
    /// Directory of `<id>.png` images.
    pub images: PathBuf,
    /// Directory of `<id>.txt` marker files.
    pub markers: PathBuf,
    /// Directory of `<id>.png` ground-truth masks.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Training image ids; defaults to every image with a marker file.
    #[serde(default)]
    pub train: Option<Vec<String>>,
    #[serde(default = "default_decoder")]
    pub decoder: DecoderKind,
    #[serde(default = "default_block")]
    pub block: usize,
    #[serde(default)]
    pub decoder_options: DecoderConfig,
    #[serde(default)]
    pub postproc: Option<PostprocConfig>,
    #[serde(default = "default_beta_sq")]
    pub beta_sq: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bp: BpHyper,
    /// Model file used by `serve` at startup and written by its training jobs.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub bp_weights: Option<PathBuf>,
    /// Where the service keeps its mutation log.
    #[serde(default)]
    pub work_dir: Option<PathBuf>,
}

fn default_decoder() -> DecoderKind {
    DecoderKind::Lm
}

fn default_block() -> usize {
    1
}

fn default_beta_sq() -> f64 {
    DEFAULT_BETA_SQ
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.architecture);
        fix(&mut self.images);
        fix(&mut self.markers);
        for p in [
            &mut self.ground_truth,
            &mut self.model,
            &mut self.bp_weights,
            &mut self.work_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn architecture(&self) -> Result<ArchitectureConfig> {
        let text = std::fs::read_to_string(&self.architecture)
            .with_context(|| format!("reading architecture {}", self.architecture.display()))?;
        let arch: ArchitectureConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing architecture {}", self.architecture.display()))?;
        arch.validate()?;
        if self.block == 0 || self.block > arch.blocks.len() {
            bail!("block {} is outside 1..={}", self.block, arch.blocks.len());
        }
        Ok(arch)
    }
}
