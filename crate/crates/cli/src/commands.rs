use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use flimsod_core::decoders::{DecoderKind, WeightVector};
use flimsod_core::encoder::{train_encoder, ArchitectureConfig, EncoderModel};
use flimsod_core::evalsel::{
    evaluate, evaluate_set, selection_init, selection_score, EvalReport, ScoredPool, SelectionSession,
};
use flimsod_core::imgcore::{load_mask, save_mask, save_saliency};
use flimsod_core::markers::MarkerSet;
use flimsod_core::pipeline::{infer_saliency, train_bp_for_block};
use flimsod_core::postproc::{binarize_otsu, postprocess, PostprocConfig};
use flimsod_core::{BinaryMask, ImageSet, MultiChannelImage};

use crate::config::PipelineConfig;
use crate::dataset::{png_stems, Dataset};

/// Encoder plus optional `bp` weights for the configured block.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: EncoderModel,
    pub bp: Option<WeightVector>,
}

/// Per-block kernel counts and parameter total.
pub fn model_summary(model: &EncoderModel) -> String {
    let mut out = String::new();
    for (i, b) in model.blocks.iter().enumerate() {
        out.push_str(&format!(
            "block {}: {} kernels ({}x{}x{}), {} parameters\n",
            i + 1,
            b.bank.len(),
            b.spec.kernel_size,
            b.spec.kernel_size,
            b.bank.in_channels,
            b.bank.parameter_count()
        ));
    }
    out.push_str(&format!("total parameters: {}\n", model.parameter_count()));
    out
}

/// Trains the encoder on `ids` and, when `with_bp`, the `bp` weights of the
/// configured block from the ground truth of the same images.
pub fn fit(
    cfg: &PipelineConfig,
    arch: &ArchitectureConfig,
    ds: &Dataset,
    ids: &[String],
    markers: &MarkerSet,
    with_bp: bool,
) -> Result<Trained> {
    let mut images = ImageSet::new();
    for id in ids {
        images.insert(id.clone(), ds.load_image(id)?);
    }
    let model = train_encoder(&images, &markers.subset(ids.iter().map(String::as_str)), arch, cfg.seed)?;
    let bp = if with_bp {
        let gts = ids.iter().map(|id| ds.load_gt(id)).collect::<Result<Vec<_>>>()?;
        let imgs: Vec<&MultiChannelImage> = ids.iter().map(|id| &images[id]).collect();
        let hyper = flimsod_core::decoders::BpHyper {
            seed: flimsod_core::derive_seed(cfg.seed, &[0xb9]),
            ..cfg.bp
        };
        let t = train_bp_for_block(&model, cfg.block, &imgs, &gts.iter().collect::<Vec<_>>(), &hyper)?;
        Some(t.weights)
    } else {
        None
    };
    Ok(Trained { model, bp })
}

/// `train`: fits on the configured training images and writes the model.
pub fn cmd_train(cfg: &PipelineConfig, model_out: &Path, bp_out: Option<&Path>) -> Result<Trained> {
    let arch = cfg.architecture()?;
    let ds = Dataset::from_config(cfg);
    let ids = ds.training_ids(cfg)?;
    let (_, markers) = ds.load_training(&ids)?;
    let with_bp = bp_out.is_some() || cfg.decoder == DecoderKind::Bp;
    let trained = fit(cfg, &arch, &ds, &ids, &markers, with_bp)?;
    trained
        .model
        .save(model_out)
        .with_context(|| format!("writing model {}", model_out.display()))?;
    if let (Some(path), Some(w)) = (bp_out, &trained.bp) {
        std::fs::write(path, serde_json::to_string_pretty(w)?)
            .with_context(|| format!("writing bp weights {}", path.display()))?;
    }
    Ok(trained)
}

pub fn load_bp_weights(path: &Path) -> Result<WeightVector> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading bp weights {}", path.display()))?;
    let w: WeightVector = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if w.kind != DecoderKind::Bp {
        bail!("{} holds {} weights, not bp", path.display(), w.kind);
    }
    Ok(w)
}

/// Saliency on the image domain and, when `post` is set, the object mask.
/// Without post-processing the mask is the Otsu binarization.
pub fn predict(
    img: &MultiChannelImage,
    trained: &Trained,
    kind: DecoderKind,
    block: usize,
    cfg: &PipelineConfig,
    post: Option<&PostprocConfig>,
) -> Result<(MultiChannelImage, BinaryMask)> {
    let sal = infer_saliency(img, &trained.model, block, kind, &cfg.decoder_options, trained.bp.as_ref())?;
    let mask = match post {
        Some(p) => postprocess(&sal, img, p)?,
        None => binarize_otsu(&sal)?,
    };
    Ok((sal, mask))
}

pub struct InferArgs<'a> {
    pub model: &'a Path,
    pub image: &'a Path,
    pub decoder: DecoderKind,
    pub block: usize,
    pub out: &'a Path,
    pub mask_out: Option<&'a Path>,
    pub bp_weights: Option<&'a Path>,
}

/// `infer`: one image through a saved model.
pub fn cmd_infer(args: &InferArgs, cfg: &PipelineConfig) -> Result<()> {
    let model = EncoderModel::load(args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let bp = match (args.decoder, args.bp_weights) {
        (DecoderKind::Bp, None) => bail!("the bp decoder needs a trained weight file (--bp-weights)"),
        (_, Some(p)) => Some(load_bp_weights(p)?),
        (_, None) => None,
    };
    let img = flimsod_core::imgcore::load_image(args.image)
        .with_context(|| format!("loading image {}", args.image.display()))?;
    if img.channels() != model.input_channels {
        bail!(
            "model expects {}-channel images, {} has {}",
            model.input_channels,
            args.image.display(),
            img.channels()
        );
    }
    let trained = Trained { model, bp };
    let post = if args.mask_out.is_some() { cfg.postproc.as_ref() } else { None };
    let (sal, mask) = predict(&img, &trained, args.decoder, args.block, cfg, post)?;
    save_saliency(&sal, args.out)?;
    if let Some(path) = args.mask_out {
        if post.is_none() {
            log::warn!("no postproc configured, writing the Otsu mask");
        }
        save_mask(&mask, path)?;
    }
    Ok(())
}

/// `eval`: pairs masks by file stem. Any stem present on one side only is an error.
pub fn cmd_eval(pred: &Path, gt: &Path, beta_sq: f64) -> Result<EvalReport> {
    let preds: BTreeSet<String> = png_stems(pred)?.into_iter().collect();
    let gts: BTreeSet<String> = png_stems(gt)?.into_iter().collect();
    let missing_pred: Vec<&String> = gts.difference(&preds).collect();
    let missing_gt: Vec<&String> = preds.difference(&gts).collect();
    if !missing_pred.is_empty() || !missing_gt.is_empty() {
        let mut msg = String::from("unmatched file stems:");
        for s in &missing_pred {
            msg.push_str(&format!("\n  no prediction for {s}"));
        }
        for s in &missing_gt {
            msg.push_str(&format!("\n  no ground truth for {s}"));
        }
        bail!(msg);
    }
    let mut pairs = Vec::new();
    for id in &gts {
        let g = load_mask(gt.join(format!("{id}.png")))?;
        let b = load_mask(pred.join(format!("{id}.png")))?;
        pairs.push((id.clone(), g, b));
    }
    let refs: Vec<(&str, &BinaryMask, &BinaryMask)> = pairs.iter().map(|(i, g, b)| (i.as_str(), g, b)).collect();
    Ok(evaluate_set(&refs, beta_sq)?)
}

/// Images eligible for selection: those with both markers and ground truth.
pub fn selection_pool(ds: &Dataset) -> Result<Vec<String>> {
    let gt = ds.ground_truth.clone().ok_or_else(|| anyhow!("selection needs a ground-truth directory"))?;
    Ok(ds
        .image_ids()?
        .into_iter()
        .filter(|id| ds.has_markers(id) && gt.join(format!("{id}.png")).is_file())
        .collect())
}

/// Trains on the session's training set and scores every pool image by F_β
/// of the configured pipeline.
pub fn score_session(
    cfg: &PipelineConfig,
    arch: &ArchitectureConfig,
    ds: &Dataset,
    markers: &MarkerSet,
    session: &SelectionSession,
) -> Result<ScoredPool> {
    let with_bp = cfg.decoder == DecoderKind::Bp;
    let mut failure = None;
    let scored = selection_score(
        session,
        |ids| {
            fit(cfg, arch, ds, ids, markers, with_bp).map_err(|e| {
                let msg = format!("{e:#}");
                failure = Some(e);
                flimsod_core::Error::Selection(msg)
            })
        },
        |trained, id| {
            let run = || -> Result<f64> {
                let img = ds.load_image(id)?;
                let (_, mask) = predict(&img, trained, cfg.decoder, cfg.block, cfg, cfg.postproc.as_ref())?;
                Ok(evaluate(id, &ds.load_gt(id)?, &mask, cfg.beta_sq)?.f_beta)
            };
            run().map_err(|e| flimsod_core::Error::Selection(format!("{id}: {e:#}")))
        },
    );
    match (scored, failure) {
        (Ok(s), _) => Ok(s),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

/// `select`: resumes the session stored in `log` (or starts one) and runs
/// up to `steps` automatic steps, appending each event to the log.
pub fn cmd_select(cfg: &PipelineConfig, log: &Path, steps: usize) -> Result<SelectionSession> {
    let arch = cfg.architecture()?;
    let ds = Dataset::from_config(cfg);
    let pool = selection_pool(&ds)?;
    let mut markers = MarkerSet::new();
    for id in &pool {
        markers.insert(ds.load_markers(id)?);
    }
    let mut session = if log.is_file() {
        let text = std::fs::read_to_string(log).with_context(|| format!("reading {}", log.display()))?;
        SelectionSession::replay(&SelectionSession::parse_jsonl(&text)?)
            .with_context(|| format!("replaying {}", log.display()))?
    } else {
        let s = selection_init(&pool, cfg.seed)?;
        std::fs::write(log, s.history_jsonl()?).with_context(|| format!("writing {}", log.display()))?;
        s
    };
    for _ in 0..steps {
        if session.pool.is_empty() {
            break;
        }
        let scored = score_session(cfg, &arch, &ds, &markers, &session)?;
        let candidate = scored.ranked[0].0.clone();
        let decision = session.step(scored.x, &candidate)?;
        append_line(log, &serde_json::to_string(session.history.last().expect("step logged"))?)?;
        println!(
            "x = {:.4} (previous {:.4}), worst {candidate}: {decision:?}, |T| = {}",
            scored.x,
            session.x_prev,
            session.training.len()
        );
    }
    Ok(session)
}

pub(crate) fn append_line(path: &Path, line: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{line}")?;
    f.flush()?;
    Ok(())
}

/// Default output locations next to the config's work directory.
pub fn default_model_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.model
        .clone()
        .unwrap_or_else(|| cfg.work_dir.clone().unwrap_or_else(|| PathBuf::from(".")).join("model.json"))
}
