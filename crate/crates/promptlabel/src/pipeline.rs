//! The generate pipeline: per image, turn the weak annotation into prompt
//! sets, run them through the segmenter, compose the selected masks into a
//! pseudo label, and write PNG + manifest. Also the directory-level mIoU
//! evaluation used by `evaluate` and the ablation runner.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use promptlabel_core::cam::{self, CamMode, CamPromptParams, ScoreMap};
use promptlabel_core::compose::{
    compose, merge_instances, ClassMask, MaskSource, Provenance, PseudoLabel,
};
use promptlabel_core::eval::{ConfusionMatrix, EvaluationResult, Pred255Mode};
use promptlabel_core::grid::{grid_pipeline, GridParams, MaskClassifier, MockClassifier};
use promptlabel_core::label::LabelMap;
use promptlabel_core::mask::Mask;
use promptlabel_core::oracle::{DegradedOracle, OracleSegmenter};
use promptlabel_core::prompt::{
    boxes_to_prompts, points_to_prompts, scribbles_to_prompts, PromptSet, WeakAnnotation,
};
use promptlabel_core::seed::{derive_seed, stable_id_hash};
use promptlabel_core::segmenter::{
    refine, select_mask, ImageRef, Segmenter, SegmenterQuery, SelectionPolicy,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{BackendSpec, ClassifierSpec, ExternalClassifier, ExternalSegmenter};
use crate::camio;
use crate::config::{AnnotationOpt, CamModeOpt, ImageMethod, PipelineConfig};
use crate::dataset::{
    image_dims, load_dataset_index, load_gt_label, load_weak_annotation, save_label_png, VocLayout,
};
use crate::error::{ConfigError, DatasetError, PipelineError};
use crate::voc::ClassVocabulary;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Per-image outcome recorded in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    /// `ok`, `no_prompts`, or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflicts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_classes: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Everything needed to reproduce a run: the resolved config plus what
/// happened per image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub params_hash: String,
    pub config: PipelineConfig,
    pub failed: usize,
    pub images: Vec<ImageRecord>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        PipelineError::Config(ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    })
}

#[derive(Debug)]
pub struct GenerateOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

/// How one image's annotation becomes masks.
#[derive(Clone, Debug, PartialEq)]
pub enum StrategyPlan {
    CamPrompts(CamMode),
    /// Thresholded CAMs become masks directly, no segmenter involved.
    CamRaw,
    Grid,
    Points,
    Scribbles {
        fraction: f64,
    },
    Boxes,
}

impl StrategyPlan {
    pub fn from_config(config: &PipelineConfig) -> Self {
        match config.annotation {
            AnnotationOpt::Points => StrategyPlan::Points,
            AnnotationOpt::Scribbles => StrategyPlan::Scribbles {
                fraction: config.scribble_fraction,
            },
            AnnotationOpt::Boxes => StrategyPlan::Boxes,
            AnnotationOpt::ImageLabels => match config.image_method {
                ImageMethod::Grid => StrategyPlan::Grid,
                ImageMethod::Cam => match config.cam_mode {
                    CamModeOpt::Raw => StrategyPlan::CamRaw,
                    CamModeOpt::All => StrategyPlan::CamPrompts(CamMode::AllConfident),
                    CamModeOpt::Peaks => StrategyPlan::CamPrompts(CamMode::Peaks),
                },
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyPlan::CamPrompts(CamMode::AllConfident) => "cam_all",
            StrategyPlan::CamPrompts(CamMode::Peaks) => "cam_peaks",
            StrategyPlan::CamRaw => "cam_raw",
            StrategyPlan::Grid => "grid",
            StrategyPlan::Points => "points",
            StrategyPlan::Scribbles { .. } => "scribbles",
            StrategyPlan::Boxes => "boxes",
        }
    }
}

fn load_all_gt(
    layout: &VocLayout,
    ids: &[String],
) -> Result<BTreeMap<String, LabelMap>, DatasetError> {
    let mut maps = BTreeMap::new();
    for id in ids {
        maps.insert(id.clone(), load_gt_label(layout, id)?);
    }
    Ok(maps)
}

fn build_backend(
    config: &PipelineConfig,
    layout: &VocLayout,
    ids: &[String],
) -> Result<Box<dyn Segmenter>, PipelineError> {
    let spec = BackendSpec::parse(&config.backend).map_err(ConfigError::Invalid)?;
    Ok(match spec {
        BackendSpec::Oracle => Box::new(OracleSegmenter::with_map(load_all_gt(layout, ids)?)),
        BackendSpec::DegradedOracle { max_dilation } => Box::new(DegradedOracle::new(
            OracleSegmenter::with_map(load_all_gt(layout, ids)?),
            max_dilation,
        )),
        BackendSpec::External(endpoint) => {
            Box::new(ExternalSegmenter::connect(&endpoint).map_err(|e| {
                PipelineError::Backend(promptlabel_core::SegmenterError::BackendUnavailable(
                    e.to_string(),
                ))
            })?)
        }
    })
}

fn build_classifier(
    config: &PipelineConfig,
    layout: &VocLayout,
    ids: &[String],
    vocab: &ClassVocabulary,
) -> Result<Box<dyn MaskClassifier>, PipelineError> {
    let spec = ClassifierSpec::parse(&config.classifier).map_err(ConfigError::Invalid)?;
    Ok(match spec {
        ClassifierSpec::Mock => Box::new(MockClassifier::with_map(load_all_gt(layout, ids)?)),
        ClassifierSpec::External(endpoint) => Box::new(
            ExternalClassifier::connect(&endpoint, vocab.clone()).map_err(|e| {
                PipelineError::Classifier(promptlabel_core::grid::ClassifierError::Unavailable(
                    e.to_string(),
                ))
            })?,
        ),
    })
}

fn load_vocabulary(config: &PipelineConfig) -> Result<ClassVocabulary, PipelineError> {
    Ok(match &config.classes_file {
        None => ClassVocabulary::default(),
        Some(path) => ClassVocabulary::from_file(path)?,
    })
}

/// Run the generate pipeline: one PNG per image plus `manifest.json` in the
/// output directory. Per-image failures are recorded and do not stop the
/// run; the caller decides the exit code from `manifest.failed`.
pub fn run_generate(config: &PipelineConfig) -> Result<GenerateOutcome, PipelineError> {
    config.validate()?;
    let vocab = load_vocabulary(config)?;
    let layout = VocLayout::new(&config.root);
    let index = load_dataset_index(&config.root, &config.split)?;
    fs::create_dir_all(&config.out_dir).map_err(|source| PipelineError::Io {
        path: config.out_dir.clone(),
        source,
    })?;

    let plan = StrategyPlan::from_config(config);
    let backend = build_backend(config, &layout, &index.ids)?;
    let classifier: Option<Box<dyn MaskClassifier>> = if plan == StrategyPlan::Grid {
        Some(build_classifier(config, &layout, &index.ids, &vocab)?)
    } else {
        None
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;

    let params_hash = config.params_hash();
    let records: Vec<ImageRecord> = pool.install(|| {
        index
            .ids
            .par_iter()
            .map(|id| {
                process_image(
                    id,
                    config,
                    &plan,
                    &layout,
                    &vocab,
                    backend.as_ref(),
                    classifier.as_deref(),
                    &params_hash,
                )
            })
            .collect()
    });

    let failed = records.iter().filter(|r| r.status == "failed").count();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        params_hash,
        config: config.clone(),
        failed,
        images: records,
    };
    let manifest_path = config.out_dir.join(MANIFEST_FILE);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|source| PipelineError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(GenerateOutcome {
        manifest,
        manifest_path,
    })
}

#[allow(clippy::too_many_arguments)]
fn process_image(
    id: &str,
    config: &PipelineConfig,
    plan: &StrategyPlan,
    layout: &VocLayout,
    vocab: &ClassVocabulary,
    backend: &dyn Segmenter,
    classifier: Option<&dyn MaskClassifier>,
    params_hash: &str,
) -> ImageRecord {
    match generate_one(
        id,
        config,
        plan,
        layout,
        vocab,
        backend,
        classifier,
        params_hash,
    ) {
        Ok((pseudo, dropped, had_prompts)) => {
            let out_path = config.out_dir.join(format!("{id}.png"));
            if let Err(e) = save_label_png(&pseudo.label, &out_path) {
                return ImageRecord {
                    id: id.to_string(),
                    status: "failed".into(),
                    conflicts: None,
                    coverage: None,
                    dropped_classes: dropped,
                    reason: Some(e.to_string()),
                };
            }
            ImageRecord {
                id: id.to_string(),
                status: if had_prompts { "ok" } else { "no_prompts" }.into(),
                conflicts: Some(pseudo.conflicts),
                coverage: Some(pseudo.coverage),
                dropped_classes: dropped,
                reason: None,
            }
        }
        Err(e) => ImageRecord {
            id: id.to_string(),
            status: "failed".into(),
            conflicts: None,
            coverage: None,
            dropped_classes: Vec::new(),
            reason: Some(e.to_string()),
        },
    }
}

type ImageResult = Result<(PseudoLabel, Vec<u8>, bool), PipelineError>;

#[allow(clippy::too_many_arguments)]
fn generate_one(
    id: &str,
    config: &PipelineConfig,
    plan: &StrategyPlan,
    layout: &VocLayout,
    vocab: &ClassVocabulary,
    backend: &dyn Segmenter,
    classifier: Option<&dyn MaskClassifier>,
    params_hash: &str,
) -> ImageResult {
    let (width, height) = image_dims(layout, id)?;
    let image = ImageRef {
        id: id.to_string(),
        width,
        height,
    };
    let annotation = load_weak_annotation(
        layout,
        &config.split,
        id,
        match plan {
            StrategyPlan::Points => promptlabel_core::prompt::AnnotationKind::Points,
            StrategyPlan::Scribbles { .. } => promptlabel_core::prompt::AnnotationKind::Scribbles,
            StrategyPlan::Boxes => promptlabel_core::prompt::AnnotationKind::Boxes,
            _ => promptlabel_core::prompt::AnnotationKind::ImageLabels,
        },
        vocab,
        (width, height),
    )?;
    let provenance = Provenance {
        strategy: plan.name().to_string(),
        params_hash: params_hash.to_string(),
    };
    let selection = config.selection.policy();
    let image_seed = derive_seed(config.seed, stable_id_hash(id));

    let mut dropped: Vec<u8> = Vec::new();
    let (masks, had_prompts) = match (plan, &annotation) {
        (StrategyPlan::Grid, WeakAnnotation::ImageLabels(classes)) => {
            let classifier = classifier.expect("grid plan builds a classifier");
            let pseudo = grid_pipeline(
                &image,
                classes,
                backend,
                classifier,
                &GridParams {
                    stride: config.grid_stride,
                    dedup_iou: config.dedup_iou,
                },
                selection,
                config.conflict.policy(),
                config.unmasked.policy(),
                provenance,
            )?;
            return Ok((pseudo, dropped, true));
        }
        (StrategyPlan::CamRaw, WeakAnnotation::ImageLabels(classes)) => {
            let cams = load_cams(layout, id, classes)?;
            let mut masks = Vec::new();
            for cam in &cams {
                let mask =
                    Mask::from_fn(width, height, |x, y| cam.get(x, y) >= config.cam_threshold);
                if mask.is_blank() {
                    dropped.push(cam.class_id());
                    continue;
                }
                let mean: f64 = {
                    let mut sum = 0.0f64;
                    for y in 0..height {
                        for x in 0..width {
                            if mask.get(x, y) {
                                sum += cam.get(x, y) as f64;
                            }
                        }
                    }
                    sum / mask.area() as f64
                };
                masks.push(ClassMask {
                    class_id: cam.class_id(),
                    mask,
                    score: mean as f32,
                    source: MaskSource {
                        strategy: "cam_raw".into(),
                        query: format!("class-{}", cam.class_id()),
                    },
                });
            }
            let had = !masks.is_empty();
            (masks, had)
        }
        (StrategyPlan::CamPrompts(mode), WeakAnnotation::ImageLabels(classes)) => {
            let cams = load_cams(layout, id, classes)?;
            let params = CamPromptParams {
                threshold: config.cam_threshold,
                peak_radius: config.peak_radius,
                batch_size: 1,
            };
            let build =
                cam::build_cam_prompts(&cams, *mode, config.negatives, config.iterative, &params)
                    .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
            dropped = build.dropped;
            let had = !build.prompts.is_empty();
            (
                masks_from_prompts(backend, &image, &build.prompts, selection, plan.name())?,
                had,
            )
        }
        (StrategyPlan::Points, WeakAnnotation::Points(points)) => {
            let prompts = points_to_prompts(points, config.iterative, config.negatives);
            let had = !prompts.is_empty();
            (
                masks_from_prompts(backend, &image, &prompts, selection, plan.name())?,
                had,
            )
        }
        (StrategyPlan::Scribbles { fraction }, WeakAnnotation::Scribbles(map)) => {
            let prompts = scribbles_to_prompts(
                map,
                *fraction,
                config.iterative,
                config.negatives,
                image_seed,
            );
            let had = !prompts.is_empty();
            (
                masks_from_prompts(backend, &image, &prompts, selection, plan.name())?,
                had,
            )
        }
        (StrategyPlan::Boxes, WeakAnnotation::Boxes(boxes)) => {
            let prompts = boxes_to_prompts(boxes);
            let had = !prompts.is_empty();
            (
                masks_from_prompts(backend, &image, &prompts, selection, plan.name())?,
                had,
            )
        }
        _ => unreachable!("annotation kind always matches the plan"),
    };

    let merged = merge_instances(masks);
    let pseudo = compose(
        width,
        height,
        &merged,
        config.conflict.policy(),
        config.unmasked.policy(),
        Provenance {
            strategy: plan.name().to_string(),
            params_hash: params_hash.to_string(),
        },
    )
    .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
    Ok((pseudo, dropped, had_prompts))
}

fn load_cams(layout: &VocLayout, id: &str, classes: &[u8]) -> Result<Vec<ScoreMap>, PipelineError> {
    let mut cams = Vec::with_capacity(classes.len());
    for &class in classes {
        let path = camio::cam_path(&layout.cam_dir(), id, class);
        if !path.is_file() {
            return Err(DatasetError::MissingAnnotation {
                id: id.to_string(),
                kind: "cams",
                path,
            }
            .into());
        }
        let (w, h, raw) = camio::read_cam(&path)?;
        let cam = cam::normalize_cam(class, w, h, &raw).map_err(|e| DatasetError::Cam {
            path,
            message: e.to_string(),
        })?;
        cams.push(cam);
    }
    Ok(cams)
}

/// Run every prompt set against the backend and keep the non-empty selected
/// masks. Box prompts are single predict calls; point prompts go through
/// the refinement loop (a one-batch schedule is a single call).
fn masks_from_prompts(
    backend: &dyn Segmenter,
    image: &ImageRef,
    prompts: &[PromptSet],
    selection: SelectionPolicy,
    strategy: &str,
) -> Result<Vec<ClassMask>, PipelineError> {
    let mut out = Vec::with_capacity(prompts.len());
    for (i, set) in prompts.iter().enumerate() {
        let proposal = if set.schedule.is_empty() {
            let query = SegmenterQuery {
                image: image.clone(),
                positives: set.positives.clone(),
                negatives: set.negatives.clone(),
                bbox: set.bbox,
                prev_state: None,
            };
            select_mask(backend.predict(&query)?, selection)?
        } else {
            refine(backend, image, set, selection)?
        };
        if proposal.mask.is_blank() {
            continue; // no mask for this query
        }
        out.push(ClassMask {
            class_id: set.class_id,
            mask: proposal.mask,
            score: proposal.score,
            source: MaskSource {
                strategy: strategy.to_string(),
                query: format!("{strategy}-{i}-class-{}", set.class_id),
            },
        });
    }
    Ok(out)
}

/// Directory-level evaluation inputs.
#[derive(Clone, Debug)]
pub struct EvaluateParams {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub ids: Vec<String>,
    pub num_classes: usize,
    pub pred_255: Pred255Mode,
    pub include_background: bool,
    pub jobs: usize,
}

/// Accumulate per-image confusion matrices in parallel, merge, and score.
pub fn evaluate_dirs(params: &EvaluateParams) -> Result<EvaluationResult, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
    let cm = pool.install(|| {
        params
            .ids
            .par_iter()
            .map(|id| -> Result<ConfusionMatrix, PipelineError> {
                let gt = crate::dataset::load_label_png(&params.gt_dir.join(format!("{id}.png")))?;
                let pred =
                    crate::dataset::load_label_png(&params.pred_dir.join(format!("{id}.png")))?;
                let mut cm = ConfusionMatrix::new(params.num_classes);
                cm.accumulate(&gt, &pred, params.pred_255)?;
                Ok(cm)
            })
            .try_reduce(
                || ConfusionMatrix::new(params.num_classes),
                |mut a, b| {
                    a.merge(&b);
                    Ok(a)
                },
            )
    })?;
    Ok(cm.miou(params.include_background)?)
}

/// Ids evaluated by default: every `<id>.png` in the prediction directory,
/// sorted.
pub fn ids_from_pred_dir(pred_dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut ids = Vec::new();
    let entries = fs::read_dir(pred_dir).map_err(|source| PipelineError::Io {
        path: pred_dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| PipelineError::Io {
            path: pred_dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_dataset, SynthSpec};

    fn synth_config(root: &Path, out: &Path) -> PipelineConfig {
        PipelineConfig {
            root: root.to_path_buf(),
            out_dir: out.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn generate_writes_png_per_image_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        let spec = SynthSpec {
            images: 5,
            ..Default::default()
        };
        let ids = generate_synthetic_dataset(&spec, &root).unwrap();
        let out = dir.path().join("out");
        let config = synth_config(&root, &out);
        let outcome = run_generate(&config).unwrap();
        assert_eq!(outcome.manifest.failed, 0);
        assert_eq!(outcome.manifest.images.len(), 5);
        for id in &ids {
            assert!(out.join(format!("{id}.png")).is_file());
        }
        let manifest = load_manifest(&outcome.manifest_path).unwrap();
        assert_eq!(manifest.params_hash, config.params_hash());
        assert_eq!(manifest.config, config);
    }

    #[test]
    fn scribble_oracle_run_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        let spec = SynthSpec {
            images: 4,
            seed: 3,
            ..Default::default()
        };
        let ids = generate_synthetic_dataset(&spec, &root).unwrap();
        let out = dir.path().join("out");
        let mut config = synth_config(&root, &out);
        config.negatives = true;
        config.iterative = true;
        run_generate(&config).unwrap();
        let result = evaluate_dirs(&EvaluateParams {
            pred_dir: out,
            gt_dir: root.join("SegmentationClassAug"),
            ids,
            num_classes: 21,
            pred_255: Pred255Mode::Background,
            include_background: true,
            jobs: 2,
        })
        .unwrap();
        assert_eq!(result.miou, 1.0);
    }

    #[test]
    fn unreachable_backend_fails_with_backend_error() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        generate_synthetic_dataset(
            &SynthSpec {
                images: 1,
                ..Default::default()
            },
            &root,
        )
        .unwrap();
        let mut config = synth_config(&root, &dir.path().join("out"));
        config.backend = "external:tcp:127.0.0.1:1".into();
        let err = run_generate(&config).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn jobs_do_not_change_output() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        let spec = SynthSpec {
            images: 6,
            ..Default::default()
        };
        generate_synthetic_dataset(&spec, &root).unwrap();
        let out1 = dir.path().join("out1");
        let out4 = dir.path().join("out4");
        let mut c1 = synth_config(&root, &out1);
        c1.negatives = true;
        let mut c4 = c1.clone();
        c4.out_dir = out4.clone();
        c4.jobs = 4;
        run_generate(&c1).unwrap();
        run_generate(&c4).unwrap();
        for entry in fs::read_dir(&out1).unwrap() {
            let name = entry.unwrap().file_name();
            if name.to_string_lossy().ends_with(".png") {
                let a = fs::read(out1.join(&name)).unwrap();
                let b = fs::read(out4.join(&name)).unwrap();
                assert_eq!(a, b, "{name:?} differs between jobs=1 and jobs=4");
            }
        }
    }
}
