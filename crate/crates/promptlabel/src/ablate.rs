//! The ablation runner: execute the generate pipeline once per grid row,
//! score each row against ground truth, and collect the table. A failing
//! row is recorded and the sweep continues.

use std::path::Path;

use promptlabel_core::ablation::{AblationRow, AblationSetting, AblationTable};
use promptlabel_core::eval::Pred255Mode;
use promptlabel_core::prompt::AnnotationKind;

use crate::config::{AnnotationOpt, CamModeOpt, ImageMethod, PipelineConfig};
use crate::dataset::load_dataset_index;
use crate::error::PipelineError;
use crate::pipeline::{evaluate_dirs, run_generate, EvaluateParams};
use crate::voc::ClassVocabulary;

/// Derive the per-row config from the base run config. The row's flag
/// combination picks the strategy: on image-level rows neither flag means
/// the raw-CAM baseline, `all_confident` means every confident pixel, and
/// `sample_confident` means peaks; on scribble rows `all_confident` inputs
/// the whole stroke (fraction 1) and `sample_confident` keeps the
/// configured fraction.
pub fn config_for_setting(
    base: &PipelineConfig,
    setting: &AblationSetting,
    out_dir: &Path,
) -> Result<PipelineConfig, String> {
    let mut config = base.clone();
    config.out_dir = out_dir.to_path_buf();
    config.annotation = AnnotationOpt::from_kind(setting.kind);
    config.iterative = setting.iterative;
    config.negatives = setting.negatives;
    match setting.kind {
        AnnotationKind::ImageLabels => {
            config.image_method = ImageMethod::Cam;
            config.cam_mode = match (setting.all_confident, setting.sample_confident) {
                (false, false) => CamModeOpt::Raw,
                (true, false) => CamModeOpt::All,
                (false, true) => CamModeOpt::Peaks,
                (true, true) => {
                    return Err("row checks both all_confident and sample_confident".into())
                }
            };
        }
        AnnotationKind::Points => {
            if !setting.all_confident || setting.sample_confident {
                return Err("point rows input all annotated points".into());
            }
        }
        AnnotationKind::Scribbles => {
            config.scribble_fraction = match (setting.all_confident, setting.sample_confident) {
                (true, false) => 1.0,
                (false, true) => base.scribble_fraction,
                _ => return Err("scribble rows check exactly one pixel-input flag".into()),
            };
        }
        AnnotationKind::Boxes => {}
    }
    Ok(config)
}

/// Execute the grid. Row outputs land in `work_dir/row_<n>/`; the returned
/// table keeps grid order.
pub fn run_ablate(
    base: &PipelineConfig,
    grid: &[AblationSetting],
    work_dir: &Path,
) -> Result<AblationTable, PipelineError> {
    let index = load_dataset_index(&base.root, &base.split)?;
    let vocab = match &base.classes_file {
        None => ClassVocabulary::default(),
        Some(path) => ClassVocabulary::from_file(path)?,
    };
    let gt_dir = base.root.join("SegmentationClassAug");

    let mut rows = Vec::with_capacity(grid.len());
    for (i, setting) in grid.iter().enumerate() {
        let out_dir = work_dir.join(format!("row_{i:02}"));
        let row = match run_row(base, setting, &out_dir, &index.ids, &gt_dir, vocab.len()) {
            Ok(miou) => AblationRow {
                setting: *setting,
                miou: Some(miou),
                error: None,
            },
            Err(message) => AblationRow {
                setting: *setting,
                miou: None,
                error: Some(message),
            },
        };
        rows.push(row);
    }
    Ok(AblationTable { rows })
}

fn run_row(
    base: &PipelineConfig,
    setting: &AblationSetting,
    out_dir: &Path,
    ids: &[String],
    gt_dir: &Path,
    num_classes: usize,
) -> Result<f64, String> {
    let config = config_for_setting(base, setting, out_dir)?;
    let outcome = run_generate(&config).map_err(|e| e.to_string())?;
    if outcome.manifest.failed > 0 {
        return Err(format!(
            "{} of {} images failed",
            outcome.manifest.failed,
            outcome.manifest.images.len()
        ));
    }
    let result = evaluate_dirs(&EvaluateParams {
        pred_dir: out_dir.to_path_buf(),
        gt_dir: gt_dir.to_path_buf(),
        ids: ids.to_vec(),
        num_classes,
        pred_255: Pred255Mode::Background,
        include_background: true,
        jobs: base.jobs,
    })
    .map_err(|e| e.to_string())?;
    Ok(result.miou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use promptlabel_core::ablation::standard_grid;

    #[test]
    fn row_configs_map_flags_to_strategies() {
        let base = PipelineConfig::default();
        let grid = standard_grid();
        let out = Path::new("/tmp/row");

        let raw = config_for_setting(&base, &grid[0], out).unwrap();
        assert_eq!(raw.cam_mode, CamModeOpt::Raw);
        let all = config_for_setting(&base, &grid[1], out).unwrap();
        assert_eq!(all.cam_mode, CamModeOpt::All);
        let peaks = config_for_setting(&base, &grid[2], out).unwrap();
        assert_eq!(peaks.cam_mode, CamModeOpt::Peaks);

        let scribble_all = config_for_setting(&base, &grid[8], out).unwrap();
        assert_eq!(scribble_all.scribble_fraction, 1.0);
        let scribble_sampled = config_for_setting(&base, &grid[11], out).unwrap();
        assert_eq!(scribble_sampled.scribble_fraction, 0.2);
        assert!(scribble_sampled.iterative && scribble_sampled.negatives);

        let boxes = config_for_setting(&base, &grid[12], out).unwrap();
        assert_eq!(boxes.annotation, AnnotationOpt::Boxes);
    }

    #[test]
    fn scribble_grid_on_oracle_is_all_ones() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("data");
        crate::synth::generate_synthetic_dataset(
            &crate::synth::SynthSpec {
                images: 4,
                seed: 21,
                ..Default::default()
            },
            &root,
        )
        .unwrap();
        let base = PipelineConfig {
            root,
            ..Default::default()
        };
        let grid = vec![
            AblationSetting::new(AnnotationKind::Scribbles).all_confident(),
            AblationSetting::new(AnnotationKind::Scribbles).sample_confident(),
            AblationSetting::new(AnnotationKind::Scribbles)
                .sample_confident()
                .iterative(),
            AblationSetting::new(AnnotationKind::Scribbles)
                .sample_confident()
                .iterative()
                .negatives(),
        ];
        let table = run_ablate(&base, &grid, &dir.path().join("work")).unwrap();
        assert_eq!(table.rows.len(), 4);
        for row in &table.rows {
            assert_eq!(row.miou, Some(1.0), "row {:?}", row.setting);
        }
    }

    #[test]
    fn invalid_flag_combinations_are_rejected() {
        let base = PipelineConfig::default();
        let both = AblationSetting::new(AnnotationKind::ImageLabels)
            .all_confident()
            .sample_confident();
        assert!(config_for_setting(&base, &both, Path::new("/tmp/x")).is_err());
        let sampled_points = AblationSetting::new(AnnotationKind::Points).sample_confident();
        assert!(config_for_setting(&base, &sampled_points, Path::new("/tmp/x")).is_err());
    }
}
