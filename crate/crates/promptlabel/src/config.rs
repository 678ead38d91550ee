//! Declarative pipeline configuration: a TOML file with defaults, overlaid
//! by CLI flags (precedence CLI > file > defaults). The resolved config is
//! embedded in every manifest, and its hash keys reproducibility.

use std::fs;
use std::path::{Path, PathBuf};

use promptlabel_core::compose::{ConflictPolicy, UnmaskedPolicy};
use promptlabel_core::eval::Pred255Mode;
use promptlabel_core::prompt::AnnotationKind;
use promptlabel_core::CamMode;
use promptlabel_core::SelectionPolicy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationOpt {
    ImageLabels,
    Points,
    Scribbles,
    Boxes,
}

impl AnnotationOpt {
    pub fn kind(self) -> AnnotationKind {
        match self {
            AnnotationOpt::ImageLabels => AnnotationKind::ImageLabels,
            AnnotationOpt::Points => AnnotationKind::Points,
            AnnotationOpt::Scribbles => AnnotationKind::Scribbles,
            AnnotationOpt::Boxes => AnnotationKind::Boxes,
        }
    }

    pub fn from_kind(kind: AnnotationKind) -> Self {
        match kind {
            AnnotationKind::ImageLabels => AnnotationOpt::ImageLabels,
            AnnotationKind::Points => AnnotationOpt::Points,
            AnnotationKind::Scribbles => AnnotationOpt::Scribbles,
            AnnotationKind::Boxes => AnnotationOpt::Boxes,
        }
    }
}

/// How image-level labels are turned into masks: CAM point prompts or the
/// strided-grid + mask-classifier route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ImageMethod {
    Cam,
    Grid,
}

/// `raw` skips the segmenter and thresholds the CAM directly, the
/// no-prompting baseline row of the ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CamModeOpt {
    All,
    Peaks,
    Raw,
}

impl CamModeOpt {
    pub fn mode(self) -> Option<CamMode> {
        match self {
            CamModeOpt::All => Some(CamMode::AllConfident),
            CamModeOpt::Peaks => Some(CamMode::Peaks),
            CamModeOpt::Raw => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectionOpt {
    Third,
    BestScore,
}

impl SelectionOpt {
    pub fn policy(self) -> SelectionPolicy {
        match self {
            SelectionOpt::Third => SelectionPolicy::Third,
            SelectionOpt::BestScore => SelectionPolicy::BestScore,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConflictOpt {
    Score,
    Ignore,
    Smallest,
}

impl ConflictOpt {
    pub fn policy(self) -> ConflictPolicy {
        match self {
            ConflictOpt::Score => ConflictPolicy::Score,
            ConflictOpt::Ignore => ConflictPolicy::Ignore,
            ConflictOpt::Smallest => ConflictPolicy::Smallest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum UnmaskedOpt {
    Background,
    Ignore,
}

impl UnmaskedOpt {
    pub fn policy(self) -> UnmaskedPolicy {
        match self {
            UnmaskedOpt::Background => UnmaskedPolicy::Background,
            UnmaskedOpt::Ignore => UnmaskedPolicy::Ignore,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pred255Opt {
    Background,
    Exclude,
}

impl Pred255Opt {
    pub fn mode(self) -> Pred255Mode {
        match self {
            Pred255Opt::Background => Pred255Mode::Background,
            Pred255Opt::Exclude => Pred255Mode::Exclude,
        }
    }
}

/// The full resolved configuration of a `generate` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub root: PathBuf,
    pub split: String,
    pub out_dir: PathBuf,
    pub classes_file: Option<PathBuf>,
    pub annotation: AnnotationOpt,
    pub image_method: ImageMethod,
    pub cam_threshold: f32,
    pub peak_radius: u32,
    pub cam_mode: CamModeOpt,
    pub negatives: bool,
    pub iterative: bool,
    pub scribble_fraction: f64,
    pub seed: u64,
    pub grid_stride: u32,
    pub dedup_iou: f64,
    pub backend: String,
    pub classifier: String,
    pub selection: SelectionOpt,
    pub conflict: ConflictOpt,
    pub unmasked: UnmaskedOpt,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("."),
            split: "train".into(),
            out_dir: PathBuf::from("pseudo_labels"),
            classes_file: None,
            annotation: AnnotationOpt::Scribbles,
            image_method: ImageMethod::Cam,
            cam_threshold: 0.7,
            peak_radius: 8,
            cam_mode: CamModeOpt::Peaks,
            negatives: false,
            iterative: false,
            scribble_fraction: 0.2,
            seed: 0,
            grid_stride: 32,
            dedup_iou: 0.9,
            backend: "oracle".into(),
            classifier: "mock".into(),
            selection: SelectionOpt::Third,
            conflict: ConflictOpt::Score,
            unmasked: UnmaskedOpt::Background,
            jobs: 1,
        }
    }
}

/// CLI-side overrides; every `Some` wins over the file and the defaults.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub root: Option<PathBuf>,
    pub split: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub classes_file: Option<PathBuf>,
    pub annotation: Option<AnnotationOpt>,
    pub image_method: Option<ImageMethod>,
    pub cam_threshold: Option<f32>,
    pub peak_radius: Option<u32>,
    pub cam_mode: Option<CamModeOpt>,
    pub negatives: Option<bool>,
    pub iterative: Option<bool>,
    pub scribble_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub grid_stride: Option<u32>,
    pub dedup_iou: Option<f64>,
    pub backend: Option<String>,
    pub classifier: Option<String>,
    pub selection: Option<SelectionOpt>,
    pub conflict: Option<ConflictOpt>,
    pub unmasked: Option<UnmaskedOpt>,
    pub jobs: Option<usize>,
}

impl PipelineConfig {
    /// defaults <- file <- overrides, then validate.
    pub fn resolve(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self, ConfigError> {
        let mut config = match file {
            None => Self::default(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?
            }
        };
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &o.$field {
                    self.$field = v.clone();
                }
            };
        }
        take!(root);
        take!(split);
        take!(out_dir);
        take!(annotation);
        take!(image_method);
        take!(cam_threshold);
        take!(peak_radius);
        take!(cam_mode);
        take!(negatives);
        take!(iterative);
        take!(scribble_fraction);
        take!(seed);
        take!(grid_stride);
        take!(dedup_iou);
        take!(backend);
        take!(classifier);
        take!(selection);
        take!(conflict);
        take!(unmasked);
        take!(jobs);
        if o.classes_file.is_some() {
            self.classes_file = o.classes_file.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.cam_threshold > 0.0 && self.cam_threshold < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "cam_threshold {} must be in (0, 1)",
                self.cam_threshold
            )));
        }
        if self.peak_radius < 1 {
            return Err(ConfigError::Invalid("peak_radius must be >= 1".into()));
        }
        if !(self.scribble_fraction > 0.0 && self.scribble_fraction <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "scribble_fraction {} must be in (0, 1]",
                self.scribble_fraction
            )));
        }
        if self.grid_stride < 1 {
            return Err(ConfigError::Invalid("grid_stride must be >= 1".into()));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "dedup_iou {} must be in (0, 1]",
                self.dedup_iou
            )));
        }
        if self.jobs < 1 {
            return Err(ConfigError::Invalid("jobs must be >= 1".into()));
        }
        crate::adapter::BackendSpec::parse(&self.backend).map_err(ConfigError::Invalid)?;
        crate::adapter::ClassifierSpec::parse(&self.classifier).map_err(ConfigError::Invalid)?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization, truncated to 16
    /// characters. Two runs with equal hashes produce identical pixels;
    /// the output directory and worker count do not affect outputs and are
    /// excluded.
    pub fn params_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.jobs = 1;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}

/// Ablation grid file: either a named preset or explicit rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub rows: Vec<GridRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    pub annotation: AnnotationOpt,
    #[serde(default)]
    pub all_confident: bool,
    #[serde(default)]
    pub sample_confident: bool,
    #[serde(default)]
    pub iterative: bool,
    #[serde(default)]
    pub negatives: bool,
}

/// Load grid rows from a TOML file; `preset = "standard"` expands to the
/// standard 13-row grid and cannot be combined with explicit rows.
pub fn load_grid(
    path: &Path,
) -> Result<Vec<promptlabel_core::ablation::AblationSetting>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: GridFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    grid_from_file(file).map_err(|m| ConfigError::Parse {
        path: path.to_path_buf(),
        message: m,
    })
}

pub fn grid_from_file(
    file: GridFile,
) -> Result<Vec<promptlabel_core::ablation::AblationSetting>, String> {
    use promptlabel_core::ablation::{standard_grid, AblationSetting};
    match (&file.preset, file.rows.is_empty()) {
        (Some(name), true) => match name.as_str() {
            "standard" => Ok(standard_grid()),
            other => Err(format!("unknown preset '{other}' (only 'standard')")),
        },
        (Some(_), false) => Err("set either preset or rows, not both".into()),
        (None, _) => Ok(file
            .rows
            .into_iter()
            .map(|r| AblationSetting {
                kind: r.annotation.kind(),
                all_confident: r.all_confident,
                sample_confident: r.sample_confident,
                iterative: r.iterative,
                negatives: r.negatives,
            })
            .collect()),
    }
}
