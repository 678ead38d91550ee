use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use promptlabel::ablate::run_ablate;
use promptlabel::config::{
    load_grid, AnnotationOpt, CamModeOpt, ConfigOverrides, ConflictOpt, ImageMethod,
    PipelineConfig, Pred255Opt, SelectionOpt, UnmaskedOpt,
};
use promptlabel::error::{ConfigError, PipelineError};
use promptlabel::pipeline::{
    evaluate_dirs, ids_from_pred_dir, load_manifest, run_generate, EvaluateParams,
};
use promptlabel::protocol::PROTOCOL_DOCS;
use promptlabel::voc::ClassVocabulary;

/// Environment variable overriding the segmenter backend endpoint when the
/// `--backend` flag is absent.
const BACKEND_ENV: &str = "PROMPTLABEL_BACKEND";

#[derive(Parser)]
#[command(
    name = "promptlabel",
    version,
    about = "Turn weak annotations into pseudo segmentation labels via a promptable segmenter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate pseudo-label PNGs plus a run manifest.
    Generate(GenerateArgs),
    /// Score a prediction directory against ground truth with mIoU.
    Evaluate(EvaluateArgs),
    /// Run a grid of prompt settings and tabulate mIoU per row.
    Ablate(AblateArgs),
    /// Print the adapter wire protocol and file format documentation.
    ExportProtocolDocs {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Dataset root in the VOC layout.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Split name under ImageSets/Segmentation.
    #[arg(long)]
    split: Option<String>,
    /// Class-list file (one name per line); defaults to the VOC vocabulary.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Annotation regime to consume.
    #[arg(long, value_enum)]
    annotation: Option<AnnotationOpt>,
    /// For image-level labels: CAM prompting or grid + mask classifier.
    #[arg(long, value_enum)]
    image_method: Option<ImageMethod>,
    /// CAM confidence threshold in (0, 1).
    #[arg(long)]
    cam_threshold: Option<f32>,
    /// Chebyshev radius for CAM peak sampling.
    #[arg(long)]
    peak_radius: Option<u32>,
    /// CAM sampling scheme (all confident pixels, peaks, or raw baseline).
    #[arg(long, value_enum)]
    cam_mode: Option<CamModeOpt>,
    /// Use other classes' prompts as negative points.
    #[arg(long, overrides_with = "no_negatives")]
    negatives: bool,
    #[arg(long, hide = true)]
    no_negatives: bool,
    /// Feed positives in batches with mask-state feedback.
    #[arg(long, overrides_with = "no_iterative")]
    iterative: bool,
    #[arg(long, hide = true)]
    no_iterative: bool,
    /// Fraction of scribble pixels to sample, in (0, 1].
    #[arg(long)]
    scribble_fraction: Option<f64>,
    /// Base seed for all sampling streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid stride in pixels for the grid image method.
    #[arg(long)]
    grid_stride: Option<u32>,
    /// Pairwise IoU at which grid masks deduplicate (1.0 disables).
    #[arg(long)]
    dedup_iou: Option<f64>,
    /// Segmenter backend: oracle, degraded-oracle[:k], or external:<endpoint>.
    #[arg(long)]
    backend: Option<String>,
    /// Mask classifier for the grid method: mock or external:<endpoint>.
    #[arg(long)]
    classifier: Option<String>,
    /// Which of the three proposals becomes the class mask.
    #[arg(long, value_enum)]
    select: Option<SelectionOpt>,
    /// Resolution for pixels claimed by multiple classes.
    #[arg(long, value_enum)]
    conflict: Option<ConflictOpt>,
    /// Value for pixels covered by no mask.
    #[arg(long, value_enum)]
    unmasked: Option<UnmaskedOpt>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self, out_dir: Option<PathBuf>) -> ConfigOverrides {
        let tri = |yes: bool, no: bool| {
            if yes {
                Some(true)
            } else if no {
                Some(false)
            } else {
                None
            }
        };
        let backend = self
            .backend
            .clone()
            .or_else(|| std::env::var(BACKEND_ENV).ok());
        ConfigOverrides {
            root: self.root.clone(),
            split: self.split.clone(),
            out_dir,
            classes_file: self.classes.clone(),
            annotation: self.annotation,
            image_method: self.image_method,
            cam_threshold: self.cam_threshold,
            peak_radius: self.peak_radius,
            cam_mode: self.cam_mode,
            negatives: tri(self.negatives, self.no_negatives),
            iterative: tri(self.iterative, self.no_iterative),
            scribble_fraction: self.scribble_fraction,
            seed: self.seed,
            grid_stride: self.grid_stride,
            dedup_iou: self.dedup_iou,
            backend,
            classifier: self.classifier.clone(),
            selection: self.select,
            conflict: self.conflict,
            unmasked: self.unmasked,
            jobs: self.jobs,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reproduce a previous run from its manifest (flags still override).
    #[arg(long, conflicts_with = "config")]
    from_manifest: Option<PathBuf>,
    /// Output directory for pseudo-label PNGs and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    gt_dir: PathBuf,
    /// Split file listing the ids to score; defaults to every png in
    /// the prediction directory.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Class-list file; defaults to the VOC vocabulary.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// How predicted 255 pixels are counted.
    #[arg(long, value_enum, default_value = "background")]
    pred_255: Pred255Opt,
    /// Leave class 0 out of the mean.
    #[arg(long)]
    exclude_background: bool,
    /// Also write the per-class table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct AblateArgs {
    /// TOML config file for the base run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Grid file (TOML: preset or rows).
    #[arg(long, conflicts_with = "preset")]
    grid: Option<PathBuf>,
    /// Built-in grid name (currently `standard`, the full 13-row sweep).
    #[arg(long)]
    preset: Option<String>,
    /// Directory receiving per-row outputs and results.csv.
    #[arg(long, default_value = "ablation_runs")]
    work_dir: PathBuf,
    /// CSV destination; defaults to <work-dir>/results.csv.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Ablate(args) => ablate(args),
        Command::ExportProtocolDocs { out } => {
            match out {
                None => print!("{PROTOCOL_DOCS}"),
                Some(path) => {
                    fs::write(&path, PROTOCOL_DOCS)
                        .map_err(|source| PipelineError::Io { path, source })?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn generate(args: GenerateArgs) -> Result<ExitCode, PipelineError> {
    let overrides = args.common.overrides(args.out.clone());
    let config = match &args.from_manifest {
        Some(path) => {
            let mut config = load_manifest(path)?.config;
            config.apply(&overrides);
            config.validate()?;
            config
        }
        None => PipelineConfig::resolve(args.config.as_deref(), &overrides)?,
    };
    let outcome = run_generate(&config)?;
    let ok = outcome
        .manifest
        .images
        .iter()
        .filter(|r| r.status != "failed")
        .count();
    println!(
        "wrote {} pseudo labels to {} (params {})",
        ok,
        config.out_dir.display(),
        outcome.manifest.params_hash
    );
    for record in outcome.manifest.images.iter().filter(|r| r.status != "ok") {
        println!(
            "  {}: {}{}",
            record.id,
            record.status,
            record
                .reason
                .as_ref()
                .map(|r| format!(" ({r})"))
                .unwrap_or_default()
        );
    }
    if outcome.manifest.failed > 0 {
        return Err(PipelineError::Partial {
            failed: outcome.manifest.failed,
            total: outcome.manifest.images.len(),
        });
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(args: EvaluateArgs) -> Result<ExitCode, PipelineError> {
    let vocab = match &args.classes {
        None => ClassVocabulary::default(),
        Some(path) => ClassVocabulary::from_file(path)?,
    };
    let ids = match &args.split {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?;
            text.lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect()
        }
        None => ids_from_pred_dir(&args.pred_dir)?,
    };
    let result = evaluate_dirs(&EvaluateParams {
        pred_dir: args.pred_dir,
        gt_dir: args.gt_dir,
        ids,
        num_classes: vocab.len(),
        pred_255: args.pred_255.mode(),
        include_background: !args.exclude_background,
        jobs: args.jobs,
    })?;

    println!("{:<16} {:>8}", "class", "IoU");
    for (i, iou) in result.per_class_iou.iter().enumerate() {
        let name = vocab.name(i as u8).unwrap_or("?");
        match iou {
            Some(v) => println!("{name:<16} {v:>8.4}"),
            None => println!("{name:<16} {:>8}", "-"),
        }
    }
    println!(
        "{:<16} {:>8.4}  ({} pixels)",
        "mIoU", result.miou, result.evaluated_pixels
    );
    if let Some(path) = args.csv {
        let mut csv = String::from("class,iou\n");
        for (i, iou) in result.per_class_iou.iter().enumerate() {
            let name = vocab.name(i as u8).unwrap_or("?");
            match iou {
                Some(v) => csv.push_str(&format!("{name},{v:.6}\n")),
                None => csv.push_str(&format!("{name},\n")),
            }
        }
        csv.push_str(&format!("mIoU,{:.6}\n", result.miou));
        fs::write(&path, csv).map_err(|source| PipelineError::Io { path, source })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate(args: AblateArgs) -> Result<ExitCode, PipelineError> {
    let grid = match (&args.grid, &args.preset) {
        (Some(path), None) => load_grid(path)?,
        (None, Some(name)) => match name.as_str() {
            "standard" => promptlabel_core::ablation::standard_grid(),
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown preset '{other}' (only 'standard')"
                ))
                .into())
            }
        },
        (None, None) => {
            return Err(
                ConfigError::Invalid("pass --grid <file> or --preset standard".into()).into(),
            )
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    let overrides = args.common.overrides(None);
    let base = PipelineConfig::resolve(args.config.as_deref(), &overrides)?;
    fs::create_dir_all(&args.work_dir).map_err(|source| PipelineError::Io {
        path: args.work_dir.clone(),
        source,
    })?;
    let table = run_ablate(&base, &grid, &args.work_dir)?;
    print!("{}", table.to_text());
    let csv_path = args
        .out_csv
        .unwrap_or_else(|| args.work_dir.join("results.csv"));
    fs::write(&csv_path, table.to_csv()).map_err(|source| PipelineError::Io {
        path: csv_path.clone(),
        source,
    })?;
    println!("csv written to {}", csv_path.display());
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(PipelineError::Partial {
            failed,
            total: table.rows.len(),
        });
    }
    Ok(ExitCode::SUCCESS)
}
