//! The ablation grid: which annotation regime is run with which prompt
//! settings, plus text/CSV rendering of the result table.
//!
//! The standard grid has 13 setting rows in four blocks: five image-level
//! rows (including the raw-CAM baseline with no segmenter at all), three
//! point rows, four scribble rows, and one box row.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::prompt::AnnotationKind;

/// One row of the grid. `all_confident` inputs every available pixel
/// (all confident CAM pixels, all annotated points, all scribble pixels);
/// `sample_confident` switches to sampling (CAM peaks, 20% scribble
/// pixels). Neither flag on an image-level row means the raw thresholded
/// CAM becomes the mask without querying the segmenter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AblationSetting {
    pub kind: AnnotationKind,
    pub all_confident: bool,
    pub sample_confident: bool,
    pub iterative: bool,
    pub negatives: bool,
}

impl AblationSetting {
    pub fn new(kind: AnnotationKind) -> Self {
        Self {
            kind,
            all_confident: false,
            sample_confident: false,
            iterative: false,
            negatives: false,
        }
    }

    pub fn all_confident(mut self) -> Self {
        self.all_confident = true;
        self
    }

    pub fn sample_confident(mut self) -> Self {
        self.sample_confident = true;
        self
    }

    pub fn iterative(mut self) -> Self {
        self.iterative = true;
        self
    }

    pub fn negatives(mut self) -> Self {
        self.negatives = true;
        self
    }
}

/// The standard 13-row grid.
pub fn standard_grid() -> Vec<AblationSetting> {
    use AnnotationKind::*;
    vec![
        AblationSetting::new(ImageLabels),
        AblationSetting::new(ImageLabels).all_confident(),
        AblationSetting::new(ImageLabels).sample_confident(),
        AblationSetting::new(ImageLabels)
            .sample_confident()
            .iterative(),
        AblationSetting::new(ImageLabels)
            .sample_confident()
            .negatives(),
        AblationSetting::new(Points).all_confident(),
        AblationSetting::new(Points).all_confident().iterative(),
        AblationSetting::new(Points)
            .all_confident()
            .iterative()
            .negatives(),
        AblationSetting::new(Scribbles).all_confident(),
        AblationSetting::new(Scribbles).sample_confident(),
        AblationSetting::new(Scribbles)
            .sample_confident()
            .iterative(),
        AblationSetting::new(Scribbles)
            .sample_confident()
            .iterative()
            .negatives(),
        AblationSetting::new(Boxes).all_confident(),
    ]
}

/// One executed row: its setting and either a score or a failure note.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub miou: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Best defined score per annotation kind, in grid order of first
    /// appearance.
    pub fn best_by_kind(&self) -> Vec<(AnnotationKind, f64)> {
        let mut out: Vec<(AnnotationKind, f64)> = Vec::new();
        for row in &self.rows {
            let Some(score) = row.miou else { continue };
            match out.iter_mut().find(|(k, _)| *k == row.setting.kind) {
                Some((_, best)) => {
                    if score > *best {
                        *best = score;
                    }
                }
                None => out.push((row.setting.kind, score)),
            }
        }
        out
    }

    /// CSV with one header line and one line per setting row. Flags are
    /// `1`/`0`; a failed row leaves `miou_train` empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "annotation,all_confident,sample_confident,iterative,negatives,miou_train\n",
        );
        for row in &self.rows {
            let flag = |b: bool| if b { "1" } else { "0" };
            let miou = row.miou.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.setting.kind.as_str(),
                flag(row.setting.all_confident),
                flag(row.setting.sample_confident),
                flag(row.setting.iterative),
                flag(row.setting.negatives),
                miou
            ));
        }
        s
    }

    /// Aligned text table mirroring the standard column layout.
    pub fn to_text(&self) -> String {
        let headers = [
            "Annotations",
            "All confident pixels",
            "Sample confident pixels",
            "Iterative input",
            "Negative points",
            "mIoU_train",
        ];
        let mut cells: Vec<[String; 6]> = Vec::new();
        for row in &self.rows {
            let mark = |b: bool| if b { String::from("x") } else { String::new() };
            let miou = match (row.miou, &row.error) {
                (Some(v), _) => format!("{:.1}", v * 100.0),
                (None, Some(e)) => format!("FAILED: {e}"),
                (None, None) => String::new(),
            };
            cells.push([
                String::from(kind_label(row.setting.kind)),
                mark(row.setting.all_confident),
                mark(row.setting.sample_confident),
                mark(row.setting.iterative),
                mark(row.setting.negatives),
                miou,
            ]);
        }
        let mut widths: [usize; 6] = headers.map(|h| h.len());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row.iter()) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = String::new();
        for (i, h) in headers.iter().enumerate() {
            line.push_str(&format!("{:<width$}  ", h, width = widths[i]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
        for row in &cells {
            let mut line = String::new();
            for (i, c) in row.iter().enumerate() {
                line.push_str(&format!("{:<width$}  ", c, width = widths[i]));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

fn kind_label(kind: AnnotationKind) -> &'static str {
    match kind {
        AnnotationKind::ImageLabels => "Image-level labels",
        AnnotationKind::Points => "Points",
        AnnotationKind::Scribbles => "Scribbles",
        AnnotationKind::Boxes => "Bounding boxes",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_has_thirteen_rows_in_blocks() {
        let grid = standard_grid();
        assert_eq!(grid.len(), 13);
        let count = |k: AnnotationKind| grid.iter().filter(|s| s.kind == k).count();
        assert_eq!(count(AnnotationKind::ImageLabels), 5);
        assert_eq!(count(AnnotationKind::Points), 3);
        assert_eq!(count(AnnotationKind::Scribbles), 4);
        assert_eq!(count(AnnotationKind::Boxes), 1);
        // raw-CAM baseline is the first row and carries no flags
        assert_eq!(grid[0], AblationSetting::new(AnnotationKind::ImageLabels));
    }

    #[test]
    fn empty_grid_renders_empty_table() {
        let table = AblationTable::default();
        assert!(table.is_empty());
        assert_eq!(
            table.to_csv(),
            "annotation,all_confident,sample_confident,iterative,negatives,miou_train\n"
        );
        assert_eq!(table.to_text().lines().count(), 1);
    }

    #[test]
    fn csv_rows_and_flags() {
        let table = AblationTable {
            rows: vec![
                AblationRow {
                    setting: AblationSetting::new(AnnotationKind::Scribbles)
                        .sample_confident()
                        .iterative()
                        .negatives(),
                    miou: Some(0.897),
                    error: None,
                },
                AblationRow {
                    setting: AblationSetting::new(AnnotationKind::Boxes).all_confident(),
                    miou: None,
                    error: Some(String::from("backend down")),
                },
            ],
        };
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "scribbles,0,1,1,1,0.897000");
        assert_eq!(lines[2], "boxes,1,0,0,0,");
        let text = table.to_text();
        assert!(text.contains("FAILED: backend down"));
        assert!(text.contains("89.7"));
    }

    #[test]
    fn best_by_kind_takes_block_maximum() {
        let mut rows = Vec::new();
        for (i, setting) in standard_grid().into_iter().enumerate() {
            rows.push(AblationRow {
                setting,
                miou: Some(i as f64 / 100.0),
                error: None,
            });
        }
        let table = AblationTable { rows };
        let best = table.best_by_kind();
        assert_eq!(best.len(), 4);
        assert_eq!(best[0], (AnnotationKind::ImageLabels, 0.04));
        assert_eq!(best[3], (AnnotationKind::Boxes, 0.12));
    }
}
