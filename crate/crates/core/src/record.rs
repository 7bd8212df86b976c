//! JSON stroke records written by `paint` and consumed by `replay`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::brush::BrushPrimitive;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};
use crate::inference::{
    replay_scales, BlankCanvas, FrameMode, PaintingResult, PatchRecord, ScaleRecord,
};
use crate::render::AlphaMode;
use crate::stroke::{Stroke, PARAM_COUNT};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub row: usize,
    pub col: usize,
    /// `[x, y, h, w, theta, r, g, b]` per stroke, patch-local.
    pub strokes: Vec<[f64; PARAM_COUNT]>,
    pub decisions: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub k: usize,
    pub patches: Vec<PatchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeRecordFile {
    pub version: u32,
    pub patch_size: usize,
    pub brush: String,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub blank: BlankCanvas,
    #[serde(default)]
    pub binary_alpha: bool,
    pub scales: Vec<ScaleEntry>,
}

impl StrokeRecordFile {
    pub fn from_painting(
        result: &PaintingResult,
        brush: &str,
        blank: BlankCanvas,
        mode: AlphaMode,
    ) -> Self {
        let scales = result
            .scales
            .iter()
            .map(|s| ScaleEntry {
                k: s.k,
                patches: s
                    .patches
                    .iter()
                    .map(|p| PatchEntry {
                        row: p.row,
                        col: p.col,
                        strokes: p.strokes.iter().map(Stroke::to_array).collect(),
                        decisions: p.decisions.clone(),
                    })
                    .collect(),
            })
            .collect();
        StrokeRecordFile {
            version: RECORD_VERSION,
            patch_size: result.patch_size,
            brush: brush.to_string(),
            width: result.final_image.width(),
            height: result.final_image.height(),
            blank,
            binary_alpha: mode == AlphaMode::Binary,
            scales,
        }
    }

    pub fn alpha_mode(&self) -> AlphaMode {
        if self.binary_alpha {
            AlphaMode::Binary
        } else {
            AlphaMode::Continuous
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != RECORD_VERSION {
            return Err(Error::Version {
                found: self.version,
                expected: RECORD_VERSION,
            });
        }
        if self.patch_size == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidStrokeSet(
                "record dimensions must be positive".into(),
            ));
        }
        for s in &self.scales {
            for p in &s.patches {
                if p.strokes.len() != p.decisions.len() {
                    return Err(Error::InvalidStrokeSet(format!(
                        "patch ({}, {}) at scale {} has {} strokes but {} decisions",
                        p.row,
                        p.col,
                        s.k,
                        p.strokes.len(),
                        p.decisions.len()
                    )));
                }
                if p.strokes.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidStrokeSet(
                        "non-finite stroke parameter".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn scale_records(&self) -> Vec<ScaleRecord> {
        self.scales
            .iter()
            .map(|s| ScaleRecord {
                k: s.k,
                patches: s
                    .patches
                    .iter()
                    .map(|p| PatchRecord {
                        row: p.row,
                        col: p.col,
                        strokes: p.strokes.iter().map(|a| Stroke::from_array(*a)).collect(),
                        decisions: p.decisions.clone(),
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn stroke_count(&self) -> usize {
        self.scales
            .iter()
            .flat_map(|s| &s.patches)
            .map(|p| p.decisions.iter().filter(|&&d| d).count())
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rec: StrokeRecordFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        rec.validate()?;
        Ok(rec)
    }

    /// Renders the record; identical to the image `paint` produced.
    pub fn replay(
        &self,
        brush: &BrushPrimitive,
        frames: FrameMode,
    ) -> Result<(CanvasImage, Vec<CanvasImage>)> {
        self.validate()?;
        replay_scales(
            self.width,
            self.height,
            self.patch_size,
            &self.scale_records(),
            brush,
            self.blank,
            self.alpha_mode(),
            frames,
        )
    }
}
