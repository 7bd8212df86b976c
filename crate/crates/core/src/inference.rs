//! Coarse-to-fine painting.
//!
//! The target is padded (right/bottom, edge replication) to a square of side
//! `P * 2^K`. Starting from a blank `P x P` canvas, each scale `k = 0..=K`
//! resizes canvas and target to `P * 2^k`, cuts both into `2^k x 2^k` patches,
//! predicts and paints strokes per patch, and merges the patches back. The
//! result is resized to the padded side and cropped to `H x W`.

use serde::{Deserialize, Serialize};

use crate::brush::BrushPrimitive;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};
use crate::prediction::StrokePredictor;
use crate::render::{paint_stroke, AlphaMode};
use crate::stroke::Stroke;

/// Smallest `K >= 0` with `P * 2^K >= max(H, W)`.
pub fn compute_num_scales(height: usize, width: usize, patch: usize) -> usize {
    assert!(patch > 0, "patch size must be positive");
    let longest = height.max(width);
    let mut k = 0;
    while patch << k < longest {
        k += 1;
    }
    k
}

/// Row-major grid of `P x P` patches covering a square image of side `P * 2^k`.
pub fn split_into_patches(img: &CanvasImage, patch: usize) -> Result<Vec<CanvasImage>> {
    let (w, h) = img.dims();
    let grid = w / patch.max(1);
    if patch == 0 || w != h || w % patch != 0 || !grid.is_power_of_two() {
        return Err(Error::dims(
            format!("square image with side P*2^k for P={patch}"),
            format!("{w}x{h}"),
        ));
    }
    let mut out = Vec::with_capacity(grid * grid);
    for row in 0..grid {
        for col in 0..grid {
            out.push(img.region(col * patch, row * patch, patch, patch)?);
        }
    }
    Ok(out)
}

/// Inverse of [`split_into_patches`].
pub fn merge_patches(patches: &[CanvasImage], patch: usize) -> Result<CanvasImage> {
    let grid = (patches.len() as f64).sqrt().round() as usize;
    if patch == 0 || grid * grid != patches.len() || grid == 0 {
        return Err(Error::dims("square number of patches", patches.len()));
    }
    let mut out = CanvasImage::new(grid * patch, grid * patch);
    for (i, p) in patches.iter().enumerate() {
        if p.dims() != (patch, patch) {
            return Err(Error::dims(
                format!("{patch}x{patch} patch"),
                format!("{}x{}", p.width(), p.height()),
            ));
        }
        out.paste(p, (i % grid) * patch, (i / grid) * patch)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlankCanvas {
    #[default]
    Black,
    White,
}

impl BlankCanvas {
    pub fn color(self) -> [f64; 3] {
        match self {
            BlankCanvas::Black => [0.0; 3],
            BlankCanvas::White => [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameMode {
    #[default]
    None,
    /// One frame after every scale.
    Scale,
    /// One frame per stroke slot: all patches of a scale advance together.
    Stroke,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub max_scales: Option<usize>,
    pub blank: BlankCanvas,
    pub record_strokes: bool,
    pub frames: FrameMode,
    pub alpha_mode: AlphaMode,
    /// Patches per predictor call.
    pub batch_size: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            max_scales: None,
            blank: BlankCanvas::Black,
            record_strokes: true,
            frames: FrameMode::None,
            alpha_mode: AlphaMode::Continuous,
            batch_size: 64,
        }
    }
}

/// Strokes predicted for one patch, in patch-local normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub row: usize,
    pub col: usize,
    pub strokes: Vec<Stroke>,
    pub decisions: Vec<bool>,
}

impl PatchRecord {
    pub fn decided(&self) -> impl Iterator<Item = &Stroke> {
        self.strokes
            .iter()
            .zip(&self.decisions)
            .filter(|(_, &d)| d)
            .map(|(s, _)| s)
    }

    /// Maps a patch-local stroke at scale `k` to image-normalized coordinates
    /// of the padded square canvas.
    pub fn to_global(&self, s: &Stroke, k: usize) -> Stroke {
        let grid = (1usize << k) as f64;
        Stroke {
            x: (self.col as f64 + s.x) / grid,
            y: (self.row as f64 + s.y) / grid,
            w: s.w / grid,
            h: s.h / grid,
            ..*s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub k: usize,
    pub patches: Vec<PatchRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaintingResult {
    pub final_image: CanvasImage,
    pub patch_size: usize,
    pub scales: Vec<ScaleRecord>,
    pub frames: Vec<CanvasImage>,
}

/// Geometry shared by painting and replay.
struct Layout {
    width: usize,
    height: usize,
    patch: usize,
    side: usize,
}

impl Layout {
    fn new(width: usize, height: usize, patch: usize) -> Self {
        let k = compute_num_scales(height, width, patch);
        Layout {
            width,
            height,
            patch,
            side: patch << k,
        }
    }

    fn num_scales(&self) -> usize {
        (self.side / self.patch).trailing_zeros() as usize
    }

    fn finish(&self, canvas: &CanvasImage) -> Result<CanvasImage> {
        canvas
            .resize(self.side, self.side)
            .crop(self.width, self.height)
    }
}

/// Paints every scale; `strokes_for` supplies the per-patch records given the
/// scale index and the canvas patches at that scale.
fn run_scales(
    layout: &Layout,
    scales: usize,
    blank: BlankCanvas,
    brush: &BrushPrimitive,
    mode: AlphaMode,
    frames: FrameMode,
    mut strokes_for: impl FnMut(usize, &[CanvasImage]) -> Result<Vec<PatchRecord>>,
) -> Result<(CanvasImage, Vec<ScaleRecord>, Vec<CanvasImage>)> {
    let p = layout.patch;
    let mut canvas = CanvasImage::filled(p, p, blank.color());
    let mut records = Vec::with_capacity(scales);
    let mut frame_out = Vec::new();
    for k in 0..scales {
        let size = p << k;
        let grid = 1usize << k;
        canvas = canvas.resize(size, size);
        let mut patches = split_into_patches(&canvas, p)?;
        let recs = strokes_for(k, &patches)?;
        for r in &recs {
            if r.row >= grid || r.col >= grid {
                return Err(Error::InvalidStrokeSet(format!(
                    "patch ({}, {}) outside the {grid}x{grid} grid at scale {k}",
                    r.row, r.col
                )));
            }
        }
        if frames == FrameMode::Stroke {
            let slots = recs.iter().map(|r| r.strokes.len()).max().unwrap_or(0);
            for j in 0..slots {
                for r in &recs {
                    if let (Some(s), Some(true)) = (r.strokes.get(j), r.decisions.get(j)) {
                        paint_stroke(&mut patches[r.row * grid + r.col], s, brush, mode);
                    }
                }
                frame_out.push(layout.finish(&merge_patches(&patches, p)?)?);
            }
        } else {
            for r in &recs {
                let target = &mut patches[r.row * grid + r.col];
                for s in r.decided() {
                    paint_stroke(target, s, brush, mode);
                }
            }
        }
        canvas = merge_patches(&patches, p)?;
        if frames == FrameMode::Scale {
            frame_out.push(layout.finish(&canvas)?);
        }
        records.push(ScaleRecord { k, patches: recs });
    }
    Ok((layout.finish(&canvas)?, records, frame_out))
}

/// Recreates `target` as strokes using `predictor`.
pub fn paint<P: StrokePredictor + ?Sized>(
    target: &CanvasImage,
    predictor: &P,
    brush: &BrushPrimitive,
    cfg: &InferenceConfig,
) -> Result<PaintingResult> {
    let p = predictor.patch_size();
    if p == 0 {
        return Err(Error::ModelMismatch(
            "predictor reports zero patch size".into(),
        ));
    }
    let layout = Layout::new(target.width(), target.height(), p);
    let padded = target.pad_edge(layout.side, layout.side)?;
    let k_max = layout.num_scales();
    let scales = cfg.max_scales.map_or(k_max, |cap| cap.min(k_max)) + 1;
    let batch = cfg.batch_size.max(1);

    let (final_image, scale_records, frames) = run_scales(
        &layout,
        scales,
        cfg.blank,
        brush,
        cfg.alpha_mode,
        cfg.frames,
        |k, canvas_patches| {
            let size = p << k;
            let grid = 1usize << k;
            let target_patches = split_into_patches(&padded.resize(size, size), p)?;
            let mut recs = Vec::with_capacity(canvas_patches.len());
            for (chunk_idx, (cs, ts)) in canvas_patches
                .chunks(batch)
                .zip(target_patches.chunks(batch))
                .enumerate()
            {
                let preds = predictor.predict(cs, ts)?;
                if preds.len() != cs.len() {
                    return Err(Error::ModelMismatch(format!(
                        "predictor returned {} outputs for {} patches",
                        preds.len(),
                        cs.len()
                    )));
                }
                for (i, pred) in preds.into_iter().enumerate() {
                    let idx = chunk_idx * batch + i;
                    recs.push(PatchRecord {
                        row: idx / grid,
                        col: idx % grid,
                        strokes: pred.strokes,
                        decisions: pred.decisions,
                    });
                }
            }
            Ok(recs)
        },
    )?;

    Ok(PaintingResult {
        final_image,
        patch_size: p,
        scales: if cfg.record_strokes {
            scale_records
        } else {
            Vec::new()
        },
        frames,
    })
}

/// Re-renders recorded scales from a blank canvas. Patches may appear in any
/// order; missing patches are left unpainted.
#[allow(clippy::too_many_arguments)]
pub fn replay_scales(
    width: usize,
    height: usize,
    patch: usize,
    scales: &[ScaleRecord],
    brush: &BrushPrimitive,
    blank: BlankCanvas,
    mode: AlphaMode,
    frames: FrameMode,
) -> Result<(CanvasImage, Vec<CanvasImage>)> {
    if patch == 0 || width == 0 || height == 0 {
        return Err(Error::InvalidConfig(
            "replay dimensions must be positive".into(),
        ));
    }
    let layout = Layout::new(width, height, patch);
    for (i, s) in scales.iter().enumerate() {
        if s.k != i || s.k > layout.num_scales() {
            return Err(Error::InvalidStrokeSet(format!(
                "scale entry {i} has k={} (expected {i}, at most {})",
                s.k,
                layout.num_scales()
            )));
        }
    }
    let count = scales.len().max(1);
    let (img, _, frames) = run_scales(&layout, count, blank, brush, mode, frames, |k, _| {
        Ok(scales.get(k).map(|s| s.patches.clone()).unwrap_or_default())
    })?;
    Ok((img, frames))
}
