//! Synthetic training pairs built from random strokes.
//!
//! A background canvas is painted with random strokes and cut into blocks.
//! Each block receives random foreground strokes; strokes that would bury an
//! earlier visible stroke are labeled empty and left unpainted. The block
//! before and after the foreground pass forms a `(canvas, target)` pair.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brush::BrushPrimitive;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};
use crate::matcher::LabeledStrokeSet;
use crate::render::{render_single_stroke, render_stroke_set};
use crate::stroke::{Stroke, EPS_SIZE};

/// Alpha level above which a pixel counts as covered when measuring overlap.
pub const COVERAGE_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub background_size: usize,
    pub background_strokes: usize,
    pub blocks_per_side: usize,
    pub foreground_strokes_per_block: usize,
    pub overlap_threshold: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            background_size: 64,
            background_strokes: 8,
            blocks_per_side: 2,
            foreground_strokes_per_block: 8,
            overlap_threshold: 0.6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Config whose blocks are `patch_size` pixels and hold `strokes` foreground strokes.
    pub fn for_patch(patch_size: usize, strokes: usize) -> Self {
        let d = Self::default();
        SynthConfig {
            background_size: patch_size * d.blocks_per_side,
            foreground_strokes_per_block: strokes,
            ..d
        }
    }

    pub fn block_size(&self) -> usize {
        self.background_size / self.blocks_per_side.max(1)
    }

    pub fn samples_per_background(&self) -> usize {
        self.blocks_per_side * self.blocks_per_side
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_side == 0 || self.background_size == 0 {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        if self.background_size % self.blocks_per_side != 0 {
            return Err(Error::InvalidConfig(format!(
                "background size {} is not a multiple of {} blocks",
                self.background_size, self.blocks_per_side
            )));
        }
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "overlap threshold {} outside (0, 1]",
                self.overlap_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub canvas: CanvasImage,
    pub target: CanvasImage,
    pub truth: LabeledStrokeSet,
}

/// All eight parameters uniform in `[0, 1)`, sizes lifted to the minimum extent.
pub fn sample_stroke<R: Rng + ?Sized>(rng: &mut R) -> Stroke {
    let p: [f64; 8] = std::array::from_fn(|_| rng.random::<f64>());
    let mut s = Stroke::from_array(p);
    s.w = s.w.clamp(EPS_SIZE, 1.0);
    s.h = s.h.clamp(EPS_SIZE, 1.0);
    s
}

/// Labels strokes in paint order. Stroke `i` is empty when its coverage mask
/// covers more than `threshold` of the still-visible area of any earlier
/// valid stroke; only valid strokes are painted and can occlude.
pub fn label_overlaps(
    strokes: &[Stroke],
    threshold: f64,
    brush: &BrushPrimitive,
    size: usize,
) -> LabeledStrokeSet {
    const NONE: usize = usize::MAX;
    let mut owner = vec![NONE; size * size];
    let mut labels = Vec::with_capacity(strokes.len());
    for (i, s) in strokes.iter().enumerate() {
        let mask: Vec<bool> = render_single_stroke(s, brush, size, size)
            .alpha
            .iter()
            .map(|&a| a > COVERAGE_ALPHA)
            .collect();
        let mut visible = vec![0usize; i];
        let mut covered = vec![0usize; i];
        for (px, &o) in owner.iter().enumerate() {
            if o != NONE {
                visible[o] += 1;
                if mask[px] {
                    covered[o] += 1;
                }
            }
        }
        let buries = visible
            .iter()
            .zip(&covered)
            .any(|(&v, &c)| v > 0 && c as f64 > threshold * v as f64);
        labels.push(!buries);
        if !buries {
            for (o, &m) in owner.iter_mut().zip(&mask) {
                if m {
                    *o = i;
                }
            }
        }
    }
    LabeledStrokeSet {
        strokes: strokes.to_vec(),
        labels,
        confidences: None,
        decisions: None,
    }
}

/// One background canvas and its blocks, as `blocks_per_side^2` samples in
/// row-major block order.
pub fn make_training_sample<R: Rng + ?Sized>(
    cfg: &SynthConfig,
    brush: &BrushPrimitive,
    rng: &mut R,
) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let background: Vec<Stroke> = (0..cfg.background_strokes)
        .map(|_| sample_stroke(rng))
        .collect();
    let blank = CanvasImage::new(cfg.background_size, cfg.background_size);
    let painted = render_stroke_set(&blank, &background, brush);
    let block = cfg.block_size();
    let mut samples = Vec::with_capacity(cfg.samples_per_background());
    for by in 0..cfg.blocks_per_side {
        for bx in 0..cfg.blocks_per_side {
            let canvas = painted.region(bx * block, by * block, block, block)?;
            let foreground: Vec<Stroke> = (0..cfg.foreground_strokes_per_block)
                .map(|_| sample_stroke(rng))
                .collect();
            let truth = label_overlaps(&foreground, cfg.overlap_threshold, brush, block);
            let target = render_stroke_set(&canvas, &truth.active(), brush);
            samples.push(SynthSample {
                canvas,
                target,
                truth,
            });
        }
    }
    Ok(samples)
}

/// Reproducible stream of samples: each background canvas draws its own
/// generator seed from a master generator seeded with `cfg.seed`.
pub fn generate_samples(
    cfg: &SynthConfig,
    brush: &BrushPrimitive,
    count: usize,
) -> Result<Vec<SynthSample>> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        out.extend(make_training_sample(cfg, brush, &mut rng)?);
    }
    out.truncate(count);
    Ok(out)
}

pub const TRUTH_FORMAT_VERSION: u32 = 1;

/// Per-sample truth file written next to the dumped images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub version: u32,
    pub patch_size: usize,
    /// `[x, y, h, w, theta, r, g, b]` per stroke.
    pub strokes: Vec<[f64; 8]>,
    pub labels: Vec<bool>,
}

/// Writes `sample_XXXX_{canvas,target}.png` and `sample_XXXX_truth.json`.
pub fn dump_samples(samples: &[SynthSample], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        s.canvas
            .save(dir.join(format!("sample_{i:04}_canvas.png")))?;
        s.target
            .save(dir.join(format!("sample_{i:04}_target.png")))?;
        let truth = TruthFile {
            version: TRUTH_FORMAT_VERSION,
            patch_size: s.canvas.width(),
            strokes: s.truth.strokes.iter().map(Stroke::to_array).collect(),
            labels: s.truth.labels.clone(),
        };
        let file = std::fs::File::create(dir.join(format!("sample_{i:04}_truth.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &truth)?;
    }
    Ok(())
}
