//! Evaluation: pixel error of recreations, matched stroke distances on
//! synthetic stroke images, and paint timings.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brush::BrushPrimitive;
use crate::canvas::CanvasImage;
use crate::datagen::{label_overlaps, sample_stroke};
use crate::error::{Error, Result};
use crate::inference::{paint, InferenceConfig};
use crate::matcher::{hungarian_solve, LabeledStrokeSet};
use crate::prediction::StrokePredictor;
use crate::render::render_stroke_set;
use crate::stroke::{l1_param_distance, stroke_wasserstein, Stroke};

/// Mean absolute difference over all pixels and channels.
pub fn pixel_metric(a: &CanvasImage, b: &CanvasImage) -> Result<f64> {
    a.mean_abs_diff(b)
}

/// Mean `D_L1` and mean `D_W` over Hungarian-matched pairs of valid
/// predictions and valid targets (cost `D_L1 + D_W`). `None` when either side
/// has no valid stroke.
pub fn stroke_metrics(
    pred: &LabeledStrokeSet,
    truth: &LabeledStrokeSet,
) -> Result<Option<(f64, f64)>> {
    pred.validate()?;
    truth.validate()?;
    let p = pred.active();
    let t = truth.active();
    if p.is_empty() || t.is_empty() {
        return Ok(None);
    }
    let n = p.len().max(t.len());
    let mut d_l1 = vec![vec![0.0; t.len()]; p.len()];
    let mut d_w = vec![vec![0.0; t.len()]; p.len()];
    let mut cost = vec![vec![0.0; n]; n];
    for (i, su) in p.iter().enumerate() {
        for (j, sv) in t.iter().enumerate() {
            d_l1[i][j] = l1_param_distance(su, sv);
            d_w[i][j] = stroke_wasserstein(su, sv)?;
            cost[i][j] = d_l1[i][j] + d_w[i][j];
        }
    }
    let m = hungarian_solve(&cost)?;
    let real: Vec<(usize, usize)> = m
        .pairs
        .into_iter()
        .filter(|&(i, j)| i < p.len() && j < t.len())
        .collect();
    let k = real.len() as f64;
    let l1 = real.iter().map(|&(i, j)| d_l1[i][j]).sum::<f64>() / k;
    let w = real.iter().map(|&(i, j)| d_w[i][j]).sum::<f64>() / k;
    Ok(Some((l1, w)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub name: String,
    pub pixel_l1: f64,
    /// Absent when the item has no valid predicted or target stroke.
    pub d_l1: Option<f64>,
    pub d_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub resolution: usize,
    pub runs: usize,
    pub median_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub items: Vec<ItemReport>,
    pub mean_pixel_l1: Option<f64>,
    pub mean_d_l1: Option<f64>,
    pub mean_d_w: Option<f64>,
    /// Items whose stroke metrics were undefined.
    pub undefined_stroke_items: usize,
    pub timings: Vec<TimingRow>,
    pub notes: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    pub fn from_items(items: Vec<ItemReport>) -> Self {
        let mut r = EvalReport {
            items,
            ..Default::default()
        };
        r.recompute();
        r.notes
            .push("perceptual loss is not reported (needs a pretrained feature network)".into());
        r
    }

    /// Refreshes the aggregates from the per-item values.
    pub fn recompute(&mut self) {
        self.mean_pixel_l1 = mean(self.items.iter().map(|i| i.pixel_l1));
        self.mean_d_l1 = mean(self.items.iter().filter_map(|i| i.d_l1));
        self.mean_d_w = mean(self.items.iter().filter_map(|i| i.d_w));
        self.undefined_stroke_items = self.items.iter().filter(|i| i.d_l1.is_none()).count();
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        if !self.items.is_empty() {
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>10} {:>10}",
                "item", "pixel_l1", "d_l1", "d_w"
            );
            for i in &self.items {
                let _ = writeln!(
                    s,
                    "{:<24} {:>10.4} {:>10} {:>10}",
                    i.name,
                    i.pixel_l1,
                    fmt(i.d_l1),
                    fmt(i.d_w)
                );
            }
            let _ = writeln!(
                s,
                "{:<24} {:>10} {:>10} {:>10}",
                "mean",
                fmt(self.mean_pixel_l1),
                fmt(self.mean_d_l1),
                fmt(self.mean_d_w)
            );
            if self.undefined_stroke_items > 0 {
                let _ = writeln!(
                    s,
                    "stroke metrics undefined for {} item(s)",
                    self.undefined_stroke_items
                );
            }
        }
        if !self.timings.is_empty() {
            let _ = writeln!(
                s,
                "{:>10} {:>6} {:>12} {:>12} {:>12}",
                "resolution", "runs", "median_s", "min_s", "max_s"
            );
            for t in &self.timings {
                let _ = writeln!(
                    s,
                    "{:>10} {:>6} {:>12.4} {:>12.4} {:>12.4}",
                    t.resolution, t.runs, t.median_seconds, t.min_seconds, t.max_seconds
                );
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

/// Paints each named image and reports its pixel error.
pub fn evaluate_images<P: StrokePredictor + ?Sized>(
    images: &[(String, CanvasImage)],
    predictor: &P,
    brush: &BrushPrimitive,
    cfg: &InferenceConfig,
) -> Result<EvalReport> {
    let cfg = InferenceConfig {
        record_strokes: false,
        ..cfg.clone()
    };
    let mut items = Vec::with_capacity(images.len());
    for (name, img) in images {
        let out = paint(img, predictor, brush, &cfg)?;
        items.push(ItemReport {
            name: name.clone(),
            pixel_l1: pixel_metric(&out.final_image, img)?,
            d_l1: None,
            d_w: None,
        });
    }
    let mut r = EvalReport::from_items(items);
    r.undefined_stroke_items = 0;
    Ok(r)
}

/// Random-stroke test images. The stroke count and overlap threshold are free
/// parameters of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvalConfig {
    pub images: usize,
    pub strokes_per_image: usize,
    pub overlap_threshold: f64,
    pub seed: u64,
}

impl Default for SyntheticEvalConfig {
    fn default() -> Self {
        SyntheticEvalConfig {
            images: 100,
            strokes_per_image: 8,
            overlap_threshold: 0.6,
            seed: 1234,
        }
    }
}

/// One `P x P` image per item: random strokes on a black canvas, labelled with
/// the overlap rule so buried strokes do not count as targets.
pub fn synthetic_test_set(
    cfg: &SyntheticEvalConfig,
    patch: usize,
    brush: &BrushPrimitive,
) -> Vec<(CanvasImage, LabeledStrokeSet)> {
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.images)
        .map(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            let strokes: Vec<Stroke> = (0..cfg.strokes_per_image)
                .map(|_| sample_stroke(&mut rng))
                .collect();
            let truth = label_overlaps(&strokes, cfg.overlap_threshold, brush, patch);
            let target = render_stroke_set(&CanvasImage::new(patch, patch), &truth.active(), brush);
            (target, truth)
        })
        .collect()
}

/// Single-patch prediction from a black canvas on every synthetic image.
pub fn evaluate_synthetic<P: StrokePredictor + ?Sized>(
    cfg: &SyntheticEvalConfig,
    predictor: &P,
    brush: &BrushPrimitive,
    batch: usize,
) -> Result<EvalReport> {
    let patch = predictor.patch_size();
    let set = synthetic_test_set(cfg, patch, brush);
    let blank = CanvasImage::new(patch, patch);
    let mut items = Vec::with_capacity(set.len());
    for (chunk_idx, chunk) in set.chunks(batch.max(1)).enumerate() {
        let canvases = vec![blank.clone(); chunk.len()];
        let targets: Vec<CanvasImage> = chunk.iter().map(|(t, _)| t.clone()).collect();
        let preds = predictor.predict(&canvases, &targets)?;
        if preds.len() != chunk.len() {
            return Err(Error::ModelMismatch(format!(
                "predictor returned {} outputs for {} patches",
                preds.len(),
                chunk.len()
            )));
        }
        for (i, (pred, (target, truth))) in preds.iter().zip(chunk).enumerate() {
            let rendered = render_stroke_set(&blank, &pred.decided_strokes(), brush);
            let m = stroke_metrics(&pred.to_stroke_set()?, truth)?;
            items.push(ItemReport {
                name: format!("synthetic_{:04}", chunk_idx * batch.max(1) + i),
                pixel_l1: pixel_metric(&rendered, target)?,
                d_l1: m.map(|m| m.0),
                d_w: m.map(|m| m.1),
            });
        }
    }
    Ok(EvalReport::from_items(items))
}

/// Deterministic test image with structure at every scale.
pub fn benchmark_image(size: usize) -> CanvasImage {
    let s = size as f64;
    CanvasImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 / s, y as f64 / s);
        [
            0.5 + 0.5 * (9.0 * u + 3.0 * v).sin(),
            0.5 + 0.5 * (17.0 * u * v).cos(),
            (u * u + v) * 0.5,
        ]
    })
}

/// Median wall-clock of `paint` per resolution over `runs` runs (at least 5).
pub fn benchmark_timing<P: StrokePredictor + ?Sized>(
    predictor: &P,
    brush: &BrushPrimitive,
    resolutions: &[usize],
    runs: usize,
    cfg: &InferenceConfig,
) -> Result<Vec<TimingRow>> {
    let runs = runs.max(5);
    let cfg = InferenceConfig {
        record_strokes: false,
        ..cfg.clone()
    };
    resolutions
        .iter()
        .map(|&res| {
            let img = benchmark_image(res);
            let mut times = Vec::with_capacity(runs);
            for _ in 0..runs {
                let start = Instant::now();
                paint(&img, predictor, brush, &cfg)?;
                times.push(start.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            Ok(TimingRow {
                resolution: res,
                runs,
                median_seconds: median_sorted(&times),
                min_seconds: times[0],
                max_seconds: times[runs - 1],
            })
        })
        .collect()
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn hardware_note() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "cpu timings, {threads} hardware thread(s), {} {}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
