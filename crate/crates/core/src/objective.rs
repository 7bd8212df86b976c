//! Training objective: pixel loss on the rendered prediction plus the
//! set-level stroke loss.

use serde::{Deserialize, Serialize};

use crate::brush::BrushPrimitive;
use crate::datagen::SynthSample;
use crate::decision::binary_decision_grad;
use crate::error::{Error, Result};
use crate::matcher::stroke_loss_with_grad;
use crate::prediction::PredictionOutput;
use crate::render::pixel_l1_with_grad;
use crate::stroke::{LossWeights, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pixel: f64,
    pub stroke: f64,
    pub total: f64,
}

/// Loss components and gradients with respect to the squashed stroke
/// parameters and the confidence logits of one prediction.
#[derive(Debug, Clone)]
pub struct LossWithGrad {
    pub loss: LossBreakdown,
    pub grad_params: Vec<[f64; PARAM_COUNT]>,
    pub grad_confidences: Vec<f64>,
}

impl LossWithGrad {
    pub fn zero(n: usize) -> Self {
        LossWithGrad {
            loss: LossBreakdown::default(),
            grad_params: vec![[0.0; PARAM_COUNT]; n],
            grad_confidences: vec![0.0; n],
        }
    }
}

pub fn total_loss(
    sample: &SynthSample,
    pred: &PredictionOutput,
    weights: &LossWeights,
    brush: &BrushPrimitive,
) -> Result<LossBreakdown> {
    Ok(total_loss_with_grad(sample, pred, weights, brush)?.loss)
}

/// Renders the decided strokes onto the sample canvas, compares with the
/// target (mean absolute error) and adds the stroke loss. Gate gradients from
/// the renderer reach the confidences through the straight-through rule.
pub fn total_loss_with_grad(
    sample: &SynthSample,
    pred: &PredictionOutput,
    weights: &LossWeights,
    brush: &BrushPrimitive,
) -> Result<LossWithGrad> {
    if pred.len() != sample.truth.len() {
        return Err(Error::dims(
            format!("{} predicted strokes", sample.truth.len()),
            pred.len(),
        ));
    }
    let (pixel, _, render_grad) = pixel_l1_with_grad(
        &sample.canvas,
        &pred.strokes,
        &pred.decisions,
        brush,
        &sample.target,
    )?;
    let stroke = stroke_loss_with_grad(&pred.to_stroke_set()?, &sample.truth, weights)?;

    let mut grad_params = stroke.grad_strokes;
    for (g, r) in grad_params.iter_mut().zip(&render_grad.strokes) {
        for p in 0..PARAM_COUNT {
            g[p] += r[p];
        }
    }
    let grad_confidences = stroke
        .grad_confidences
        .iter()
        .zip(&render_grad.gates)
        .zip(&pred.confidences)
        .map(|((gs, gd), &c)| gs + gd * binary_decision_grad(c))
        .collect();
    Ok(LossWithGrad {
        loss: LossBreakdown {
            pixel,
            stroke: stroke.value,
            total: pixel + stroke.value,
        },
        grad_params,
        grad_confidences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brush::generate_brush;
    use crate::canvas::CanvasImage;
    use crate::datagen::{generate_samples, SynthConfig};
    use crate::matcher::LabeledStrokeSet;
    use crate::stroke::Stroke;

    fn sample() -> (SynthSample, BrushPrimitive) {
        let brush = generate_brush("rectangle", 64, 64).unwrap();
        let cfg = SynthConfig {
            seed: 5,
            ..SynthConfig::default()
        };
        let s = generate_samples(&cfg, &brush, 4)
            .unwrap()
            .into_iter()
            .find(|s| !s.truth.active().is_empty())
            .unwrap();
        (s, brush)
    }

    #[test]
    fn exact_prediction_has_near_zero_loss() {
        let (s, brush) = sample();
        let conf = s
            .truth
            .labels
            .iter()
            .map(|&l| if l { 40.0 } else { -40.0 })
            .collect();
        let pred = PredictionOutput::from_strokes(s.truth.strokes.clone(), conf).unwrap();
        let loss = total_loss(&s, &pred, &LossWeights::default(), &brush).unwrap();
        assert!(loss.total < 1e-4, "{loss:?}");
    }

    #[test]
    fn nothing_decided_gives_canvas_target_gap() {
        let (s, brush) = sample();
        let pred =
            PredictionOutput::from_strokes(s.truth.strokes.clone(), vec![-1.0; s.truth.len()])
                .unwrap();
        let loss = total_loss(&s, &pred, &LossWeights::default(), &brush).unwrap();
        let gap = s.canvas.mean_abs_diff(&s.target).unwrap();
        assert!((loss.pixel - gap).abs() < 1e-12);
        assert!(loss.stroke >= 0.0);
    }

    #[test]
    fn maximal_pixel_gap() {
        let brush = generate_brush("rectangle", 64, 64).unwrap();
        let s = Stroke::new(0.5, 0.5, 0.2, 0.2, 0.0, 0.0, 0.0, 0.0);
        let sample = SynthSample {
            canvas: CanvasImage::new(8, 8),
            target: CanvasImage::filled(8, 8, [1.0; 3]),
            truth: LabeledStrokeSet::labeled(vec![s], vec![false]).unwrap(),
        };
        let pred = PredictionOutput::from_strokes(vec![s], vec![-3.0]).unwrap();
        let loss = total_loss(&sample, &pred, &LossWeights::default(), &brush).unwrap();
        assert_eq!(loss.pixel, 1.0);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let (s, brush) = sample();
        let pred = PredictionOutput::from_strokes(vec![s.truth.strokes[0]], vec![0.0]).unwrap();
        assert!(total_loss(&s, &pred, &LossWeights::default(), &brush).is_err());
    }
}
