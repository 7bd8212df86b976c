//! Predictor outputs and the interface the painting pipeline drives.

use crate::canvas::CanvasImage;
use crate::decision::binary_decision;
use crate::error::{Error, Result};
use crate::matcher::LabeledStrokeSet;
use crate::stroke::{Stroke, PARAM_COUNT};

/// One patch worth of predicted strokes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    /// Parameter head outputs before the sigmoid.
    pub raw_params: Vec<[f64; PARAM_COUNT]>,
    pub strokes: Vec<Stroke>,
    pub confidences: Vec<f64>,
    pub decisions: Vec<bool>,
}

impl PredictionOutput {
    /// Builds an output from squashed parameters and confidence logits.
    pub fn new(
        raw_params: Vec<[f64; PARAM_COUNT]>,
        params: Vec<[f64; PARAM_COUNT]>,
        confidences: Vec<f64>,
    ) -> Result<Self> {
        if raw_params.len() != params.len() || params.len() != confidences.len() {
            return Err(Error::dims(
                format!("{} queries", params.len()),
                format!(
                    "{} raw / {} confidences",
                    raw_params.len(),
                    confidences.len()
                ),
            ));
        }
        let strokes = params
            .into_iter()
            .map(|p| Stroke::from_array(p).with_min_size())
            .collect();
        let decisions = confidences.iter().map(|&c| binary_decision(c)).collect();
        Ok(PredictionOutput {
            raw_params,
            strokes,
            confidences,
            decisions,
        })
    }

    /// Wraps explicit strokes; useful for scripted predictors and tests.
    pub fn from_strokes(strokes: Vec<Stroke>, confidences: Vec<f64>) -> Result<Self> {
        let params: Vec<[f64; PARAM_COUNT]> = strokes.iter().map(Stroke::to_array).collect();
        let raw = params.iter().map(|p| p.map(logit)).collect();
        Self::new(raw, params, confidences)
    }

    pub fn len(&self) -> usize {
        self.strokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn decided_strokes(&self) -> Vec<Stroke> {
        self.strokes
            .iter()
            .zip(&self.decisions)
            .filter(|(_, &d)| d)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn to_stroke_set(&self) -> Result<LabeledStrokeSet> {
        LabeledStrokeSet::predicted(self.strokes.clone(), self.confidences.clone())
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Anything that maps `(canvas, target)` patch pairs to stroke sets.
pub trait StrokePredictor {
    /// Side length of the square patches the predictor consumes.
    fn patch_size(&self) -> usize;

    /// Predicts one stroke set per `(canvas, target)` pair.
    fn predict(
        &self,
        canvases: &[CanvasImage],
        targets: &[CanvasImage],
    ) -> Result<Vec<PredictionOutput>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decisions_follow_confidence_sign() {
        let s = Stroke::new(0.5, 0.5, 0.2, 0.2, 0.0, 1.0, 1.0, 1.0);
        let out = PredictionOutput::from_strokes(vec![s, s, s], vec![0.0, -0.5, 2.0]).unwrap();
        assert_eq!(out.decisions, vec![true, false, true]);
        assert_eq!(out.decided_strokes().len(), 2);
        assert!(PredictionOutput::new(vec![], vec![[0.5; 8]], vec![0.0]).is_err());
    }

    #[test]
    fn tiny_sizes_are_lifted() {
        let out = PredictionOutput::new(vec![[0.0; 8]], vec![[0.0; 8]], vec![1.0]).unwrap();
        assert!(out.strokes[0].w >= crate::stroke::EPS_SIZE);
    }
}
