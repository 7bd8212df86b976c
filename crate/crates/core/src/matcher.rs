//! Optimal bipartite matching between predicted and target stroke sets, and
//! the set-level stroke loss built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stroke::{
    confidence_bce, confidence_bce_grad, l1_param_distance, l1_param_distance_grad,
    stroke_wasserstein, stroke_wasserstein_grad, LossWeights, Stroke, PARAM_COUNT,
};

/// A fixed-capacity stroke set with validity labels and, for predictions,
/// confidences and decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStrokeSet {
    pub strokes: Vec<Stroke>,
    pub labels: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidences: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<Vec<bool>>,
}

impl LabeledStrokeSet {
    /// Ground-truth set.
    pub fn labeled(strokes: Vec<Stroke>, labels: Vec<bool>) -> Result<Self> {
        let set = LabeledStrokeSet {
            strokes,
            labels,
            confidences: None,
            decisions: None,
        };
        set.validate()?;
        Ok(set)
    }

    /// Prediction set: decisions and labels are derived from `c >= 0`.
    pub fn predicted(strokes: Vec<Stroke>, confidences: Vec<f64>) -> Result<Self> {
        let decisions: Vec<bool> = confidences.iter().map(|&c| c >= 0.0).collect();
        let set = LabeledStrokeSet {
            strokes,
            labels: decisions.clone(),
            confidences: Some(confidences),
            decisions: Some(decisions),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.strokes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.strokes.len();
        if self.labels.len() != n {
            return Err(Error::InvalidStrokeSet(format!(
                "{} strokes but {} labels",
                n,
                self.labels.len()
            )));
        }
        if let Some(c) = &self.confidences {
            if c.len() != n {
                return Err(Error::InvalidStrokeSet(format!(
                    "{} strokes but {} confidences",
                    n,
                    c.len()
                )));
            }
        }
        if let Some(d) = &self.decisions {
            if d.len() != n {
                return Err(Error::InvalidStrokeSet(format!(
                    "{} strokes but {} decisions",
                    n,
                    d.len()
                )));
            }
            if let Some(c) = &self.confidences {
                if c.iter().zip(d).any(|(&c, &d)| (c >= 0.0) != d) {
                    return Err(Error::InvalidStrokeSet(
                        "decisions disagree with confidence signs".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Strokes that are valid: decided strokes for predictions, labeled
    /// strokes otherwise.
    pub fn active(&self) -> Vec<Stroke> {
        let flags = self.decisions.as_ref().unwrap_or(&self.labels);
        self.strokes
            .iter()
            .zip(flags)
            .filter(|(_, &f)| f)
            .map(|(s, _)| *s)
            .collect()
    }

    fn confidences_required(&self) -> Result<&[f64]> {
        self.confidences
            .as_deref()
            .ok_or_else(|| Error::InvalidStrokeSet("prediction set lacks confidences".into()))
    }
}

/// A perfect matching: `pairs[i] = (prediction, target)`, sorted by prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub pair_costs: Vec<f64>,
    pub total_cost: f64,
}

/// `M[u][v] = g_v (D_L1 + D_W + D_bce)`; empty-target columns are zero.
pub fn build_cost_matrix(
    pred: &LabeledStrokeSet,
    target: &LabeledStrokeSet,
    weights: &LossWeights,
) -> Result<Vec<Vec<f64>>> {
    let conf = pred.confidences_required()?;
    if pred.len() != target.len() {
        return Err(Error::dims(
            format!("{} target strokes", pred.len()),
            target.len(),
        ));
    }
    let n = pred.len();
    let mut cost = vec![vec![0.0; n]; n];
    for (u, row) in cost.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            if !target.labels[v] {
                continue;
            }
            let (su, sv) = (&pred.strokes[u], &target.strokes[v]);
            *cell = l1_param_distance(su, sv)
                + stroke_wasserstein(su, sv)?
                + confidence_bce(conf[u], true, weights);
        }
    }
    Ok(cost)
}

/// Minimum-cost perfect matching on a square cost grid (shortest augmenting
/// paths with row/column potentials, O(n^3)). Rows are inserted in index
/// order and ties resolve to the lowest column, so results are reproducible.
pub fn hungarian_solve(cost: &[Vec<f64>]) -> Result<MatchResult> {
    let n = cost.len();
    for (r, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(Error::dims(format!("{n} columns in row {r}"), row.len()));
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCost { row: r, col: c });
        }
    }
    if n == 0 {
        return Ok(MatchResult {
            pairs: vec![],
            pair_costs: vec![],
            total_cost: 0.0,
        });
    }

    // 1-based arrays; column 0 is the virtual source.
    let mut row_pot = vec![0.0f64; n + 1];
    let mut col_pot = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - row_pot[i0] - col_pot[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    row_pot[col_owner[j]] += delta;
                    col_pot[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs = vec![(0usize, 0usize); n];
    for j in 1..=n {
        let i = col_owner[j] - 1;
        pairs[i] = (i, j - 1);
    }
    let pair_costs: Vec<f64> = pairs.iter().map(|&(i, j)| cost[i][j]).collect();
    let total_cost = pair_costs.iter().sum();
    Ok(MatchResult {
        pairs,
        pair_costs,
        total_cost,
    })
}

/// Matching plus the stroke loss value and its gradients with respect to the
/// predicted parameters and confidences.
#[derive(Debug, Clone)]
pub struct StrokeLossOutput {
    pub value: f64,
    pub matching: MatchResult,
    pub grad_strokes: Vec<[f64; PARAM_COUNT]>,
    pub grad_confidences: Vec<f64>,
}

/// `(1/N) sum_i [ g (l1 * D_L1 + w * D_W) + bce * D_bce ]` over the optimal
/// matching. The matching itself is held fixed when differentiating.
pub fn stroke_loss(
    pred: &LabeledStrokeSet,
    target: &LabeledStrokeSet,
    weights: &LossWeights,
) -> Result<f64> {
    Ok(stroke_loss_with_grad(pred, target, weights)?.value)
}

pub fn stroke_loss_with_grad(
    pred: &LabeledStrokeSet,
    target: &LabeledStrokeSet,
    weights: &LossWeights,
) -> Result<StrokeLossOutput> {
    let cost = build_cost_matrix(pred, target, weights)?;
    let matching = hungarian_solve(&cost)?;
    let conf = pred.confidences_required()?;
    let n = pred.len();
    let mut value = 0.0;
    let mut grad_strokes = vec![[0.0; PARAM_COUNT]; n];
    let mut grad_confidences = vec![0.0; n];
    if n == 0 {
        return Ok(StrokeLossOutput {
            value,
            matching,
            grad_strokes,
            grad_confidences,
        });
    }
    let scale = 1.0 / n as f64;
    for &(u, v) in &matching.pairs {
        let label = target.labels[v];
        let (su, sv) = (&pred.strokes[u], &target.strokes[v]);
        if label {
            let l1 = l1_param_distance(su, sv);
            let (w, gw, _) = stroke_wasserstein_grad(su, sv)?;
            let gl1 = l1_param_distance_grad(su, sv);
            value += weights.lambda_l1 * l1 + weights.lambda_w * w;
            for p in 0..PARAM_COUNT {
                grad_strokes[u][p] +=
                    scale * (weights.lambda_l1 * gl1[p] + weights.lambda_w * gw[p]);
            }
        }
        value += weights.lambda_bce * confidence_bce(conf[u], label, weights);
        grad_confidences[u] +=
            scale * weights.lambda_bce * confidence_bce_grad(conf[u], label, weights);
    }
    Ok(StrokeLossOutput {
        value: value * scale,
        matching,
        grad_strokes,
        grad_confidences,
    })
}
