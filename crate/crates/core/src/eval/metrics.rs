//! Classification and landing-point metrics.

use crate::error::{Error, Result};
use crate::geom::Point2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Tallies hard predictions against ground truth; label 1 is positive.
    pub fn tally(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Contract(format!(
                "{} predictions but {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            if p > 1 {
                return Err(Error::Label(p as f64));
            }
            if t > 1 {
                return Err(Error::Label(t as f64));
            }
            match (p, t) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                _ => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Percentages. Precision or recall is `None` when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn confusion_metrics(c: &ConfusionCounts) -> Result<ClassMetrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Data("no samples to score".into()));
    }
    let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    Ok(ClassMetrics {
        accuracy: 100.0 * (c.tp + c.tn) as f64 / total as f64,
        precision: pct(c.tp, c.tp + c.fp),
        recall: pct(c.tp, c.tp + c.fn_),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    /// Mean squared Euclidean distance (px²).
    pub mse: f64,
    pub rmse: f64,
    /// Mean Euclidean distance (px).
    pub bias_px: f64,
    /// Mean of `truth − pred` per axis (px); the signed reading of Bias.
    pub signed_bias: Point2,
}

pub fn regression_metrics(preds: &[Point2], truths: &[Point2]) -> Result<RegressionMetrics> {
    if preds.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions but {} ground-truth points",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("no samples to score".into()));
    }
    let n = preds.len() as f64;
    let (mut sq, mut dist, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let d = p.distance(*t);
        sq += d * d;
        dist += d;
        dx += t.x - p.x;
        dy += t.y - p.y;
    }
    let mse = sq / n;
    Ok(RegressionMetrics {
        mse,
        rmse: mse.sqrt(),
        bias_px: dist / n,
        signed_bias: Point2::new(dx / n, dy / n),
    })
}
