use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum MetricError {
    #[error("Pearson's r is undefined for constant predictions or labels")]
    Degenerate,
    #[error("predictions and labels differ in length")]
    Length,
    #[error("no samples")]
    Empty,
}

/// Evaluation summary. Classification fills `accuracy`; regression fills
/// `rmse` and `pearson_r` (`None` when undefined).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub rmse: Option<f64>,
    pub pearson_r: Option<f64>,
}

fn check(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::Length);
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    check(predicted.len(), labels.len())?;
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn rmse(predicted: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check(predicted.len(), labels.len())?;
    let mse = predicted.iter().zip(labels).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / labels.len() as f64;
    Ok(mse.sqrt())
}

/// Pearson correlation with population statistics.
pub fn pearson_r(predicted: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check(predicted.len(), labels.len())?;
    let n = labels.len() as f64;
    let mp = predicted.iter().sum::<f64>() / n;
    let ml = labels.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vl) = (0.0, 0.0, 0.0);
    for (p, l) in predicted.iter().zip(labels) {
        let (dp, dl) = (p - mp, l - ml);
        cov += dp * dl;
        vp += dp * dp;
        vl += dl * dl;
    }
    let denom = (vp * vl).sqrt();
    if denom == 0.0 {
        return Err(MetricError::Degenerate);
    }
    Ok((cov / denom).clamp(-1.0, 1.0))
}
