use crate::error::{Error, Result};

/// Point-forecast error over all evaluated steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// MSE and MAE between denormalised forecasts and ground truth.
pub fn evaluate(pred: &[f64], truth: &[f64]) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::dim("evaluate", &[pred.len()], &[truth.len()]));
    }
    if pred.is_empty() {
        return Err(Error::Evaluation("no forecast points to evaluate".into()));
    }
    let n = pred.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        se += d * d;
        ae += d.abs();
    }
    Ok(Metrics {
        mse: se / n,
        mae: ae / n,
    })
}
