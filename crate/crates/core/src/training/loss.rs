use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamStore, Tensor, Var};

/// Mean squared error plus `lambda * Σ|w|` over the store's weight matrices.
pub fn loss(pred: &[f64], target: &[f64], params: &ParamStore, lambda: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("loss", &[pred.len()], &[target.len()]));
    }
    if lambda < 0.0 {
        return Err(Error::Argument("lambda must be non-negative".into()));
    }
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len().max(1) as f64;
    Ok(mse + lambda * params.l1_norm())
}

/// Differentiable MSE between a prediction node and a fixed target.
pub fn mse_on_graph(g: &mut Graph<'_>, pred: Var, target: &[f64]) -> Result<Var> {
    let dims = g.value(pred).dims().to_vec();
    if g.value(pred).len() != target.len() {
        return Err(Error::dim("mse", &dims, &[target.len()]));
    }
    let t = g.constant(Tensor::new(&dims, target.to_vec())?);
    let d = g.sub(pred, t)?;
    let s = g.square(d);
    Ok(g.mean_all(s))
}
