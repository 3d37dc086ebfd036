//! Finite-difference validation of the reverse pass.

use super::params::ParamStore;
use super::tape::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Argument(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

fn scalar(graph: &Graph<'_>, v: Var) -> Result<f64> {
    let t = graph.value(v);
    if t.len() != 1 {
        return Err(Error::dim("gradient_check", t.dims(), &[1]));
    }
    let s = t.data()[0];
    if !s.is_finite() {
        return Err(Error::Evaluation(format!("objective evaluated to {s}")));
    }
    Ok(s)
}

fn rel_err(g: f64, fd: f64) -> f64 {
    (g - fd).abs() / 1f64.max(g.abs()).max(fd.abs())
}

/// Largest relative error between the reverse-mode gradient of `f` at `x`
/// and its central finite difference, `|g - ĝ| / max(1, |g|, |ĝ|)`.
pub fn gradient_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var>,
{
    check_eps(eps)?;
    let eval = |point: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.input(point.clone(), false);
        let out = f(&mut g, v)?;
        scalar(&g, out)
    };

    let mut graph = Graph::new();
    let xv = graph.input(x.clone(), true);
    let out = f(&mut graph, xv)?;
    scalar(&graph, out)?;
    let grads = graph.backward(out)?;
    let analytic = grads
        .wrt(&graph, xv)
        .unwrap_or_else(|| Tensor::zeros(x.dims()));

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max(rel_err(analytic.data()[i], fd));
    }
    Ok(worst)
}

/// Same bound as [`gradient_check`] but over every scalar of every parameter
/// in `store`. `f` builds the objective on a graph bound to the given store.
pub fn gradient_check_params<F>(store: &ParamStore, f: F, eps: f64) -> Result<f64>
where
    F: for<'p> Fn(&mut Graph<'p>) -> Result<Var>,
{
    check_eps(eps)?;
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::with_params(s);
        let out = f(&mut g)?;
        scalar(&g, out)
    };

    let mut graph = Graph::with_params(store);
    let out = f(&mut graph)?;
    scalar(&graph, out)?;
    let mut analytic = super::params::Gradients::zeros_like(store);
    graph
        .backward(out)?
        .accumulate_params(&graph, &mut analytic);

    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    for id in store.ids() {
        for i in 0..store.value(id).len() {
            let orig = probe.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(analytic.get(id)[i], fd));
        }
    }
    Ok(worst)
}
