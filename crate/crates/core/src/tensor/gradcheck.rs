use super::dense::Tensor;
use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Maximum relative discrepancy between the reverse-mode gradient of `f` at
/// `x` and its central finite-difference estimate.
///
/// Per coordinate the error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
/// `f` is rebuilt on a fresh graph for every evaluation, so it may freely
/// mutate captured state as long as its value depends only on `x`.
pub fn grad_check<F>(mut f: F, x: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let leaf = g.param(x.clone());
    let root = f(&mut g, leaf)?;
    if g.value(root).numel() != 1 {
        return Err(Error::Contract(format!(
            "grad_check: function returned shape {:?}, expected a scalar",
            g.value(root).shape()
        )));
    }
    g.backward(root)?;
    let analytic = g.grad_or_zero(leaf);

    let mut eval = |probe: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.constant(probe);
        let root = f(&mut g, leaf)?;
        g.value(root).item()
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    Ok(worst)
}
