//! Central finite-difference gradient checking.
//!
//! The numerical side only runs forward passes, so it is independent of the
//! backward rules it checks.

use super::{Graph, Tensor, Var};
use crate::error::Result;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are tiny.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Builds the loss with `f`, backpropagates, and compares every input's
/// gradient against central differences with step `h`. Returns the
/// relative error for each input.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    Ok(gradients(inputs, h, f)?
        .iter()
        .map(|(a, n)| relative_error(a, n))
        .collect())
}

/// As [`check`], but one relative error over all inputs' gradients taken
/// together. Suits whole-model losses where some parameters have an
/// identically zero gradient.
pub fn check_joint<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let (a, n): (Vec<Vec<f64>>, Vec<Vec<f64>>) = gradients(inputs, h, f)?.into_iter().unzip();
    Ok(relative_error(&a.concat(), &n.concat()))
}

/// Analytic and central-difference gradients for each input.
fn gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<Vec<(Vec<f64>, Vec<f64>)>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = ins.iter().map(|t| g.leaf(t)).collect::<Result<Vec<_>>>()?;
        let loss = f(&mut g, &vars)?;
        Ok(g.scalar(loss))
    };

    let tracked: Vec<Tensor> = inputs.iter().cloned().map(Tensor::with_grad).collect();
    let mut g = Graph::new();
    let vars = tracked.iter().map(|t| g.leaf(t)).collect::<Result<Vec<_>>>()?;
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;

    let mut out = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v);
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[k].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[k].data_mut()[j] = orig;
            *slot = (plus - minus) / (2.0 * h);
        }
        out.push((analytic, numeric));
    }
    Ok(out)
}
