//! Central finite-difference gradient checking.
//!
//! The oracle only ever evaluates forward values, so it stays independent of
//! every backward rule it is used to verify.

use super::{Graph, Var};
use crate::error::Result;
use crate::params::ParameterStore;
use crate::tensor::Tensor;

/// Agreement between autodiff and finite differences for one tensor.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    /// `‖autodiff − numeric‖₂ / max(‖autodiff‖₂, ‖numeric‖₂, 1e-7)`.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

fn summarize(name: String, analytic: &[f64], numeric: &[f64]) -> GradCheck {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let max_abs = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    GradCheck {
        name,
        rel_error: diff / na.max(nn).max(1e-7),
        max_abs_error: max_abs,
        checked: analytic.len(),
    }
}

/// Five-point central difference, exact through fourth-order terms.
fn stencil(f: &mut impl FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}

/// Evenly strided subset of `0..n` with at most `limit` entries.
fn sample_indices(n: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
        _ => (0..n).collect(),
    }
}

/// Checks gradients of a scalar function with respect to each of `inputs`.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    let grads = g.backward(root)?;
    let mut report = Vec::new();
    for (k, (&v, t)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(v, t.shape());
        let mut numeric = vec![0.0; t.len()];
        let mut work = inputs.to_vec();
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = t.data()[i];
            let mut at = |d: f64| -> Result<f64> {
                work[k].data_mut()[i] = orig + d;
                eval(&work)
            };
            *slot = stencil(&mut at, h)?;
            work[k].data_mut()[i] = orig;
        }
        report.push(summarize(format!("input{k}"), analytic.data(), &numeric));
    }
    Ok(report)
}

/// Checks gradients of a scalar loss with respect to every trainable
/// parameter in `store`, perturbing at most `limit` entries per tensor.
pub fn check_params<F>(store: &ParameterStore, h: f64, limit: Option<usize>, f: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::with_params(store);
    let root = f(&mut g)?;
    let grads = g.backward(root)?;
    let analytic = g.param_grads(&grads);
    let mut work = store.clone();
    let eval = |s: &ParameterStore| -> Result<f64> {
        let mut g = Graph::with_params(s);
        let out = f(&mut g)?;
        Ok(g.value(out).item())
    };
    let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
    let mut report = Vec::new();
    for name in names {
        let base = store.get(&name).expect("listed").clone();
        let zeros = Tensor::zeros(base.shape());
        let a = analytic.get(&name).unwrap_or(&zeros);
        let idx = sample_indices(base.len(), limit);
        let mut num = Vec::with_capacity(idx.len());
        let mut ana = Vec::with_capacity(idx.len());
        for &i in &idx {
            let mut at = |d: f64| -> Result<f64> {
                let mut t = base.clone();
                t.data_mut()[i] += d;
                work.set(&name, t)?;
                eval(&work)
            };
            num.push(stencil(&mut at, h)?);
            ana.push(a.data()[i]);
        }
        work.set(&name, base)?;
        report.push(summarize(name, &ana, &num));
    }
    Ok(report)
}
