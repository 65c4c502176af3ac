//! Central finite-difference gradient checking.
//!
//! The numeric side only ever runs forward passes on constants, so it shares
//! no code with the backward rules it verifies.

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients whose magnitude is below this are compared on an absolute scale.
pub const SCALE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(SCALE_FLOOR)
}

/// Compares the backward-pass gradient of `build(x)` against central
/// differences with step [`DEFAULT_STEP`].
pub fn check_gradient<F>(x0: &Tensor, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.variable(x0.clone());
    let loss = build(&mut g, x)?;
    g.backward(loss)?;
    let analytic = g.grad(x).map_or_else(|| vec![0.0; x0.len()], <[f64]>::to_vec);

    let numeric = numeric_gradient(x0, |t| {
        let mut g = Graph::new();
        let x = g.constant(t.clone());
        let loss = build(&mut g, x)?;
        Ok(g.value(loss).item())
    })?;

    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradReport {
        analytic,
        numeric,
        max_rel_error,
    })
}

/// Central differences of a scalar function of one tensor.
pub fn numeric_gradient<F>(x0: &Tensor, f: F) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(x0.len());
    for i in 0..x0.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + DEFAULT_STEP;
        let plus = f(&x)?;
        x.data_mut()[i] = orig - DEFAULT_STEP;
        let minus = f(&x)?;
        x.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * DEFAULT_STEP));
    }
    Ok(out)
}
