//! Backtracking step-size selection.

use crate::error::{Error, Result};

/// Sufficient-decrease constant of the Armijo test.
pub const ARMIJO_C: f64 = 1e-4;
/// Maximum number of step halvings.
pub const MAX_HALVINGS: u32 = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest `δ = δ_init · 2^-m`, `m ≤ 40`, with
/// `f(v − δg) ≤ f(v) − 1e-4 · δ · ‖g‖²`.
pub fn backtracking_step(f: impl FnMut(&[f64]) -> f64, v: &[f64], g: &[f64], delta_init: f64) -> Result<f64> {
    backtracking_step_along(f, v, g, g, delta_init)
}

/// Armijo backtracking along a descent direction `d` that need not equal the
/// gradient `g` (e.g. a diagonally preconditioned gradient). The decrease
/// test uses `⟨g, d⟩` in place of `‖g‖²`.
///
/// When no step passes but the predicted decrease `δ_init · ⟨g, d⟩` is below
/// the rounding level of `f(v)`, the point is stationary to machine
/// precision and `0` is returned.
pub fn backtracking_step_along(
    mut f: impl FnMut(&[f64]) -> f64,
    v: &[f64],
    g: &[f64],
    d: &[f64],
    delta_init: f64,
) -> Result<f64> {
    if !(delta_init.is_finite() && delta_init > 0.0) {
        return Err(Error::Parameter(format!("initial step {delta_init} must be positive")));
    }
    let slope = dot(g, d);
    if !slope.is_finite() {
        return Err(Error::Divergence {
            stage: 0,
            reason: "non-finite gradient in line search".into(),
            state: None,
        });
    }
    let f0 = f(v);
    let mut delta = delta_init;
    let mut trial = vec![0.0; v.len()];
    for _ in 0..=MAX_HALVINGS {
        for ((t, x), dx) in trial.iter_mut().zip(v).zip(d) {
            *t = x - delta * dx;
        }
        let ft = f(&trial);
        if ft <= f0 - ARMIJO_C * delta * slope {
            return Ok(delta);
        }
        delta *= 0.5;
    }
    if delta_init * slope <= 64.0 * f64::EPSILON * f0.abs() {
        return Ok(0.0);
    }
    Err(Error::Divergence {
        stage: 0,
        reason: format!("no admissible step after {MAX_HALVINGS} halvings"),
        state: None,
    })
}

/// Backtracking for a proximal-gradient step `v⁺ = prox(v − δg)`.
///
/// Accepts the largest `δ = δ_init · 2^-m` satisfying
/// `f(v⁺) ≤ f(v) + ⟨g, v⁺ − v⟩ + ‖v⁺ − v‖² / (2δ)`. When `prox` is a
/// projection and `v` is feasible this guarantees `f(v⁺) ≤ f(v)`.
/// Returns the step and the accepted point.
pub fn proximal_backtracking(
    mut f: impl FnMut(&[f64]) -> f64,
    mut prox: impl FnMut(&[f64]) -> Vec<f64>,
    v: &[f64],
    g: &[f64],
    delta_init: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(delta_init.is_finite() && delta_init > 0.0) {
        return Err(Error::Parameter(format!("initial step {delta_init} must be positive")));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            stage: 0,
            reason: "non-finite gradient in line search".into(),
            state: None,
        });
    }
    let f0 = f(v);
    let mut delta = delta_init;
    let mut trial = vec![0.0; v.len()];
    for _ in 0..=MAX_HALVINGS {
        for ((t, x), dx) in trial.iter_mut().zip(v).zip(g) {
            *t = x - delta * dx;
        }
        let cand = prox(&trial);
        let step: Vec<f64> = cand.iter().zip(v).map(|(a, b)| a - b).collect();
        let model = f0 + dot(g, &step) + dot(&step, &step) / (2.0 * delta);
        if f(&cand) <= model {
            return Ok((delta, cand));
        }
        delta *= 0.5;
    }
    if delta_init * dot(g, g) <= 64.0 * f64::EPSILON * f0.abs() {
        return Ok((0.0, v.to_vec()));
    }
    Err(Error::Divergence {
        stage: 0,
        reason: format!("no admissible proximal step after {MAX_HALVINGS} halvings"),
        state: None,
    })
}
