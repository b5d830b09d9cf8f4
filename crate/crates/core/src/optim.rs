//! Gradient descent with backtracking line search.
//!
//! Every optimizer in the crate goes through [`minimize`]. A step is only
//! accepted when it satisfies the Armijo sufficient-decrease condition, so
//! the objective is non-increasing over accepted steps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentSettings {
    pub max_iters: usize,
    pub initial_step: f64,
    /// Step multiplier applied on each rejected trial, in (0, 1).
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Step multiplier applied after an accepted step, ≥ 1.
    pub growth: f64,
    /// Armijo constant.
    pub armijo: f64,
    pub grad_tol: f64,
    /// Stop when an accepted step improves the objective by less than this
    /// fraction of its magnitude.
    pub rel_tol: f64,
    /// Start each line search from the Barzilai–Borwein step
    /// `sᵀs / sᵀy` of the last accepted move instead of the grown step.
    pub barzilai_borwein: bool,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            initial_step: 1.0,
            backtrack: 0.5,
            max_halvings: 20,
            growth: 2.0,
            armijo: 1e-4,
            grad_tol: 1e-12,
            rel_tol: 0.0,
            barzilai_borwein: false,
        }
    }
}

impl DescentSettings {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.initial_step > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.growth >= 1.0
            && self.armijo >= 0.0
            && self.armijo < 1.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParameter(format!(
                "descent settings out of range: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Minimizes `objective` starting from `x0`.
///
/// `objective` returns the value and the gradient at a point.
pub fn minimize<F>(x0: Vec<f64>, mut objective: F, settings: &DescentSettings) -> DescentReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut grad) = objective(&x);
    let initial_value = fx;
    let mut history = vec![fx];
    let mut step = settings.initial_step;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; x.len()];

    while iterations < settings.max_iters {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if !gnorm2.is_finite() || gnorm2.sqrt() <= settings.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *t = xi - step * gi;
            }
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && ft <= fx - settings.armijo * step * gnorm2 {
                accepted = Some((ft, gt));
                break;
            }
            step *= settings.backtrack;
        }

        let Some((ft, gt)) = accepted else {
            converged = true;
            break;
        };
        let improvement = fx - ft;
        let bb = if settings.barzilai_borwein {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..x.len() {
                let s = trial[i] - x[i];
                ss += s * s;
                sy += s * (gt[i] - grad[i]);
            }
            (sy > 0.0 && ss > 0.0).then(|| ss / sy)
        } else {
            None
        };
        std::mem::swap(&mut x, &mut trial);
        fx = ft;
        grad = gt;
        history.push(fx);
        step = match bb {
            Some(s) if s.is_finite() => s,
            _ => step * settings.growth,
        };
        if improvement <= settings.rel_tol * fx.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    DescentReport {
        x,
        value: fx,
        initial_value,
        iterations,
        history,
        converged,
    }
}
