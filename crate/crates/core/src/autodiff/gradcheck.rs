//! Finite-difference gradient verification.
//!
//! The numeric side only ever calls a user-supplied loss evaluation, so it is
//! independent of the tape's backward pass that it checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ParamId, ParamStore};

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Numeric gradient of a scalar loss with respect to one parameter tensor,
/// by central differences on a cloned store.
pub fn numeric_param_grad(
    store: &ParamStore,
    id: ParamId,
    step: f64,
    mut eval: impl FnMut(&ParamStore) -> f64,
) -> Vec<f64> {
    let mut work = store.clone();
    let n = store.value(id).len();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let orig = store.value(id).data()[i];
        work.value_mut(id).data_mut()[i] = orig + step;
        let up = eval(&work);
        work.value_mut(id).data_mut()[i] = orig - step;
        let down = eval(&work);
        work.value_mut(id).data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Worst mismatch found by [`compare_grads`].
#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub worst_param: String,
}

impl GradReport {
    pub fn ok(&self) -> bool {
        self.failures == 0
    }

    fn update(&mut self, name: &str, analytic: f64, numeric: f64, tol_rel: f64, tol_abs: f64) {
        self.checked += 1;
        let abs = (analytic - numeric).abs();
        // Where the true gradient is small, compare absolutely; elsewhere
        // relative to the larger magnitude.
        let denom = numeric.abs().max(analytic.abs());
        let failed = if numeric.abs() < 1e-3 {
            abs >= tol_abs.max(tol_rel * denom)
        } else {
            abs / denom >= tol_rel
        };
        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
        if rel > self.worst_rel {
            self.worst_rel = rel;
            self.worst_param = String::from(name);
        }
        self.worst_abs = self.worst_abs.max(abs);
        if failed {
            self.failures += 1;
        }
    }
}

/// Compare the gradients currently held in `store` (filled by a backward
/// pass) against central finite differences of `eval` for every parameter.
///
/// Tolerances follow the engine contract: relative error below `tol_rel`
/// (default 1e-4), switching to an absolute comparison at `tol_abs`
/// (default 1e-6) where the numeric gradient is below 1e-3.
pub fn compare_grads(
    store: &ParamStore,
    step: f64,
    tol_rel: f64,
    tol_abs: f64,
    mut eval: impl FnMut(&ParamStore) -> f64,
) -> GradReport {
    let mut report = GradReport::default();
    for (id, param) in store.iter() {
        let numeric = numeric_param_grad(store, id, step, &mut eval);
        for (i, (&a, &n)) in param.grad.data().iter().zip(numeric.iter()).enumerate() {
            report.update(&format!("{}[{}]", param.name, i), a, n, tol_rel, tol_abs);
        }
    }
    report
}

/// `compare_grads` with the standard step and tolerances.
pub fn check_grads(store: &ParamStore, eval: impl FnMut(&ParamStore) -> f64) -> GradReport {
    compare_grads(store, 1e-4, 1e-4, 1e-6, eval)
}
