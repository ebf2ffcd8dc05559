//! Central finite-difference gradient checking.

use super::optim::ParameterSet;
use crate::error::Result;

/// `|analytic - fd| / max(1e-8, |analytic| + |fd|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `analytic` against central differences of `f` around `x`.
/// Returns the largest relative error.
pub fn gradcheck_fn(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * eps)));
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares the gradients currently stored in `params` against central
/// differences of `loss`, perturbing every entry of every tensor in turn.
/// Parameter values are restored afterwards.
pub fn finite_diff_gradcheck(
    params: &mut ParameterSet,
    eps: f64,
    mut loss: impl FnMut(&ParameterSet) -> Result<f64>,
) -> Result<GradcheckReport> {
    let mut tensors = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let n = params.value(i).len();
        let mut worst = 0.0_f64;
        let mut worst_index = 0;
        for k in 0..n {
            let orig = params.value(i).data()[k];
            params.value_mut(i).data_mut()[k] = orig + eps;
            let up = loss(params)?;
            params.value_mut(i).data_mut()[k] = orig - eps;
            let down = loss(params)?;
            params.value_mut(i).data_mut()[k] = orig;
            let err = relative_error(params.grad(i).data()[k], (up - down) / (2.0 * eps));
            if err > worst {
                worst = err;
                worst_index = k;
            }
        }
        tensors.push(TensorCheck {
            name: params.iter().nth(i).unwrap().name.clone(),
            max_rel_err: worst,
            worst_index,
        });
    }
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        max_rel_err,
        tensors,
    })
}
