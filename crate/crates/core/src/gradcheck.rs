//! Central finite-difference verification of analytic gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Model, PreparedSample};
use crate::tensor::Tensor;

/// Worst relative error for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

/// Compares analytic gradients to `(f(w+eps) - f(w-eps)) / 2eps`, elementwise.
///
/// `loss` evaluates the scalar loss at the given parameters and returns it
/// with analytic gradients (one tensor per parameter, same order). Relative
/// error uses `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn finite_diff_check<F>(
    names: &[&str],
    params: &[Tensor],
    mut loss: F,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (base, analytic) = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite {
            context: String::from("loss at unperturbed parameters"),
        });
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("finite_diff_check", &[params.len()], &[analytic.len()]));
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = Vec::with_capacity(params.len());
    for (p, grad) in analytic.iter().enumerate() {
        let name = names.get(p).copied().unwrap_or("?");
        if grad.shape() != params[p].shape() {
            return Err(Error::shape("finite_diff_check", params[p].shape(), grad.shape()));
        }
        let mut worst = 0.0;
        let mut worst_index = 0;
        for j in 0..params[p].len() {
            let orig = params[p].data()[j];
            work[p].data_mut()[j] = orig + epsilon;
            let (plus, _) = loss(&work)?;
            work[p].data_mut()[j] = orig - epsilon;
            let (minus, _) = loss(&work)?;
            work[p].data_mut()[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("loss with `{name}`[{j}] perturbed"),
                });
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[j];
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
            let rel = libm::fabs(a - numeric) / denom;
            if rel > worst {
                worst = rel;
                worst_index = j;
            }
        }
        report.push(ParamCheck {
            name: String::from(name),
            max_rel_error: worst,
            worst_index,
        });
    }
    Ok(GradCheckReport {
        params: report,
        tolerance,
    })
}

/// Runs [`finite_diff_check`] on the batch loss of `model` over every
/// registered parameter tensor.
pub fn check_model(
    model: &Model,
    batch: &[&PreparedSample],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let names: Vec<String> = model.params.names().map(String::from).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let values: Vec<Tensor> = model.params.iter().map(|p| p.value.clone()).collect();
    let mut probe = model.clone();
    finite_diff_check(
        &name_refs,
        &values,
        |vals| {
            for (i, v) in vals.iter().enumerate() {
                *probe.params.value_mut(i) = v.clone();
            }
            let (loss, grads) = probe
                .batch_loss_and_grads(batch)?
                .ok_or_else(|| Error::Data(String::from("batch has no supervised agents")))?;
            let grads = grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| g.unwrap_or_else(|| Tensor::zeros(probe.params.by_index(i).value.shape())))
                .collect();
            Ok((loss, grads))
        },
        epsilon,
        tolerance,
    )
}
