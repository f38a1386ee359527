//! Adam with bias correction.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the usual betas and epsilon.
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// Applies one Adam update. `grads[i]` belongs to the i-th registered parameter.
#[allow(clippy::needless_range_loop)]
pub fn adam_step(params: &mut ParamStore, grads: &[Option<Tensor>], state: &mut AdamState) -> Result<()> {
    if state.first_moment.len() != params.len() || state.second_moment.len() != params.len() {
        return Err(Error::ParamMismatch("optimizer state does not match parameters".to_string()));
    }
    for i in 0..params.len() {
        let p = params.by_index(i);
        let g = grads.get(i).and_then(Option::as_ref).ok_or_else(|| Error::MissingGrad {
            param: p.name.clone(),
        })?;
        if g.shape() != p.value.shape() || state.first_moment[i].shape() != p.value.shape() {
            return Err(Error::shape("adam_step", p.value.shape(), g.shape()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - libm::pow(b1, t);
    let c2 = 1.0 - libm::pow(b2, t);
    let lr = state.learning_rate;
    for i in 0..params.len() {
        let g = grads[i].as_ref().expect("checked above").data();
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let w = params.value_mut(i).data_mut();
        for j in 0..w.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            w[j] -= lr * m_hat / (libm::sqrt(v_hat) + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("w", Tensor::from_vec(values.to_vec()), 1).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = store(&[0.5, -0.5, 2.0]);
        let mut st = AdamState::new(&p, 0.01);
        let g = vec![Some(Tensor::from_vec(vec![3.0, -0.2, 1e-3]))];
        adam_step(&mut p, &g, &mut st).unwrap();
        let w = p.get("w").unwrap().data();
        assert!((w[0] - (0.5 - 0.01)).abs() < 1e-6);
        assert!((w[1] - (-0.5 + 0.01)).abs() < 1e-6);
        assert!((w[2] - (2.0 - 0.01)).abs() < 1e-6);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = store(&[1.25]);
        let mut st = AdamState::new(&p, 0.1);
        adam_step(&mut p, &[Some(Tensor::from_vec(vec![0.0]))], &mut st).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.25]);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut p = store(&[1.0, 2.0]);
        let mut st = AdamState::new(&p, 0.0);
        for _ in 0..3 {
            adam_step(&mut p, &[Some(Tensor::from_vec(vec![0.3, -4.0]))], &mut st).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data(), &[1.0, 2.0]);
        assert_eq!(st.step_count, 3);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut p = store(&[1.0]);
        let mut st = AdamState::new(&p, 0.1);
        let err = adam_step(&mut p, &[None], &mut st).unwrap_err();
        assert_eq!(err, Error::MissingGrad { param: "w".into() });
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn three_steps_on_square_match_scalar_trace() {
        // hand-rolled scalar Adam on f(w) = w^2, grad 2w
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
        }

        let mut p = store(&[1.0]);
        let mut st = AdamState::new(&p, 0.1);
        for _ in 0..3 {
            let g = 2.0 * p.get("w").unwrap().data()[0];
            adam_step(&mut p, &[Some(Tensor::from_vec(vec![g]))], &mut st).unwrap();
        }
        assert!((p.get("w").unwrap().data()[0] - w).abs() < 1e-9);
    }
}
