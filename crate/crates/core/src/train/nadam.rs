//! Adam with Nesterov momentum.
//!
//! ```text
//! m  = β1 m + (1 - β1) g            v  = β2 v + (1 - β2) g²
//! m̂  = β1 m / (1 - β1^(t+1)) + (1 - β1) g / (1 - β1^t)
//! v̂  = v / (1 - β2^t)
//! θ -= lr · m̂ / (√v̂ + ε)
//! ```

use crate::tensor::{ParamGrads, ParamStore, Real, Tensor};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("optimizer state does not match parameter `{0}`")]
    StateMismatch(String),
}

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<F> {
    pub config: NadamConfig,
    pub step: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
}

impl<F: Real> OptState<F> {
    pub fn new(config: NadamConfig, params: &ParamStore<F>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// Applies one update in place. Parameters are matched to gradients and
/// moments by name and shape; each entry is updated independently.
pub fn nadam_step<F: Real>(
    params: &mut ParamStore<F>,
    grads: &ParamGrads<F>,
    state: &mut OptState<F>,
) -> Result<(), OptimError> {
    let ids: Vec<_> = params.ids().collect();
    for &id in &ids {
        let name = params.name(id);
        let g = grads
            .by_name(name)
            .ok_or_else(|| OptimError::MissingGradient(name.to_string()))?;
        let shape = params.get(id).shape();
        let k = id.index();
        if g.shape() != shape
            || state.m.get(k).map(Tensor::shape) != Some(shape)
            || state.v.get(k).map(Tensor::shape) != Some(shape)
        {
            return Err(OptimError::StateMismatch(name.to_string()));
        }
    }

    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bias1_now = 1.0 - libm::pow(c.beta1, f64::from(t));
    let bias1_next = 1.0 - libm::pow(c.beta1, f64::from(t + 1));
    let bias2 = 1.0 - libm::pow(c.beta2, f64::from(t));

    for id in ids {
        let k = id.index();
        let g = grads.by_name(params.name(id)).expect("checked above");
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        let theta = params.get_mut(id).data_mut();
        for i in 0..theta.len() {
            let gi = g.data()[i].to_f64();
            let mi = c.beta1 * m[i].to_f64() + (1.0 - c.beta1) * gi;
            let vi = c.beta2 * v[i].to_f64() + (1.0 - c.beta2) * gi * gi;
            m[i] = F::from_f64(mi);
            v[i] = F::from_f64(vi);
            let m_hat = c.beta1 * mi / bias1_next + (1.0 - c.beta1) * gi / bias1_now;
            let v_hat = vi / bias2;
            let step = c.lr * m_hat / (libm::sqrt(v_hat) + c.eps);
            theta[i] = F::from_f64(theta[i].to_f64() - step);
        }
    }
    Ok(())
}
