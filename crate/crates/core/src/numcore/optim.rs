//! AdamW with decoupled weight decay.
//!
//! ```text
//! θ ← θ·(1 − lr·λ)
//! m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
//! θ ← θ − lr·m̂/(√v̂ + ε)    m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::array::Scalar;
use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new<T: Scalar>(params: &ParamSet<T>, config: AdamWConfig) -> Self {
        Self {
            step: 0,
            config,
            first: params.values().iter().map(|v| vec![0.0; v.len()]).collect(),
            second: params.values().iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.second[i]
    }
}

/// Applies one AdamW update using the gradients stored in `params`.
///
/// All gradients are checked before anything is modified, so a non-finite
/// gradient leaves both parameters and state untouched.
pub fn adamw_step<T: Scalar>(params: &mut ParamSet<T>, state: &mut OptimState, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Argument(format!("learning rate {lr}")));
    }
    if state.first.len() != params.len()
        || params
            .values()
            .iter()
            .zip(&state.first)
            .any(|(v, m)| v.len() != m.len())
    {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for (i, name) in params.names().iter().enumerate() {
        if !params.grad(i).all_finite() {
            return Err(Error::NonFinite { param: name.clone() });
        }
    }

    state.step += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let decay = 1.0 - lr * weight_decay;

    for (i, (_, value, grad)) in params.pairs_mut().enumerate() {
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (((p, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            let g = g.to_f64_lossy();
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let updated = p.to_f64_lossy() * decay - lr * m_hat / (v_hat.sqrt() + eps);
            *p = T::from_f64_lossy(updated);
        }
    }
    Ok(())
}
