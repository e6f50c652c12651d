use serde::{Deserialize, Serialize};

use super::{NnError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Moment estimates for a list of parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            v: sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update over all groups. Gradients are checked for
/// finiteness before anything is modified.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut Adam<T>,
    lr: f64,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::Shape("parameter, gradient and state groups differ".into()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(NnError::Shape(format!("group {i}: parameter and gradient sizes differ")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
    let (c1, c2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
    let (ibc1, ibc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
    let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + c1 * gj;
            v[j] = b2 * v[j] + c2 * gj * gj;
            let m_hat = m[j] * ibc1;
            let v_hat = v[j] * ibc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `lr0 * gamma^floor(epoch / step)` with the defaults 0.001, 3, 0.5.
pub fn step_lr(epoch: usize) -> f64 {
    step_lr_with(0.001, 3, 0.5, epoch)
}

pub fn step_lr_with(lr0: f64, step_size: usize, gamma: f64, epoch: usize) -> f64 {
    lr0 * gamma.powi((epoch / step_size) as i32)
}
