//! Adam with coupled L2 weight decay.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Tensor::zeros(rows, cols),
            v: Tensor::zeros(rows, cols),
            step: 0,
        }
    }

    pub fn for_param(param: &Tensor) -> Self {
        Self::new(param.rows(), param.cols())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Tensor {
        &self.m
    }

    pub fn second_moment(&self) -> &Tensor {
        &self.v
    }
}

/// One Adam update of `param` in place: `grad + weight_decay * param` feeds
/// the bias-corrected moment estimates.
pub fn adam_step(
    name: &str,
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    param.ensure_shape("adam_step", grad)?;
    param.ensure_shape("adam_step", &state.m)?;
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient { param: name.to_string() });
    }
    apply(param, grad, state, config);
    Ok(())
}

fn apply(param: &mut Tensor, grad: &Tensor, state: &mut AdamState, c: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    let p = param.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..p.len() {
        let g = grad.data()[i] + c.weight_decay * p[i];
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

/// Adam over an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self {
            config,
            states: params.into_iter().map(AdamState::for_param).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Updates every parameter, or none of them if any gradient is non-finite
    /// or mis-shaped.
    pub fn step(&mut self, names: &[String], params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        let n = self.states.len();
        if names.len() != n || params.len() != n || grads.len() != n {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, p), g) in names.iter().zip(params.iter()).zip(grads) {
            p.ensure_shape("adam_step", g)?;
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: name.clone() });
            }
        }
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            apply(p, g, s, &self.config);
        }
        Ok(())
    }
}
