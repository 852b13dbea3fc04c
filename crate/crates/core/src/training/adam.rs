use super::{Gradients, TrainError};
use crate::model::{ModelParams, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = ModelParams::zeros(params.d(), params.vocab_size());
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

fn update_tensor(
    p: &mut Tensor,
    g: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    config: &AdamConfig,
    bias1: f64,
    bias2: f64,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    for (((p, &g), m), v) in p
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
    }
}

/// One bias-corrected Adam update in place.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), TrainError> {
    if !params.same_dims(&grads.0) || !params.same_dims(&state.m) || !params.same_dims(&state.v) {
        return Err(TrainError::ShapeMismatch(format!(
            "params d={} V={}, gradients d={} V={}",
            params.d(),
            params.vocab_size(),
            grads.0.d(),
            grads.0.vocab_size()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    let gs = grads.0.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((_, p), (_, g)), (_, m)), (_, v)) in
        params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs)
    {
        update_tensor(p, g, m, v, config, bias1, bias2);
    }
    Ok(())
}
