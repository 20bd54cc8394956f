use super::ParamSet;
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: ParamSet>(params: &P, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub fn adam_update<P: ParamSet>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<()> {
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::DimensionMismatch(format!(
            "adam: {} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
        if p.len() != g.data.len() || p.len() != state.first[i].len() {
            return Err(Error::DimensionMismatch(format!(
                "adam: tensor {} has {} values, gradient {}",
                g.name,
                p.len(),
                g.data.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(&grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
