use crate::codec::{round_f32, CodecParams};
use crate::codec::network::Gradients;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates per weight, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &CodecParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimizerState { first: zeros.clone(), second: zeros, step: 0 }
    }
}

/// One bias-corrected adaptive-moment update on a flat slice.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, lr: f64) {
    let c1 = 1.0 - BETA1.powi(step as i32);
    let c2 = 1.0 - BETA2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// Applies one step to the tensors in `tensors` and leaves all others untouched.
/// Updated weights are rounded to `f32` precision.
pub fn adam_step(
    params: &mut CodecParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    tensors: std::ops::Range<usize>,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0, reason: "non-finite gradient".into() });
    }
    state.step += 1;
    let step = state.step;
    let ps = params.tensors_mut();
    for i in tensors {
        adam_update(&mut ps[i], &grads.tensors[i], &mut state.first[i], &mut state.second[i], step, lr);
        ps[i].iter_mut().for_each(|w| *w = round_f32(*w));
    }
    Ok(())
}
