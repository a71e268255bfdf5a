use crate::numeric::matrix::Matrix;
use crate::numeric::param::ParamSet;

/// ADAM optimizer state: per-parameter moment estimates plus the step count
/// used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        let shapes: Vec<Matrix> = params
            .iter()
            .map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect();
        AdamState {
            first_moment: shapes.clone(),
            second_moment: shapes,
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One bias-corrected ADAM update from the accumulated gradients. Frozen
/// parameters are untouched; all gradients are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) {
    state.step_count += 1;
    let t = state.step_count as f64;
    let bias1 = 1.0 - state.beta1.powf(t);
    let bias2 = 1.0 - state.beta2.powf(t);

    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    for id in ids {
        if !params.is_trainable(id) {
            continue;
        }
        let idx = id.0;
        let grad = params.grad(id).clone();
        let m = &mut state.first_moment[idx];
        let v = &mut state.second_moment[idx];
        let value = params.value_mut(id);
        for i in 0..grad.data().len() {
            let g = grad.data()[i];
            let mi = state.beta1 * m.data()[i] + (1.0 - state.beta1) * g;
            let vi = state.beta2 * v.data()[i] + (1.0 - state.beta2) * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            value.data_mut()[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    params.zero_grads();
}
