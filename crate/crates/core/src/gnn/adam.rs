//! Bias-corrected Adam over the flat parameter vector.

use super::{GnnError, GnnGradients, GnnParameters};

/// First/second moment accumulators matching the parameter layout.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the standard moment constants
    /// (`beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`).
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    #[cfg(test)]
    pub(crate) fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }
}

/// One in-place update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// A non-finite gradient rejects the step: parameters, moments, and the
/// step counter are left untouched.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut GnnParameters,
    grads: &GnnGradients,
    lr: f64,
) -> Result<(), GnnError> {
    if grads.data().len() != params.data().len() || state.m.len() != params.data().len() {
        return Err(GnnError::ShapeMismatch(format!(
            "adam: {} gradients, {} parameters, {} moments",
            grads.data().len(),
            params.data().len(),
            state.m.len()
        )));
    }
    if !grads.data().iter().all(|v| v.is_finite()) {
        return Err(GnnError::NonFiniteGradient);
    }

    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let g = grads.data();
    let data = params.data_mut();
    for i in 0..data.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        data[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{Activation, GnnArchitecture};

    fn tiny_params(seed: u64) -> GnnParameters {
        let arch = GnnArchitecture {
            layers: 1,
            input_dim: 2,
            hidden_dim: 2,
            output_dim: 2,
            activation: Activation::Relu,
        };
        GnnParameters::random_init(arch, seed).unwrap()
    }

    fn grads_of(params: &GnnParameters, values: f64) -> GnnGradients {
        let mut g = GnnGradients::zeros(*params.arch());
        for v in &mut g.data {
            *v = values;
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = tiny_params(1);
        let before = params.data().to_vec();
        let mut state = AdamState::new(before.len());
        let zero = grads_of(&params, 0.0);
        adam_step(&mut state, &mut params, &zero, 0.01).unwrap();
        assert_eq!(params.data(), &before[..]);
        assert_eq!(state.step_count(), 1);
        // moments decayed (stay zero from zero)
        let (m, v) = state.moments();
        assert!(m.iter().all(|&x| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // with m_hat = g and v_hat = g^2, the first update is
        // -lr * g / (|g| + eps)
        let mut params = tiny_params(2);
        let before = params.data().to_vec();
        let g = 0.5;
        let lr = 0.1;
        let mut state = AdamState::new(before.len());
        let grads = grads_of(&params, g);
        adam_step(&mut state, &mut params, &grads, lr).unwrap();
        for (p, b) in params.data().iter().zip(&before) {
            let expected = b - lr * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn two_steps_match_hand_computed_scalar_trace() {
        // constants written out from the update rule, not shared with the
        // implementation
        let g: f64 = 0.5;
        let lr = 0.1;
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let p1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let p2 = p1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

        let mut params = tiny_params(3);
        let n = params.data().len();
        params.data_mut().fill(1.0);
        let mut state = AdamState::new(n);
        let grads = grads_of(&params, g);
        adam_step(&mut state, &mut params, &grads, lr).unwrap();
        for &p in params.data() {
            assert!((p - p1).abs() < 1e-14, "step 1: {p} vs {p1}");
        }
        adam_step(&mut state, &mut params, &grads, lr).unwrap();
        for &p in params.data() {
            assert!((p - p2).abs() < 1e-14, "step 2: {p} vs {p2}");
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut params = tiny_params(4);
        let before = params.data().to_vec();
        let mut state = AdamState::new(before.len());
        let mut bad = grads_of(&params, 1.0);
        bad.data[0] = f64::NAN;
        let err = adam_step(&mut state, &mut params, &bad, 0.01).unwrap_err();
        assert!(matches!(err, GnnError::NonFiniteGradient));
        assert_eq!(params.data(), &before[..]);
        assert_eq!(state.step_count(), 0);
    }
}
