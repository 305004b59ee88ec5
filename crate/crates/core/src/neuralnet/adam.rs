//! Adam optimizer state and update rule.

use super::{AdamHyper, NeuralNetError};

/// First/second moment accumulators for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { first: vec![0.0; len], second: vec![0.0; len], step: 0 }
    }
}

/// Standard Adam update with bias correction, applied in place.
pub fn adam_step(
    state: &mut AdamState,
    hyper: &AdamHyper,
    params: &mut [f64],
    grads: &[f64],
) -> Result<(), NeuralNetError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(NeuralNetError::ShapeMismatch { got: grads.len(), want: params.len() });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.first[i] = hyper.beta1 * state.first[i] + (1.0 - hyper.beta1) * g;
        state.second[i] = hyper.beta2 * state.second[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.first[i] / bc1;
        let v_hat = state.second[i] / bc2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> AdamHyper {
        AdamHyper::default()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &hyper(), &mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_hand_calculation() {
        // with bias correction, the first update is lr * g / (|g| + eps)
        let h = hyper();
        let mut state = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        let g = [0.3, -4.0];
        adam_step(&mut state, &h, &mut p, &g).unwrap();
        for i in 0..2 {
            let want = -h.lr * g[i] / (g[i].abs() + h.eps);
            assert!((p[i] - want).abs() < 1e-12, "param {i}: {} vs {}", p[i], want);
        }
    }

    #[test]
    fn constant_gradient_moves_parameter_monotonically() {
        let h = hyper();
        let mut state = AdamState::new(1);
        let mut p = vec![1.0];
        let mut prev = p[0];
        for _ in 0..100 {
            adam_step(&mut state, &h, &mut p, &[2.5]).unwrap();
            assert!(p[0] < prev, "positive gradient must decrease the parameter");
            prev = p[0];
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::new(2);
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            adam_step(&mut state, &hyper(), &mut p, &[1.0]),
            Err(NeuralNetError::ShapeMismatch { .. })
        ));
    }
}
