//! Adam optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::{DiffError, Graph, Var};

/// Per-parameter first/second moment buffers plus hyperparameters.
///
/// Moment buffers are kept in the same order as the parameter list handed to
/// [`AdamState::new`]; [`adam_step`] must be called with that same list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero-initialized moments for `params`, standard defaults
    /// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
    pub fn new(graph: &Graph, params: &[Var], lr: f64) -> Self {
        let first_moment = params.iter().map(|p| vec![0.0; graph.values(*p).len()]).collect();
        let second_moment = params.iter().map(|p| vec![0.0; graph.values(*p).len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment,
            second_moment,
        }
    }
}

/// One bias-corrected Adam update over `params`, reading gradients from the
/// graph's accumulators. A NaN anywhere in the gradients aborts the step
/// before any parameter is touched.
pub fn adam_step(graph: &mut Graph, params: &[Var], state: &mut AdamState) -> Result<(), DiffError> {
    if params.len() != state.first_moment.len() {
        return Err(DiffError::InvalidArg(format!(
            "adam_step: {} params but state tracks {}",
            params.len(),
            state.first_moment.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        let g = graph.grad(*p);
        if g.len() != state.first_moment[i].len() {
            return Err(DiffError::ShapeMismatch {
                op: "adam_step",
                expected: vec![state.first_moment[i].len()],
                got: vec![g.len()],
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(DiffError::Numeric(format!(
                "adam_step: non-finite gradient in parameter {i}; step aborted"
            )));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (i, p) in params.iter().enumerate() {
        let g = graph.grad(*p).to_vec();
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        let mut new_vals = graph.values(*p).to_vec();
        for j in 0..g.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            new_vals[j] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        graph.set_values(*p, &new_vals)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut g = Graph::new();
        let p = g.param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut st = AdamState::new(&g, &[p], 1e-3);
        for _ in 0..5 {
            adam_step(&mut g, &[p], &mut st).unwrap();
        }
        assert_eq!(g.values(p), &[1.0, -2.0, 0.5]);
        assert_eq!(st.step_count, 5);
    }

    #[test]
    fn first_step_is_bias_corrected_unit_step() {
        // p = 0, g = 1: after one step p ≈ -lr (up to the eps term).
        let mut g = Graph::new();
        let p = g.param(&[1], vec![0.0]).unwrap();
        let mut st = AdamState::new(&g, &[p], 1e-3);
        // plant a gradient of 1 by hand: loss = sum(p)
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        adam_step(&mut g, &[p], &mut st).unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((g.values(p)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn nan_gradient_aborts_without_touching_parameters() {
        let mut g = Graph::new();
        let p = g.param(&[2], vec![1.0, 2.0]).unwrap();
        let q = g.param(&[1], vec![3.0]).unwrap();
        let mut st = AdamState::new(&g, &[p, q], 1e-3);
        // corrupt q's gradient via a NaN-producing op chain is awkward here;
        // write into the accumulator through a backward of 0/0 instead
        let zero = g.const_scalar(0.0);
        let bad = g.mul(zero, zero).unwrap();
        let _ = bad;
        // directly: run a backward with a NaN seed by scaling a param by NaN
        let nan = g.scale(q, f64::NAN);
        let loss = g.sum(nan);
        g.backward(loss).unwrap();
        let before = g.values(p).to_vec();
        assert!(adam_step(&mut g, &[p, q], &mut st).is_err());
        assert_eq!(g.values(p), before.as_slice());
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn two_identical_runs_are_bitwise_identical() {
        let run = || {
            let mut g = Graph::new();
            let p = g.param(&[2], vec![0.3, -0.7]).unwrap();
            let mut st = AdamState::new(&g, &[p], 1e-2);
            for _ in 0..20 {
                let sq = g.mul(p, p).unwrap();
                let loss = g.sum(sq);
                g.backward(loss).unwrap();
                adam_step(&mut g, &[p], &mut st).unwrap();
                g.zero_grads();
                g.clear_tape();
            }
            g.values(p).to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
