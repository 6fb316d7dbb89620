//! Adam optimizer with bias correction.

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// Adam hyperparameters. The defaults are b₁ = 0.9, b₂ = 0.999, ε = 1e−8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { b1: 0.9, b2: 0.999, eps: 1e-8 }
    }
}

/// One Adam minimization step in place. Maximization is performed by the
/// caller negating the gradient before the call.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, hp: AdamParams) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let b1t = 1.0 - hp.b1.powi(state.t as i32);
    let b2t = 1.0 - hp.b2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = hp.b1 * state.m[i] + (1.0 - hp.b1) * grads[i];
        state.v[i] = hp.b2 * state.v[i] + (1.0 - hp.b2) * grads[i] * grads[i];
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}
