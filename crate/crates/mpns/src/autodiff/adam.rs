//! Adam with bias correction, over flat lists of parameter matrices.

use super::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        Self {
            m: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One in-place update of every parameter from its gradient.
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::validation(format!(
            "adam_step arity mismatch: {} params, {} grads, {} states",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.shape() != g.shape() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
        let pv = p.as_mut_slice();
        let gv = g.as_slice();
        let mv = m.as_mut_slice();
        let vv = v.as_mut_slice();
        for i in 0..pv.len() {
            mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
            vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
            let mhat = mv[i] / bc1;
            let vhat = vv[i] / bc2;
            pv[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Matrix::filled(2, 2, 0.7)];
        let grads = vec![Matrix::zeros(2, 2)];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert_eq!(params[0], Matrix::filled(2, 2, 0.7));
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_about_lr() {
        // t=1: mhat = g, vhat = g^2, delta = -lr * g / (|g| + eps).
        let mut params = vec![Matrix::scalar(0.0)];
        let grads = vec![Matrix::scalar(1.0)];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let expected = -cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((params[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descent_converges_toward_zero() {
        let mut params = vec![Matrix::scalar(1.0)];
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        for _ in 0..400 {
            let x = params[0].item();
            let grads = vec![Matrix::scalar(2.0 * x)];
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        assert!(params[0].item().abs() < 1e-2, "x = {}", params[0].item());
    }
}
