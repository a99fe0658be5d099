//! Adam with bias-corrected moment estimates.

use crate::error::{mismatch, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// First and second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// One in-place Adam update of `params` given matching `grads`.
pub fn adam_step(params: &mut [Tensor], grads: &[&Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() {
        return Err(mismatch("adam_step", format!("{} params, {} grads", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(mismatch("adam_step", format!("param {:?} vs grad {:?}", p.shape(), g.shape())));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
        return Err(mismatch("adam_step", "state does not match parameter layout"));
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::from_fn(&[4], |i| i as f64)];
        let g = Tensor::new(&[4], vec![3.0, -0.5, 1e-3, -7.0]).unwrap();
        let mut state = AdamState::new();
        adam_step(&mut params, &[&g], &mut state, &cfg).unwrap();
        for (i, (&p, &gv)) in params[0].data().iter().zip(g.data()).enumerate() {
            let moved = p - i as f64;
            assert!((moved + cfg.lr * gv.signum()).abs() < 1e-7, "moved {moved}");
        }
        assert_eq!(state.steps_taken(), 1);
    }

    #[test]
    fn minimises_a_quadratic() {
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut params = vec![Tensor::new(&[2], vec![3.0, -2.0]).unwrap()];
        let mut state = AdamState::new();
        for _ in 0..2000 {
            let g = params[0].map(|x| 2.0 * x);
            adam_step(&mut params, &[&g], &mut state, &cfg).unwrap();
        }
        assert!(params[0].data().iter().all(|x| x.abs() < 1e-3));
    }

    #[test]
    fn rejects_layout_changes() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new();
        let mut a = vec![Tensor::zeros(&[2])];
        let g = Tensor::zeros(&[2]);
        adam_step(&mut a, &[&g], &mut state, &cfg).unwrap();
        let mut b = vec![Tensor::zeros(&[3])];
        let g3 = Tensor::zeros(&[3]);
        assert!(adam_step(&mut b, &[&g3], &mut state, &cfg).is_err());
        assert!(adam_step(&mut a, &[&g3], &mut AdamState::new(), &cfg).is_err());
    }
}
