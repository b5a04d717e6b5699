//! Bias-corrected Adam.

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update applied in place. `step_index` counts from 1.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    cfg: AdamConfig,
    step_index: u64,
) -> Result<()> {
    if params.len() != grads.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::input("adam_step: buffer shapes differ"));
    }
    if step_index == 0 {
        return Err(Error::input("adam_step: step_index starts at 1"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("gradient"));
    }
    let t = step_index as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Optimizer state for a whole [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros = || {
            store
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.rows, e.value.cols))
                .collect::<Vec<_>>()
        };
        Adam {
            cfg,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    /// Update every parameter with a per-parameter learning rate.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Grads,
        lr: impl Fn(ParamId) -> f64,
    ) -> Result<()> {
        for (id, g) in grads.iter() {
            if !g.all_finite() {
                return Err(Error::numeric(format!("gradient of {}", store.name(id))));
            }
        }
        self.step += 1;
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            let rate = lr(id);
            let i = id.index();
            adam_step(
                &mut store.get_mut(id).data,
                &grads.get(id).data,
                &mut self.m[i].data,
                &mut self.v[i].data,
                rate,
                self.cfg,
                self.step,
            )?;
            if !store.get(id).all_finite() {
                return Err(Error::numeric(format!("parameter {}", store.name(id))));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.0];
        let before = p.clone();
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        adam_step(&mut p, &[0.0; 3], &mut m, &mut v, 0.1, AdamConfig::default(), 1).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // after bias correction mhat = g and vhat = g^2, so the step is
        // lr * g / (|g| + eps)
        for g in [0.3, -5.0, 1e-3] {
            let mut p = vec![0.0];
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            adam_step(&mut p, &[g], &mut m, &mut v, 0.01, AdamConfig::default(), 1).unwrap();
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expect).abs() < 1e-15, "{} vs {}", p[0], expect);
            assert!((p[0].abs() - 0.01).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        let r = adam_step(&mut p, &[f64::NAN], &mut m, &mut v, 0.1, AdamConfig::default(), 1);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn non_finite_parameter_is_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_vec(1, 2, vec![1.0, f64::NAN])).unwrap();
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = store.zero_grads();
        let r = adam.step(&mut store, &grads, |_| 0.1);
        assert!(matches!(r, Err(Error::Numeric { ref term }) if term.contains('w')), "{r:?}");
    }

    #[test]
    fn trajectories_repeat() {
        let run = || {
            let mut p = vec![0.5, -0.25];
            let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
            for t in 1..=50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x - 0.1).collect();
                adam_step(&mut p, &g, &mut m, &mut v, 0.05, AdamConfig::default(), t).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
