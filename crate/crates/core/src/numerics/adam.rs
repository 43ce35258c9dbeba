use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: store.zeros_like(),
            second_moment: store.zeros_like(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. Nothing is modified when any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() || self.first_moment.len() != store.len() {
            return Err(Error::structural(format!(
                "adam: {} parameters, {} gradients, {} moment slots",
                store.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (param, grad) in store.iter().zip(grads) {
            if param.value.shape() != grad.shape() {
                return Err(Error::structural(format!(
                    "adam: gradient for {} has shape {:?}, parameter has {:?}",
                    param.name,
                    grad.shape(),
                    param.value.shape()
                )));
            }
            if !grad.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter {}",
                    param.name
                )));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);

        for ((param, grad), (m, v)) in store.iter_mut().zip(grads).zip(
            self.first_moment
                .iter_mut()
                .zip(self.second_moment.iter_mut()),
        ) {
            let m = m.data_mut();
            let v = v.data_mut();
            for (i, (p, &g)) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .enumerate()
            {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamKind;

    fn single(values: Vec<f64>) -> ParamStore {
        let mut store = ParamStore::new();
        store.push("w", ParamKind::Weight, Tensor::vector(values));
        store
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = single(vec![0.5, -0.5, 2.0]);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let g = Tensor::vector(vec![3.0, -0.2, 1e-3]);
        adam.step(&mut store, std::slice::from_ref(&g)).unwrap();
        let before = [0.5, -0.5, 2.0];
        for ((after, b), gi) in store.get(0).value.data().iter().zip(before).zip(g.data()) {
            let delta = after - b;
            assert!((delta.abs() - 0.001).abs() < 1e-7, "delta {delta}");
            assert_eq!(delta.signum(), -gi.signum());
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = single(vec![1.0, 2.0]);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut store, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(store.get(0).value.data(), &[1.0, 2.0]);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut store = single(vec![1.0, 1.0]);
        let mut adam = AdamState::new(
            &store,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        for _ in 0..200 {
            let grad: Vec<f64> = store.get(0).value.data().iter().map(|w| 2.0 * w).collect();
            adam.step(&mut store, &[Tensor::vector(grad)]).unwrap();
        }
        let norm = store.get(0).value.sum_squares().sqrt();
        assert!(norm < 1e-2, "norm {norm}");
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = single(vec![1.0]);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        let mut g = Tensor::zeros(&[1]);
        g.data_mut()[0] = f64::NAN;
        match adam.step(&mut store, &[g]) {
            Err(Error::Training(msg)) => assert!(msg.contains('w')),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
        assert_eq!(store.get(0).value.data(), &[1.0]);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut store = single(vec![0.3, -0.7, 1.1]);
            let mut adam = AdamState::new(&store, AdamConfig::default());
            for k in 0..50 {
                let grad: Vec<f64> = store
                    .get(0)
                    .value
                    .data()
                    .iter()
                    .map(|w| w.sin() + k as f64 * 1e-3)
                    .collect();
                adam.step(&mut store, &[Tensor::vector(grad)]).unwrap();
            }
            store
                .get(0)
                .value
                .data()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
