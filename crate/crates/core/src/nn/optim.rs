use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Adam with a learning rate that decays linearly to zero over `total_steps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub total_steps: u64,
    pub step: u64,
    #[serde(skip)]
    pub(crate) first: Vec<Vec<f32>>,
    #[serde(skip)]
    pub(crate) second: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f32, total_steps: u64) -> Self {
        let zeros: Vec<Vec<f32>> = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: total_steps.max(1),
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Learning rate used by the next call to [`Adam::update`].
    pub fn current_lr(&self) -> f32 {
        let remaining = self.total_steps.saturating_sub(self.step) as f32;
        self.learning_rate * remaining / self.total_steps as f32
    }

    pub fn moments(&self) -> (&[Vec<f32>], &[Vec<f32>]) {
        (&self.first, &self.second)
    }

    pub fn set_moments(&mut self, first: Vec<Vec<f32>>, second: Vec<Vec<f32>>) {
        self.first = first;
        self.second = second;
    }

    /// Applies one step from the accumulated gradients, then clears them.
    pub fn update(&mut self, store: &mut ParamStore) {
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                values[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Tensor};

    #[test]
    fn linear_decay_reaches_zero() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0)).unwrap();
        let mut adam = Adam::new(&store, 0.1, 4);
        assert!((adam.current_lr() - 0.1).abs() < 1e-7);
        for _ in 0..2 {
            adam.update(&mut store);
        }
        assert!((adam.current_lr() - 0.05).abs() < 1e-7);
        for _ in 0..2 {
            adam.update(&mut store);
        }
        assert_eq!(adam.current_lr(), 0.0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row_vector(vec![3.0, -2.0])).unwrap();
        let mut adam = Adam::new(&store, 0.1, 500);
        for _ in 0..500 {
            let mut g = Graph::new(&store, true, 0);
            let x = g.param(w);
            let sq = g.mul(x, x).unwrap();
            let loss = g.sum(sq);
            let grads = g.backward(loss).unwrap();
            store.accumulate(&grads);
            adam.update(&mut store);
        }
        assert!(store.value(w).data().iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row_vector(vec![0.25, -1.5])).unwrap();
        let before = store.value(w).clone();
        let mut adam = Adam::new(&store, 0.1, 10);
        adam.update(&mut store);
        assert_eq!(store.value(w), &before);
    }
}
