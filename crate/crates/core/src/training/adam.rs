use std::collections::BTreeMap;

use super::TrainError;
use crate::backend::{Gradients, ParamStore, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments and step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction and decoupled weight decay.
/// Parameters without a gradient are left untouched.
pub fn adam_step(params: &mut ParamStore, grads: &Gradients, state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<(), TrainError> {
    if !grads.is_finite() {
        let bad = grads.iter().find(|(_, g)| !g.is_finite()).map(|(n, _)| n.to_string()).unwrap_or_default();
        return Err(TrainError::NonFiniteGradient(bad));
    }
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(TrainError::Invalid(format!("gradient of `{name}` has shape {:?}, parameter {:?}", g.shape(), p.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (name, g) in grads.iter() {
        let m = state.m.entry(name.to_string()).or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state.v.entry(name.to_string()).or_insert_with(|| Tensor::zeros(g.shape()));
        let p = params.get_mut(name)?;
        let (m, v) = (m.data_mut(), v.data_mut());
        for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *w -= lr * (mhat / (vhat.sqrt() + EPSILON) + weight_decay * *w);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Tape;

    fn grads_for(store: &ParamStore, g: Vec<f64>) -> Gradients {
        // d/dp of Σ p·g is g
        let tape = Tape::new();
        let p = tape.param("p", store.get("p").unwrap());
        let c = tape.constant(Tensor::vector(g));
        tape.grad(&p.mul(&c).unwrap().sum().unwrap(), store).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(vec![1.0, -2.0]));
        let g = grads_for(&store, vec![0.0, 0.0]);
        let mut st = AdamState::new();
        adam_step(&mut store, &g, &mut st, 0.1, 0.0).unwrap();
        assert_eq!(store.get("p").unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(vec![1.0, 1.0, 1.0]));
        let g = grads_for(&store, vec![3.0, -0.5, 1e-3]);
        let mut st = AdamState::new();
        adam_step(&mut store, &g, &mut st, 0.01, 0.0).unwrap();
        let p = store.get("p").unwrap().data();
        // mhat = g, vhat = g²: step = lr · g / (|g| + ε)
        for (pi, gi) in p.iter().zip([3.0f64, -0.5, 1e-3]) {
            let expect = 1.0 - 0.01 * gi / (gi.abs() + EPSILON);
            assert!((pi - expect).abs() < 1e-15);
        }
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn decoupled_weight_decay_shrinks() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(vec![2.0]));
        let g = grads_for(&store, vec![0.0]);
        adam_step(&mut store, &g, &mut AdamState::new(), 0.1, 0.5).unwrap();
        assert!((store.get("p").unwrap().data()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(vec![3.0, -4.0]));
        let mut st = AdamState::new();
        for _ in 0..2000 {
            let tape = Tape::new();
            let p = tape.param("p", store.get("p").unwrap());
            let loss = p.mul(&p).unwrap().sum().unwrap();
            let g = tape.grad(&loss, &store).unwrap();
            adam_step(&mut store, &g, &mut st, 0.05, 0.0).unwrap();
        }
        assert!(store.get("p").unwrap().norm() < 1e-2);
    }
}
