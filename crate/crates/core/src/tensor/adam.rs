use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::params::{ParamGrads, ParamStore};

/// Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with lr 0.001, betas 0.99 / 0.999.
    pub fn new(store: &ParamStore<T>) -> Self {
        Self::with_hyper(store, T::of(0.001), T::of(0.99), T::of(0.999), T::of(1e-8))
    }

    pub fn with_hyper(store: &ParamStore<T>, lr: T, beta1: T, beta2: T, epsilon: T) -> Self {
        let zeros: Vec<Vec<T>> = store.entries().iter().map(|e| vec![T::zero(); e.tensor.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0, lr, beta1, beta2, epsilon }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &ParamGrads<T>) -> Result<()> {
        if grads.grads.len() != store.len() {
            return Err(Error::Shape("gradient count does not match parameters".into()));
        }
        for id in store.ids() {
            if grads.get(id).len() != store.get(id).len() || self.m[id.0].len() != store.get(id).len() {
                return Err(Error::Shape(format!("gradient shape for `{}`", store.name(id))));
            }
            if grads.get(id).iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for id in store.ids() {
            let g = grads.get(id);
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
