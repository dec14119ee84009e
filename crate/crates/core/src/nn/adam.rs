use serde::{Deserialize, Serialize};

use super::tensor::{Grads, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros = |p: &ParamStore| p.tensors().iter().map(|t| Tensor::zeros(t.shape.clone())).collect();
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(params),
            v: zeros(params),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        if grads.0.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape("adam state does not match parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = &grads.0[i];
            if g.shape != p.shape {
                return Err(Error::Shape(format!("grad {:?} vs param {:?}", g.shape, p.shape)));
            }
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::new(vec![1], vec![v]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(1.5);
        let mut adam = AdamState::new(&p, 1e-3);
        let g = p.zero_grads();
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.tensors()[0].data[0], 1.5);
        assert_eq!(adam.step, 1);
        adam.step(&mut p, &g).unwrap();
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr_sign() {
        let mut p = one_param(0.0);
        let lr = 1e-4;
        let mut adam = AdamState::new(&p, lr);
        let mut g = p.zero_grads();
        g.0[0].data[0] = -3.0;
        let mut prev = 0.0;
        let mut delta = 0.0;
        for _ in 0..1000 {
            adam.step(&mut p, &g).unwrap();
            let now = p.tensors()[0].data[0];
            delta = now - prev;
            prev = now;
        }
        assert!((delta - lr).abs() / lr < 0.01, "delta {delta}");
    }
}
