use rand::Rng;

use crate::error::Result;
use crate::nn::{AdamState, Checkpoint, Grads, Mlp, ParamStore, RunningNorm, Tensor};

/// An MLP with its own parameters and optimizer.
#[derive(Debug, Clone)]
pub struct Net {
    pub store: ParamStore,
    pub mlp: Mlp,
    pub adam: AdamState,
}

impl Net {
    pub fn new<R: Rng>(prefix: &str, input: usize, output: usize, lr: f64, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let mlp = Mlp::standard(&mut store, prefix, input, output, rng);
        let adam = AdamState::new(&store, lr);
        Self { store, mlp, adam }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mlp.eval(&self.store, x)
    }

    pub fn apply(&mut self, grads: &Grads) -> Result<()> {
        self.adam.step(&mut self.store, grads)
    }

    pub fn save_into(&self, prefix: &str, ckpt: &mut Checkpoint) {
        for (i, (name, t)) in self.store.iter().enumerate() {
            ckpt.insert(name, t.clone());
            ckpt.insert(format!("{prefix}.adam.m.{i}"), self.adam.m[i].clone());
            ckpt.insert(format!("{prefix}.adam.v.{i}"), self.adam.v[i].clone());
        }
        ckpt.insert_vec(format!("{prefix}.adam.step"), vec![self.adam.step as f64]);
    }

    pub fn load_from(&mut self, prefix: &str, ckpt: &Checkpoint) -> Result<()> {
        let shapes: Vec<(String, Vec<usize>)> = self
            .store
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape.clone()))
            .collect();
        for (i, (name, shape)) in shapes.iter().enumerate() {
            self.store.tensors_mut()[i] = ckpt.expect(name, shape)?.clone();
            self.adam.m[i] = ckpt.expect(&format!("{prefix}.adam.m.{i}"), shape)?.clone();
            self.adam.v[i] = ckpt.expect(&format!("{prefix}.adam.v.{i}"), shape)?.clone();
        }
        self.adam.step = ckpt.expect(&format!("{prefix}.adam.step"), &[1])?.data[0] as u64;
        Ok(())
    }
}

pub fn save_norm(prefix: &str, norm: &RunningNorm, ckpt: &mut Checkpoint) {
    ckpt.insert_vec(format!("{prefix}.norm.count"), vec![norm.count]);
    ckpt.insert_vec(format!("{prefix}.norm.mean"), norm.mean.clone());
    ckpt.insert_vec(format!("{prefix}.norm.m2"), norm.m2.clone());
}

pub fn load_norm(prefix: &str, norm: &mut RunningNorm, ckpt: &Checkpoint) -> Result<()> {
    let d = norm.dim();
    norm.count = ckpt.expect(&format!("{prefix}.norm.count"), &[1])?.data[0];
    norm.mean = ckpt.expect(&format!("{prefix}.norm.mean"), &[d])?.data.clone();
    norm.m2 = ckpt.expect(&format!("{prefix}.norm.m2"), &[d])?.data.clone();
    Ok(())
}

pub fn zero(store: &mut ParamStore) {
    for t in store.tensors_mut() {
        *t = Tensor::zeros(t.shape.clone());
    }
}
