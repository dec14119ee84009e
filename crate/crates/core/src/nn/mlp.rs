use rand::Rng;

use super::graph::{Graph, NodeId};
use super::tensor::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Dense layers with ReLU between them and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    sizes: Vec<usize>,
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`; weights and biases drawn from
    /// `uniform(-sqrt(1/fan_in), sqrt(1/fan_in))`.
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, win) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            let w = store.add_uniform(format!("{prefix}.l{i}.w"), vec![fan_out, fan_in], bound, rng);
            let b = store.add_uniform(format!("{prefix}.l{i}.b"), vec![fan_out], bound, rng);
            layers.push((w, b));
        }
        Self {
            layers,
            sizes: sizes.to_vec(),
        }
    }

    /// Two hidden layers of width 64.
    pub fn standard<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self::new(store, prefix, &[input, 64, 64, output], rng)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("sizes")
    }

    pub fn params(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        if g.value(x).len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "mlp expects {} inputs, got {}",
                self.input_dim(),
                g.value(x).len()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.affine(w, b, h);
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without recording gradients of interest.
    pub fn eval(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new(store);
        let xi = g.input(x.to_vec());
        let out = self.forward(&mut g, xi)?;
        Ok(g.value(out).to_vec())
    }
}
