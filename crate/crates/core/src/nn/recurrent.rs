use rand::Rng;

use super::graph::{Graph, NodeId};
use super::tensor::{ParamId, ParamStore};

/// Single-gate recurrent cell:
/// `z = σ(Wz [x; h] + bz)`, `c = tanh(Wc [x; h] + bc)`, `h' = h + z ⊙ (c - h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedCell {
    gate: (ParamId, ParamId),
    cand: (ParamId, ParamId),
    input: usize,
    hidden: usize,
}

impl GatedCell {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = input + hidden;
        let bound = (1.0 / fan_in as f64).sqrt();
        let gw = store.add_uniform(format!("{prefix}.gate.w"), vec![hidden, fan_in], bound, rng);
        let gb = store.add_uniform(format!("{prefix}.gate.b"), vec![hidden], bound, rng);
        let cw = store.add_uniform(format!("{prefix}.cand.w"), vec![hidden, fan_in], bound, rng);
        let cb = store.add_uniform(format!("{prefix}.cand.b"), vec![hidden], bound, rng);
        Self {
            gate: (gw, gb),
            cand: (cw, cb),
            input,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, g: &mut Graph<'_>, x: NodeId, h: NodeId) -> NodeId {
        let xh = g.concat(&[x, h]);
        let za = g.affine(self.gate.0, self.gate.1, xh);
        let z = g.sigmoid(za);
        let ca = g.affine(self.cand.0, self.cand.1, xh);
        let c = g.tanh(ca);
        let d = g.sub(c, h);
        let zd = g.mul(z, d);
        g.add(h, zd)
    }
}
