//! Tape-based reverse-mode differentiation over small vectors.
//!
//! A [`Graph`] records a forward pass against a borrowed [`ParamStore`];
//! [`Graph::backward`] accumulates parameter gradients into a [`Grads`].

use super::tensor::{Grads, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position of the node on its tape.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Affine { w: ParamId, b: ParamId, x: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    Sum(NodeId),
    Gather(NodeId, usize),
    LogSoftmax { x: NodeId, mask: Vec<bool> },
    Softmax { x: NodeId, mask: Vec<bool> },
    Entropy { x: NodeId, mask: Vec<bool> },
    PlackettLuce { x: NodeId, order: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn masked_log_softmax(z: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = z
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "masked softmax needs at least one valid finite logit");
    let lse = max
        + z.iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| (v - max).exp())
            .sum::<f64>()
            .ln();
    z.iter()
        .zip(mask)
        .map(|(v, &m)| if m { v - lse } else { 0.0 })
        .collect()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(32),
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, n: NodeId) -> &[f64] {
        &self.nodes[n.0].value
    }

    pub fn scalar(&self, n: NodeId) -> f64 {
        self.nodes[n.0].value[0]
    }

    pub fn input(&mut self, v: Vec<f64>) -> NodeId {
        self.push(Op::Input, v)
    }

    /// `W x + b` with `W` of shape `[out, in]`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: NodeId) -> NodeId {
        let wt = self.params.get(w);
        let bt = self.params.get(b);
        let (rows, cols) = (wt.shape[0], wt.shape[1]);
        let xv = &self.nodes[x.0].value;
        assert_eq!(xv.len(), cols, "affine input width");
        assert_eq!(bt.data.len(), rows, "affine bias width");
        let mut out = bt.data.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wt.data[r * cols..(r + 1) * cols];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(Op::Affine { w, b, x }, out)
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.nodes[x.0].value.iter().map(|&a| f(a)).collect();
        self.push(op, v)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Relu(x), |a| a.max(0.0))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Sigmoid(x), |a| {
            if a >= 0.0 {
                1.0 / (1.0 + (-a).exp())
            } else {
                let e = a.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Square(x), |a| a * a)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(x, Op::Scale(x, c), |a| a * c)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "elementwise widths");
        let v = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        self.push(op, v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let v = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(Op::Concat(parts.to_vec()), v)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x.0].value.iter().sum();
        self.push(Op::Sum(x), vec![s])
    }

    pub fn gather(&mut self, x: NodeId, i: usize) -> NodeId {
        let v = self.nodes[x.0].value[i];
        self.push(Op::Gather(x, i), vec![v])
    }

    /// Log-probabilities over masked entries; masked-out entries read 0 and carry no gradient.
    pub fn log_softmax(&mut self, x: NodeId, mask: &[bool]) -> NodeId {
        let v = masked_log_softmax(&self.nodes[x.0].value, mask);
        self.push(Op::LogSoftmax { x, mask: mask.to_vec() }, v)
    }

    pub fn softmax(&mut self, x: NodeId, mask: &[bool]) -> NodeId {
        let v = masked_log_softmax(&self.nodes[x.0].value, mask)
            .into_iter()
            .zip(mask)
            .map(|(l, &m)| if m { l.exp() } else { 0.0 })
            .collect();
        self.push(Op::Softmax { x, mask: mask.to_vec() }, v)
    }

    /// Entropy of the masked softmax of logits `x`.
    pub fn entropy(&mut self, x: NodeId, mask: &[bool]) -> NodeId {
        let lp = masked_log_softmax(&self.nodes[x.0].value, mask);
        let h = -lp
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(l, _)| l.exp() * l)
            .sum::<f64>();
        self.push(Op::Entropy { x, mask: mask.to_vec() }, vec![h])
    }

    /// Plackett-Luce log-probability of drawing `order` from scores `x`.
    /// Entries of `x` absent from `order` do not take part.
    pub fn plackett_luce(&mut self, x: NodeId, order: &[usize]) -> NodeId {
        let lp = super::dist::plackett_luce_log_prob(&self.nodes[x.0].value, order);
        self.push(
            Op::PlackettLuce {
                x,
                order: order.to_vec(),
            },
            vec![lp],
        )
    }

    /// Reverse pass from scalar `root`. Parameter gradients are added into `grads`;
    /// the returned vector holds the gradient of every node.
    pub fn backward(&self, root: NodeId, grads: &mut Grads) -> Vec<Vec<f64>> {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward needs a scalar root");
        let mut g: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        g[root.0][0] = 1.0;
        for i in (0..=root.0).rev() {
            let gi = std::mem::take(&mut g[i]);
            if gi.iter().all(|&v| v == 0.0) {
                g[i] = gi;
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let cols = wt.shape[1];
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = &mut grads.0[w.0].data;
                        for (r, &go) in gi.iter().enumerate() {
                            if go != 0.0 {
                                let row = &mut gw[r * cols..(r + 1) * cols];
                                for (gwv, xv) in row.iter_mut().zip(xv) {
                                    *gwv += go * xv;
                                }
                            }
                        }
                    }
                    for (gb, go) in grads.0[b.0].data.iter_mut().zip(&gi) {
                        *gb += go;
                    }
                    let gx = &mut g[x.0];
                    for (r, &go) in gi.iter().enumerate() {
                        if go != 0.0 {
                            let row = &wt.data[r * cols..(r + 1) * cols];
                            for (gxv, wv) in gx.iter_mut().zip(row) {
                                *gxv += go * wv;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    for ((gx, &go), &a) in g[x.0].iter_mut().zip(&gi).zip(xv) {
                        if a > 0.0 {
                            *gx += go;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    for ((gx, &go), &s) in g[x.0].iter_mut().zip(&gi).zip(&node.value) {
                        *gx += go * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    for ((gx, &go), &t) in g[x.0].iter_mut().zip(&gi).zip(&node.value) {
                        *gx += go * (1.0 - t * t);
                    }
                }
                Op::Exp(x) => {
                    for ((gx, &go), &e) in g[x.0].iter_mut().zip(&gi).zip(&node.value) {
                        *gx += go * e;
                    }
                }
                Op::Square(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    for ((gx, &go), a) in g[x.0].iter_mut().zip(&gi).zip(xv) {
                        *gx += 2.0 * go * a;
                    }
                }
                Op::Scale(x, c) => {
                    for (gx, &go) in g[x.0].iter_mut().zip(&gi) {
                        *gx += go * c;
                    }
                }
                Op::Add(a, b) => {
                    for (ga, &go) in g[a.0].iter_mut().zip(&gi) {
                        *ga += go;
                    }
                    for (gb, &go) in g[b.0].iter_mut().zip(&gi) {
                        *gb += go;
                    }
                }
                Op::Sub(a, b) => {
                    for (ga, &go) in g[a.0].iter_mut().zip(&gi) {
                        *ga += go;
                    }
                    for (gb, &go) in g[b.0].iter_mut().zip(&gi) {
                        *gb -= go;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for ((ga, &go), bv) in g[a.0].iter_mut().zip(&gi).zip(&bv) {
                        *ga += go * bv;
                    }
                    for ((gb, &go), av) in g[b.0].iter_mut().zip(&gi).zip(&av) {
                        *gb += go * av;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        for (gp, &go) in g[p.0].iter_mut().zip(&gi[off..off + n]) {
                            *gp += go;
                        }
                        off += n;
                    }
                }
                Op::Sum(x) => {
                    for gx in g[x.0].iter_mut() {
                        *gx += gi[0];
                    }
                }
                Op::Gather(x, idx) => {
                    g[x.0][*idx] += gi[0];
                }
                Op::LogSoftmax { x, mask } => {
                    // d lp_i / d z_j = [i = j] - p_j over valid entries
                    let total: f64 = gi.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
                    for (j, gx) in g[x.0].iter_mut().enumerate() {
                        if mask[j] {
                            *gx += gi[j] - node.value[j].exp() * total;
                        }
                    }
                }
                Op::Softmax { x, mask } => {
                    let dot: f64 = gi.iter().zip(&node.value).map(|(a, b)| a * b).sum();
                    for (j, gx) in g[x.0].iter_mut().enumerate() {
                        if mask[j] {
                            *gx += node.value[j] * (gi[j] - dot);
                        }
                    }
                }
                Op::Entropy { x, mask } => {
                    let lp = masked_log_softmax(&self.nodes[x.0].value, mask);
                    let h = node.value[0];
                    for (j, gx) in g[x.0].iter_mut().enumerate() {
                        if mask[j] {
                            *gx += gi[0] * (-(lp[j].exp()) * (lp[j] + h));
                        }
                    }
                }
                Op::PlackettLuce { x, order } => {
                    let s = &self.nodes[x.0].value;
                    let gx = &mut g[x.0];
                    for k in 0..order.len() {
                        let rest = &order[k..];
                        let max = rest.iter().map(|&i| s[i]).fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = rest.iter().map(|&i| (s[i] - max).exp()).sum();
                        gx[order[k]] += gi[0];
                        for &i in rest {
                            gx[i] -= gi[0] * (s[i] - max).exp() / z;
                        }
                    }
                }
            }
            g[i] = gi;
        }
        g
    }
}
