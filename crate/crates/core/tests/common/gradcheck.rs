//! Central finite differences against the tape's reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rebalance_core::nn::{a2c_loss_nodes, GatedCell, Graph, Mlp, NodeId, ParamStore};

pub const INSTANCES: usize = 100;
const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so that vanishing gradients compare absolutely.
const FLOOR: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

fn vec_away_from_zero(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(lo..hi);
            if v.abs() < 0.05 {
                v + 0.1
            } else {
                v
            }
        })
        .collect()
}

/// `Σ w ⊙ node`, making any node a scalar.
fn project(g: &mut Graph<'_>, node: NodeId, w: &[f64]) -> NodeId {
    let wn = g.input(w.to_vec());
    let m = g.mul(node, wn);
    g.sum(m)
}

/// Compare d out / d x for an input-only graph.
fn check_input_op(name: &str, x: &[f64], f: &dyn Fn(&mut Graph<'_>, NodeId) -> NodeId) {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let xi = g.input(x.to_vec());
    let out = f(&mut g, xi);
    let mut grads = store.zero_grads();
    let node_grads = g.backward(out, &mut grads);
    let analytic = &node_grads[xi.index()];
    let eval = |x: &[f64]| {
        let mut g = Graph::new(&store);
        let xi = g.input(x.to_vec());
        let o = f(&mut g, xi);
        g.scalar(o)
    };
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += H;
        xm[i] -= H;
        let num = (eval(&xp) - eval(&xm)) / (2.0 * H);
        let e = rel_err(analytic[i], num);
        assert!(
            e < REL_TOL,
            "{name}: d/dx[{i}] analytic {} numeric {num} rel {e}",
            analytic[i]
        );
    }
}

/// Compare d loss / d params for every parameter element.
fn check_params(name: &str, store: &mut ParamStore, f: &dyn Fn(&ParamStore) -> (f64, Vec<Vec<f64>>)) {
    let (_, analytic) = f(store);
    for t in 0..store.len() {
        for j in 0..store.tensors()[t].len() {
            let orig = store.tensors()[t].data[j];
            store.tensors_mut()[t].data[j] = orig + H;
            let fp = f(store).0;
            store.tensors_mut()[t].data[j] = orig - H;
            let fm = f(store).0;
            store.tensors_mut()[t].data[j] = orig;
            let num = (fp - fm) / (2.0 * H);
            let e = rel_err(analytic[t][j], num);
            assert!(
                e < REL_TOL,
                "{name}: param {t}[{j}] analytic {} numeric {num} rel {e}",
                analytic[t][j]
            );
        }
    }
}

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.75)).collect();
    let k = rng.gen_range(0..n);
    m[k] = true;
    m
}

pub fn elementwise_and_structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..INSTANCES {
        let n = rng.gen_range(2..8);
        let x = vec_away_from_zero(&mut rng, n, -2.0, 2.0);
        let y = vec_away_from_zero(&mut rng, n, -2.0, 2.0);
        let w = vec_away_from_zero(&mut rng, n, -1.5, 1.5);
        let c: f64 = rng.gen_range(-3.0..3.0);
        let k = rng.gen_range(0..n);

        check_input_op("relu", &x, &|g, x| {
            let r = g.relu(x);
            project(g, r, &w)
        });
        check_input_op("sigmoid", &x, &|g, x| {
            let r = g.sigmoid(x);
            project(g, r, &w)
        });
        check_input_op("tanh", &x, &|g, x| {
            let r = g.tanh(x);
            project(g, r, &w)
        });
        check_input_op("exp", &x, &|g, x| {
            let r = g.exp(x);
            project(g, r, &w)
        });
        check_input_op("square", &x, &|g, x| {
            let r = g.square(x);
            project(g, r, &w)
        });
        check_input_op("scale", &x, &|g, x| {
            let r = g.scale(x, c);
            project(g, r, &w)
        });
        check_input_op("add/sub/mul", &x, &|g, x| {
            let yi = g.input(y.clone());
            let a = g.add(x, yi);
            let s = g.sub(a, yi);
            let m = g.mul(s, x);
            project(g, m, &w)
        });
        check_input_op("concat/gather", &x, &|g, x| {
            let t = g.tanh(x);
            let cat = g.concat(&[x, t]);
            let a = g.gather(cat, k);
            let b = g.gather(cat, n + k);
            let s = g.mul(a, b);
            g.sum(s)
        });
    }
}

pub fn distribution_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..INSTANCES {
        let n = rng.gen_range(2..10);
        let x = vec_away_from_zero(&mut rng, n, -3.0, 3.0);
        let w = vec_away_from_zero(&mut rng, n, -1.5, 1.5);
        let mask = random_mask(&mut rng, n);
        let valid: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let a = valid[rng.gen_range(0..valid.len())];

        check_input_op("log_softmax", &x, &|g, x| {
            let l = g.log_softmax(x, &mask);
            project(g, l, &w)
        });
        check_input_op("log_softmax gather", &x, &|g, x| {
            let l = g.log_softmax(x, &mask);
            g.gather(l, a)
        });
        check_input_op("softmax", &x, &|g, x| {
            let p = g.softmax(x, &mask);
            project(g, p, &w)
        });
        check_input_op("entropy", &x, &|g, x| g.entropy(x, &mask));

        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        order.truncate(rng.gen_range(1..=n));
        check_input_op("plackett_luce", &x, &|g, x| g.plackett_luce(x, &order));
        check_input_op("plackett_luce over sigmoid", &x, &|g, x| {
            let s = g.sigmoid(x);
            g.plackett_luce(s, &order)
        });
    }
}

pub fn affine_mlp_and_gated_cell_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..INSTANCES {
        let (i, o) = (rng.gen_range(2..6), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[i, 5, o], &mut rng);
        let x = vec_away_from_zero(&mut rng, i, -2.0, 2.0);
        let w = vec_away_from_zero(&mut rng, o, -1.0, 1.0);
        check_params("mlp", &mut store, &|s| {
            let mut g = Graph::new(s);
            let xi = g.input(x.clone());
            let out = mlp.forward(&mut g, xi).unwrap();
            let l = project(&mut g, out, &w);
            let mut grads = s.zero_grads();
            g.backward(l, &mut grads);
            (g.scalar(l), grads.0.into_iter().map(|t| t.data).collect())
        });

        let hidden = rng.gen_range(1..4);
        let mut store = ParamStore::new();
        let cell = GatedCell::new(&mut store, "c", i, hidden, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| vec_away_from_zero(&mut rng, i, -2.0, 2.0)).collect();
        let wh = vec_away_from_zero(&mut rng, hidden, -1.0, 1.0);
        check_params("gated cell", &mut store, &|s| {
            let mut g = Graph::new(s);
            let mut h = g.input(vec![0.0; hidden]);
            for x in &xs {
                let xi = g.input(x.clone());
                h = cell.step(&mut g, xi, h);
            }
            let l = project(&mut g, h, &wh);
            let mut grads = s.zero_grads();
            g.backward(l, &mut grads);
            (g.scalar(l), grads.0.into_iter().map(|t| t.data).collect())
        });
    }
}

/// The vehicle agent's losses: masked categorical actor with entropy bonus,
/// squared-error critic, advantage held constant in the actor term.
pub fn composed_a2c_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..INSTANCES {
        let d = rng.gen_range(3..7);
        let slots = rng.gen_range(2..10);
        let mut actor_store = ParamStore::new();
        let actor = Mlp::new(&mut actor_store, "a", &[d, 6, slots], &mut rng);
        let mut critic_store = ParamStore::new();
        let critic = Mlp::new(&mut critic_store, "v", &[d, 6, 1], &mut rng);
        let x = vec_away_from_zero(&mut rng, d, -2.0, 2.0);
        let mask = random_mask(&mut rng, slots);
        let valid: Vec<usize> = (0..slots).filter(|&i| mask[i]).collect();
        let action = valid[rng.gen_range(0..valid.len())];
        let target: f64 = rng.gen_range(-3.0..3.0);
        let beta: f64 = rng.gen_range(0.0..0.1);
        let value = critic.eval(&critic_store, &x).unwrap()[0];

        check_params("a2c actor", &mut actor_store, &|s| {
            let mut g = Graph::new(s);
            let xi = g.input(x.clone());
            let logits = actor.forward(&mut g, xi).unwrap();
            let lp = g.log_softmax(logits, &mask);
            let lpa = g.gather(lp, action);
            let ent = g.entropy(logits, &mask);
            let v = g.input(vec![value]);
            let (a, _) = a2c_loss_nodes(&mut g, lpa, ent, v, target, beta);
            let mut grads = s.zero_grads();
            g.backward(a, &mut grads);
            (g.scalar(a), grads.0.into_iter().map(|t| t.data).collect())
        });
        check_params("a2c critic", &mut critic_store, &|s| {
            let mut g = Graph::new(s);
            let xi = g.input(x.clone());
            let v = critic.forward(&mut g, xi).unwrap();
            let zero = g.input(vec![0.0]);
            let (_, c) = a2c_loss_nodes(&mut g, zero, zero, v, target, beta);
            let mut grads = s.zero_grads();
            g.backward(c, &mut grads);
            (g.scalar(c), grads.0.into_iter().map(|t| t.data).collect())
        });

        // Grid-agent actor: Plackett-Luce over sigmoid scores, scaled by the advantage.
        let n = slots;
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let adv: f64 = rng.gen_range(-2.0..2.0);
        check_params("grid actor", &mut actor_store, &|s| {
            let mut g = Graph::new(s);
            let xi = g.input(x.clone());
            let out = actor.forward(&mut g, xi).unwrap();
            let sc = g.sigmoid(out);
            let lp = g.plackett_luce(sc, &order);
            let l = g.scale(lp, -adv);
            let mut grads = s.zero_grads();
            g.backward(l, &mut grads);
            (g.scalar(l), grads.0.into_iter().map(|t| t.data).collect())
        });
    }
}
