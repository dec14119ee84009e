//! Per-grid ordering policy: scores each idle driver, then ranks them.

use rand::Rng;

use super::net::Net;
use crate::behavior::PreferenceVector;
use crate::error::{Error, Result};
use crate::nn::{plackett_luce_sample, Graph, RunningNorm};
use crate::world::{GapVector, SLOTS};

pub fn grid_inputs(n_max: usize) -> usize {
    SLOTS + n_max * SLOTS + 1
}

/// Gap, one preference row per scored driver (zero padded to `n_max`) and the driver count.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub features: Vec<f64>,
    /// Drivers with a score, at most `n_max`.
    pub n: usize,
}

impl GridState {
    pub fn new(gap: &GapVector, prefs: &[&PreferenceVector], n_max: usize) -> Self {
        let n = prefs.len().min(n_max);
        let mut features = vec![0.0; grid_inputs(n_max)];
        features[..SLOTS].copy_from_slice(&gap.as_features());
        for (i, p) in prefs.iter().take(n).enumerate() {
            let at = SLOTS + i * SLOTS;
            features[at..at + SLOTS].copy_from_slice(&p.0);
        }
        features[SLOTS + n_max * SLOTS] = prefs.len() as f64;
        Self { features, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTransition {
    pub state: GridState,
    /// Row indices in recommendation order.
    pub order: Vec<usize>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAction {
    pub scores: Vec<f64>,
    /// Row indices `0..n` in recommendation order.
    pub order: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct GridAgent {
    pub n_max: usize,
    pub actor: Net,
    pub critic: Net,
    pub norm: RunningNorm,
}

impl GridAgent {
    pub fn new<R: Rng>(n_max: usize, lr: f64, normalize: bool, rng: &mut R) -> Self {
        let d = grid_inputs(n_max);
        Self {
            n_max,
            actor: Net::new("grid.actor", d, n_max, lr, rng),
            critic: Net::new("grid.critic", d, 1, lr, rng),
            norm: RunningNorm::new(d, normalize),
        }
    }

    /// Sigmoid priority per row.
    pub fn scores(&self, s: &GridState) -> Result<Vec<f64>> {
        let out = self.actor.eval(&self.norm.apply(&s.features))?;
        Ok(out.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect())
    }

    pub fn value(&self, s: &GridState) -> Result<f64> {
        Ok(self.critic.eval(&self.norm.apply(&s.features))?[0])
    }

    /// Plackett-Luce draw over the scored rows, or descending score with ties to the lower row.
    pub fn act<R: Rng>(&self, s: &GridState, deterministic: bool, rng: &mut R) -> Result<GridAction> {
        if s.n == 0 {
            return Err(Error::Shape("grid agent needs at least one driver".into()));
        }
        let scores = self.scores(s)?;
        let rows: Vec<usize> = (0..s.n).collect();
        if deterministic {
            let mut order = rows;
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let log_prob = crate::nn::plackett_luce_log_prob(&scores, &order);
            return Ok(GridAction {
                scores,
                order,
                log_prob,
            });
        }
        let (order, log_prob) = plackett_luce_sample(&scores, &rows, rng);
        Ok(GridAction {
            scores,
            order,
            log_prob,
        })
    }

    /// One Adam step with one-step targets `R_G`.
    pub fn update(&mut self, batch: &[&GridTransition]) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Ok((0.0, 0.0));
        }
        let n = batch.len() as f64;
        let mut ga = self.actor.store.zero_grads();
        let mut gc = self.critic.store.zero_grads();
        let (mut la, mut lc) = (0.0, 0.0);
        for tr in batch {
            let x = self.norm.apply(&tr.state.features);
            let mut g = Graph::new(&self.critic.store);
            let xi = g.input(x.clone());
            let v = self.critic.mlp.forward(&mut g, xi)?;
            let value = g.scalar(v);
            let t = g.input(vec![tr.reward]);
            let d = g.sub(v, t);
            let sq = g.square(d);
            let loss = g.scale(sq, 1.0 / n);
            lc += g.scalar(loss);
            g.backward(loss, &mut gc);

            let adv = tr.reward - value;
            let mut g = Graph::new(&self.actor.store);
            let xi = g.input(x);
            let out = self.actor.mlp.forward(&mut g, xi)?;
            let scores = g.sigmoid(out);
            let lp = g.plackett_luce(scores, &tr.order);
            let pg = g.scale(lp, -adv / n);
            la += g.scalar(pg);
            g.backward(pg, &mut ga);
        }
        if !la.is_finite() || !lc.is_finite() {
            return Err(Error::NonFinite(format!("grid agent loss actor={la} critic={lc}")));
        }
        self.actor.apply(&ga)?;
        self.critic.apply(&gc)?;
        Ok((la, lc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::net::zero;
    use crate::rng::{stream_rng, Stream};
    use crate::world::SlotMask;

    fn agent(n_max: usize) -> GridAgent {
        let mut rng = stream_rng(2, Stream::Init, 0);
        GridAgent::new(n_max, 1e-4, false, &mut rng)
    }

    #[test]
    fn state_layout() {
        let u = PreferenceVector::uniform(SlotMask::ALL);
        let s = GridState::new(&GapVector([Some(1); 9]), &[&u, &u], 20);
        assert_eq!(s.features.len(), 190);
        assert_eq!(s.n, 2);
        assert!(s.features[27..189].iter().all(|&v| v == 0.0));
        assert_eq!(s.features[189], 2.0);
        let row: f64 = s.features[18..27].iter().sum();
        assert!((row - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_driver() {
        let a = agent(4);
        let u = PreferenceVector::uniform(SlotMask::ALL);
        let s = GridState::new(&GapVector([Some(0); 9]), &[&u], 4);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        let act = a.act(&s, false, &mut rng).unwrap();
        assert_eq!(act.order, vec![0]);
        assert_eq!(act.log_prob, 0.0);
    }

    #[test]
    fn equal_scores_are_fair_and_ties_go_to_lower_row() {
        let mut a = agent(4);
        zero(&mut a.actor.store);
        let u = PreferenceVector::uniform(SlotMask::ALL);
        let s = GridState::new(&GapVector([Some(0); 9]), &[&u, &u], 4);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        let n = 20_000;
        let first = (0..n)
            .filter(|_| a.act(&s, false, &mut rng).unwrap().order[0] == 0)
            .count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.02);
        let s3 = GridState::new(&GapVector([Some(0); 9]), &[&u, &u, &u], 4);
        assert_eq!(a.act(&s3, true, &mut rng).unwrap().order, vec![0, 1, 2]);
    }

    #[test]
    fn deterministic_sorts_by_score() {
        let mut a = agent(4);
        zero(&mut a.actor.store);
        let last = a.actor.mlp.params().last().unwrap().1;
        a.actor.store.get_mut(last).data.copy_from_slice(&[0.1, 2.0, -1.0, 5.0]);
        let u = PreferenceVector::uniform(SlotMask::ALL);
        let s = GridState::new(&GapVector([Some(0); 9]), &[&u, &u, &u], 4);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        assert_eq!(a.act(&s, true, &mut rng).unwrap().order, vec![1, 0, 2]);
    }

    #[test]
    fn padding_is_excluded() {
        let a = agent(4);
        let u = PreferenceVector::uniform(SlotMask::ALL);
        let s = GridState::new(&GapVector([Some(0); 9]), &[&u, &u], 4);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        for _ in 0..100 {
            let mut o = a.act(&s, false, &mut rng).unwrap().order;
            o.sort();
            assert_eq!(o, vec![0, 1]);
        }
    }
}
