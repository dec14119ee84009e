//! Per-driver recommender: live gap and preference in, a slot out.

use rand::Rng;

use super::net::Net;
use crate::behavior::PreferenceVector;
use crate::error::{Error, Result};
use crate::nn::{argmax_masked, sample_categorical, softmax, Graph, RunningNorm};
use crate::world::{GapVector, SlotMask, SLOTS};

pub const VEHICLE_INPUTS: usize = 2 * SLOTS;

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub features: [f64; VEHICLE_INPUTS],
    pub mask: SlotMask,
}

impl VehicleState {
    /// Gap on invalid slots reads 0. A missing preference is fed as zeros.
    pub fn new(gap: &GapVector, rho: Option<&PreferenceVector>) -> Self {
        let mut features = [0.0; VEHICLE_INPUTS];
        features[..SLOTS].copy_from_slice(&gap.as_features());
        if let Some(r) = rho {
            features[SLOTS..].copy_from_slice(&r.0);
        }
        Self {
            features,
            mask: gap.mask(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTransition {
    pub state: VehicleState,
    pub action: usize,
    pub reward: f64,
    /// `None` at terminal states.
    pub next: Option<VehicleState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleAction {
    pub slot: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct VehicleAgent {
    pub actor: Net,
    pub critic: Net,
    pub norm: RunningNorm,
}

impl VehicleAgent {
    pub fn new<R: Rng>(lr: f64, normalize: bool, rng: &mut R) -> Self {
        Self {
            actor: Net::new("vehicle.actor", VEHICLE_INPUTS, SLOTS, lr, rng),
            critic: Net::new("vehicle.critic", VEHICLE_INPUTS, 1, lr, rng),
            norm: RunningNorm::new(VEHICLE_INPUTS, normalize),
        }
    }

    pub fn probs(&self, s: &VehicleState) -> Result<Vec<f64>> {
        let logits = self.actor.eval(&self.norm.apply(&s.features))?;
        softmax(&logits, &s.mask.0)
    }

    pub fn value(&self, s: &VehicleState) -> Result<f64> {
        Ok(self.critic.eval(&self.norm.apply(&s.features))?[0])
    }

    /// Sample from the masked softmax, or take its argmax (lowest index on ties).
    pub fn act<R: Rng>(&self, s: &VehicleState, deterministic: bool, rng: &mut R) -> Result<VehicleAction> {
        if s.mask.count() == 0 {
            return Err(Error::AllMasked);
        }
        let p = self.probs(s)?;
        let slot = if deterministic {
            argmax_masked(&p, &s.mask.0).ok_or(Error::AllMasked)?
        } else {
            sample_categorical(&p, rng)
        };
        Ok(VehicleAction {
            slot,
            log_prob: p[slot].ln(),
            entropy: crate::nn::categorical_entropy(&p),
        })
    }

    /// One Adam step on actor and critic from `batch`. Returns `(actor, critic)` mean losses.
    pub fn update(&mut self, batch: &[&VehicleTransition], gamma: f64, beta: f64) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Ok((0.0, 0.0));
        }
        let n = batch.len() as f64;
        let mut ga = self.actor.store.zero_grads();
        let mut gc = self.critic.store.zero_grads();
        let (mut la, mut lc) = (0.0, 0.0);
        for tr in batch {
            let x = self.norm.apply(&tr.state.features);
            let next_v = match &tr.next {
                Some(s) => Some(self.value(s)?),
                None => None,
            };
            let target = crate::nn::td_target(tr.reward, gamma, next_v);

            let mut g = Graph::new(&self.critic.store);
            let xi = g.input(x.clone());
            let v = self.critic.mlp.forward(&mut g, xi)?;
            let value = g.scalar(v);
            let t = g.input(vec![target]);
            let d = g.sub(v, t);
            let sq = g.square(d);
            let loss = g.scale(sq, 1.0 / n);
            lc += g.scalar(loss);
            g.backward(loss, &mut gc);

            let adv = target - value;
            let mut g = Graph::new(&self.actor.store);
            let xi = g.input(x);
            let logits = self.actor.mlp.forward(&mut g, xi)?;
            let lp = g.log_softmax(logits, &tr.state.mask.0);
            let lpa = g.gather(lp, tr.action);
            let ent = g.entropy(logits, &tr.state.mask.0);
            let pg = g.scale(lpa, -adv);
            let eb = g.scale(ent, -beta);
            let total = g.add(pg, eb);
            let loss = g.scale(total, 1.0 / n);
            la += g.scalar(loss);
            g.backward(loss, &mut ga);
        }
        if !la.is_finite() || !lc.is_finite() {
            return Err(Error::NonFinite(format!("vehicle agent loss actor={la} critic={lc}")));
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

    fn agent() -> VehicleAgent {
        let mut rng = stream_rng(1, Stream::Init, 0);
        VehicleAgent::new(1e-4, false, &mut rng)
    }

    #[test]
    fn single_valid_slot() {
        let a = agent();
        let mut gap = GapVector([None; 9]);
        gap.0[4] = Some(2);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        let act = a.act(&VehicleState::new(&gap, None), false, &mut rng).unwrap();
        assert_eq!(act.slot, 4);
        assert_eq!(act.log_prob, 0.0);
    }

    #[test]
    fn zero_net_is_uniform() {
        let mut a = agent();
        zero(&mut a.actor.store);
        let s = VehicleState::new(&GapVector([Some(0); 9]), None);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[a.act(&s, false, &mut rng).unwrap().slot] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 9.0).abs() < 0.01);
        }
    }

    #[test]
    fn deterministic_picks_max_logit() {
        let mut a = agent();
        zero(&mut a.actor.store);
        let last = a.actor.mlp.params().last().unwrap().1;
        a.actor.store.get_mut(last).data[5] = 1.0;
        let s = VehicleState::new(&GapVector([Some(1); 9]), None);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        for _ in 0..10 {
            assert_eq!(a.act(&s, true, &mut rng).unwrap().slot, 5);
        }
    }

    #[test]
    fn all_masked_is_error() {
        let a = agent();
        let s = VehicleState::new(&GapVector([None; 9]), None);
        let mut rng = stream_rng(0, Stream::Policy, 0);
        assert!(a.act(&s, true, &mut rng).is_err());
    }
}
