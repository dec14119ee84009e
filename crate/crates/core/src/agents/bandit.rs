//! Single-driver, single-step scenario with a fixed gap: the smallest setting
//! in which the Vehicle Agent has something to learn.

use super::buffer::ReplayBuffer;
use super::reward::{balance_reward, preference_reward, total_reward, RewardWeights};
use super::vehicle_agent::{VehicleAgent, VehicleState, VehicleTransition};
use crate::behavior::PreferenceVector;
use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::world::{GapVector, SLOTS};

#[derive(Debug, Clone)]
pub struct BanditReport {
    pub greedy_slot: usize,
    pub probs: Vec<f64>,
}

/// Train for `episodes` one-step episodes and report the deterministic choice.
pub fn train_bandit(
    gap: &GapVector,
    weights: RewardWeights,
    lr: f64,
    episodes: usize,
    seed: u64,
) -> Result<BanditReport> {
    let mut init = stream_rng(seed, Stream::Init, 0);
    let mut agent = VehicleAgent::new(lr, false, &mut init);
    let mut buf = ReplayBuffer::new(10_000);
    let rho = PreferenceVector::uniform(gap.mask());
    let state = VehicleState::new(gap, Some(&rho));
    let zero = [0i64; SLOTS];
    for ep in 0..episodes {
        let mut rng = stream_rng(seed, Stream::Policy, ep as u64);
        let act = agent.act(&state, false, &mut rng)?;
        let r = total_reward(
            &weights,
            balance_reward(gap, act.slot, &zero)?,
            preference_reward(&rho, gap.mask(), act.slot)?,
        );
        buf.push(VehicleTransition {
            state: state.clone(),
            action: act.slot,
            reward: r,
            next: None,
        });
        let mut replay = stream_rng(seed, Stream::Replay, ep as u64);
        let batch = buf.sample(weights.batch, &mut replay);
        agent.update(&batch, weights.gamma, weights.entropy_beta)?;
    }
    let mut rng = stream_rng(seed, Stream::Policy, u64::MAX);
    Ok(BanditReport {
        greedy_slot: agent.act(&state, true, &mut rng)?.slot,
        probs: agent.probs(&state)?,
    })
}
