//! Vehicle- and grid-level rewards.

use serde::{Deserialize, Serialize};

use crate::behavior::PreferenceVector;
use crate::error::{Error, Result};
use crate::world::{GapVector, SlotMask, SLOTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub alpha_b: f64,
    pub alpha_p: f64,
    pub gamma: f64,
    pub entropy_beta: f64,
    pub batch: usize,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha_b: 2.0,
            alpha_p: 1.0,
            gamma: 0.98,
            entropy_beta: 0.01,
            batch: 10,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_b >= 0.0) {
            return Err(Error::config("agent.alpha_b", "must be >= 0"));
        }
        if !(self.alpha_p >= 0.0) {
            return Err(Error::config("agent.alpha_p", "must be >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("agent.gamma", "must lie in (0, 1)"));
        }
        if !(self.entropy_beta >= 0.0) {
            return Err(Error::config("agent.entropy_beta", "must be >= 0"));
        }
        if self.batch == 0 {
            return Err(Error::config("agent.batch", "must be >= 1"));
        }
        Ok(())
    }
}

/// `-(δ + committed - μ) / σ` with `μ, σ` taken from the grid's initial gap;
/// zero when the initial gap is flat.
pub fn balance_reward(initial: &GapVector, slot: usize, committed: &[i64; SLOTS]) -> Result<f64> {
    let delta = initial.get(slot).ok_or(Error::InvalidSlot(slot))?;
    let (mu, sd) = initial.stats();
    if sd == 0.0 {
        return Ok(0.0);
    }
    Ok(-((delta + committed[slot]) as f64 - mu) / sd)
}

/// Min-max normalized rank: 1 for the favourite slot, 0 for the least liked.
pub fn preference_reward(rho: &PreferenceVector, mask: SlotMask, slot: usize) -> Result<f64> {
    let k = mask.count();
    let r = rho.rank_of(mask, slot)?;
    if k == 1 {
        return Ok(1.0);
    }
    Ok((k - r) as f64 / (k - 1) as f64)
}

pub fn total_reward(w: &RewardWeights, r_b: f64, r_p: f64) -> f64 {
    w.alpha_b * r_b + w.alpha_p * r_p
}

/// Mean of the vehicle rewards earned in one grid; `None` if nobody was recommended.
pub fn grid_reward(rewards: &[f64]) -> Option<f64> {
    if rewards.is_empty() {
        None
    } else {
        Some(rewards.iter().sum::<f64>() / rewards.len() as f64)
    }
}

/// Per-slot arrivals so far: `live - initial`.
pub fn commitments(initial: &GapVector, live: &GapVector) -> [i64; SLOTS] {
    let mut c = [0; SLOTS];
    for s in 0..SLOTS {
        if let (Some(a), Some(b)) = (initial.get(s), live.get(s)) {
            c[s] = b - a;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gap(v: [i64; 9]) -> GapVector {
        GapVector(v.map(Some))
    }

    #[test]
    fn balance_examples() {
        let r = balance_reward(&gap([-2, 0, 0, 0, 0, 0, 0, 0, 2]), 0, &[0; 9]).unwrap();
        assert!((r - 2.12132).abs() < 1e-5);
        let r = balance_reward(&gap([-3, -1, 0, 0, 0, 0, 0, 0, 0]), 0, &[0; 9]).unwrap();
        assert!((r - 2.67370).abs() < 1e-5);
        assert_eq!(balance_reward(&gap([1; 9]), 3, &[0; 9]).unwrap(), 0.0);
    }

    #[test]
    fn invalid_slot_rejected() {
        let mut g = gap([0; 9]);
        g.0[0] = None;
        assert!(balance_reward(&g, 0, &[0; 9]).is_err());
    }

    #[test]
    fn preference_examples() {
        let w = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let rho = PreferenceVector::from_weights(w, SlotMask::ALL).unwrap();
        assert_eq!(preference_reward(&rho, SlotMask::ALL, 0).unwrap(), 1.0);
        assert_eq!(preference_reward(&rho, SlotMask::ALL, 8).unwrap(), 0.0);
        assert_eq!(preference_reward(&rho, SlotMask::ALL, 2).unwrap(), 0.75);
        let mut one = [false; 9];
        one[4] = true;
        let m = SlotMask(one);
        assert_eq!(preference_reward(&PreferenceVector::uniform(m), m, 4).unwrap(), 1.0);
    }

    #[test]
    fn total_and_grid() {
        let w = RewardWeights::default();
        assert!((total_reward(&w, 2.12132, 0.75) - 4.99264).abs() < 1e-5);
        assert_eq!(total_reward(&w, 0.0, 0.0), 0.0);
        let w0 = RewardWeights { alpha_b: 0.0, ..w };
        assert_eq!(total_reward(&w0, 5.0, 0.3), 0.3);
        assert_eq!(grid_reward(&[4.0, 2.0]), Some(3.0));
        assert_eq!(grid_reward(&[1.5]), Some(1.5));
        assert_eq!(grid_reward(&[]), None);
    }
}
