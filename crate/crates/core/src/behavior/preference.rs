//! Cruising preferences over the 3x3 neighborhood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{GridId, GridMap, SlotMask, SLOTS};

/// Probability over the nine local slots; off-map slots carry zero mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector(pub [f64; SLOTS]);

impl PreferenceVector {
    pub fn uniform(mask: SlotMask) -> Self {
        let k = mask.count() as f64;
        PreferenceVector(std::array::from_fn(|s| if mask.is_valid(s) { 1.0 / k } else { 0.0 }))
    }

    /// Normalize nonnegative weights over valid slots. Zero total falls back to uniform.
    pub fn from_weights(weights: [f64; SLOTS], mask: SlotMask) -> Result<Self> {
        if mask.count() == 0 {
            return Err(Error::AllMasked);
        }
        let mut w = [0.0; SLOTS];
        for s in mask.valid_slots() {
            if !(weights[s].is_finite() && weights[s] >= 0.0) {
                return Err(Error::NonFinite(format!("preference weight {}", weights[s])));
            }
            w[s] = weights[s];
        }
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Ok(Self::uniform(mask));
        }
        Ok(PreferenceVector(w.map(|v| v / total)))
    }

    /// Softmax of utilities over valid slots.
    pub fn from_utilities(util: [f64; SLOTS], mask: SlotMask) -> Result<Self> {
        let max = mask.valid_slots().map(|s| util[s]).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(if mask.count() == 0 {
                Error::AllMasked
            } else {
                Error::NonFinite("utility".into())
            });
        }
        let mut w = [0.0; SLOTS];
        for s in mask.valid_slots() {
            w[s] = (util[s] - max).exp();
        }
        Self::from_weights(w, mask)
    }

    pub fn mask(&self) -> SlotMask {
        SlotMask(self.0.map(|p| p > 0.0))
    }

    /// Rank of every valid slot: 1 = most preferred; ties go to the lower slot index.
    pub fn ranks(&self, mask: SlotMask) -> [Option<usize>; SLOTS] {
        let order = self.ranked_slots(mask);
        let mut out = [None; SLOTS];
        for (i, s) in order.into_iter().enumerate() {
            out[s] = Some(i + 1);
        }
        out
    }

    /// Valid slots from most to least preferred.
    pub fn ranked_slots(&self, mask: SlotMask) -> Vec<usize> {
        let mut slots: Vec<usize> = mask.valid_slots().collect();
        slots.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        slots
    }

    pub fn rank_of(&self, mask: SlotMask, slot: usize) -> Result<usize> {
        self.ranks(mask)
            .get(slot)
            .copied()
            .flatten()
            .ok_or(Error::InvalidSlot(slot))
    }

    pub fn top_k(&self, mask: SlotMask, k: usize) -> Vec<usize> {
        let mut s = self.ranked_slots(mask);
        s.truncate(k);
        s
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for (s, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = Some(s);
                if u < acc {
                    return s;
                }
            }
        }
        last.expect("preference vector has no mass")
    }

    pub fn is_valid(&self, mask: SlotMask) -> bool {
        let sum: f64 = self.0.iter().sum();
        (sum - 1.0).abs() <= 1e-9
            && self
                .0
                .iter()
                .enumerate()
                .all(|(s, &p)| p >= 0.0 && p.is_finite() && (mask.is_valid(s) || p == 0.0))
    }
}

/// Simulator-side truth of how a driver likes to cruise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPrefParams {
    pub w_home: f64,
    pub home_grid: GridId,
    pub w_hot: f64,
    pub w_familiar: f64,
    pub temperature: f64,
}

/// Per-slot observations the ground-truth preference reacts to.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalContext {
    pub demand: [f64; SLOTS],
    pub visits: [f64; SLOTS],
}

fn normalized(v: &[f64; SLOTS], mask: SlotMask) -> [f64; SLOTS] {
    let max = mask.valid_slots().map(|s| v[s]).fold(0.0, f64::max);
    if max <= 0.0 {
        [0.0; SLOTS]
    } else {
        v.map(|x| x / max)
    }
}

/// `rho ∝ exp(utility / temperature)` with home proximity, local demand and familiarity terms.
pub fn ground_truth_preference(
    map: &GridMap,
    at: GridId,
    params: &GroundTruthPrefParams,
    ctx: &LocalContext,
) -> Result<PreferenceVector> {
    if !(params.temperature > 0.0) {
        return Err(Error::NonFinite(format!("temperature {}", params.temperature)));
    }
    let hood = map.neighborhood9(at);
    let mask = SlotMask(hood.map(|c| c.is_some()));
    let demand = normalized(&ctx.demand, mask);
    let visits = normalized(&ctx.visits, mask);
    let mut util = [0.0; SLOTS];
    for s in mask.valid_slots() {
        let cell = hood[s].expect("valid slot");
        let proximity = 1.0 / (1.0 + map.manhattan(cell, params.home_grid) as f64);
        util[s] =
            (params.w_home * proximity + params.w_hot * demand[s] + params.w_familiar * visits[s]) / params.temperature;
    }
    PreferenceVector::from_utilities(util, mask)
}

/// Laplace-smoothed visit frequencies over valid slots.
pub fn frequency_preference(counts: &[f64; SLOTS], mask: SlotMask, alpha: f64) -> Result<PreferenceVector> {
    if !(alpha > 0.0) {
        return Err(Error::config("alpha", "smoothing must be > 0"));
    }
    let mut w = [0.0; SLOTS];
    for s in mask.valid_slots() {
        if counts[s] < 0.0 {
            return Err(Error::NonFinite(format!("negative count {}", counts[s])));
        }
        w[s] = counts[s] + alpha;
    }
    PreferenceVector::from_weights(w, mask)
}
