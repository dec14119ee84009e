//! Comparison policies. Each is a [`Recommender`] and runs in the same episode
//! loop as the dual agent.

pub mod mincostflow;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::reward::{balance_reward, commitments, preference_reward, total_reward, RewardWeights};
use crate::episode::{shuffled, GridView, Recommender, StepContext};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::world::{DriverStatus, GapVector, GridId, SlotMask, SLOTS, STAY};

pub use mincostflow::{neighbor_arcs, plan_rebalance, rebalance_flows, ArcFlows, FlowNetwork, FlowPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NoReposition,
    Random,
    DemandGreedy,
    RewardGreedy,
    MinCostFlow,
    Proportional,
    CollectivePreference,
    DualAgent,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::NoReposition,
        PolicyKind::Random,
        PolicyKind::DemandGreedy,
        PolicyKind::RewardGreedy,
        PolicyKind::MinCostFlow,
        PolicyKind::Proportional,
        PolicyKind::CollectivePreference,
        PolicyKind::DualAgent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::NoReposition => "no_reposition",
            PolicyKind::Random => "random",
            PolicyKind::DemandGreedy => "demand_greedy",
            PolicyKind::RewardGreedy => "reward_greedy",
            PolicyKind::MinCostFlow => "min_cost_flow",
            PolicyKind::Proportional => "proportional",
            PolicyKind::CollectivePreference => "collective_preference",
            PolicyKind::DualAgent => "dual_agent",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config("policy", format!("unknown policy `{s}`")))
    }
}

/// Lowest-index valid slot minimizing `gap`.
pub fn most_demanding(gap: &GapVector) -> Result<usize> {
    let mut best: Option<(i64, usize)> = None;
    for s in gap.mask().valid_slots() {
        let d = gap.get(s).expect("valid slot");
        if best.map_or(true, |(b, _)| d < b) {
            best = Some((d, s));
        }
    }
    best.map(|(_, s)| s).ok_or(Error::AllMasked)
}

/// Largest-remainder apportionment of `n` units to `fractions` (ties to the lower index).
pub fn largest_remainder(fractions: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = fractions.iter().sum();
    if total <= 0.0 {
        return vec![0; fractions.len()];
    }
    let quotas: Vec<f64> = fractions.iter().map(|f| f / total * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut idx: Vec<usize> = (0..fractions.len()).collect();
    idx.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in idx {
        if left == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Drivers cruise on their own; nothing is recommended.
#[derive(Debug, Default)]
pub struct NoReposition;

impl Recommender for NoReposition {
    fn order(&mut self, _: &StepContext<'_>, view: &GridView, _: &mut SimRng) -> Result<Vec<usize>> {
        Ok(view.drivers.clone())
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        _: &GridView,
        _: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        Ok(None)
    }
}

/// Uniform valid slot, random order.
#[derive(Debug, Default)]
pub struct RandomPolicy;

impl Recommender for RandomPolicy {
    fn order(&mut self, _: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        Ok(shuffled(&view.drivers, rng))
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        view: &GridView,
        _: usize,
        _: &GapVector,
        rng: &mut SimRng,
    ) -> Result<Option<usize>> {
        let slots: Vec<usize> = view.mask.valid_slots().collect();
        Ok(Some(slots[rng.gen_range(0..slots.len())]))
    }
}

/// Everyone goes to the grid's most demanding neighbor, judged on the initial gap.
#[derive(Debug, Default)]
pub struct DemandGreedy;

impl Recommender for DemandGreedy {
    fn order(&mut self, _: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        Ok(shuffled(&view.drivers, rng))
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        view: &GridView,
        _: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        most_demanding(&view.gap).map(Some)
    }
}

/// Per-driver argmax of the vehicle reward on the live gap.
#[derive(Debug)]
pub struct RewardGreedy {
    pub weights: RewardWeights,
}

/// Slot maximizing `α_B R_B + α_P R_P` given commitments so far; lowest slot on ties.
pub fn reward_greedy_slot(
    weights: &RewardWeights,
    initial: &GapVector,
    live: &GapVector,
    rho: &crate::behavior::PreferenceVector,
    mask: SlotMask,
) -> Result<usize> {
    let committed = commitments(initial, live);
    let mut best: Option<(f64, usize)> = None;
    for s in mask.valid_slots() {
        let r = total_reward(
            weights,
            balance_reward(initial, s, &committed)?,
            preference_reward(rho, mask, s)?,
        );
        if best.map_or(true, |(b, _)| r > b) {
            best = Some((r, s));
        }
    }
    best.map(|(_, s)| s).ok_or(Error::AllMasked)
}

impl Recommender for RewardGreedy {
    fn order(&mut self, _: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        Ok(shuffled(&view.drivers, rng))
    }

    fn recommend(
        &mut self,
        ctx: &StepContext<'_>,
        view: &GridView,
        driver: usize,
        live: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        reward_greedy_slot(&self.weights, &view.gap, live, ctx.rho(driver)?, view.mask).map(Some)
    }
}

/// City-wide min-cost flow from surplus to deficit grids, solved once per step.
#[derive(Debug, Default)]
pub struct MinCostFlowPolicy {
    assigned: HashMap<usize, usize>,
}

impl Recommender for MinCostFlowPolicy {
    fn begin_step(&mut self, ctx: &StepContext<'_>, _: &mut SimRng) -> Result<()> {
        self.assigned.clear();
        let map = ctx.map;
        let gap: Vec<i64> = (0..map.len()).map(|g| ctx.supply[g] - ctx.demand[g]).collect();
        let mut idle: Vec<Vec<usize>> = vec![Vec::new(); map.len()];
        for d in ctx.drivers.iter().filter(|d| d.status == DriverStatus::Idle) {
            idle[d.grid.0].push(d.id);
        }
        let movable: Vec<i64> = idle.iter().map(|v| v.len() as i64).collect();
        let plan = plan_rebalance(map, &gap, &movable);
        let mut next = vec![0usize; map.len()];
        for (&(a, b), &units) in &plan.moves {
            let slot = map.slot_of(a, b).ok_or(Error::InvalidSlot(usize::MAX))?;
            for _ in 0..units {
                if let Some(&d) = idle[a.0].get(next[a.0]) {
                    self.assigned.insert(d, slot);
                    next[a.0] += 1;
                }
            }
        }
        Ok(())
    }

    fn order(&mut self, _: &StepContext<'_>, view: &GridView, _: &mut SimRng) -> Result<Vec<usize>> {
        Ok(view.drivers.clone())
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        _: &GridView,
        driver: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        Ok(Some(self.assigned.get(&driver).copied().unwrap_or(STAY)))
    }
}

/// Split a grid's idle drivers across neighbors in proportion to their deficits.
#[derive(Debug, Default)]
pub struct Proportional {
    assigned: HashMap<usize, usize>,
}

/// Slot for each position in the recommendation order.
pub fn proportional_slots(gap: &GapVector, n: usize) -> Vec<usize> {
    let mut frac = [0.0; SLOTS];
    for s in gap.mask().valid_slots() {
        frac[s] = (-(gap.get(s).expect("valid slot"))).max(0) as f64;
    }
    if frac.iter().all(|&f| f == 0.0) {
        return vec![STAY; n];
    }
    let counts = largest_remainder(&frac, n);
    counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat(s).take(c))
        .collect()
}

impl Recommender for Proportional {
    fn order(&mut self, _: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        let order = shuffled(&view.drivers, rng);
        self.assigned = order
            .iter()
            .copied()
            .zip(proportional_slots(&view.gap, order.len()))
            .collect();
        Ok(order)
    }

    fn recommend(
        &mut self,
        _: &StepContext<'_>,
        _: &GridView,
        driver: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        self.assigned
            .get(&driver)
            .copied()
            .map(Some)
            .ok_or_else(|| Error::MalformedLog(format!("driver {driver} has no proportional slot")))
    }
}

/// Deficit weighted by how often the whole fleet visits each neighbor.
#[derive(Debug, Default)]
pub struct CollectivePreference {
    visits: Vec<f64>,
}

pub const LAPLACE_ALPHA: f64 = 1.0;

/// `argmax max(0, -δ) * F` over valid slots, stay when every score is zero.
pub fn collective_slot(gap: &GapVector, freq: &[f64; SLOTS]) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for s in gap.mask().valid_slots() {
        let score = (-(gap.get(s).expect("valid slot"))).max(0) as f64 * freq[s];
        if best.map_or(true, |(b, _)| score > b) {
            best = Some((score, s));
        }
    }
    match best {
        Some((b, s)) if b > 0.0 => s,
        _ => STAY,
    }
}

impl CollectivePreference {
    fn frequencies(&self, ctx: &StepContext<'_>, g: GridId) -> [f64; SLOTS] {
        let hood = ctx.map.neighborhood9(g);
        let mut f = [0.0; SLOTS];
        let mut total = 0.0;
        for (s, c) in hood.iter().enumerate() {
            if let Some(c) = c {
                f[s] = self.visits[c.0] + LAPLACE_ALPHA;
                total += f[s];
            }
        }
        f.map(|v| v / total)
    }
}

impl Recommender for CollectivePreference {
    fn begin_step(&mut self, ctx: &StepContext<'_>, _: &mut SimRng) -> Result<()> {
        self.visits = vec![0.0; ctx.map.len()];
        for d in ctx.drivers {
            for (g, &c) in d.visit_counts.iter().enumerate() {
                self.visits[g] += c as f64;
            }
        }
        Ok(())
    }

    fn order(&mut self, _: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        Ok(shuffled(&view.drivers, rng))
    }

    fn recommend(
        &mut self,
        ctx: &StepContext<'_>,
        view: &GridView,
        _: usize,
        _: &GapVector,
        _: &mut SimRng,
    ) -> Result<Option<usize>> {
        Ok(Some(collective_slot(&view.gap, &self.frequencies(ctx, view.grid))))
    }
}

/// Non-learning recommender for `kind`; the dual agent is built separately.
pub fn make_baseline(kind: PolicyKind, weights: RewardWeights) -> Result<Box<dyn Recommender>> {
    Ok(match kind {
        PolicyKind::NoReposition => Box::new(NoReposition),
        PolicyKind::Random => Box::new(RandomPolicy),
        PolicyKind::DemandGreedy => Box::new(DemandGreedy),
        PolicyKind::RewardGreedy => Box::new(RewardGreedy { weights }),
        PolicyKind::MinCostFlow => Box::new(MinCostFlowPolicy::default()),
        PolicyKind::Proportional => Box::new(Proportional::default()),
        PolicyKind::CollectivePreference => Box::new(CollectivePreference::default()),
        PolicyKind::DualAgent => {
            return Err(Error::config(
                "policy",
                "dual_agent needs a trained agent, not a baseline",
            ))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::PreferenceVector;

    fn gap(v: [i64; 9]) -> GapVector {
        GapVector(v.map(Some))
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.as_str().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn demand_greedy_rules() {
        assert_eq!(most_demanding(&gap([-2, 0, 0, 0, 0, 0, 0, 0, 2])).unwrap(), 0);
        assert_eq!(most_demanding(&gap([1; 9])).unwrap(), 0);
        assert_eq!(most_demanding(&gap([0, 0, 0, 0, 0, -1, 0, -1, 0])).unwrap(), 5);
    }

    #[test]
    fn largest_remainder_split() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[0.0, 1.0, 0.0], 4), vec![0, 4, 0]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 2), vec![1, 1, 0]);
    }

    #[test]
    fn proportional_cases() {
        let mut g = [0i64; 9];
        g[7] = -2;
        assert_eq!(proportional_slots(&gap(g), 3), vec![7, 7, 7]);
        assert_eq!(proportional_slots(&gap([1; 9]), 2), vec![STAY, STAY]);
        let mut g = [0i64; 9];
        g[1] = -1;
        g[5] = -1;
        assert_eq!(proportional_slots(&gap(g), 3), vec![1, 1, 5]);
    }

    #[test]
    fn collective_cases() {
        let uniform = [1.0 / 9.0; 9];
        let g = gap([0, -1, 0, 0, 0, -3, 0, 0, 0]);
        assert_eq!(collective_slot(&g, &uniform), most_demanding(&g).unwrap());
        assert_eq!(collective_slot(&gap([0; 9]), &uniform), STAY);
        let mut f = uniform;
        f[1] = 0.9;
        assert_eq!(collective_slot(&g, &f), 1);
    }

    #[test]
    fn reward_greedy_weight_limits() {
        let w = [0.05, 0.1, 0.4, 0.05, 0.05, 0.05, 0.1, 0.1, 0.1];
        let rho = PreferenceVector::from_weights(w, SlotMask::ALL).unwrap();
        let g = gap([0, 0, 0, 0, 0, 0, 0, -2, 0]);
        let only_pref = RewardWeights {
            alpha_b: 0.0,
            ..Default::default()
        };
        assert_eq!(reward_greedy_slot(&only_pref, &g, &g, &rho, SlotMask::ALL).unwrap(), 2);
        let only_gap = RewardWeights {
            alpha_p: 0.0,
            ..Default::default()
        };
        assert_eq!(reward_greedy_slot(&only_gap, &g, &g, &rho, SlotMask::ALL).unwrap(), 7);
        let mut live = g.clone();
        live.bump(7, 3);
        assert_eq!(
            reward_greedy_slot(&only_gap, &g, &live, &rho, SlotMask::ALL).unwrap(),
            0
        );
    }
}
