//! Brute-force comparison of sequential greedy play against the joint optimum
//! for one grid with up to three drivers who always accept.

use rand::Rng;
use serde::Serialize;

use super::reward::{balance_reward, preference_reward, total_reward, RewardWeights};
use crate::behavior::PreferenceVector;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::world::{GapVector, SlotMask, SLOTS};

pub const AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Instance {
    pub gap: GapVector,
    pub rho: Vec<PreferenceVector>,
}

/// Total reward of `assignment[i]` for driver `i`, played in `order`.
pub fn assignment_reward(inst: &Instance, w: &RewardWeights, assignment: &[usize], order: &[usize]) -> Result<f64> {
    let mask = inst.gap.mask();
    let mut committed = [0i64; SLOTS];
    let mut total = 0.0;
    for &i in order {
        let s = assignment[i];
        let rb = balance_reward(&inst.gap, s, &committed)?;
        let rp = preference_reward(&inst.rho[i], mask, s)?;
        total += total_reward(w, rb, rp);
        committed[s] += 1;
    }
    Ok(total)
}

fn assignments(n: usize, mask: SlotMask) -> Vec<Vec<usize>> {
    let slots: Vec<usize> = mask.valid_slots().collect();
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|a| {
                slots.iter().map(move |&s| {
                    let mut b = a.clone();
                    b.push(s);
                    b
                })
            })
            .collect();
    }
    out
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best joint assignment value over all `#valid^n` assignments.
pub fn joint_optimum(inst: &Instance, w: &RewardWeights) -> Result<f64> {
    let n = inst.rho.len();
    let order: Vec<usize> = (0..n).collect();
    let mut best = f64::NEG_INFINITY;
    for a in assignments(n, inst.gap.mask()) {
        best = best.max(assignment_reward(inst, w, &a, &order)?);
    }
    Ok(best)
}

/// Each driver in turn takes the slot maximizing its own reward (lowest slot on ties).
pub fn sequential_greedy(inst: &Instance, w: &RewardWeights, order: &[usize]) -> Result<f64> {
    let mask = inst.gap.mask();
    let mut committed = [0i64; SLOTS];
    let mut total = 0.0;
    for &i in order {
        let mut best: Option<(f64, usize)> = None;
        for s in mask.valid_slots() {
            let r = total_reward(
                w,
                balance_reward(&inst.gap, s, &committed)?,
                preference_reward(&inst.rho[i], mask, s)?,
            );
            if best.map_or(true, |(b, _)| r > b) {
                best = Some((r, s));
            }
        }
        let (r, s) = best.ok_or(Error::AllMasked)?;
        total += r;
        committed[s] += 1;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceResult {
    pub drivers: usize,
    pub joint: f64,
    pub best_sequential: f64,
    pub agree: bool,
}

pub fn diagnose(inst: &Instance, w: &RewardWeights) -> Result<InstanceResult> {
    let n = inst.rho.len();
    if n == 0 || n > 3 {
        return Err(Error::Shape(format!("diagnostic needs 1..=3 drivers, got {n}")));
    }
    let joint = joint_optimum(inst, w)?;
    let mut best = f64::NEG_INFINITY;
    for order in permutations(n) {
        best = best.max(sequential_greedy(inst, w, &order)?);
    }
    Ok(InstanceResult {
        drivers: n,
        joint,
        best_sequential: best,
        agree: (joint - best).abs() <= AGREEMENT_TOL,
    })
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let mut gap = [None; SLOTS];
    for g in gap.iter_mut() {
        *g = Some(rng.gen_range(-3..=3));
    }
    let n = rng.gen_range(1..=3);
    let rho = (0..n)
        .map(|_| {
            let w: [f64; SLOTS] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
            PreferenceVector::from_weights(w, SlotMask::ALL).expect("positive weights")
        })
        .collect();
    Instance {
        gap: GapVector(gap),
        rho,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub instances: usize,
    pub agreements: usize,
    pub agreement_fraction: f64,
    pub mean_shortfall: f64,
    pub max_shortfall: f64,
    /// Per driver count `[1, 2, 3]`: (instances, agreements).
    pub by_drivers: [(usize, usize); 3],
}

impl TheoremReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "instances={}\nagreements={}\nagreement_fraction={:.6}\nmean_shortfall={:.6e}\nmax_shortfall={:.6e}\n",
            self.instances, self.agreements, self.agreement_fraction, self.mean_shortfall, self.max_shortfall
        );
        for (i, (n, a)) in self.by_drivers.iter().enumerate() {
            s.push_str(&format!("drivers_{}={}/{}\n", i + 1, a, n));
        }
        s
    }
}

pub fn run_diagnostic(instances: usize, w: &RewardWeights, seed: u64) -> Result<TheoremReport> {
    let mut rng = stream_rng(seed, Stream::Survey, 1);
    let mut agreements = 0;
    let mut shortfall = 0.0f64;
    let mut max_shortfall = 0.0f64;
    let mut by = [(0usize, 0usize); 3];
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let r = diagnose(&inst, w)?;
        let gap = r.joint - r.best_sequential;
        shortfall += gap;
        max_shortfall = max_shortfall.max(gap);
        by[r.drivers - 1].0 += 1;
        if r.agree {
            agreements += 1;
            by[r.drivers - 1].1 += 1;
        }
    }
    Ok(TheoremReport {
        instances,
        agreements,
        agreement_fraction: if instances == 0 {
            0.0
        } else {
            agreements as f64 / instances as f64
        },
        mean_shortfall: if instances == 0 {
            0.0
        } else {
            shortfall / instances as f64
        },
        max_shortfall,
        by_drivers: by,
    })
}
