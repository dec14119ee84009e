//! Grid Agent + Vehicle Agent as one [`Recommender`], optionally learning online.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayBuffer;
use super::grid_agent::{GridAgent, GridState, GridTransition};
use super::net::{load_norm, save_norm};
use super::reward::{balance_reward, commitments, grid_reward, preference_reward, total_reward, RewardWeights};
use super::vehicle_agent::{VehicleAgent, VehicleState, VehicleTransition};
use crate::behavior::PreferenceVector;
use crate::episode::{shuffled, GridView, Recommender, StepContext};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::rng::SimRng;
use crate::world::{GapVector, Simulator};

/// How drivers inside a grid are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderMode {
    /// Grid Agent.
    Learned,
    /// Descending Pearson correlation between preference and `-gap`.
    Fixed,
    Random,
    /// Driver-id order, every driver sees the grid's initial gap.
    JointAction,
}

impl std::str::FromStr for OrderMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "fixed" => Ok(Self::Fixed),
            "random" => Ok(Self::Random),
            "joint_action" => Ok(Self::JointAction),
            _ => Err(Error::config("agent.order", format!("unknown order mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualAgentConfig {
    pub n_max: usize,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub weights: RewardWeights,
    pub order: OrderMode,
    /// Feed the driver's preference to the Vehicle Agent.
    pub pref_observation: bool,
    /// Include the preference term in the reward.
    pub pref_reward: bool,
    pub freeze_grid: bool,
    pub freeze_vehicle: bool,
    pub normalize_inputs: bool,
}

impl Default for DualAgentConfig {
    fn default() -> Self {
        Self {
            n_max: 20,
            lr: 1e-4,
            buffer_capacity: 10_000,
            weights: RewardWeights::default(),
            order: OrderMode::Learned,
            pref_observation: true,
            pref_reward: true,
            freeze_grid: false,
            freeze_vehicle: false,
            normalize_inputs: true,
        }
    }
}

impl DualAgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.n_max == 0 {
            return Err(Error::config("agent.n_max", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("agent.lr", "must be > 0"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("agent.buffer_capacity", "must be >= 1"));
        }
        Ok(())
    }

    /// Reward weights actually used, after the preference-reward switch.
    pub fn effective_weights(&self) -> RewardWeights {
        RewardWeights {
            alpha_p: if self.pref_reward { self.weights.alpha_p } else { 0.0 },
            ..self.weights
        }
    }
}

/// Pearson correlation of two equally long samples; 0 if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Order by how well each driver's preference lines up with the grid's deficits.
pub fn fixed_order(gap: &GapVector, drivers: &[usize], rho: &[&PreferenceVector]) -> Vec<usize> {
    let slots: Vec<usize> = gap.mask().valid_slots().collect();
    let need: Vec<f64> = slots.iter().map(|&s| -(gap.get(s).unwrap_or(0) as f64)).collect();
    let mut keyed: Vec<(f64, usize)> = drivers
        .iter()
        .zip(rho)
        .map(|(&d, r)| {
            let p: Vec<f64> = slots.iter().map(|&s| r.0[s]).collect();
            (pearson(&p, &need), d)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, d)| d).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub vehicle_updates: u64,
    pub grid_updates: u64,
    pub vehicle_loss: (f64, f64),
    pub grid_loss: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct DualAgent {
    pub cfg: DualAgentConfig,
    pub grid: GridAgent,
    pub vehicle: VehicleAgent,
    /// Sample actions and learn; otherwise act greedily and never update.
    pub training: bool,
    pub vbuf: ReplayBuffer<VehicleTransition>,
    pub gbuf: ReplayBuffer<GridTransition>,
    pub stats: TrainStats,
    pending_v: BTreeMap<usize, VehicleTransition>,
    pending_g: Option<GridState>,
    pending_order: Vec<usize>,
    grid_rewards: Vec<f64>,
    rows: HashMap<usize, usize>,
}

impl DualAgent {
    pub fn new<R: Rng>(cfg: DualAgentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            grid: GridAgent::new(cfg.n_max, cfg.lr, cfg.normalize_inputs, rng),
            vehicle: VehicleAgent::new(cfg.lr, cfg.normalize_inputs, rng),
            training: false,
            vbuf: ReplayBuffer::new(cfg.buffer_capacity),
            gbuf: ReplayBuffer::new(cfg.buffer_capacity),
            stats: TrainStats::default(),
            pending_v: BTreeMap::new(),
            pending_g: None,
            pending_order: Vec::new(),
            grid_rewards: Vec::new(),
            rows: HashMap::new(),
            cfg,
        })
    }

    fn learns_grid(&self) -> bool {
        self.training && !self.cfg.freeze_grid && self.cfg.order == OrderMode::Learned
    }

    fn learns_vehicle(&self) -> bool {
        self.training && !self.cfg.freeze_vehicle
    }

    /// One optimizer step per agent from uniformly drawn batches.
    pub fn update<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let w = self.cfg.weights;
        if self.learns_vehicle() && !self.vbuf.is_empty() {
            let batch: Vec<VehicleTransition> = self.vbuf.sample(w.batch, rng).into_iter().cloned().collect();
            let refs: Vec<&VehicleTransition> = batch.iter().collect();
            self.stats.vehicle_loss = self.vehicle.update(&refs, w.gamma, w.entropy_beta)?;
            self.stats.vehicle_updates += 1;
        }
        if self.learns_grid() && !self.gbuf.is_empty() {
            let batch: Vec<GridTransition> = self.gbuf.sample(w.batch, rng).into_iter().cloned().collect();
            let refs: Vec<&GridTransition> = batch.iter().collect();
            self.stats.grid_loss = self.grid.update(&refs)?;
            self.stats.grid_updates += 1;
        }
        Ok(())
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        self.grid.actor.save_into("grid.actor", ckpt);
        self.grid.critic.save_into("grid.critic", ckpt);
        self.vehicle.actor.save_into("vehicle.actor", ckpt);
        self.vehicle.critic.save_into("vehicle.critic", ckpt);
        save_norm("grid", &self.grid.norm, ckpt);
        save_norm("vehicle", &self.vehicle.norm, ckpt);
        ckpt.insert_vec(
            "stats.updates",
            vec![self.stats.vehicle_updates as f64, self.stats.grid_updates as f64],
        );
        let vb: Vec<f64> = self.vbuf.iter().flat_map(encode_vehicle).collect();
        ckpt.insert_vec("buffer.vehicle", vb);
        let gb: Vec<f64> = self.gbuf.iter().flat_map(encode_grid).collect();
        ckpt.insert_vec("buffer.grid", gb);
    }

    pub fn load_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        self.grid.actor.load_from("grid.actor", ckpt)?;
        self.grid.critic.load_from("grid.critic", ckpt)?;
        self.vehicle.actor.load_from("vehicle.actor", ckpt)?;
        self.vehicle.critic.load_from("vehicle.critic", ckpt)?;
        load_norm("grid", &mut self.grid.norm, ckpt)?;
        load_norm("vehicle", &mut self.vehicle.norm, ckpt)?;
        let u = &ckpt.expect("stats.updates", &[2])?.data;
        self.stats.vehicle_updates = u[0] as u64;
        self.stats.grid_updates = u[1] as u64;
        self.vbuf = ReplayBuffer::new(self.cfg.buffer_capacity);
        for tr in decode_vehicle(&ckpt.get("buffer.vehicle")?.data)? {
            self.vbuf.push(tr);
        }
        self.gbuf = ReplayBuffer::new(self.cfg.buffer_capacity);
        for tr in decode_grid(&ckpt.get("buffer.grid")?.data, self.cfg.n_max)? {
            self.gbuf.push(tr);
        }
        Ok(())
    }

    fn flush_grid(&mut self) {
        if let Some(state) = self.pending_g.take() {
            if let Some(r) = grid_reward(&self.grid_rewards) {
                self.gbuf.push(GridTransition {
                    state,
                    order: std::mem::take(&mut self.pending_order),
                    reward: r,
                });
            }
        }
        self.grid_rewards.clear();
        self.pending_order.clear();
    }
}

impl Recommender for DualAgent {
    fn order(&mut self, ctx: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        self.grid_rewards.clear();
        self.rows.clear();
        let rho: Vec<&PreferenceVector> = view.drivers.iter().map(|&d| ctx.rho(d)).collect::<Result<_>>()?;
        match self.cfg.order {
            OrderMode::JointAction => Ok(view.drivers.clone()),
            OrderMode::Random => Ok(shuffled(&view.drivers, rng)),
            OrderMode::Fixed => Ok(fixed_order(&view.gap, &view.drivers, &rho)),
            OrderMode::Learned => {
                let state = GridState::new(&view.gap, &rho, self.cfg.n_max);
                if self.learns_grid() {
                    self.grid.norm.observe(&state.features);
                }
                let act = self.grid.act(&state, !self.training, rng)?;
                let mut order: Vec<usize> = act.order.iter().map(|&i| view.drivers[i]).collect();
                order.extend_from_slice(&view.drivers[state.n..]);
                if self.learns_grid() {
                    self.pending_order = act.order;
                    self.pending_g = Some(state);
                }
                Ok(order)
            }
        }
    }

    fn recommend(
        &mut self,
        ctx: &StepContext<'_>,
        view: &GridView,
        driver: usize,
        live: &GapVector,
        rng: &mut SimRng,
    ) -> Result<Option<usize>> {
        let rho = ctx.rho(driver)?;
        let seen = if self.cfg.order == OrderMode::JointAction {
            &view.gap
        } else {
            live
        };
        let state = VehicleState::new(seen, self.cfg.pref_observation.then_some(rho));
        if let Some(mut prev) = self.pending_v.remove(&driver) {
            prev.next = Some(state.clone());
            self.vbuf.push(prev);
        }
        if self.learns_vehicle() {
            self.vehicle.norm.observe(&state.features);
        }
        let act = self.vehicle.act(&state, !self.training, rng)?;
        let r_b = balance_reward(&view.gap, act.slot, &commitments(&view.gap, live))?;
        let r_p = preference_reward(rho, view.mask, act.slot)?;
        let r = total_reward(&self.cfg.effective_weights(), r_b, r_p);
        self.grid_rewards.push(r);
        if self.learns_vehicle() {
            self.pending_v.insert(
                driver,
                VehicleTransition {
                    state,
                    action: act.slot,
                    reward: r,
                    next: None,
                },
            );
        }
        Ok(Some(act.slot))
    }

    fn end_grid(&mut self, _view: &GridView) -> Result<()> {
        self.flush_grid();
        Ok(())
    }

    /// A driver's transition stays pending until its next decision, even
    /// across a trip; only the end of the episode is terminal.
    fn end_step(&mut self, _sim: &Simulator, rng: &mut SimRng) -> Result<()> {
        if self.training {
            self.update(rng)?;
        }
        Ok(())
    }

    fn end_episode(&mut self, _sim: &Simulator) -> Result<()> {
        for (_, tr) in std::mem::take(&mut self.pending_v) {
            self.vbuf.push(tr);
        }
        Ok(())
    }
}

const V_STATE: usize = 2 * crate::world::SLOTS + crate::world::SLOTS;

fn encode_vstate(s: &VehicleState, out: &mut Vec<f64>) {
    out.extend_from_slice(&s.features);
    out.extend(s.mask.0.iter().map(|&m| if m { 1.0 } else { 0.0 }));
}

fn decode_vstate(v: &[f64]) -> VehicleState {
    let mut features = [0.0; 2 * crate::world::SLOTS];
    features.copy_from_slice(&v[..2 * crate::world::SLOTS]);
    let mut mask = [false; crate::world::SLOTS];
    for (i, m) in mask.iter_mut().enumerate() {
        *m = v[2 * crate::world::SLOTS + i] != 0.0;
    }
    VehicleState {
        features,
        mask: crate::world::SlotMask(mask),
    }
}

const V_RECORD: usize = 2 * V_STATE + 3;

fn encode_vehicle(tr: &VehicleTransition) -> Vec<f64> {
    let mut out = Vec::with_capacity(V_RECORD);
    encode_vstate(&tr.state, &mut out);
    out.push(tr.action as f64);
    out.push(tr.reward);
    match &tr.next {
        Some(s) => {
            out.push(1.0);
            encode_vstate(s, &mut out);
        }
        None => {
            out.push(0.0);
            out.extend(std::iter::repeat(0.0).take(V_STATE));
        }
    }
    out
}

fn decode_vehicle(data: &[f64]) -> Result<Vec<VehicleTransition>> {
    if data.len() % V_RECORD != 0 {
        return Err(Error::Checkpoint("vehicle buffer length".into()));
    }
    Ok(data
        .chunks(V_RECORD)
        .map(|c| VehicleTransition {
            state: decode_vstate(&c[..V_STATE]),
            action: c[V_STATE] as usize,
            reward: c[V_STATE + 1],
            next: (c[V_STATE + 2] != 0.0).then(|| decode_vstate(&c[V_STATE + 3..])),
        })
        .collect())
}

fn encode_grid(tr: &GridTransition) -> Vec<f64> {
    let mut out = vec![tr.state.features.len() as f64, tr.state.n as f64, tr.reward];
    out.extend_from_slice(&tr.state.features);
    out.extend(tr.order.iter().map(|&i| i as f64));
    out
}

fn decode_grid(data: &[f64], n_max: usize) -> Result<Vec<GridTransition>> {
    let d = super::grid_agent::grid_inputs(n_max);
    let mut out = Vec::new();
    let mut i = 0;
    while i < data.len() {
        if i + 3 > data.len() || data[i] as usize != d {
            return Err(Error::Checkpoint("grid buffer layout".into()));
        }
        let n = data[i + 1] as usize;
        let end = i + 3 + d + n;
        if end > data.len() {
            return Err(Error::Checkpoint("grid buffer truncated".into()));
        }
        out.push(GridTransition {
            state: GridState {
                features: data[i + 3..i + 3 + d].to_vec(),
                n,
            },
            order: data[i + 3 + d..end].iter().map(|&v| v as usize).collect(),
            reward: data[i + 2],
        });
        i = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::world::SlotMask;

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
    }

    #[test]
    fn fixed_order_prefers_aligned_driver() {
        let mut g = [Some(0i64); 9];
        g[0] = Some(-3);
        let gap = GapVector(g);
        let mut w = [1.0; 9];
        w[0] = 10.0;
        let keen = PreferenceVector::from_weights(w, SlotMask::ALL).unwrap();
        let mut w = [1.0; 9];
        w[8] = 10.0;
        let other = PreferenceVector::from_weights(w, SlotMask::ALL).unwrap();
        assert_eq!(fixed_order(&gap, &[3, 7], &[&other, &keen]), vec![7, 3]);
    }

    #[test]
    fn buffers_round_trip_through_checkpoint() {
        let mut rng = stream_rng(0, Stream::Init, 0);
        let cfg = DualAgentConfig {
            n_max: 3,
            ..Default::default()
        };
        let mut a = DualAgent::new(cfg, &mut rng).unwrap();
        let s = VehicleState::new(&GapVector([Some(2); 9]), None);
        a.vbuf.push(VehicleTransition {
            state: s.clone(),
            action: 3,
            reward: 1.5,
            next: Some(s.clone()),
        });
        a.vbuf.push(VehicleTransition {
            state: s,
            action: 1,
            reward: -0.5,
            next: None,
        });
        let u = PreferenceVector::uniform(SlotMask::ALL);
        a.gbuf.push(GridTransition {
            state: GridState::new(&GapVector([Some(1); 9]), &[&u, &u], 3),
            order: vec![1, 0],
            reward: 2.0,
        });
        let mut ck = Checkpoint::new(7);
        a.save_into(&mut ck);
        let mut b = DualAgent::new(cfg, &mut rng).unwrap();
        b.load_from(&ck).unwrap();
        assert_eq!(a.vbuf, b.vbuf);
        assert_eq!(a.gbuf, b.gbuf);
        assert_eq!(a.grid.actor.store.tensors(), b.grid.actor.store.tensors());
    }
}
